"""Dirty maps, point spread functions and a time-domain reference beamformer.

Map values are kept linear (``A = w^H C w``); decibels (``10*log10(A)``,
reference 1) only appear in exports and metrics.

File format ``MAP1`` (little-endian)::

    4s   magic  b"MAP1"
    u32  n_freq, n_points, nx, ny
    f64  frequencies[n_freq]
    f64  origin[3], axis1[3], axis2[3], spacing
    f64  values[n_freq, n_points]
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .csm import _block_spectra, _select_bins
from .errors import GfBeamError
from .scene import FocusGrid

MAP_MAGIC = b"MAP1"
_HEADER = struct.Struct("<4s4I")


@dataclass(frozen=True, eq=False)
class SourceMap:
    frequency: float
    values: np.ndarray
    grid: FocusGrid | None = None
    steering: str = ""
    provenance: str = ""

    def levels_db(self):
        with np.errstate(divide="ignore"):
            return 10 * np.log10(np.clip(self.values, 0, None))

    def image(self):
        """Values as a ``grid.shape`` array."""
        return self.values.reshape(self.grid.shape)

    def argmax(self):
        """Index of the largest value; ties go to the lowest index."""
        return int(np.argmax(self.values))


def beamformer_output(csm_matrix, weights):
    """``w_n^H C w_n`` for each row ``w_n`` of ``weights`` (shape (N, M))."""
    c = np.asarray(csm_matrix)
    w = np.asarray(weights)
    raw = np.sum((w.conj() @ c) * w, axis=-1)
    bound = np.sum(np.abs(w), axis=-1) ** 2 * np.max(np.abs(c), initial=0.0)
    if np.any(np.abs(raw.imag) > 1e-10 * np.maximum(bound, np.finfo(float).tiny)):
        raise GfBeamError("NOT_HERMITIAN", "beamformer output has a non-negligible imaginary part")
    return raw.real


def dirty_map(csm, steering, frequency, grid=None):
    """Beamformer output over the focus grid at one frequency.

    ``frequency`` must be a steering frequency; the CSM bin is matched to it
    within half the CSM's bin spacing.
    """
    c = csm.at(frequency)
    w = steering.at(frequency)
    if c.shape[0] != w.shape[-1]:
        raise GfBeamError("DIMENSION_MISMATCH", f"CSM has {c.shape[0]} mics, steering vectors {w.shape[-1]}")
    return SourceMap(float(frequency), beamformer_output(c, w), grid, steering.params.label,
                     steering.provenance)


def psf_map(gf_tensor, source_index, steering):
    """Point spread functions ``|w(y)^H g(y_s)|**2``, one map per frequency."""
    g_src = gf_tensor.column(source_index)
    maps = []
    for q, f in enumerate(gf_tensor.frequencies):
        w = steering.at(f)
        vals = np.abs(w.conj() @ g_src[q]) ** 2
        maps.append(SourceMap(float(f), vals, gf_tensor.grid, steering.params.label, steering.provenance))
    return maps


# --- time domain -----------------------------------------------------------

SINC_TAPS = 16
KAISER_BETA = 8.0


def _sinc_weights(frac):
    """Windowed-sinc taps for a delay of ``frac`` in [0, 1) samples.

    Tap ``j`` (j = -7..8) multiplies sample ``i + j`` when reading the
    signal at position ``i + frac``.
    """
    j = np.arange(-SINC_TAPS // 2 + 1, SINC_TAPS // 2 + 1)
    t = j - frac
    half = SINC_TAPS / 2
    win = np.i0(KAISER_BETA * np.sqrt(np.clip(1 - (t / half) ** 2, 0, None))) / np.i0(KAISER_BETA)
    w = np.sinc(t) * win
    return j, w / w.sum()


def _read_delayed(signal, delay, length, interpolation):
    """``signal(n + delay)`` for ``n = 0..length-1``; zeros outside the record."""
    base = int(np.floor(delay))
    frac = delay - base
    if interpolation == "nearest":
        shift = int(np.rint(delay))
        return signal[shift:shift + length]
    pad = SINC_TAPS
    padded = np.concatenate([np.zeros(pad), signal, np.zeros(pad)])
    if interpolation == "linear":
        j, w = np.array([0, 1]), np.array([1 - frac, frac])
    elif interpolation == "sinc":
        j, w = _sinc_weights(frac)
    else:
        raise GfBeamError("BAD_PARAMETER", f"unknown interpolation {interpolation!r}")
    out = np.zeros(length)
    for jj, ww in zip(j, w):
        start = pad + base + jj
        out += ww * padded[start:start + length]
    return out


@dataclass(frozen=True, eq=False)
class TdOutput:
    """Reconstructed source signals, ``signals`` shape ``(P, L)``."""

    signals: np.ndarray
    sample_rate: float
    focus_indices: np.ndarray


def td_beamform(record, scene, interpolation="sinc", focus_indices=None):
    """Delay-and-sum in the time domain with distance weighting.

    ``out(t, y) = 1/M * sum_m 4*pi*|x_m - y| * p_m(t + |x_m - y| / c)``

    The output length is the record length minus the largest delay (in
    samples, rounded up) over all requested focus points.  ``sinc`` uses a
    16-tap Kaiser-windowed sinc; ``linear`` and ``nearest`` are cheaper.
    """
    if record.n_channels != scene.array.n_mics:
        raise GfBeamError("DIMENSION_MISMATCH",
                          f"record has {record.n_channels} channels, array {scene.array.n_mics} mics")
    if focus_indices is None:
        focus_indices = np.arange(scene.grid.n_points)
    focus_indices = np.atleast_1d(np.asarray(focus_indices, dtype=int))
    pts = scene.grid.points[focus_indices]
    mics = scene.array.positions
    r = np.linalg.norm(mics[None, :, :] - pts[:, None, :], axis=-1)
    delays = r / scene.c * record.sample_rate
    length = record.n_samples - int(np.ceil(delays.max()))
    if length <= 0:
        raise GfBeamError("TOO_SHORT", "record shorter than the largest propagation delay")
    out = np.zeros((len(pts), length))
    m = scene.array.n_mics
    for p in range(len(pts)):
        for k in range(m):
            out[p] += 4 * np.pi * r[p, k] * _read_delayed(record.samples[k], delays[p, k], length,
                                                         interpolation)
        out[p] /= m
    return TdOutput(out, record.sample_rate, focus_indices)


@dataclass(frozen=True, eq=False)
class TdSpectrum:
    frequencies: np.ndarray
    power: np.ndarray  # (P, F)
    focus_indices: np.ndarray


def td_spectrum(td_output, params, frequencies=None):
    """Welch auto-power of each reconstructed signal (same convention as the CSM)."""
    n_avg = params.n_averages(td_output.signals.shape[-1])
    if n_avg < 1:
        raise GfBeamError("TOO_SHORT", "beamformed signal shorter than one Welch block")
    bins, freqs, _ = _select_bins(params, td_output.sample_rate, frequencies)
    acc = np.zeros((td_output.signals.shape[0], bins.size))
    for p_hat in _block_spectra(td_output.signals, params, td_output.sample_rate, bins):
        acc += np.sum(np.abs(p_hat) ** 2, axis=0)
    return TdSpectrum(freqs, 0.5 * acc / n_avg, td_output.focus_indices)


# --- export ------------------------------------------------------------------

def _plane_coords(grid):
    pts = grid.points
    return pts @ grid.axes[0], pts @ grid.axes[1]


def export_map_csv(maps, path):
    """CSV export.  One map gives ``x,y,value_linear,value_db``; several maps
    are stacked with a leading ``frequency`` column."""
    maps = [maps] if isinstance(maps, SourceMap) else list(maps)
    x, y = _plane_coords(maps[0].grid)
    stacked = len(maps) > 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["x", "y", "value_linear", "value_db"]
        w.writerow(["frequency"] + head if stacked else head)
        for mp in maps:
            db = mp.levels_db()
            for n in range(len(mp.values)):
                row = [f"{x[n]:.6f}", f"{y[n]:.6f}", repr(float(mp.values[n])), repr(float(db[n]))]
                w.writerow([repr(mp.frequency)] + row if stacked else row)


def export_map_binary(maps, path):
    maps = [maps] if isinstance(maps, SourceMap) else list(maps)
    g = maps[0].grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAP_MAGIC, len(maps), g.n_points, g.nx, g.ny))
        fh.write(np.array([m.frequency for m in maps], "<f8").tobytes())
        geo = np.concatenate([g.origin, g.axes[0], g.axes[1], [g.spacing]])
        fh.write(geo.astype("<f8").tobytes())
        fh.write(np.stack([m.values for m in maps]).astype("<f8").tobytes())


def import_map_binary(path):
    raw = Path(path).read_bytes()
    magic, nf, n, nx, ny = _HEADER.unpack_from(raw)
    if magic != MAP_MAGIC:
        raise GfBeamError("FORMAT_MISMATCH", f"{path}: bad magic {magic!r}")
    off = _HEADER.size
    freqs = np.frombuffer(raw, "<f8", nf, off)
    off += 8 * nf
    geo = np.frombuffer(raw, "<f8", 10, off)
    off += 80
    vals = np.frombuffer(raw, "<f8", nf * n, off).reshape(nf, n)
    spacing = geo[9]
    grid = FocusGrid(geo[:3], geo[3:9].reshape(2, 3), ((nx - 1) * spacing, (ny - 1) * spacing), spacing)
    return [SourceMap(float(f), vals[q].copy(), grid) for q, f in enumerate(freqs)]
