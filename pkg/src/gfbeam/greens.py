"""Green's functions between focus points and microphones.

Two providers are built in:

* :class:`FreeFieldProvider` -- the monopole ``exp(-1j*k*r) / r``, with no
  ``4*pi`` factor.
* :class:`IsmProvider` -- the image source method for rigid rectangular
  panels.  Each image path contributes the free-field term of its unfolded
  length, weighted by the product of the reflection coefficients along the
  path.  A path is kept only if every specular reflection point lies on its
  panel.

Externally computed tensors (e.g. from a boundary element solver) enter
through :func:`import_gf_file`.

File format ``GFT1`` (little-endian)::

    4s   magic  b"GFT1"
    u32  n_freq, n_focus, n_mic
    f64  frequencies[n_freq]
    f64  values[n_freq, n_focus, n_mic, 2]    # (re, im), row-major

The CSV debug variant has the header ``freq_hz,focus_idx,mic_idx,re,im``
and one row per tensor entry.
"""
from __future__ import annotations

import csv
import itertools
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import GfBeamError
from .scene import POINT_TOL, ReflectorSet

GF_MAGIC = b"GFT1"
_HEADER = struct.Struct("<4s3I")

DEFAULT_MAX_ORDER = 3


def wavenumber(f, c):
    return 2 * np.pi * np.asarray(f, dtype=float) / c


def freefield_gf(source, receiver, f, c=343.0):
    """Free-field monopole Green's function ``exp(-1j*k*r) / r``.

    >>> freefield_gf((0, 0, 0), (0.5, 0, 0), 343.0 / 2, 343.0)  # k = pi
    np.complex128(1.2246467991473532e-16-2j)
    """
    r = float(_distance(np.asarray(receiver, float), np.asarray(source, float)))
    if r <= POINT_TOL:
        raise GfBeamError("COINCIDENT", f"source and receiver coincide (r = {r:.3g} m)")
    if f < 0 or c <= 0:
        raise GfBeamError("BAD_PARAMETER", f"need f >= 0 and c > 0, got f={f}, c={c}")
    k = 2 * np.pi * f / c
    return np.exp(-1j * k * r) / r


def _distance(a, b):
    # one expression for every path length so that providers agree bit for bit
    return np.sqrt(np.sum((a - b) ** 2, axis=-1))


def n_candidate_images(n_panels, order):
    """Number of panel sequences of a given reflection order.

    Consecutive reflections on the same panel are impossible, hence
    ``P * (P - 1)**(order - 1)`` for ``order >= 1``.
    """
    if order == 0:
        return 1
    return n_panels * (n_panels - 1) ** (order - 1)


def panel_sequences(n_panels, max_order):
    """All panel index sequences up to ``max_order``, lowest order first.

    The first entry of a sequence is the panel hit first after leaving the
    source.
    """
    for order in range(1, max_order + 1):
        for seq in itertools.product(range(n_panels), repeat=order):
            if all(a != b for a, b in zip(seq, seq[1:])):
                yield seq


def _mirror(points, panel):
    d = panel.signed_distance(points)
    return points - 2 * d[..., None] * panel.normal


def image_paths(sources, receivers, reflectors, max_order=DEFAULT_MAX_ORDER):
    """Enumerate image paths between every source and every receiver.

    Parameters
    ----------
    sources : array, shape (N, 3)
    receivers : array, shape (M, 3)
    reflectors : ReflectorSet
    max_order : int

    Yields
    ------
    (sequence, length, weight)
        ``sequence`` is the panel tuple (empty for the direct path),
        ``length`` and ``weight`` have shape ``(N, M)``.  ``weight`` is zero
        where the path is geometrically invalid.
    """
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    receivers = np.atleast_2d(np.asarray(receivers, dtype=float))
    n, m = len(sources), len(receivers)
    direct = _distance(receivers[None, :, :], sources[:, None, :])
    yield (), direct, np.ones((n, m))

    panels = list(reflectors)
    rx = np.broadcast_to(receivers[None, :, :], (n, m, 3))
    for seq in panel_sequences(len(panels), max_order):
        images = [sources]
        for p in seq:
            images.append(_mirror(images[-1], panels[p]))
        valid = np.ones((n, m), dtype=bool)
        point = rx
        # walk back from the receiver towards the source
        for step in range(len(seq) - 1, -1, -1):
            panel = panels[seq[step]]
            img = images[step + 1][:, None, :]
            d_pt = panel.signed_distance(point)
            d_img = panel.signed_distance(img)
            valid &= d_pt * d_img < 0
            denom = np.where(valid, d_pt - d_img, 1.0)
            t = np.where(valid, d_pt / denom, 0.0)
            point = point + t[..., None] * (img - point)
            s, u = panel.local_coords(point)
            valid &= (s >= 0) & (s <= 1) & (u >= 0) & (u <= 1)
            if not valid.any():
                break
        length = _distance(receivers[None, :, :], images[-1][:, None, :])
        coeff = np.prod([panels[p].reflection for p in seq])
        yield seq, length, np.where(valid, coeff, 0.0)


def _check_geometry(sources, receivers, reflectors):
    sources = np.atleast_2d(sources)
    receivers = np.atleast_2d(receivers)
    for name, pts in (("focus", sources), ("mic", receivers)):
        for k, panel in enumerate(reflectors):
            hit = np.flatnonzero(panel.contains(pts))
            if hit.size:
                raise GfBeamError(
                    "ON_REFLECTOR",
                    f"{name} point {hit[0]} lies on reflector panel {k}",
                    {name: int(hit[0]), "panel": k},
                )
    d = _distance(receivers[None, :, :], sources[:, None, :])
    bad = np.argwhere(d <= POINT_TOL)
    if bad.size:
        q, m = bad[0]
        raise GfBeamError("COINCIDENT", f"focus point {q} coincides with mic {m}",
                          {"focus": int(q), "mic": int(m)})


def ism_gf(source, receiver, f, reflectors, max_order=DEFAULT_MAX_ORDER, c=343.0):
    """Image-source Green's function for one source/receiver pair."""
    if max_order < 0:
        raise GfBeamError("BAD_PARAMETER", f"max_order must be >= 0, got {max_order}")
    return complex(IsmProvider(reflectors, c, max_order).field(
        np.asarray(source, float)[None], np.asarray(receiver, float)[None], [f])[0, 0, 0])


class FreeFieldProvider:
    """Free-field monopole propagation."""

    provenance = "freefield"

    def __init__(self, c=343.0):
        self.c = float(c)

    def __call__(self, source, receiver, f):
        return freefield_gf(source, receiver, f, self.c)

    def check(self, points, mics):
        _check_geometry(points, mics, ())

    def field(self, points, mics, frequencies):
        """Vectorised evaluation, shape ``(F, N, M)``."""
        points = np.atleast_2d(points)
        mics = np.atleast_2d(mics)
        r = _distance(mics[None, :, :], points[:, None, :])
        k = wavenumber(frequencies, self.c)[:, None, None]
        return np.exp(-1j * k * r) / r


class IsmProvider:
    """Image source method over a set of rigid panels."""

    provenance = "ism"

    def __init__(self, reflectors, c=343.0, max_order=DEFAULT_MAX_ORDER):
        if max_order < 0:
            raise GfBeamError("BAD_PARAMETER", f"max_order must be >= 0, got {max_order}")
        self.reflectors = reflectors if isinstance(reflectors, ReflectorSet) else ReflectorSet(reflectors)
        self.c = float(c)
        self.max_order = int(max_order)

    def __call__(self, source, receiver, f):
        return ism_gf(source, receiver, f, self.reflectors, self.max_order, self.c)

    def check(self, points, mics):
        _check_geometry(points, mics, self.reflectors)

    def field(self, points, mics, frequencies):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        mics = np.atleast_2d(np.asarray(mics, dtype=float))
        self.check(points, mics)
        k = wavenumber(frequencies, self.c)[:, None, None]
        out = np.zeros((len(k), len(points), len(mics)), dtype=complex)
        for _, length, weight in image_paths(points, mics, self.reflectors, self.max_order):
            live = weight != 0
            if not live.any():
                continue
            safe = np.where(live, length, 1.0)
            out += np.where(live, weight * np.exp(-1j * k * safe) / safe, 0.0)
        return out


@dataclass(frozen=True, eq=False)
class GfTensor:
    """Green's-function values indexed ``(frequency, focus point, microphone)``.

    ``field``, when present, evaluates the same Green's function at arbitrary
    focus points (shape ``(P, 3)`` -> ``(F, P, M)``); it is what the
    finite-difference checks in :mod:`gfbeam.steering` use.
    """

    frequencies: np.ndarray
    values: np.ndarray
    provenance: str
    field: Callable | None = None
    grid: object = None

    def __post_init__(self):
        freqs = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim != 3 or vals.shape[0] != freqs.size:
            raise GfBeamError("DIMENSION_MISMATCH",
                              f"values shape {vals.shape} does not match {freqs.size} frequencies")
        _check_values(vals)
        freqs.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "values", vals)

    @property
    def n_focus(self):
        return self.values.shape[1]

    @property
    def n_mics(self):
        return self.values.shape[2]

    def column(self, focus_index):
        """Green's-function vectors of one focus point, shape ``(F, M)``."""
        if not 0 <= focus_index < self.n_focus:
            raise GfBeamError("INDEX_RANGE", f"focus index {focus_index} outside [0, {self.n_focus})")
        return self.values[:, focus_index, :]

    def frequency_index(self, f, tol=1e-6):
        hit = np.flatnonzero(np.abs(self.frequencies - f) <= tol)
        if not hit.size:
            raise GfBeamError("FREQ_MISMATCH", f"{f} Hz not in Green's-function frequencies")
        return int(hit[0])

    def select(self, frequencies):
        idx = [self.frequency_index(f) for f in frequencies]
        field = None
        if self.field is not None:
            parent = self.field
            field = lambda pts: parent(pts)[idx]  # noqa: E731
        return replace(self, frequencies=self.frequencies[idx], values=self.values[idx], field=field)

    def scaled(self, factor):
        """Same tensor multiplied by a nonzero constant."""
        field = None
        if self.field is not None:
            parent = self.field
            field = lambda pts: factor * parent(pts)  # noqa: E731
        return replace(self, values=self.values * factor, field=field)


def _check_values(values):
    bad = ~np.isfinite(values)
    if bad.any():
        q, n, m = np.argwhere(bad)[0]
        raise GfBeamError("NONFINITE_VALUE", f"non-finite Green's function at (freq {q}, focus {n}, mic {m})",
                          {"freq": int(q), "focus": int(n), "mic": int(m)})
    zero = values == 0
    if zero.any():
        q, n, m = np.argwhere(zero)[0]
        raise GfBeamError("ZERO_GF", f"zero Green's function at (freq {q}, focus {n}, mic {m})",
                          {"freq": int(q), "focus": int(n), "mic": int(m)})


def evaluate_gf_tensor(provider, scene, frequencies, chunk=2048):
    """Evaluate ``provider`` for every grid point, microphone and frequency.

    ``values[q, n, m]`` is the field at microphone ``m`` due to a unit source
    at grid point ``n``.  Focus points are processed in chunks of ``chunk``
    to bound memory.
    """
    freqs = np.atleast_1d(np.asarray(frequencies, dtype=float))
    if freqs.size == 0 or np.any(freqs < 0):
        raise GfBeamError("BAD_PARAMETER", "frequencies must be nonempty and nonnegative")
    points = scene.grid.points
    mics = scene.array.positions
    try:
        provider.check(points, mics)
    except GfBeamError as exc:
        ctx = {"freq": 0, **exc.context}
        raise GfBeamError(exc.code, f"{exc} [context: {ctx}]", ctx) from exc
    out = np.empty((freqs.size, len(points), len(mics)), dtype=complex)
    for start in range(0, len(points), chunk):
        stop = min(start + chunk, len(points))
        out[:, start:stop] = provider.field(points[start:stop], mics, freqs)

    def field(pts):
        return provider.field(np.atleast_2d(pts), mics, freqs)

    return GfTensor(freqs, out, provider.provenance, field, scene.grid)


# --- file I/O ----------------------------------------------------------------

def export_gf_file(tensor, path):
    """Write ``tensor`` as ``GFT1`` binary, or CSV when ``path`` ends in .csv."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz", "focus_idx", "mic_idx", "re", "im"])
            for (q, n, m), v in np.ndenumerate(tensor.values):
                w.writerow([repr(float(tensor.frequencies[q])), n, m, repr(float(v.real)), repr(float(v.imag))])
        return
    f, n, m = tensor.values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GF_MAGIC, f, n, m))
        fh.write(tensor.frequencies.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(tensor.values).astype("<c16").tobytes())


def _read_binary(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise GfBeamError("FORMAT_MISMATCH", f"{path}: file too short for a GFT1 header")
    magic, nf, nn, nm = _HEADER.unpack_from(raw)
    if magic != GF_MAGIC:
        raise GfBeamError("FORMAT_MISMATCH", f"{path}: bad magic {magic!r}, expected {GF_MAGIC!r}")
    off = _HEADER.size
    expected = off + 8 * nf + 16 * nf * nn * nm
    if len(raw) != expected:
        raise GfBeamError("FORMAT_MISMATCH", f"{path}: size {len(raw)} bytes, header implies {expected}")
    freqs = np.frombuffer(raw, "<f8", nf, off).copy()
    values = np.frombuffer(raw, "<c16", nf * nn * nm, off + 8 * nf).reshape(nf, nn, nm).copy()
    return freqs, values


def _read_csv(path):
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise GfBeamError("FORMAT_MISMATCH", f"{path}: {exc}") from None
    if data.shape[1] != 5:
        raise GfBeamError("FORMAT_MISMATCH", f"{path}: expected 5 columns, got {data.shape[1]}")
    freqs = np.unique(data[:, 0])
    nn = int(data[:, 1].max()) + 1
    nm = int(data[:, 2].max()) + 1
    values = np.full((freqs.size, nn, nm), np.nan, dtype=complex)
    q = np.searchsorted(freqs, data[:, 0])
    values[q, data[:, 1].astype(int), data[:, 2].astype(int)] = data[:, 3] + 1j * data[:, 4]
    return freqs, values


def import_gf_file(path, scene, frequencies=None, provenance="imported"):
    """Load a Green's-function tensor and check it against ``scene``.

    ``frequencies`` selects a subset of the stored frequencies (all when
    None); each requested frequency must be present to within 1e-6 Hz.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == GF_MAGIC:
        freqs, values = _read_binary(path)
    elif path.suffix.lower() == ".csv":
        freqs, values = _read_csv(path)
    else:
        raise GfBeamError("FORMAT_MISMATCH", f"{path}: neither GFT1 binary nor CSV")
    nf, nn, nm = values.shape
    if nn != scene.grid.n_points or nm != scene.array.n_mics:
        raise GfBeamError(
            "DIMENSION_MISMATCH",
            f"{path}: file has n_focus={nn}, M={nm}; scene has n_focus={scene.grid.n_points}, "
            f"M={scene.array.n_mics}",
        )
    if frequencies is not None:
        idx = []
        for f in np.atleast_1d(frequencies):
            hit = np.flatnonzero(np.abs(freqs - f) <= 1e-6)
            if not hit.size:
                raise GfBeamError("DIMENSION_MISMATCH", f"{path}: frequency {f} Hz not in file")
            idx.append(hit[0])
        freqs, values = freqs[idx], values[idx]
    return GfTensor(freqs, values, provenance, None, scene.grid)
