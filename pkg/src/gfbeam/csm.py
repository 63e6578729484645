"""Cross-spectral matrices from recordings (Welch) or from Green's functions.

Amplitude convention: the one-sided complex amplitude of a block of ``K``
samples is ``p_hat = 2/K * sum_k p_k exp(-2j*pi*f*k/fs)`` with ``k = 0..K-1``,
so a cosine of amplitude ``A`` sitting on a DFT bin yields ``|p_hat| = A``.
Cross power is ``C_mn = 1/2 * p_hat_m * conj(p_hat_n)``, averaged over
blocks.  With the amplitude-corrected normalisation, each windowed DFT is
divided by the window's coherent gain (mean of the window samples) so the
convention above still holds for Hann-windowed blocks.  The factor 2 is
applied to every bin, DC and Nyquist included.

File format ``CSM1`` (little-endian)::

    4s   magic  b"CSM1"
    u32  n_freq, M
    f64  frequencies[n_freq]
    f64  matrices[n_freq, M, M, 2]    # (re, im), row-major
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

from .errors import GfBeamError

CSM_MAGIC = b"CSM1"
_HEADER = struct.Struct("<4s2I")


@dataclass(frozen=True, eq=False)
class TimeRecord:
    """Multichannel pressure time series, ``samples`` shape ``(M, T)``."""

    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if not self.sample_rate > 0:
            raise GfBeamError("BAD_PARAMETER", f"sample_rate must be > 0, got {self.sample_rate}")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_samples(self):
        return self.samples.shape[1]


@dataclass(frozen=True)
class WelchParams:
    block_len: int
    overlap: float = 0.5
    window: str = "hann"
    normalization: str = "amplitude"

    def __post_init__(self):
        if int(self.block_len) != self.block_len or self.block_len < 2:
            raise GfBeamError("BAD_PARAMETER", f"block_len must be an integer >= 2, got {self.block_len}")
        if not 0 <= self.overlap < 1:
            raise GfBeamError("BAD_PARAMETER", f"overlap must be in [0, 1), got {self.overlap}")
        if self.window not in ("hann", "rect"):
            raise GfBeamError("BAD_PARAMETER", f"window must be 'hann' or 'rect', got {self.window!r}")
        if self.normalization not in ("amplitude", "none"):
            raise GfBeamError("BAD_PARAMETER", f"unknown normalization {self.normalization!r}")

    @property
    def hop(self):
        """Block advance in samples, ``floor(K * (1 - overlap))``."""
        return max(1, int(self.block_len * (1 - self.overlap)))

    def n_averages(self, n_samples):
        if n_samples < self.block_len:
            return 0
        return (n_samples - self.block_len) // self.hop + 1

    def window_samples(self):
        if self.window == "rect":
            return np.ones(self.block_len)
        return get_window("hann", self.block_len)  # periodic

    def resolution(self, sample_rate):
        return sample_rate / self.block_len


@dataclass(frozen=True, eq=False)
class Csm:
    """Per-frequency cross-spectral matrices, ``matrices`` shape ``(F, M, M)``.

    ``resolution`` is the bin spacing of a Welch estimate (None for
    synthetic matrices, which must match frequencies exactly).
    """

    frequencies: np.ndarray
    matrices: np.ndarray
    resolution: float | None = None
    n_averages: int | None = None

    def __post_init__(self):
        freqs = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        mats = np.asarray(self.matrices, dtype=complex)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] != freqs.size:
            raise GfBeamError("DIMENSION_MISMATCH", f"bad CSM shape {mats.shape} for {freqs.size} frequencies")
        freqs.setflags(write=False)
        mats.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "matrices", mats)

    @property
    def n_mics(self):
        return self.matrices.shape[1]

    def frequency_index(self, f):
        """Index of the bin matching ``f`` (within half a bin)."""
        tol = self.resolution / 2 if self.resolution else 1e-6
        dist = np.abs(self.frequencies - f)
        q = int(np.argmin(dist))
        if dist[q] > tol:
            raise GfBeamError("FREQ_MISMATCH", f"no CSM frequency within {tol:g} Hz of {f} Hz")
        return q

    def at(self, f):
        return self.matrices[self.frequency_index(f)]


def dft_block(block, f, sample_rate):
    """One-sided complex amplitude of ``block`` at the DFT bin ``f``.

    Raises ``NOT_A_BIN`` unless ``f * K / sample_rate`` is an integer.
    """
    block = np.asarray(block, dtype=float)
    k_len = block.size
    b = f * k_len / sample_rate
    if abs(b - round(b)) > 1e-9 * max(1.0, abs(b)) or not 0 <= round(b) <= k_len // 2:
        raise GfBeamError("NOT_A_BIN", f"{f} Hz is not a DFT bin for K={k_len}, fs={sample_rate}")
    return 2.0 / k_len * np.fft.rfft(block)[int(round(b))]


def _block_spectra(samples, params, sample_rate, bins):
    """Normalised one-sided spectra of every Welch block at ``bins``.

    Yields arrays of shape ``(n_blocks_in_batch, channels, len(bins))``.
    """
    k_len = params.block_len
    win = params.window_samples()
    gain = win.mean() if params.normalization == "amplitude" else 1.0
    n_avg = params.n_averages(samples.shape[-1])
    starts = np.arange(n_avg) * params.hop
    batch = 32
    for lo in range(0, n_avg, batch):
        idx = starts[lo:lo + batch, None] + np.arange(k_len)
        blocks = samples[:, idx].transpose(1, 0, 2) * win
        spec = np.fft.rfft(blocks, axis=-1)[..., bins]
        yield 2.0 / k_len * spec / gain


def _select_bins(params, sample_rate, frequencies):
    df = params.resolution(sample_rate)
    n_bins = params.block_len // 2 + 1
    if frequencies is None:
        bins = np.arange(n_bins)
    else:
        freqs = np.atleast_1d(np.asarray(frequencies, dtype=float))
        bins = np.rint(freqs / df).astype(int)
        if np.any(bins < 0) or np.any(bins >= n_bins) or np.any(np.abs(bins * df - freqs) > df / 2):
            raise GfBeamError("FREQ_MISMATCH", f"requested frequencies not within half a bin of the {df:g} Hz grid")
    return bins, bins * df, df


def welch_csm(record, params, frequencies=None):
    """Welch estimate of the cross-spectral matrix.

    Parameters
    ----------
    record : TimeRecord
    params : WelchParams
    frequencies : sequence of float, optional
        Restrict the output to the bins nearest these frequencies; each must
        lie within half a bin spacing of a bin centre.  All one-sided bins
        are returned when omitted.
    """
    n_avg = params.n_averages(record.n_samples)
    if n_avg < 1:
        raise GfBeamError("TOO_SHORT", f"record of {record.n_samples} samples is shorter than one "
                                       f"block of {params.block_len}")
    bins, freqs, df = _select_bins(params, record.sample_rate, frequencies)
    m = record.n_channels
    acc = np.zeros((bins.size, m, m), dtype=complex)
    for p_hat in _block_spectra(record.samples, params, record.sample_rate, bins):
        acc += np.einsum("kmb,knb->bmn", p_hat, p_hat.conj())
    acc *= 0.5 / n_avg
    acc = 0.5 * (acc + acc.conj().transpose(0, 2, 1))
    return Csm(freqs, acc, resolution=df, n_averages=n_avg)


def synthetic_csm(gf_tensor, source_index, amplitude=1.0):
    """Rank-one matrices ``|a|**2 * g g^H`` of a point source on the grid."""
    if abs(amplitude) == 0:
        raise GfBeamError("BAD_PARAMETER", "source amplitude must be nonzero")
    g = gf_tensor.column(source_index)
    mats = abs(amplitude) ** 2 * g[:, :, None] * g[:, None, :].conj()
    return Csm(gf_tensor.frequencies, mats)


def remove_diagonal(csm):
    """Copy of ``csm`` with every main diagonal set to zero.

    The result is still Hermitian but in general no longer positive
    semi-definite.
    """
    mats = np.array(csm.matrices)
    idx = np.arange(csm.n_mics)
    mats[:, idx, idx] = 0
    return replace(csm, matrices=mats)


# --- I/O -----------------------------------------------------------------------

def read_wav(path, calibration=1.0):
    """Read a multichannel WAV file; channel order is microphone order.

    Integer PCM (8/16/24/32 bit) is scaled to full scale 1.0 and then
    multiplied by ``calibration`` (Pa per full scale).  Float data is only
    multiplied by ``calibration``.
    """
    rate, data = wavfile.read(path)
    if data.dtype == np.uint8:
        data = (data.astype(float) - 128.0) / 128.0
    elif data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        # scipy returns 24-bit PCM left-justified in int32
        data = data / 2147483648.0
    else:
        data = data.astype(float)
    data = np.atleast_2d(data.T) if data.ndim == 2 else data[None, :]
    return TimeRecord(rate, calibration * data)


def read_csv_record(path, sample_rate=None):
    """Read a CSV recording: one column per microphone, one row per sample.

    A leading comment ``# sample_rate = 48000`` sets the rate unless
    ``sample_rate`` is passed; a non-numeric header row is skipped.
    """
    rate = sample_rate
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                if key.strip() == "sample_rate" and rate is None:
                    rate = float(value)
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                if rows:
                    raise GfBeamError("FORMAT_MISMATCH", f"{path}: non-numeric row {line!r}") from None
    if rate is None:
        raise GfBeamError("FORMAT_MISMATCH", f"{path}: no sample rate given")
    return TimeRecord(rate, np.array(rows).T)


def read_record(path, **kwargs):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv_record(path, **kwargs)
    return read_wav(path, **kwargs)


def export_csm_file(csm, path):
    f, m, _ = csm.matrices.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CSM_MAGIC, f, m))
        fh.write(csm.frequencies.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(csm.matrices).astype("<c16").tobytes())


def import_csm_file(path, resolution=None):
    """Read a ``CSM1`` file.  The format does not store the bin spacing, so
    pass ``resolution`` to re-enable half-bin frequency matching."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise GfBeamError("FORMAT_MISMATCH", f"{path}: too short for a CSM1 header")
    magic, nf, m = _HEADER.unpack_from(raw)
    if magic != CSM_MAGIC:
        raise GfBeamError("FORMAT_MISMATCH", f"{path}: bad magic {magic!r}")
    off = _HEADER.size
    if len(raw) != off + 8 * nf + 16 * nf * m * m:
        raise GfBeamError("FORMAT_MISMATCH", f"{path}: size does not match header")
    freqs = np.frombuffer(raw, "<f8", nf, off).copy()
    mats = np.frombuffer(raw, "<c16", nf * m * m, off + 8 * nf).reshape(nf, m, m).copy()
    return Csm(freqs, mats, resolution=resolution)
