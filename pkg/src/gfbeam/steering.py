"""Steering vectors built from arbitrary Green's functions.

All formulations share the form ``w_m = f_m * g_m / |g_m|``: the phase is
always that of the Green's function, only the real amplitude scale ``f_m``
differs.  The two-parameter family

    f_m = |g_m|**(beta - 1) / ((sum_n |g_n|**beta)**alpha * M**(1 - alpha))

contains the usual formulations as presets:

======  =====  ====  ===========================
preset  alpha  beta  w_m
======  =====  ====  ===========================
I       0      1     g_m / (M |g_m|)
II      1      0     g_m / (M |g_m|**2)
III     1      2     g_m / ||g||**2
IV      1/2    2     g_m / (sqrt(M) ||g||)
======  =====  ====  ===========================

For a single unit source the beamformer output at the source position is
exactly 1 whenever ``alpha == 1``, and its spatial gradient vanishes there
whenever ``alpha == 1 - 1/beta``.  With ``beta == 0`` the scale no longer
depends on ``alpha`` and the output at the source is 1 for every ``alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GfBeamError

PRESETS = {
    "I": (0.0, 1.0),
    "II": (1.0, 0.0),
    "III": (1.0, 2.0),
    "IV": (0.5, 2.0),
}


@dataclass(frozen=True)
class SteeringParams:
    alpha: float
    beta: float
    preset: str | None = None

    def __post_init__(self):
        if self.preset is not None:
            if self.preset not in PRESETS:
                raise GfBeamError("BAD_PARAMETER", f"unknown preset {self.preset!r}")
            if (self.alpha, self.beta) != PRESETS[self.preset]:
                raise GfBeamError("BAD_PARAMETER",
                                  f"preset {self.preset} requires (alpha, beta) = {PRESETS[self.preset]}")

    @classmethod
    def from_preset(cls, name):
        if name not in PRESETS:
            raise GfBeamError("BAD_PARAMETER", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(*PRESETS[name], preset=name)

    @property
    def label(self):
        return self.preset or f"alpha={self.alpha:g},beta={self.beta:g}"

    @property
    def locates_source(self):
        """True when the output has a stationary point at the source."""
        return self.beta != 0 and np.isclose(self.alpha, 1 - 1 / self.beta, rtol=0, atol=1e-12)

    @property
    def preserves_amplitude(self):
        return self.alpha == 1 or self.beta == 0


def _magnitudes(g):
    a = np.abs(g)
    if np.any(a == 0):
        raise GfBeamError("ZERO_GF", "Green's function with zero magnitude")
    return a


def scale_function(g, alpha, beta):
    """Amplitude scale ``f_m`` for Green's-function vectors along the last axis."""
    g = np.asarray(g)
    a = _magnitudes(g)
    m = g.shape[-1]
    total = np.sum(a ** beta, axis=-1, keepdims=True)
    return a ** (beta - 1) / (total ** alpha * float(m) ** (1 - alpha))


def steering_vector(g, params):
    """Steering vectors for Green's-function vectors along the last axis."""
    g = np.asarray(g, dtype=complex)
    if params.alpha == 1 and params.beta == 0:
        a = _magnitudes(g)
        return g / (g.shape[-1] * a ** 2)
    return scale_function(g, params.alpha, params.beta) * (g / _magnitudes(g))


@dataclass(frozen=True, eq=False)
class SteeringSet:
    """Steering vectors indexed ``(frequency, focus point, microphone)``."""

    frequencies: np.ndarray
    values: np.ndarray
    params: SteeringParams
    provenance: str

    def frequency_index(self, f, tol=1e-6):
        hit = np.flatnonzero(np.abs(self.frequencies - f) <= tol)
        if not hit.size:
            raise GfBeamError("FREQ_MISMATCH", f"{f} Hz not among steering frequencies")
        return int(hit[0])

    def at(self, f):
        return self.values[self.frequency_index(f)]


def steering_set(gf_tensor, params):
    return SteeringSet(gf_tensor.frequencies, steering_vector(gf_tensor.values, params),
                       params, gf_tensor.provenance)


def _response(w, g_src):
    """``|w^H g_src|**2`` with ``w`` shape (..., M) and ``g_src`` broadcastable."""
    return np.abs(np.sum(w.conj() * g_src, axis=-1)) ** 2


def check_amplitude_condition(gf_tensor, source_index, params):
    """Beamformer output at the source for a unit source, one value per frequency."""
    g = gf_tensor.column(source_index)
    return _response(steering_vector(g, params), g)


# eighth-order central difference: f'(0) ~ sum_k c_k (f(kh) - f(-kh)) / h
_FD_WEIGHTS = np.array([4 / 5, -1 / 5, 4 / 105, -1 / 280])


def check_local_max_condition(gf_tensor, source_index, params, fd_step=3e-4):
    """Norm of the in-plane gradient of the point spread function at the source.

    The gradient is taken by central differences along both grid axes.  When
    the tensor can evaluate its Green's function off the grid (``field`` is
    set) an eighth-order central stencil with step ``fd_step`` is used; otherwise the
    neighbouring grid points give a second-order estimate with the grid
    spacing as step.

    Returns
    -------
    ndarray, shape (F,)
        Gradient norm per frequency, in output units per metre.
    """
    grid = gf_tensor.grid
    if grid is None:
        raise GfBeamError("BAD_PARAMETER", "Green's-function tensor carries no grid")
    if grid.is_boundary(source_index):
        raise GfBeamError("BOUNDARY", f"focus index {source_index} lies on the grid boundary")
    if not fd_step > 0:
        raise GfBeamError("BAD_PARAMETER", f"fd_step must be > 0, got {fd_step}")
    g_src = gf_tensor.column(source_index)
    if gf_tensor.field is not None:
        h = fd_step
        y = grid.point(source_index)
        n = len(_FD_WEIGHTS)
        steps = np.concatenate([np.arange(1, n + 1), -np.arange(1, n + 1)])[:, None] * h
        offsets = np.concatenate([steps * grid.axes[0], steps * grid.axes[1]])
        resp = _response(steering_vector(gf_tensor.field(y + offsets), params), g_src[:, None, :])
        resp = resp.reshape(resp.shape[0], 2, 2, n)
        grad = np.sum(_FD_WEIGHTS * (resp[:, :, 0] - resp[:, :, 1]), axis=-1) / h
    else:
        i, j = grid.unravel(source_index)
        h = grid.spacing
        near = [grid.index(i + 1, j), grid.index(i - 1, j), grid.index(i, j + 1), grid.index(i, j - 1)]
        resp = _response(steering_vector(gf_tensor.values[:, near, :], params), g_src[:, None, :])
        grad = np.stack([resp[:, 0] - resp[:, 1], resp[:, 2] - resp[:, 3]], axis=-1) / (2 * h)
    return np.linalg.norm(grad, axis=-1)
