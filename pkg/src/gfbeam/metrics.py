"""Quality criteria of a dirty map with one known source.

All five criteria take a :class:`~gfbeam.beamform.SourceMap` and the true
source, given either as a grid index or as a point (snapped to the nearest
grid point).  Levels are ``10*log10`` of the linear map values.  Regions
(main lobe, side lobes, the -1 dB contour) are connected components on the
grid with 8-connectivity.

Criteria that cannot be evaluated cleanly still return a value and add a
flag to the optional ``flags`` set:

``DEGENERATE``
    all map values equal; the argmax falls back to index 0.
``LEVEL_NONPOSITIVE``
    map value at the source is <= 0; the level error is ``-inf``.
``CONTOUR_CLIPPED``
    the -1 dB region touches the grid edge; the resolution is a lower bound.
``MSR_NOT_FOUND``
    no side lobe within 60 dB of the maximum; the MSR is a lower bound.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .errors import GfBeamError
from .scene import POINT_TOL

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)
MSR_FLOOR_DB = 60.0
DEFAULT_STEP_DB = 0.1


def _db(x):
    with np.errstate(divide="ignore"):
        return 10 * np.log10(np.clip(x, 0, None))


def _source_index(source_map, y_s):
    if isinstance(y_s, (int, np.integer)):
        if not 0 <= y_s < len(source_map.values):
            raise GfBeamError("INDEX_RANGE", f"source index {y_s} outside the map")
        return int(y_s)
    n, dist = source_map.grid.nearest_index(np.asarray(y_s, dtype=float))
    if dist > POINT_TOL:
        warnings.warn(f"SOURCE_OFF_GRID: source snapped to grid index {n} ({dist:.3g} m away)",
                      stacklevel=3)
    return n


def _add(flags, name):
    if flags is not None:
        flags.add(name)


def spatial_deviation(source_map, y_s, flags=None):
    """Distance between the map maximum and the source, in metres."""
    if len(source_map.values) == 0:
        raise GfBeamError("EMPTY_MAP", "map has no values")
    s = _source_index(source_map, y_s)
    vals = source_map.values
    if np.all(vals == vals[0]):
        _add(flags, "DEGENERATE")
    n_max = source_map.argmax()
    grid = source_map.grid
    return float(np.linalg.norm(grid.point(n_max) - grid.point(s)))


def level_error(source_map, y_s, true_power=1.0, flags=None):
    """Map level at the source minus the true level, in dB."""
    s = _source_index(source_map, y_s)
    a = source_map.values[s]
    if a <= 0:
        _add(flags, "LEVEL_NONPOSITIVE")
        return -math.inf
    return float(10 * np.log10(a) - 10 * np.log10(true_power))


def resolution(source_map, y_max=None, flags=None):
    """Twice the largest distance from the maximum to the -1 dB region edge.

    The region is the connected set of grid points, containing the maximum,
    whose level is at least ``L_max - 1 dB``; the distance is measured to its
    farthest grid point.
    """
    grid = source_map.grid
    n_max = source_map.argmax() if y_max is None else _source_index(source_map, y_max)
    levels = _db(source_map.values)
    l_max = levels[n_max]
    inside = (levels >= l_max - 1.0).reshape(grid.shape)
    labels, _ = ndimage.label(inside, structure=EIGHT_CONNECTED)
    region = labels == labels.reshape(-1)[n_max]
    if region[0, :].any() or region[-1, :].any() or region[:, 0].any() or region[:, -1].any():
        _add(flags, "CONTOUR_CLIPPED")
    pts = grid.points[region.ravel()]
    return float(2 * np.max(np.linalg.norm(pts - grid.point(n_max), axis=1)))


def msr(source_map, y_s, step_db=DEFAULT_STEP_DB, flags=None):
    """Main-lobe to side-lobe ratio ``L_s - L_SL`` in dB.

    A threshold descends from the map maximum in steps of ``step_db``.  The
    main lobe is the region around the source: a component above the
    threshold belongs to it when it lies inside the connected region of
    points at or above the source level that contains the source (or, below
    the source level, when it contains the source).  The first component
    that does not belong to the main lobe is the highest side lobe; its
    largest value is ``L_SL``.  ``L_s`` is the level at the source, so the
    ratio is negative when the source sits below another lobe.
    """
    if not step_db > 0:
        raise GfBeamError("BAD_PARAMETER", f"step_db must be > 0, got {step_db}")
    grid = source_map.grid
    s = _source_index(source_map, y_s)
    levels = _db(source_map.values).reshape(grid.shape)
    flat = levels.ravel()
    l_s = flat[s]
    l_max = flat.max()
    if np.isfinite(l_s):
        at_source, _ = ndimage.label(levels >= l_s, structure=EIGHT_CONNECTED)
        main_region = (at_source == at_source.ravel()[s]).ravel()
    else:
        main_region = np.zeros(flat.size, dtype=bool)

    n_steps = int(np.floor(MSR_FLOOR_DB / step_db + 1e-9))
    for k in range(n_steps + 1):
        thr = l_max - k * step_db
        labels, n_comp = ndimage.label(levels >= thr, structure=EIGHT_CONNECTED)
        labels = labels.ravel()
        for comp in range(1, n_comp + 1):
            members = labels == comp
            if thr >= l_s:
                is_main = bool(np.all(main_region[members]))
            else:
                is_main = bool(members[s])
            if not is_main:
                return float(l_s - flat[members].max())
    _add(flags, "MSR_NOT_FOUND")
    return float(l_s - (l_max - MSR_FLOOR_DB))


def spr(source_map, y_s, mask=None, flags=None):
    """Source-to-pattern ratio: level of ``A(y_s)`` over the mean of the masked map.

    The mean runs over every masked point, the source included.  ``mask``
    defaults to the grid's mask (all points when the grid has none).
    """
    s = _source_index(source_map, y_s)
    if mask is None:
        mask = source_map.grid.active_mask() if source_map.grid is not None else None
    vals = source_map.values
    sel = vals if mask is None else vals[np.asarray(mask, dtype=bool)]
    if sel.size == 0:
        raise GfBeamError("EMPTY_MASK", "mask selects no focus points")
    mean = sel.mean()
    if vals[s] <= 0 or mean <= 0:
        _add(flags, "LEVEL_NONPOSITIVE")
        return -math.inf
    return float(10 * np.log10(vals[s] / mean))


CRITERIA = ("spatial_deviation", "level_error", "resolution", "msr", "spr")

# which flag invalidates which criterion when averaging
_FLAG_CRITERION = {
    "DEGENERATE": "spatial_deviation",
    "LEVEL_NONPOSITIVE": "level_error",
    "CONTOUR_CLIPPED": "resolution",
    "MSR_NOT_FOUND": "msr",
}


@dataclass
class MapCriteria:
    frequency: float
    spatial_deviation: float
    level_error: float
    resolution: float
    msr: float
    spr: float
    flags: list = field(default_factory=list)

    def as_dict(self):
        return asdict(self)


def evaluate_map(source_map, y_s, true_power=1.0, mask=None, step_db=DEFAULT_STEP_DB):
    """All five criteria of one map."""
    s = _source_index(source_map, y_s)
    flags = set()
    dev = spatial_deviation(source_map, s, flags)
    dl = level_error(source_map, s, true_power, flags)
    b = resolution(source_map, None, flags)
    m = msr(source_map, s, step_db, flags)
    ratio = spr(source_map, s, mask, flags)
    return MapCriteria(source_map.frequency, dev, dl, b, m, ratio, sorted(flags))


@dataclass
class AggregateCriteria:
    """Per-frequency means over source positions.

    ``means[name]`` has one entry per frequency; ``flag_counts[flag]`` counts
    flagged maps per frequency.  Flagged values are left out of the mean of
    the criterion they affect (NaN when every position is flagged).
    """

    frequencies: list
    means: dict
    flag_counts: dict
    n_positions: int

    def as_dict(self):
        return {
            "frequencies": list(self.frequencies),
            "n_positions": self.n_positions,
            "means": {k: [_json_float(v) for v in vals] for k, vals in self.means.items()},
            "flag_counts": self.flag_counts,
        }


def aggregate(per_position):
    """Average criteria over source positions.

    Parameters
    ----------
    per_position : list of list of MapCriteria
        One list per source position, each ordered by frequency.
    """
    if not per_position:
        raise GfBeamError("EMPTY", "no criteria to aggregate")
    freqs = [c.frequency for c in per_position[0]]
    for row in per_position[1:]:
        if [c.frequency for c in row] != freqs:
            raise GfBeamError("AXIS_MISMATCH", "source positions do not share a frequency axis")
    means = {name: [] for name in CRITERIA}
    counts = {flag: [0] * len(freqs) for flag in _FLAG_CRITERION}
    for q in range(len(freqs)):
        column = [row[q] for row in per_position]
        for name in CRITERIA:
            vals = [getattr(c, name) for c in column
                    if not any(_FLAG_CRITERION.get(f) == name for f in c.flags)]
            means[name].append(float(np.mean(vals)) if vals else math.nan)
        for c in column:
            for f in c.flags:
                counts.setdefault(f, [0] * len(freqs))[q] += 1
    return AggregateCriteria(freqs, means, counts, len(per_position))


def _json_float(v):
    return None if v is None or not math.isfinite(v) else v


def criteria_to_json(per_position, aggregate_result, path=None, labels=None):
    """Serialise per-position criteria and their aggregate deterministically."""
    doc = {
        "positions": [
            {
                "label": labels[k] if labels else k,
                "criteria": [
                    {kk: (_json_float(vv) if isinstance(vv, float) else vv) for kk, vv in c.as_dict().items()}
                    for c in row
                ],
            }
            for k, row in enumerate(per_position)
        ],
        "aggregate": aggregate_result.as_dict(),
    }
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def criteria_to_csv(per_position, path, labels=None):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["position", "frequency", *CRITERIA, "flags"])
        for k, row in enumerate(per_position):
            for c in row:
                w.writerow([labels[k] if labels else k, repr(float(c.frequency)),
                            *(repr(float(getattr(c, n))) for n in CRITERIA), ";".join(c.flags)])
