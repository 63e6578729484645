"""Geometry of a beamforming setup: microphones, focus grid, reflectors.

Coordinate convention used by the defaults: the separating wall lies in the
plane ``z = 0``, the microphone array sits at positive ``z`` and the focus
plane is a few centimetres in front of the wall.  Nothing in the numerics
depends on this convention; it only shapes :func:`reference_scene`.

Focus grid indexing
-------------------
A :class:`FocusGrid` has ``nx`` points along ``axes[0]`` and ``ny`` points
along ``axes[1]``.  Point ``(i, j)`` sits at ``origin + i*spacing*axes[0] +
j*spacing*axes[1]`` and has the flat index ``n = j*nx + i`` (row-major with
rows running along ``axes[1]``).  ``values.reshape(grid.shape)`` therefore
gives an image of shape ``(ny, nx)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import GfBeamError

# geometric coincidence tolerance in metres
POINT_TOL = 1e-9
ORTHO_TOL = 1e-12


def _vec3(value, name="point"):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise GfBeamError("BAD_SHAPE", f"{name} must be a 3D point, got shape {arr.shape}")
    return arr


def _frozen(arr):
    arr = np.array(arr, dtype=arr.dtype if isinstance(arr, np.ndarray) else None)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MicrophoneArray:
    """Microphone positions, shape ``(M, 3)`` in metres."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise GfBeamError("BAD_SHAPE", f"positions must have shape (M, 3), got {pos.shape}")
        object.__setattr__(self, "positions", _frozen(pos))

    @property
    def n_mics(self):
        return self.positions.shape[0]

    def __len__(self):
        return self.n_mics


@dataclass(frozen=True, eq=False)
class FocusGrid:
    """Planar rectangular focus grid.  See the module docstring for indexing."""

    origin: np.ndarray
    axes: np.ndarray
    extent: tuple
    spacing: float
    mask: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "origin", _frozen(_vec3(self.origin, "origin")))
        axes = np.asarray(self.axes, dtype=float)
        if axes.shape != (2, 3):
            raise GfBeamError("BAD_SHAPE", f"axes must have shape (2, 3), got {axes.shape}")
        object.__setattr__(self, "axes", _frozen(axes))
        object.__setattr__(self, "extent", tuple(float(e) for e in self.extent))
        object.__setattr__(self, "spacing", float(self.spacing))
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool).ravel()
            object.__setattr__(self, "mask", _frozen(mask))

    @property
    def nx(self):
        return _count(self.extent[0], self.spacing)

    @property
    def ny(self):
        return _count(self.extent[1], self.spacing)

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def n_points(self):
        return self.nx * self.ny

    def __len__(self):
        return self.n_points

    @property
    def points(self):
        """All grid point coordinates, shape ``(N, 3)``, in flat-index order."""
        j, i = np.divmod(np.arange(self.n_points), self.nx)
        return self.coordinates(i, j)

    def coordinates(self, i, j):
        i = np.asarray(i, dtype=float)[..., None]
        j = np.asarray(j, dtype=float)[..., None]
        return self.origin + i * self.spacing * self.axes[0] + j * self.spacing * self.axes[1]

    def index(self, i, j):
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise GfBeamError("INDEX_RANGE", f"grid cell ({i}, {j}) outside {self.nx}x{self.ny} grid")
        return j * self.nx + i

    def unravel(self, index):
        """Flat index -> ``(i, j)``."""
        if not 0 <= index < self.n_points:
            raise GfBeamError("INDEX_RANGE", f"focus index {index} outside [0, {self.n_points})")
        j, i = divmod(int(index), self.nx)
        return i, j

    def point(self, index):
        i, j = self.unravel(index)
        return self.coordinates(i, j)

    def nearest_index(self, point):
        """Return ``(index, distance)`` of the grid point closest to ``point``."""
        rel = _vec3(point) - self.origin
        u = rel @ self.axes[0] / self.spacing
        v = rel @ self.axes[1] / self.spacing
        i = int(np.clip(np.rint(u), 0, self.nx - 1))
        j = int(np.clip(np.rint(v), 0, self.ny - 1))
        n = j * self.nx + i
        return n, float(np.linalg.norm(self.coordinates(i, j) - point))

    def is_boundary(self, index):
        i, j = self.unravel(index)
        return i in (0, self.nx - 1) or j in (0, self.ny - 1)

    def active_mask(self):
        """The evaluation mask; all points when no mask was given."""
        if self.mask is None:
            return np.ones(self.n_points, dtype=bool)
        return np.asarray(self.mask)

    def with_mask(self, mask):
        return FocusGrid(self.origin, self.axes, self.extent, self.spacing, mask)

    def box_mask(self, box_min, box_max):
        """Mask selecting grid points inside an axis-aligned box."""
        pts = self.points
        lo, hi = _vec3(box_min), _vec3(box_max)
        return np.all((pts >= lo - POINT_TOL) & (pts <= hi + POINT_TOL), axis=1)


def _count(length, spacing):
    # tolerance absorbs 1.44 / 0.01 = 143.99999999999997
    return int(math.floor(length / spacing + 1e-9)) + 1


@dataclass(frozen=True, eq=False)
class Panel:
    """Rigid rectangle ``corner + s*edge1 + t*edge2`` for ``s, t`` in [0, 1]."""

    corner: np.ndarray
    edge1: np.ndarray
    edge2: np.ndarray
    reflection: float = 1.0

    def __post_init__(self):
        for name in ("corner", "edge1", "edge2"):
            object.__setattr__(self, name, _frozen(_vec3(getattr(self, name), name)))
        object.__setattr__(self, "reflection", float(self.reflection))

    @property
    def normal(self):
        n = np.cross(self.edge1, self.edge2)
        return n / np.linalg.norm(n)

    @property
    def area(self):
        return float(np.linalg.norm(np.cross(self.edge1, self.edge2)))

    def signed_distance(self, points):
        return (np.asarray(points, dtype=float) - self.corner) @ self.normal

    def local_coords(self, points):
        rel = np.asarray(points, dtype=float) - self.corner
        s = rel @ self.edge1 / (self.edge1 @ self.edge1)
        t = rel @ self.edge2 / (self.edge2 @ self.edge2)
        return s, t

    def contains(self, points, tol=POINT_TOL):
        """True where a point lies on the panel surface (within ``tol``)."""
        s, t = self.local_coords(points)
        e1, e2 = np.linalg.norm(self.edge1), np.linalg.norm(self.edge2)
        return (
            (np.abs(self.signed_distance(points)) <= tol)
            & (s >= -tol / e1) & (s <= 1 + tol / e1)
            & (t >= -tol / e2) & (t <= 1 + tol / e2)
        )


@dataclass(frozen=True, eq=False)
class ReflectorSet:
    panels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "panels", tuple(self.panels))

    def __len__(self):
        return len(self.panels)

    def __iter__(self):
        return iter(self.panels)

    def __getitem__(self, item):
        return self.panels[item]


@dataclass(frozen=True, eq=False)
class Source:
    position: np.ndarray
    amplitude: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(_vec3(self.position, "source position")))
        object.__setattr__(self, "amplitude", complex(self.amplitude))


@dataclass(frozen=True, eq=False)
class Scene:
    array: MicrophoneArray
    grid: FocusGrid
    reflectors: ReflectorSet = field(default_factory=ReflectorSet)
    c: float = 343.0
    sources: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "c", float(self.c))

    def source_index(self, k):
        """Grid index of source ``k``, snapped to the nearest grid point.

        Emits a :class:`UserWarning` when the source is off the grid.
        """
        n, dist = self.grid.nearest_index(self.sources[k].position)
        if dist > POINT_TOL:
            warnings.warn(
                f"SOURCE_OFF_GRID: source {k} is {dist:.3g} m from the nearest grid point; "
                f"snapping to grid index {n}",
                stacklevel=2,
            )
        return n

    def source_indices(self):
        return [self.source_index(k) for k in range(len(self.sources))]


def build_ring_array(diameters, counts, plane_offsets):
    """Concentric microphone rings around the z axis.

    Ring ``i`` holds ``counts[i]`` equally spaced microphones on a circle of
    diameter ``diameters[i]`` in the plane ``z = plane_offsets[i]``; the first
    microphone of every ring is at azimuth 0 (on the +x axis).

    Examples
    --------
    >>> build_ring_array([2.0], [4], [0.0]).positions.round(12)[1]
    array([0., 1., 0.])
    """
    if not (len(diameters) == len(counts) == len(plane_offsets)):
        raise GfBeamError("LENGTH_MISMATCH", "diameters, counts and plane_offsets differ in length")
    rings = []
    for d, n, z in zip(diameters, counts, plane_offsets):
        if d <= 0:
            raise GfBeamError("NONPOSITIVE_DIAMETER", f"ring diameter must be > 0, got {d}")
        if int(n) != n or n < 1:
            raise GfBeamError("BAD_COUNT", f"ring microphone count must be a positive integer, got {n}")
        phi = 2 * np.pi * np.arange(int(n)) / int(n)
        r = d / 2
        rings.append(np.column_stack([r * np.cos(phi), r * np.sin(phi), np.full(int(n), float(z))]))
    if not rings:
        raise GfBeamError("EMPTY_ARRAY", "at least one ring is required")
    return MicrophoneArray(np.vstack(rings))


def build_focus_grid(origin, axes, extent, spacing, mask=None):
    """Validated constructor for :class:`FocusGrid`."""
    if spacing <= 0:
        raise GfBeamError("NONPOSITIVE_SPACING", f"spacing must be > 0, got {spacing}")
    extent = tuple(float(e) for e in extent)
    if len(extent) != 2 or min(extent) < 0:
        raise GfBeamError("BAD_EXTENT", f"extent must be two nonnegative lengths, got {extent}")
    grid = FocusGrid(origin, axes, extent, spacing, mask)
    gram = grid.axes @ grid.axes.T
    if np.max(np.abs(gram - np.eye(2))) > ORTHO_TOL:
        raise GfBeamError("AXES_NOT_ORTHONORMAL", "grid axes must be orthonormal")
    if mask is not None and grid.mask.size != grid.n_points:
        raise GfBeamError("MASK_SHAPE", f"mask has {grid.mask.size} entries, grid has {grid.n_points}")
    return grid


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    severity: str = "error"


def validate_scene(scene):
    """Check every scene invariant and report violations as diagnostics.

    Returns an empty list for a valid scene.  Nothing is raised.
    """
    out = []
    pos = scene.array.positions
    if pos.shape[0] < 1:
        out.append(Diagnostic("EMPTY_ARRAY", "array has no microphones"))
    if pos.shape[0] > 1:
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        iu = np.triu_indices(pos.shape[0], 1)
        for a, b in zip(*iu):
            if d[a, b] <= POINT_TOL:
                out.append(Diagnostic("DUPLICATE_MIC", f"microphones {a} and {b} coincide"))
    if not np.all(np.isfinite(pos)):
        out.append(Diagnostic("NONFINITE_MIC", "microphone positions contain NaN/Inf"))

    grid = scene.grid
    if not grid.spacing > 0:
        out.append(Diagnostic("NONPOSITIVE_SPACING", f"grid spacing {grid.spacing} must be > 0"))
    if min(grid.extent) < 0:
        out.append(Diagnostic("BAD_EXTENT", f"grid extent {grid.extent} must be nonnegative"))
    gram = grid.axes @ grid.axes.T
    if np.max(np.abs(gram - np.eye(2))) > ORTHO_TOL:
        out.append(Diagnostic("AXES_NOT_ORTHONORMAL", "grid axes are not orthonormal"))
    if grid.mask is not None and grid.spacing > 0 and grid.mask.size != grid.n_points:
        out.append(Diagnostic("MASK_SHAPE", f"mask has {grid.mask.size} entries, grid has {grid.n_points}"))

    for k, panel in enumerate(scene.reflectors):
        if abs(panel.edge1 @ panel.edge2) > ORTHO_TOL * max(1.0, np.linalg.norm(panel.edge1) * np.linalg.norm(panel.edge2)):
            out.append(Diagnostic("PANEL_NOT_RECTANGULAR", f"panel {k} edges are not orthogonal"))
        if panel.area <= 0:
            out.append(Diagnostic("PANEL_ZERO_AREA", f"panel {k} has zero area"))
        if not 0 <= panel.reflection <= 1:
            out.append(Diagnostic("REFLECTION_RANGE", f"panel {k} reflection {panel.reflection} outside [0, 1]"))

    if not scene.c > 0:
        out.append(Diagnostic("NONPOSITIVE_SPEED", f"speed of sound {scene.c} must be > 0"))

    if grid.spacing > 0 and min(grid.extent) >= 0:
        for k, src in enumerate(scene.sources):
            n, dist = grid.nearest_index(src.position)
            if dist > POINT_TOL:
                out.append(Diagnostic(
                    "SOURCE_OFF_GRID",
                    f"source {k} is {dist:.3g} m from grid point {n}; metrics snap to it",
                    severity="warning",
                ))
    return out


# --- the reference setup ---------------------------------------------------

REFERENCE_SOURCE_POSITIONS = (
    (-0.42, 0.18, 0.03),
    (0.28, 0.28, 0.03),
    (-0.17, -0.32, 0.03),
    (0.48, -0.27, 0.03),
)

# inner faces of a 1.54 x 1.14 x 0.46 m box with 5 mm walls
BOX_HALF_X = 0.765
BOX_HALF_Y = 0.565
BOX_DEPTH = 0.46


def box_reflectors(half_x=BOX_HALF_X, half_y=BOX_HALF_Y, depth=BOX_DEPTH, wall_half=1.5,
                   reflection=1.0):
    """Open box standing on a wall panel in the plane ``z = 0``."""
    hx, hy = half_x, half_y
    return ReflectorSet((
        Panel((-wall_half, -wall_half, 0.0), (2 * wall_half, 0, 0), (0, 2 * wall_half, 0), reflection),
        Panel((hx, -hy, 0.0), (0, 2 * hy, 0), (0, 0, depth), reflection),
        Panel((-hx, -hy, 0.0), (0, 2 * hy, 0), (0, 0, depth), reflection),
        Panel((-hx, hy, 0.0), (2 * hx, 0, 0), (0, 0, depth), reflection),
        Panel((-hx, -hy, 0.0), (2 * hx, 0, 0), (0, 0, depth), reflection),
    ))


def reference_scene(spacing=0.01, plane_z=0.03, c=343.0, reflection=1.0):
    """Two-ring 64-microphone array in front of a reflecting box.

    The focus grid is 1.44 m x 1.44 m centred on the array axis, masked to
    the box interior.
    """
    array = build_ring_array([1.6, 0.8], [40, 24], [0.8, 1.3])
    grid = build_focus_grid((-0.72, -0.72, plane_z), ((1, 0, 0), (0, 1, 0)), (1.44, 1.44), spacing)
    grid = grid.with_mask(grid.box_mask((-BOX_HALF_X, -BOX_HALF_Y, -1.0), (BOX_HALF_X, BOX_HALF_Y, 1.0)))
    sources = tuple(Source((x, y, plane_z)) for x, y, _ in REFERENCE_SOURCE_POSITIONS)
    return Scene(array, grid, box_reflectors(reflection=reflection), c, sources)


# --- config files ------------------------------------------------------------

def scene_from_dict(cfg):
    """Build a scene from the nested mapping documented in the README."""
    try:
        arr = cfg["array"]
        if "rings" in arr:
            rings = arr["rings"]
            array = build_ring_array(
                [r["diameter"] for r in rings],
                [r["count"] for r in rings],
                [r.get("offset", 0.0) for r in rings],
            )
            if arr.get("positions"):
                raise GfBeamError("CONFIG", "array: give either 'rings' or 'positions', not both")
        else:
            array = MicrophoneArray(arr["positions"])
        g = cfg["grid"]
        grid = build_focus_grid(
            g["origin"], g.get("axes", ((1, 0, 0), (0, 1, 0))), g["extent"], g["spacing"]
        )
        if "mask" in g and g["mask"] is not None:
            grid = grid.with_mask(grid.box_mask(g["mask"]["box_min"], g["mask"]["box_max"]))
        panels = [
            Panel(p["corner"], p["edge1"], p["edge2"], p.get("reflection", 1.0))
            for p in cfg.get("reflectors") or []
        ]
        sources = [
            Source(s["position"], _complex(s.get("amplitude", 1.0)))
            for s in cfg.get("sources") or []
        ]
        c = cfg.get("speed_of_sound", 343.0)
    except KeyError as exc:
        raise GfBeamError("CONFIG", f"scene config is missing key {exc}") from None
    return Scene(array, grid, ReflectorSet(panels), c, sources)


def _complex(value):
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


def scene_to_dict(scene):
    g = scene.grid
    out = {
        "speed_of_sound": scene.c,
        "array": {"positions": scene.array.positions.tolist()},
        "grid": {
            "origin": g.origin.tolist(),
            "axes": g.axes.tolist(),
            "extent": list(g.extent),
            "spacing": g.spacing,
        },
        "reflectors": [
            {"corner": p.corner.tolist(), "edge1": p.edge1.tolist(), "edge2": p.edge2.tolist(),
             "reflection": p.reflection}
            for p in scene.reflectors
        ],
        "sources": [
            {"position": s.position.tolist(), "amplitude": [s.amplitude.real, s.amplitude.imag]}
            for s in scene.sources
        ],
    }
    return out


def load_scene(path):
    with open(path) as fh:
        return scene_from_dict(yaml.safe_load(fh))


def save_scene(scene, path, mask_box=None):
    cfg = scene_to_dict(scene)
    if mask_box is not None:
        cfg["grid"]["mask"] = {"box_min": list(mask_box[0]), "box_max": list(mask_box[1])}
    Path(path).write_text(yaml.safe_dump(cfg, sort_keys=False))
