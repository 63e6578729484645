import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gfbeam.errors import GfBeamError
from gfbeam.scene import (
    MicrophoneArray,
    Panel,
    ReflectorSet,
    Scene,
    Source,
    build_focus_grid,
    build_ring_array,
    load_scene,
    reference_scene,
    save_scene,
    scene_from_dict,
    validate_scene,
)

XY = ((1, 0, 0), (0, 1, 0))


def test_two_ring_layout():
    arr = build_ring_array([1.6, 0.8], [40, 24], [0.8, 1.3])
    assert arr.n_mics == 64
    r = np.hypot(arr.positions[:, 0], arr.positions[:, 1])
    np.testing.assert_allclose(r[:40], 0.8)
    np.testing.assert_allclose(r[40:], 0.4)
    assert np.all(arr.positions[:40, 2] == 0.8) and np.all(arr.positions[40:, 2] == 1.3)


def test_single_mic_at_angle_zero():
    np.testing.assert_array_equal(build_ring_array([2.0], [1], [0.0]).positions, [[1.0, 0.0, 0.0]])


def test_four_mics_quarter_turns():
    pos = build_ring_array([2.0], [4], [0.0]).positions
    np.testing.assert_allclose(pos, [[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]], atol=1e-15)


@pytest.mark.parametrize("args, code", [
    (([1.0, 2.0], [3], [0.0]), "LENGTH_MISMATCH"),
    (([0.0], [3], [0.0]), "NONPOSITIVE_DIAMETER"),
    (([1.0], [0], [0.0]), "BAD_COUNT"),
    (([], [], []), "EMPTY_ARRAY"),
])
def test_ring_errors(args, code):
    with pytest.raises(GfBeamError) as exc:
        build_ring_array(*args)
    assert exc.value.code == code


@given(st.integers(1, 50), st.floats(0.1, 3.0))
def test_ring_rotation_invariance(n, d):
    pos = build_ring_array([d], [n], [0.0]).positions
    phi = 2 * np.pi / n
    rot = np.array([[np.cos(phi), -np.sin(phi), 0], [np.sin(phi), np.cos(phi), 0], [0, 0, 1]])
    turned = pos @ rot.T
    # each rotated mic lands on some original mic
    dist = np.linalg.norm(turned[:, None] - pos[None], axis=-1)
    assert np.all(dist.min(axis=1) < 1e-12)


@pytest.mark.parametrize("extent, shape", [((1.44, 1.44), (145, 145)), ((0, 0), (1, 1)), ((0.02, 0.01), (2, 3))])
def test_grid_counts(extent, shape):
    g = build_focus_grid((0, 0, 0), XY, extent, 0.01)
    assert g.shape == shape
    assert g.n_points == shape[0] * shape[1]


def test_grid_coordinates_and_order():
    g = build_focus_grid((1.0, 2.0, 3.0), XY, (0.02, 0.01), 0.01)
    np.testing.assert_allclose(g.points[0], (1, 2, 3))
    np.testing.assert_allclose(g.points[1], (1.01, 2, 3))
    np.testing.assert_allclose(g.points[3], (1.0, 2.01, 3))
    assert g.index(2, 1) == 5


@given(st.floats(0.005, 0.2), st.floats(0, 1.0), st.floats(0, 1.0))
def test_index_round_trip(spacing, w, h):
    g = build_focus_grid((0.1, -0.3, 0.2), XY, (w, h), spacing)
    for n in range(0, g.n_points, max(1, g.n_points // 50)):
        assert g.nearest_index(g.point(n))[0] == n


def test_rotated_grid_round_trip():
    a = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    b = np.array([0.0, 0.0, 1.0])
    g = build_focus_grid((0, 0, 0), (a, b), (0.3, 0.2), 0.05)
    assert all(g.nearest_index(g.point(n))[0] == n for n in range(g.n_points))


@pytest.mark.parametrize("kwargs, code", [
    (dict(spacing=0.0), "NONPOSITIVE_SPACING"),
    (dict(extent=(-1, 1)), "BAD_EXTENT"),
    (dict(axes=((1, 0, 0), (1, 1e-6, 0))), "AXES_NOT_ORTHONORMAL"),
    (dict(mask=np.ones(5, bool)), "MASK_SHAPE"),
])
def test_grid_errors(kwargs, code):
    args = dict(origin=(0, 0, 0), axes=XY, extent=(0.1, 0.1), spacing=0.05)
    args.update(kwargs)
    with pytest.raises(GfBeamError) as exc:
        build_focus_grid(**args)
    assert exc.value.code == code


def test_reference_scene_is_valid():
    assert validate_scene(reference_scene(spacing=0.05)) == []


def test_reference_scene_mask_is_box_interior():
    sc = reference_scene(spacing=0.01)
    assert sc.grid.n_points == 21025
    inside = sc.grid.points[sc.grid.active_mask()]
    assert np.all(np.abs(inside[:, 0]) < 0.765) and np.all(np.abs(inside[:, 1]) < 0.565)
    assert sc.grid.active_mask().sum() < sc.grid.n_points


def _scene(**kw):
    args = dict(
        array=MicrophoneArray([[0, 0, 1], [0.1, 0, 1]]),
        grid=build_focus_grid((0, 0, 0), XY, (0.1, 0.1), 0.01),
    )
    args.update(kw)
    return Scene(**args)


def _codes(scene):
    return {d.code for d in validate_scene(scene)}


def test_duplicate_mic():
    assert "DUPLICATE_MIC" in _codes(_scene(array=MicrophoneArray([[0, 0, 1], [0, 0, 1]])))


def test_off_grid_source_warning():
    diags = validate_scene(_scene(sources=[Source((0.054, 0.05, 0))]))
    assert [(d.code, d.severity) for d in diags] == [("SOURCE_OFF_GRID", "warning")]


def test_panel_and_speed_diagnostics():
    bad = ReflectorSet([
        Panel((0, 0, -1), (1, 0, 0), (0.5, 1, 0)),
        Panel((0, 0, -1), (1, 0, 0), (2, 0, 0)),
        Panel((0, 0, -1), (1, 0, 0), (0, 1, 0), reflection=1.5),
    ])
    codes = _codes(_scene(reflectors=bad, c=-1.0))
    assert {"PANEL_NOT_RECTANGULAR", "PANEL_ZERO_AREA", "REFLECTION_RANGE", "NONPOSITIVE_SPEED"} <= codes


def test_valid_small_scene_has_no_diagnostics():
    assert validate_scene(_scene(sources=[Source((0.05, 0.05, 0))])) == []


def test_source_snapping_warns():
    sc = _scene(sources=[Source((0.054, 0.05, 0))])
    with pytest.warns(UserWarning, match="SOURCE_OFF_GRID"):
        n = sc.source_index(0)
    assert n == sc.grid.index(5, 5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert _scene(sources=[Source((0.03, 0.02, 0))]).source_index(0) == sc.grid.index(3, 2)


def test_config_round_trip(tmp_path):
    sc = reference_scene(spacing=0.1)
    path = tmp_path / "scene.yaml"
    save_scene(sc, path, mask_box=((-0.765, -0.565, -1), (0.765, 0.565, 1)))
    back = load_scene(path)
    np.testing.assert_array_equal(back.array.positions, sc.array.positions)
    np.testing.assert_array_equal(back.grid.points, sc.grid.points)
    np.testing.assert_array_equal(back.grid.active_mask(), sc.grid.active_mask())
    assert len(back.reflectors) == 5 and back.c == sc.c
    np.testing.assert_array_equal([s.position for s in back.sources], [s.position for s in sc.sources])


def test_config_rings_and_missing_key():
    cfg = {
        "array": {"rings": [{"diameter": 2.0, "count": 4, "offset": 1.0}]},
        "grid": {"origin": [0, 0, 0], "extent": [0.1, 0.1], "spacing": 0.05},
        "sources": [{"position": [0.05, 0.05, 0], "amplitude": [0, 2]}],
    }
    sc = scene_from_dict(cfg)
    assert sc.array.n_mics == 4 and sc.sources[0].amplitude == 2j
    del cfg["grid"]
    with pytest.raises(GfBeamError, match="CONFIG"):
        scene_from_dict(cfg)


def test_scene_types_are_immutable():
    sc = reference_scene(spacing=0.1)
    with pytest.raises(ValueError):
        sc.array.positions[0, 0] = 1.0
    with pytest.raises(AttributeError):
        sc.c = 1.0
