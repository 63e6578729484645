import numpy as np
import pytest
from hypothesis import given, strategies as st

from gfbeam.errors import GfBeamError
from gfbeam.greens import FreeFieldProvider, IsmProvider, evaluate_gf_tensor
from gfbeam.scene import Panel, ReflectorSet, Scene
from gfbeam.steering import (
    PRESETS,
    SteeringParams,
    check_amplitude_condition,
    check_local_max_condition,
    scale_function,
    steering_set,
    steering_vector,
)

C = 343.0


def _gvec(rng, m):
    return rng.uniform(0.2, 3.0, m) * np.exp(1j * rng.uniform(-np.pi, np.pi, m))


def test_preset_table():
    assert PRESETS == {"I": (0, 1), "II": (1, 0), "III": (1, 2), "IV": (0.5, 2)}
    with pytest.raises(GfBeamError):
        SteeringParams(0.5, 1.0, preset="I")
    with pytest.raises(GfBeamError):
        SteeringParams.from_preset("V")


def test_scale_function_examples(rng):
    g = _gvec(rng, 7)
    np.testing.assert_allclose(scale_function(g, 0, 1), np.full(7, 1 / 7), rtol=1e-15)
    np.testing.assert_allclose(scale_function(g, 1, 2), np.abs(g) / np.sum(np.abs(g) ** 2), rtol=1e-14)


@given(st.floats(-2, 2), st.floats(-3, 3))
def test_scale_function_scalar(alpha, beta):
    got = scale_function(np.array([2.0 + 0j]), alpha, beta)[0]
    assert got == pytest.approx(2 ** (beta - 1) / 2 ** (alpha * beta), rel=1e-13)


def test_zero_gf():
    with pytest.raises(GfBeamError, match="ZERO_GF"):
        steering_vector(np.array([1.0, 0.0]), SteeringParams.from_preset("I"))


def test_free_field_closed_forms(rng):
    r = rng.uniform(0.5, 2.0, 9)
    k = 2 * np.pi * 700 / C
    g = np.exp(-1j * k * r) / r
    m = len(r)
    closed = {
        "I": np.exp(-1j * k * r) / m,
        "II": np.exp(-1j * k * r) * r / m,
        "III": g / np.sum(np.abs(g) ** 2),
        "IV": g / (np.sqrt(m) * np.linalg.norm(g)),
    }
    for name, want in closed.items():
        got = steering_vector(g, SteeringParams.from_preset(name))
        np.testing.assert_allclose(got, want, rtol=1e-14, atol=0)


def test_preset_three_scalar():
    assert steering_vector(np.array([0.5 + 0j]), SteeringParams.from_preset("III"))[0] == pytest.approx(2.0)


@given(st.integers(1, 16), st.floats(-1, 2), st.floats(-1, 3), st.integers(0, 2**32 - 1))
def test_phase_alignment(m, alpha, beta, seed):
    g = _gvec(np.random.default_rng(seed), m)
    w = steering_vector(g, SteeringParams(alpha, beta))
    prod = w * g.conj()
    assert np.all(np.abs(prod.imag) <= 1e-12 * np.abs(prod))
    assert np.all(prod.real > 0)


@pytest.mark.parametrize("beta", [-1.0, 0.0, 1.0, 2.0, 3.0])
def test_amplitude_sum_condition(rng, beta):
    for _ in range(20):
        g = _gvec(rng, int(rng.integers(2, 17)))
        alpha = rng.choice([1.0, rng.uniform(-1, 2)])
        s = np.sum(np.abs(g) * scale_function(g, alpha, beta))
        if alpha == 1 or beta == 0:
            assert abs(s - 1) < 1e-12
        else:
            assert abs(s - 1) > 1e-9


def test_beta_zero_scale_ignores_alpha(rng):
    # with beta = 0 the sum of |g|**0 is M, so the alpha dependence cancels
    g = _gvec(rng, 5)
    for alpha in (-1.0, 0.0, 0.3, 2.0):
        np.testing.assert_allclose(scale_function(g, alpha, 0.0), scale_function(g, 1.0, 0.0), rtol=1e-14)


def test_amplitude_condition_examples(small_scene):
    t = evaluate_gf_tensor(FreeFieldProvider(), small_scene, [300.0, 900.0])
    for name in ("II", "III"):
        np.testing.assert_allclose(check_amplitude_condition(t, 60, SteeringParams.from_preset(name)), 1.0,
                                   rtol=1e-12)
    from gfbeam.greens import GfTensor

    two = GfTensor([1.0], np.array([[[1.0 + 0j, 2.0j]]]), "imported")
    assert check_amplitude_condition(two, 0, SteeringParams.from_preset("I"))[0] == pytest.approx(2.25)


def _ism_tensor(scene, freqs):
    refl = ReflectorSet([Panel((-2, -2, -0.3), (4, 0, 0), (0, 4, 0)), Panel((0.6, -2, -0.3), (0, 4, 0), (0, 0, 2))])
    sc = Scene(scene.array, scene.grid, refl)
    return evaluate_gf_tensor(IsmProvider(refl, C, 2), sc, freqs)


def test_local_max_presets(small_scene):
    t = _ism_tensor(small_scene, [400.0, 1100.0])
    src = small_scene.grid.index(4, 6)
    h = 3e-4
    for params, vanishes in [(SteeringParams.from_preset("I"), True), (SteeringParams(2 / 3, 3.0), True),
                             (SteeringParams.from_preset("III"), False), (SteeringParams.from_preset("II"), False)]:
        grad = check_local_max_condition(t, src, params, h)
        amp = check_amplitude_condition(t, src, params)
        assert np.all(grad < 1e-6 * amp / h) == vanishes, params


def test_local_max_grid_fallback(small_scene):
    t = evaluate_gf_tensor(FreeFieldProvider(), small_scene, [500.0])
    bare = type(t)(t.frequencies, t.values, t.provenance, None, t.grid)
    src = small_scene.grid.index(5, 5)
    grad = check_local_max_condition(bare, src, SteeringParams.from_preset("I"))
    assert grad.shape == (1,) and np.isfinite(grad).all()


def test_local_max_boundary(small_scene):
    t = evaluate_gf_tensor(FreeFieldProvider(), small_scene, [500.0])
    with pytest.raises(GfBeamError, match="BOUNDARY"):
        check_local_max_condition(t, 0, SteeringParams.from_preset("I"))


def test_steering_set_and_scaling_covariance(small_scene):
    t = evaluate_gf_tensor(FreeFieldProvider(), small_scene, [800.0])
    p1 = SteeringParams.from_preset("I")
    s = steering_set(t, p1)
    assert s.values.shape == t.values.shape and s.provenance == "freefield"
    src = 37
    g = t.values[0, src]
    a = np.abs(s.values[0].conj() @ g) ** 2
    b = np.abs(steering_set(t.scaled(0.3 - 2j), p1).values[0].conj() @ ((0.3 - 2j) * g)) ** 2
    assert np.argmax(a) == np.argmax(b) == src


def test_presets_satisfy_their_conditions():
    for name, (alpha, beta) in PRESETS.items():
        p = SteeringParams.from_preset(name)
        assert p.preserves_amplitude == (name in ("II", "III"))
        assert p.locates_source == (name in ("I", "IV"))


def test_labels():
    assert SteeringParams.from_preset("II").label == "II"
    assert SteeringParams(0.25, 3.0).label == "alpha=0.25,beta=3"
    assert SteeringParams(2 / 3, 3.0).locates_source and not SteeringParams(1, 2).locates_source
