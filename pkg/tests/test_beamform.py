import numpy as np
import pytest

from gfbeam.beamform import (
    SourceMap,
    beamformer_output,
    dirty_map,
    export_map_binary,
    export_map_csv,
    import_map_binary,
    psf_map,
    td_beamform,
    td_spectrum,
)
from gfbeam.csm import Csm, TimeRecord, WelchParams, synthetic_csm, welch_csm
from gfbeam.errors import GfBeamError
from gfbeam.greens import FreeFieldProvider, IsmProvider, evaluate_gf_tensor
from gfbeam.scene import MicrophoneArray, Scene, build_focus_grid, reference_scene
from gfbeam.steering import SteeringParams, steering_set

FREQS = [240.0, 720.0]


@pytest.fixture(scope="module")
def box():
    sc = reference_scene(spacing=0.05)
    gf = evaluate_gf_tensor(IsmProvider(sc.reflectors, sc.c, 2), sc, FREQS)
    ff = evaluate_gf_tensor(FreeFieldProvider(sc.c), sc, FREQS)
    return sc, gf, ff


def test_double_sum_oracle(rng):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    c = a @ a.conj().T
    w = rng.normal(size=(5, 2)) + 1j * rng.normal(size=(5, 2))
    want = [sum(w[n, i].conjugate() * c[i, j] * w[n, j] for i in range(2) for j in range(2)).real
            for n in range(5)]
    np.testing.assert_allclose(beamformer_output(c, w), want, rtol=1e-12)


def test_not_hermitian():
    with pytest.raises(GfBeamError, match="NOT_HERMITIAN"):
        beamformer_output(np.array([[1, 1j], [1j, 1]]), np.array([[1, 1]]))


def test_zero_csm(box):
    sc, gf, _ = box
    st = steering_set(gf, SteeringParams.from_preset("I"))
    mp = dirty_map(Csm(FREQS, np.zeros((2, 64, 64))), st, FREQS[0], sc.grid)
    assert np.all(mp.values == 0)


def test_matching_preset_three_unit_at_source(box):
    sc, gf, _ = box
    src = sc.source_index(1)
    st = steering_set(gf, SteeringParams.from_preset("III"))
    for f in FREQS:
        mp = dirty_map(synthetic_csm(gf, src), st, f, sc.grid)
        assert abs(mp.values[src] - 1) < 1e-12


def test_psf_equals_dirty_map_of_synthetic(box):
    sc, gf, _ = box
    src = sc.source_index(0)
    for name in ("I", "II", "III", "IV"):
        st = steering_set(gf, SteeringParams.from_preset(name))
        csm = synthetic_csm(gf, src)
        for q, mp in enumerate(psf_map(gf, src, st)):
            dm = dirty_map(csm, st, FREQS[q], sc.grid)
            # near the nulls of the pattern the quadratic form loses relative digits
            np.testing.assert_allclose(dm.values, mp.values, rtol=1e-12, atol=1e-12 * mp.values.max())


def test_linearity(box):
    sc, gf, _ = box
    st = steering_set(gf, SteeringParams.from_preset("I"))
    c1, c2 = synthetic_csm(gf, sc.source_index(0)), synthetic_csm(gf, sc.source_index(2), 0.5)
    both = Csm(c1.frequencies, c1.matrices + c2.matrices)
    f = FREQS[1]
    np.testing.assert_allclose(dirty_map(both, st, f).values,
                               dirty_map(c1, st, f).values + dirty_map(c2, st, f).values, rtol=1e-12)


def test_preset_one_argmax_at_source(box):
    sc, gf, _ = box
    st = steering_set(gf, SteeringParams.from_preset("I"))
    for k in range(4):
        src = sc.source_index(k)
        for mp in psf_map(gf, src, st):
            assert mp.argmax() == src


def test_free_field_steering_misses_at_low_frequency(box):
    sc, gf, ff = box
    st = steering_set(ff, SteeringParams.from_preset("I"))
    off = [mp.argmax() != sc.source_index(k) for k in range(4) for mp in psf_map(gf, sc.source_index(k), st)
           if mp.frequency < 1000]
    assert any(off)


def test_dimension_and_frequency_mismatch(box):
    sc, gf, _ = box
    st = steering_set(gf, SteeringParams.from_preset("I"))
    with pytest.raises(GfBeamError, match="DIMENSION_MISMATCH"):
        dirty_map(Csm(FREQS, np.zeros((2, 3, 3))), st, FREQS[0])
    with pytest.raises(GfBeamError, match="FREQ_MISMATCH"):
        dirty_map(synthetic_csm(gf, 0), st, 500.0)


def _line_scene(r):
    mics = MicrophoneArray([[0, 0, r]])
    return Scene(mics, build_focus_grid((0, 0, 0), ((1, 0, 0), (0, 1, 0)), (0, 0), 0.1))


def test_td_single_channel_impulse():
    fs, c, r = 1000.0, 343.0, 3.43  # delay of exactly 10 samples
    p = np.zeros(100)
    p[30 + 10] = 1 / (4 * np.pi * r)
    for interp in ("nearest", "linear", "sinc"):
        out = td_beamform(TimeRecord(fs, p[None]), _line_scene(r), interp)
        assert out.signals.shape == (1, 90)
        assert abs(out.signals[0, 30] - 1) < 1e-12
        assert np.abs(np.delete(out.signals[0], 30)).max() < 1e-12


def test_td_equidistant_coherent():
    fs, r = 2000.0, 0.6
    phi = 2 * np.pi * np.arange(6) / 6
    mics = np.column_stack([r * np.cos(phi), r * np.sin(phi), np.zeros(6)])
    sc = Scene(MicrophoneArray(mics), build_focus_grid((0, 0, 0), ((1, 0, 0), (0, 1, 0)), (0, 0), 0.1))
    x = np.sin(2 * np.pi * 50 * np.arange(400) / fs)
    out = td_beamform(TimeRecord(fs, np.tile(x, (6, 1))), sc, "sinc")
    d = r / sc.c * fs
    t = np.arange(out.signals.shape[1]) + d
    want = 4 * np.pi * r * np.sin(2 * np.pi * 50 * t / fs)
    np.testing.assert_allclose(out.signals[0, 10:-10], want[10:-10], atol=1e-4 * 4 * np.pi * r)


def test_td_too_short():
    with pytest.raises(GfBeamError, match="TOO_SHORT"):
        td_beamform(TimeRecord(1000.0, np.zeros((1, 5))), _line_scene(3.43))


def test_td_spectrum_conventions(rng):
    fs, K = 1000.0, 100
    f = 20 * fs / K
    zero = td_spectrum(type("T", (), {"signals": np.zeros((1, 500)), "sample_rate": fs,
                                      "focus_indices": np.array([0])})(), WelchParams(K))
    assert np.all(zero.power == 0)
    from gfbeam.beamform import TdOutput

    tone = TdOutput(2.0 * np.cos(2 * np.pi * f * np.arange(1000) / fs)[None], fs, np.array([0]))
    assert td_spectrum(tone, WelchParams(K), [f]).power[0, 0] == pytest.approx(2.0, rel=1e-12)
    noise = TdOutput(rng.normal(size=(1, 900)), fs, np.array([0]))
    spec = td_spectrum(noise, WelchParams(K))
    ref = welch_csm(TimeRecord(fs, noise.signals), WelchParams(K))
    np.testing.assert_allclose(spec.power[0], ref.matrices[:, 0, 0].real, rtol=1e-12)


def test_map_exports(tmp_path, box):
    sc, gf, _ = box
    st = steering_set(gf, SteeringParams.from_preset("I"))
    maps = psf_map(gf, sc.source_index(0), st)
    export_map_binary(maps, tmp_path / "m.map")
    back = import_map_binary(tmp_path / "m.map")
    assert [m.frequency for m in back] == FREQS
    for a, b in zip(maps, back):
        np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_allclose(back[0].grid.points, sc.grid.points, atol=1e-12)

    export_map_csv(maps[0], tmp_path / "one.csv")
    rows = (tmp_path / "one.csv").read_text().splitlines()
    assert rows[0] == "x,y,value_linear,value_db" and len(rows) == sc.grid.n_points + 1
    export_map_csv(maps, tmp_path / "all.csv")
    rows = (tmp_path / "all.csv").read_text().splitlines()
    assert rows[0].startswith("frequency,") and len(rows) == 2 * sc.grid.n_points + 1


def test_levels_db():
    mp = SourceMap(1.0, np.array([1.0, 10.0, 0.0]))
    np.testing.assert_array_equal(mp.levels_db(), [0.0, 10.0, -np.inf])
    assert SourceMap(1.0, np.array([2.0, 2.0, 1.0])).argmax() == 0
