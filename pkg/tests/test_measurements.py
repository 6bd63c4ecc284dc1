import numpy as np
import pytest
from scipy import stats

from helpers import chain
from madsse.errors import PlacementError, TimeseriesError
from madsse.grid import METERS_37, generate_feeder, sample_feeder_37
from madsse.measurements import (MeasurementSet, NoisePolicy, Scenario, delta1_empirical,
                                 diurnal_profile, from_readings, load_timeseries, meter_entries,
                                 save_timeseries, synthesize)
from madsse.powerflow import solve_nonlinear


@pytest.fixture(scope="module")
def m37():
    return sample_feeder_37()


def test_zero_noise_reproduces_truth(m37):
    ms = synthesize(m37, m37.p_nom, m37.q_nom, NoisePolicy.zero(), placement=list(METERS_37), seed=1)
    sol = solve_nonlinear(m37, m37.p_nom, m37.q_nom)
    assert np.array_equal(ms.p_hat, np.where(m37.is_load, m37.p_nom, 0.0))
    assert np.allclose(ms.v_hat, sol.v[ms.meters], atol=1e-15)
    assert np.all(ms.sigma_v > 0)


def test_same_seed_same_measurements(m37):
    a = synthesize(m37, m37.p_nom, m37.q_nom, placement=0.2, seed=5)
    b = synthesize(m37, m37.p_nom, m37.q_nom, placement=0.2, seed=5)
    c = synthesize(m37, m37.p_nom, m37.q_nom, placement=0.2, seed=6)
    assert a.digest() == b.digest() != c.digest()


def test_meter_list(m37):
    ms = synthesize(m37, m37.p_nom, m37.q_nom, placement=list(METERS_37), seed=0)
    assert ms.v_hat.size == 3
    assert [m37.state_index[k][0] for k in ms.meters] == sorted(METERS_37)


def test_meter_placement_errors(m37):
    with pytest.raises(PlacementError):
        meter_entries(m37, [999])
    with pytest.raises(PlacementError):
        meter_entries(m37, [m37.slack_id])
    with pytest.raises(PlacementError):
        meter_entries(m37, [(6, "b")])
    with pytest.raises(PlacementError):
        meter_entries(m37, 1.5)


def test_meter_fraction_count(m37):
    assert meter_entries(m37, 0.0).size == 0
    assert meter_entries(m37, 0.5, rng=1).size == 18


def test_zero_injection_channels(m37):
    ms = synthesize(m37, m37.p_nom, m37.q_nom, seed=0)
    zi = ~np.asarray(m37.is_load)
    assert np.all(ms.p_hat[zi] == 0) and not ms.p_mask[zi].any()
    assert np.all(ms.lo[:ms.n][zi] == 0) and np.all(ms.hi[:ms.n][zi] == 0)


def test_sigma_bases(m37):
    meas = synthesize(m37, m37.p_nom, m37.q_nom, seed=3)
    true = synthesize(m37, m37.p_nom, m37.q_nom, NoisePolicy(sigma_basis="true"), seed=3)
    nom = synthesize(m37, m37.p_nom * 0.5, m37.q_nom, NoisePolicy(sigma_basis="nominal"), seed=3)
    ld = np.asarray(m37.is_load)
    assert np.allclose(meas.sigma_p[ld], 0.5 * np.maximum(np.abs(meas.p_hat[ld]), 1e-4))
    assert np.allclose(true.sigma_p[ld], 0.5 * np.abs(m37.p_nom[ld]))
    assert np.allclose(nom.sigma_p[ld], 0.5 * np.abs(m37.p_nom[ld]))
    with pytest.raises(ValueError):
        synthesize(m37, m37.p_nom, m37.q_nom, NoisePolicy(sigma_basis="bogus"))


def test_weight_ratio_is_2500(m37):
    ms = synthesize(m37, m37.p_nom, m37.q_nom, NoisePolicy(sigma_basis="true"), seed=0)
    k = int(np.flatnonzero(m37.is_load)[0])
    assert (0.5 / 0.01) ** 2 == 2500.0
    assert ms.sigma_p[k] / abs(m37.p_nom[k]) / 0.01 == pytest.approx(50.0)


def test_noise_is_normal():
    m = chain([0.01] * 4000, loads=[(-0.01, -0.005)] * 4000)
    ms = synthesize(m, m.p_nom, m.q_nom, seed=11)
    eta = ms.p_hat / m.p_nom - 1.0
    assert abs(eta.mean()) < 0.05 and abs(eta.std() - 0.5) < 0.03
    assert stats.kstest(eta / 0.5, "norm").pvalue > 1e-3


def test_invalid_sigma_rejected(m37):
    ms = synthesize(m37, m37.p_nom, m37.q_nom, seed=0)
    bad = ms.sigma_p.copy()
    bad[np.flatnonzero(ms.p_mask)[0]] = 0.0
    with pytest.raises(ValueError):
        MeasurementSet(ms.state_index, ms.p_hat, ms.q_hat, bad, ms.sigma_q, ms.p_mask, ms.q_mask,
                       ms.meters, ms.v_hat, ms.sigma_v, ms.p_lo, ms.p_hi, ms.q_lo, ms.q_hi)


def test_json_round_trip(m37):
    ms = synthesize(m37, m37.p_nom, m37.q_nom, placement=0.3, seed=2)
    back = MeasurementSet.from_json(ms.to_json())
    assert back.digest() == ms.digest()
    assert np.array_equal(back.sigma_v, ms.sigma_v)
    d = ms.to_dict()
    d["format_version"] = 99
    with pytest.raises(ValueError):
        MeasurementSet.from_dict(d)


def test_project_clips_to_box(m37):
    ms = synthesize(m37, m37.p_nom, m37.q_nom, seed=0)
    z = np.full(2 * ms.n, 10.0)
    pz = ms.project(z)
    assert np.all(pz <= ms.hi) and np.array_equal(ms.project(pz), pz)


def test_from_readings(m37):
    k = m37.entry(6, 0)
    ms = from_readings(m37, m37.p_nom, m37.q_nom, {k: 0.98})
    assert list(ms.meters) == [k] and ms.v_hat[0] == pytest.approx(0.98 ** 2)


def test_timeseries_round_trip(tmp_path, m37):
    sc = diurnal_profile(m37, 5, seed=1)
    sc[2].readings = {m37.entry(6, 0): 0.97}
    path = tmp_path / "ts.csv"
    save_timeseries(m37, sc, path)
    assert path.read_text().startswith("# schema_version=1\n")
    back = load_timeseries(m37, path)
    assert [s.t for s in back] == list(range(5))
    for a, b in zip(sc, back):
        assert np.array_equal(a.p_true, b.p_true) and np.array_equal(a.q_true, b.q_true)
    assert back[2].readings == {m37.entry(6, 0): 0.97}


def test_timeseries_errors(tmp_path, m37):
    with pytest.raises(FileNotFoundError):
        load_timeseries(m37, tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("tick,node,phase,p,q,vmag\n1,1,a,0,0,\n0,1,a,0,0,\n")
    with pytest.raises(TimeseriesError):
        load_timeseries(m37, bad)
    bad.write_text("tick,node,phase,p,q,vmag\n0,500,a,0,0,\n")
    with pytest.raises(TimeseriesError):
        load_timeseries(m37, bad)


def test_diurnal_profile_bounds():
    m = generate_feeder(size=30, seed=1)
    sc = diurnal_profile(m, 200, seed=3)
    ld = np.asarray(m.is_load)
    for s in sc:
        ratio = s.p_true[ld] / m.p_nom[ld]
        assert ratio.min() >= 0.2 - 1e-12 and ratio.max() <= 1.3 + 1e-12
    assert delta1_empirical(sc) > 0
    assert delta1_empirical(sc[:1]) == 0.0


def test_scenario_materialize_cached(m37):
    s = Scenario(0, m37.p_nom, m37.q_nom, rng_seed=4)
    assert s.materialize(m37) is s.materialize(m37)
