import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from sdsa.errors import ConfigError
from sdsa.ndmath import RngStream
from sdsa.records import DailyDrivers
from sdsa.regions import RegionConfig, detect_region, partition
from sdsa.synthgen import (DriverNoise, RegionProcessParams, annual_yield, generate_drivers,
                           generate_region_dataset, gpp_model, moisture_response, process_model_step)

REGIONS = RegionConfig.from_dict({"boxes": {"a": [40.0, 41.0, -90.0, -89.0]}})


def params(**kw):
    base = dict(q10=2.0, r_base=1.2, f_ra=0.45, lue=0.05, t_mean_c=11.0, t_amp_c=14.0,
                m_eq=0.45, k_om=0.05, harvest_index=0.45, noise_sigma=0.1)
    base.update(kw)
    return RegionProcessParams(**base)


def one_day(t, m, gpp=2.0):
    return DailyDrivers([t], [10.0], [0.0], [m], [gpp])


def test_rh_doubles_per_ten_degrees_at_q10_two():
    p = params()
    # at 20 C with m=0.5 and om=2: 1.2 * 2 * 1 * 1.1
    f = process_model_step(one_day(20.0, 0.5), p, 2.0)
    assert abs(f.rh[0] - 2.64) < 1e-14
    assert f.ra[0] == 0.45 * 2.0


@given(st.floats(-20, 40), st.floats(0.05, 0.95), st.floats(0, 8), st.floats(1.1, 4.0))
def test_rh_matches_scalar_formula(t, m, om, q10):
    p = params(q10=q10)
    got = process_model_step(one_day(t, m), p, om).rh[0]
    want = oracles.rh_formula(t, m, om, q10, p.r_base, p.k_om)
    assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_moisture_response_peaks_at_half(m1, m2):
    assert moisture_response(0.5) == 1.0
    if abs(m1 - 0.5) < abs(m2 - 0.5):
        assert moisture_response(m1) >= moisture_response(m2)


def test_gpp_limits():
    assert gpp_model(10.0, -5.0, 0.5, 0.05) == 0.0
    assert gpp_model(10.0, 30.0, 0.5, 0.05) == 0.05 * 10.0


@pytest.mark.parametrize("kw", [dict(q10=1.0), dict(f_ra=1.0), dict(m_eq=0.99), dict(noise_sigma=-0.1),
                                dict(r_base=math.nan), dict(harvest_index=0.0)])
def test_invalid_params_rejected(kw):
    with pytest.raises(ConfigError):
        params(**kw)


def test_drivers_deterministic_and_bounded():
    p = params()
    a = generate_drivers(p, 365, RngStream(1))
    b = generate_drivers(p, 365, RngStream(1))
    np.testing.assert_array_equal(a.matrix(), b.matrix())
    assert a.moisture_frac[0] == p.m_eq
    assert a.moisture_frac.min() >= 0.05 and a.moisture_frac.max() <= 0.95
    assert a.srad_mj.min() >= 0 and a.precip_mm.min() >= 0


def test_draw_order_fixed_when_a_sigma_is_zero():
    p = params()
    a = generate_drivers(p, 50, RngStream(3))
    b = generate_drivers(p, 50, RngStream(3), DriverNoise(temp_sigma=0.0))
    np.testing.assert_array_equal(a.srad_mj, b.srad_mj)
    np.testing.assert_array_equal(a.moisture_frac, b.moisture_frac)
    c = generate_drivers(p, 50, RngStream(3), DriverNoise(moisture_sigma=0.0))
    assert np.all(c.moisture_frac == p.m_eq)


def test_seasonal_temperature_when_noise_free():
    p = params()
    d = generate_drivers(p, 365, RngStream(0), DriverNoise(0.0, 0.0, 0.0, 0.0))
    t = np.arange(365)
    np.testing.assert_allclose(d.t_air_c, p.t_mean_c + p.t_amp_c * np.sin(2 * np.pi * (t - 100) / 365),
                               atol=1e-12)
    assert not d.precip_mm.any()


def test_annual_yield_hand_value():
    assert abs(annual_yield(np.array([2.0, 4.0]), np.array([1.0, 1.0]), 0.5) - 0.02) < 1e-16


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_noise_free_targets_equal_process_model(seed):
    p = params(noise_sigma=0.0)
    samples, targets = generate_region_dataset("a", p, 3, 30, RngStream(seed), REGIONS)
    for s, t in zip(samples, targets):
        f = process_model_step(s.days, p, s.om_pct)
        np.testing.assert_array_equal(t.ra, f.ra)
        np.testing.assert_array_equal(t.rh, f.rh)
        assert t.yield_target == annual_yield(s.days.gpp, f.ra, p.harvest_index)


def test_dataset_locations_ids_and_masks():
    samples, targets = generate_region_dataset("a", params(), 20, 40, RngStream(2), REGIONS,
                                               flux_obs_frac=0.5, yield_obs_frac=1.0)
    box = REGIONS.box("a")
    assert [s.sample_id for s in samples] == [f"a-{i:04d}" for i in range(20)]
    assert all(box.contains(s.lat, s.lon) and s.region == "a" for s in samples)
    frac = np.mean([t.mask.mean() for t in targets])
    assert 0.35 < frac < 0.65
    assert all(t.yield_observed for t in targets)
    assert all((t.ra >= 0).all() and (t.rh >= 0).all() for t in targets)
    full = generate_region_dataset("a", params(), 2, 10, RngStream(2), REGIONS)[1]
    assert all(t.mask.all() for t in full)


def test_dataset_rejects_empty():
    with pytest.raises(ConfigError):
        generate_region_dataset("a", params(), 0, 10, RngStream(0), REGIONS)
    with pytest.raises(ConfigError):
        generate_region_dataset("zz", params(), 1, 10, RngStream(0), REGIONS)


def test_overlapping_boxes_keep_samples_in_their_region():
    cfg = RegionConfig.from_dict({"boxes": {"a": [40.0, 42.0, -90.0, -88.0], "b": [41.0, 43.0, -89.0, -87.0]}})
    for name in ("a", "b"):
        samples, _ = generate_region_dataset(name, params(), 60, 3, RngStream(4), cfg)
        assert all(detect_region(s.lat, s.lon, cfg) == name and cfg.box(name).contains(s.lat, s.lon)
                   for s in samples)
    # identical boxes: the centroid tie always goes to the first, leaving the second no territory
    twin = RegionConfig.from_dict({"boxes": {"a": [40.0, 41.0, -90.0, -89.0], "b": [40.0, 41.0, -90.0, -89.0]}})
    with pytest.raises(ConfigError, match="'b'"):
        generate_region_dataset("b", params(), 1, 3, RngStream(0), twin)


def test_default_presets_round_trip_through_partition(default_cfg):
    samples = []
    for name, preset in default_cfg.generator.presets.items():
        samples += generate_region_dataset(name, preset, 100, 2, RngStream(42), default_cfg.regions)[0]
    parts = partition(samples, default_cfg.regions)
    assert all(samples[i].region == name for name, idx in parts.items() for i in idx)
    assert {k: len(v) for k, v in parts.items()} == {n: 100 for n in default_cfg.regions.names}
