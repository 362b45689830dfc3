import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from sdsa.errors import ClassificationError, ConfigError, DomainError
from sdsa.records import DailyDrivers, SampleSeries
from sdsa.regions import (RegionBox, RegionConfig, detect_region, partition, shift_report,
                          standardized_mean_difference)

CFG = RegionConfig.from_dict({"boxes": {
    "illinois": [36.9, 42.6, -91.6, -87.4],
    "iowa": [40.3, 43.6, -96.7, -90.1],
    "indiana": [37.7, 41.8, -88.1, -84.7],
}})


def sample(sid, lat, lon, moisture=0.5, n=4):
    d = DailyDrivers(np.zeros(n), np.ones(n), np.zeros(n), np.full(n, moisture), np.ones(n))
    return SampleSeries(sid, lat, lon, 0.2, 2.0, d)


def test_detect_inside_each_box():
    assert detect_region(39.0, -89.5, CFG) == "illinois"
    assert detect_region(42.0, -94.0, CFG) == "iowa"
    assert detect_region(39.5, -86.0, CFG) == "indiana"


def test_overlap_goes_to_nearest_centroid():
    # inside both illinois and indiana boxes; closer to indiana's centroid
    lat, lon = 39.75, -87.6
    assert CFG.box("illinois").contains(lat, lon) and CFG.box("indiana").contains(lat, lon)
    want = min(["illinois", "indiana"], key=lambda n: CFG.box(n).centroid_distance(lat, lon))
    assert detect_region(lat, lon, CFG) == want == "indiana"


def test_out_of_region_policies():
    with pytest.raises(ClassificationError) as e:
        detect_region(30.0, -100.0, CFG, "s-1")
    assert "s-1" in str(e.value)
    near = RegionConfig(CFG.regions, "nearest")
    assert detect_region(30.0, -100.0, near) == "iowa"
    with pytest.raises(DomainError):
        detect_region(95.0, 0.0, CFG)


def test_config_validation():
    with pytest.raises(ConfigError):
        RegionBox("x", 2.0, 1.0, 0.0, 1.0)
    with pytest.raises(ConfigError):
        RegionConfig(())
    with pytest.raises(ConfigError):
        RegionConfig((RegionBox("a", 0, 1, 0, 1), RegionBox("a", 0, 1, 0, 1)))
    with pytest.raises(ConfigError):
        RegionConfig(CFG.regions, "random")
    with pytest.raises(ConfigError):
        CFG.box("ohio")


@given(st.lists(st.tuples(st.floats(37.0, 43.5), st.floats(-96.5, -84.8)), max_size=30))
def test_partition_is_a_partition(points):
    near = RegionConfig(CFG.regions, "nearest")
    ds = [sample(f"s{i}", lat, lon) for i, (lat, lon) in enumerate(points)]
    parts = partition(ds, near)
    flat = sorted(i for idx in parts.values() for i in idx)
    assert flat == list(range(len(ds)))
    assert all(idx and idx == sorted(idx) for idx in parts.values())
    for name, idx in parts.items():
        assert all(detect_region(ds[i].lat, ds[i].lon, near) == name for i in idx)


def test_smd_hand_values():
    assert standardized_mean_difference(1.0, 1.0, 0.0, 1.0) == 1.0
    assert standardized_mean_difference(2.0, 0.0, 2.0, 0.0) == 0.0
    assert standardized_mean_difference(2.0, 0.0, 1.0, 0.0) == math.inf
    assert abs(standardized_mean_difference(0.0, 3.0, 2.0, 1.0) - 2.0 / math.sqrt(5.0)) < 1e-15


def test_shift_report_matches_oracle():
    ds = [sample("a0", 39.0, -89.5, 0.40), sample("a1", 39.1, -89.5, 0.50),
          sample("b0", 42.0, -94.0, 0.60), sample("b1", 42.1, -94.0, 0.62),
          sample("c0", 39.5, -86.0, 0.3)]
    parts = partition(ds, CFG)
    rep = shift_report(ds, parts)
    a = [0.40] * 4 + [0.50] * 4
    b = [0.60] * 4 + [0.62] * 4
    assert abs(rep.get_smd("iowa", "illinois", "moisture_frac") - oracles.smd(a, b)) < 1e-12
    assert rep.get_smd("illinois", "iowa", "moisture_frac") == rep.get_smd("iowa", "illinois", "moisture_frac")
    assert rep.stats[("indiana", "moisture_frac")] is None
    assert rep.get_smd("illinois", "indiana", "moisture_frac") is None
    assert rep.stats[("illinois", "moisture_frac")].n_values == 8
