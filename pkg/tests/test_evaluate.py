import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from sdsa.errors import ClassificationError, ConfigError
from sdsa.pipeline.evaluate import (EvalMatrix, MetricCell, cross_region_matrix, mse, pearson, predict,
                                    predict_sample, r_squared, summarize)
from sdsa.pipeline.experiment import generate_dataset, region_test_sets, split_datasets
from sdsa.pipeline.persist import load_bundle
from sdsa.records import TargetSeries

vecs = arrays(np.float64, 12, elements=st.floats(-100, 100))


@settings(max_examples=50)
@given(vecs, vecs)
def test_metrics_match_reference_implementations(a, b):
    assert mse(a, b) == pytest.approx(float(np.mean((a - b) ** 2)), rel=1e-12, abs=1e-300)
    sst = np.sum((b - b.mean()) ** 2)
    r2 = r_squared(a, b)
    if sst == 0:
        assert r2 is None
    else:
        assert r2 == pytest.approx(1 - np.sum((a - b) ** 2) / sst, rel=1e-9, abs=1e-9)
    r = pearson(a, b)
    if np.ptp(a) > 1e-6 and np.ptp(b) > 1e-6:
        assert r == pytest.approx(stats.pearsonr(a, b)[0], abs=1e-9)


def test_degenerate_metrics():
    assert mse([], []) is None and r_squared([], []) is None
    assert pearson([1.0], [2.0]) is None and pearson([1.0, 1.0], [1.0, 2.0]) is None


def cell(ra, rh):
    return MetricCell(ra, rh, 0.0, None, None, None, None, 5)


def test_summary_flags_recomputed():
    m = EvalMatrix(["L1:pooled", "L2:pooled", "L3:a", "L3:b"], ["a", "b"])
    m.cells = {
        ("L1:pooled", "a"): cell(2.0, 2.0), ("L1:pooled", "b"): cell(2.0, 2.0),
        ("L2:pooled", "a"): cell(1.5, 3.0), ("L2:pooled", "b"): cell(1.0, 1.0),
        ("L3:a", "a"): cell(1.0, 1.0), ("L3:a", "b"): cell(3.0, 3.0),
        ("L3:b", "a"): cell(4.0, 4.0), ("L3:b", "b"): cell(1.5, 0.5),
    }
    s = summarize(m)
    assert s["a"] == {"beats_pooled_mse_ra": True, "beats_pooled_mse_rh": True, "beats_all_pooled": True}
    assert s["b"] == {"beats_pooled_mse_ra": False, "beats_pooled_mse_rh": True, "beats_all_pooled": False}
    assert len(m.records()) == 8 and m.records()[0]["source"] == "L1:pooled"


@pytest.fixture(scope="module")
def loaded(smoke_run, smoke_cfg):
    syn, obs = split_datasets(smoke_cfg, generate_dataset(smoke_cfg, "synthetic"),
                              generate_dataset(smoke_cfg, "observed"))
    bundles = [load_bundle(smoke_run / f"b{lv}") for lv in (1, 2, 3)]
    return bundles, obs


def test_matrix_shape_and_masks(loaded, smoke_cfg):
    bundles, obs = loaded
    tests = region_test_sets(obs, smoke_cfg.regions.names)
    m = cross_region_matrix(bundles[:1], tests)
    assert m.sources == ["L1:pooled"] and len(m.records()) == 3
    samples, targets = tests["iowa"]
    ra, rh, y = predict(bundles[0].entries["pooled"], bundles[0].features, samples)
    obs_ra = np.concatenate([t.ra[t.mask] for t in targets])
    pred_ra = np.concatenate([p[t.mask] for p, t in zip(ra, targets)])
    assert m.cell("L1:pooled", "iowa").mse_ra == float(np.mean((pred_ra - obs_ra) ** 2))
    with pytest.raises(ConfigError):
        cross_region_matrix(bundles[:1] * 2, tests)
    with pytest.raises(ConfigError):
        cross_region_matrix(bundles, {})


def test_yield_metric_skips_unobserved(loaded, smoke_cfg):
    bundles, obs = loaded
    samples, targets = region_test_sets(obs, smoke_cfg.regions.names)["iowa"]
    hidden = [TargetSeries(t.ra, t.rh, t.mask, t.yield_target, k != 0) for k, t in enumerate(targets)]
    e = bundles[0].entries["pooled"]
    _, _, y = predict(e, bundles[0].features, samples)
    m = cross_region_matrix(bundles[:1], {"iowa": (samples, hidden)})
    want = np.mean([(y[k] - t.yield_target) ** 2 for k, t in enumerate(targets) if k != 0])
    assert m.cell("L1:pooled", "iowa").mse_yield == pytest.approx(want, rel=1e-14)


def test_predict_sample_routes_by_region(loaded, smoke_cfg):
    bundles, obs = loaded
    b3 = bundles[2]
    s = obs.subset("test", "indiana")[0][0]
    ra, rh, y = predict_sample(b3, s, smoke_cfg.regions)
    want = predict(b3.entries["indiana"], b3.features, [s])
    np.testing.assert_array_equal(ra, want[0][0])
    other = predict(b3.entries["iowa"], b3.features, [s])
    assert not np.array_equal(ra, other[0][0])
    with pytest.raises(ClassificationError):
        predict_sample(b3, replace(s, lat=10.0), smoke_cfg.regions)


def test_metric_hand_cases():
    y = np.array([1.0, 2.0, 4.0])
    assert (mse(y, y), r_squared(y, y), pearson(y, y)) == (0.0, 1.0, 1.0)
    assert r_squared(np.full(3, y.mean()), y) == 0.0
    pred = np.array([1.0, 2.0, 3.0])
    assert mse(pred, y) == pytest.approx(1 / 3, rel=1e-15)
    # SST about 7/3 is 42/9, SSE is 1
    assert r_squared(pred, y) == pytest.approx(1 - 9 / 42, rel=1e-15)


def test_full_matrix_from_cli_run(smoke_run):
    doc = json.loads((smoke_run / "metrics.json").read_text())
    assert len(doc["sources"]) == 5 and len(doc["records"]) == 15
    by = {(r["source"], r["test_region"]): r for r in doc["records"]}
    for reg, flags in doc["summary"].items():
        own = by[(f"L3:{reg}", reg)]
        pooled = [by[(s, reg)] for s in doc["sources"] if s.endswith(":pooled")]
        for t in ("mse_ra", "mse_rh"):
            assert flags[f"beats_pooled_{t}"] == all(own[t] < p[t] for p in pooled)
