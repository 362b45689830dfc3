"""Physical-unit metrics and the source x test-region evaluation matrix."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from ..model import AwarenessLevel, forward, to_prediction
from ..records import TargetSeries
from ..regions import detect_region
from .preprocess import PreparedSet

METRIC_FIELDS = ("mse_ra", "mse_rh", "mse_yield", "r2_ra", "r2_rh", "pearson_ra", "pearson_rh", "n_samples")


@dataclass
class MetricCell:
    mse_ra: float | None
    mse_rh: float | None
    mse_yield: float | None
    r2_ra: float | None
    r2_rh: float | None
    pearson_ra: float | None
    pearson_rh: float | None
    n_samples: int

    def as_dict(self):
        return asdict(self)


def mse(pred, obs):
    pred, obs = np.asarray(pred, dtype=np.float64), np.asarray(obs, dtype=np.float64)
    if pred.size == 0:
        return None
    d = pred - obs
    return float(np.mean(d * d))


def r_squared(pred, obs):
    """``1 - SSE/SST`` with SST about the observed mean; None when SST is 0."""
    pred, obs = np.asarray(pred, dtype=np.float64), np.asarray(obs, dtype=np.float64)
    if obs.size == 0:
        return None
    sst = float(np.sum((obs - obs.mean()) ** 2))
    if sst == 0.0:
        return None
    return 1.0 - float(np.sum((pred - obs) ** 2)) / sst


def pearson(pred, obs):
    pred, obs = np.asarray(pred, dtype=np.float64), np.asarray(obs, dtype=np.float64)
    if obs.size < 2:
        return None
    a, b = pred - pred.mean(), obs - obs.mean()
    den = float(np.sqrt(np.sum(a * a) * np.sum(b * b)))
    if den == 0.0:
        return None
    return float(np.clip(np.sum(a * b) / den, -1.0, 1.0))


def metric_cell(ra_hat, rh_hat, y_hat, targets) -> MetricCell:
    """Metrics over observed flux days and observed yields.

    ``ra_hat``/``rh_hat`` are per-sample sequences, ``y_hat`` per-sample scalars.
    """
    ra_p = np.concatenate([p[t.mask] for p, t in zip(ra_hat, targets)]) if targets else np.empty(0)
    rh_p = np.concatenate([p[t.mask] for p, t in zip(rh_hat, targets)]) if targets else np.empty(0)
    ra_o = np.concatenate([t.ra[t.mask] for t in targets]) if targets else np.empty(0)
    rh_o = np.concatenate([t.rh[t.mask] for t in targets]) if targets else np.empty(0)
    y_idx = [k for k, t in enumerate(targets) if t.yield_observed]
    y_p = np.array([y_hat[k] for k in y_idx])
    y_o = np.array([targets[k].yield_target for k in y_idx])
    return MetricCell(
        mse_ra=mse(ra_p, ra_o), mse_rh=mse(rh_p, rh_o), mse_yield=mse(y_p, y_o),
        r2_ra=r_squared(ra_p, ra_o), r2_rh=r_squared(rh_p, rh_o),
        pearson_ra=pearson(ra_p, ra_o), pearson_rh=pearson(rh_p, rh_o),
        n_samples=len(targets),
    )


def predict(entry, features, samples, batch_size=64):
    """Per-sample physical predictions ``(ra_hat list, rh_hat list, yield array)``."""
    if not samples:
        return [], [], np.empty(0)
    prep = PreparedSet(samples, [_dummy_target(s) for s in samples], entry.norm, features)
    ra, rh, y = [None] * len(samples), [None] * len(samples), np.empty(len(samples))
    order = list(range(len(samples)))
    for T in sorted(set(prep.lengths.tolist())):
        idx = [i for i in order if prep.lengths[i] == T]
        for k in range(0, len(idx), batch_size):
            chunk = idx[k:k + batch_size]
            X = np.stack([prep.X[i] for i in chunk], axis=1)
            out, _ = forward(entry.params, X)
            pred = to_prediction(out, entry.norm.targets)
            for j, i in enumerate(chunk):
                ra[i] = pred.ra_hat[:, j]
                rh[i] = pred.rh_hat[:, j]
                y[i] = pred.yield_hat[j]
    return ra, rh, y


def _dummy_target(sample):
    z = np.zeros(sample.n_days)
    return TargetSeries(z, z, np.zeros(sample.n_days, dtype=bool), 0.0, False)


def evaluate(entry, features, test_samples, test_targets) -> MetricCell:
    ra, rh, y = predict(entry, features, test_samples)
    return metric_cell(ra, rh, y, test_targets)


def predict_sample(bundle, sample, region_cfg):
    """Route one sample to its region's parameters at level 3, else the pooled model."""
    region = detect_region(sample.lat, sample.lon, region_cfg, sample.sample_id)
    entry = bundle.entry_for(region)
    ra, rh, y = predict(entry, bundle.features, [sample])
    return ra[0], rh[0], float(y[0])


def source_names(bundle):
    lv = int(bundle.awareness_level)
    if bundle.awareness_level == AwarenessLevel.LEVEL3:
        return [(f"L3:{tag}", tag) for tag in bundle.entries]
    return [(f"L{lv}:pooled", "pooled")]


@dataclass
class EvalMatrix:
    sources: list
    regions: list
    cells: dict = field(default_factory=dict)   # (source, region) -> MetricCell

    def cell(self, source, region):
        return self.cells[(source, region)]

    def records(self):
        return [{"source": s, "test_region": r, **self.cells[(s, r)].as_dict()}
                for s in self.sources for r in self.regions]


def cross_region_matrix(bundles, test_sets) -> EvalMatrix:
    """Evaluate every model source on every region's test set.

    ``test_sets`` maps region -> (samples, targets). Level-3 bundles
    contribute one source per region model, each evaluated on all regions.
    """
    regions = list(test_sets)
    if not regions:
        raise ConfigError("no test sets given")
    sources, cells = [], {}
    for b in bundles:
        for name, tag in source_names(b):
            if name in sources:
                raise ConfigError(f"duplicate model source {name}")
            sources.append(name)
            entry = b.entries[tag]
            for r in regions:
                samples, targets = test_sets[r]
                cells[(name, r)] = evaluate(entry, b.features, samples, targets)
    return EvalMatrix(sources, regions, cells)


def summarize(matrix: EvalMatrix):
    """Per region: does its level-3 model beat every pooled source on mse_ra and mse_rh?"""
    pooled = [s for s in matrix.sources if s.endswith(":pooled")]
    out = {}
    for r in matrix.regions:
        own = f"L3:{r}"
        if own not in matrix.sources or not pooled:
            out[r] = None
            continue
        c = matrix.cell(own, r)
        flags = {}
        for target in ("mse_ra", "mse_rh"):
            flags[f"beats_pooled_{target}"] = all(
                getattr(c, target) < getattr(matrix.cell(p, r), target) for p in pooled)
        flags["beats_all_pooled"] = all(flags.values())
        out[r] = flags
    return out
