"""Gap filling, z-normalization, feature layouts and batch assembly."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, DataError
from ..kgloss import Batch
from ..model import LOCATION_FEATURES, AwarenessLevel
from ..records import DRIVER_FIELDS, STATIC_FIELDS, DailyDrivers

BASE_FEATURES = DRIVER_FIELDS + STATIC_FIELDS
ALL_FEATURES = BASE_FEATURES + LOCATION_FEATURES
TARGETS = ("ra", "rh", "yield")
TEMP_FEATURE = "t_air_c"
STD_FLOOR = 1e-8


def feature_layout(level) -> tuple:
    """Per-day model inputs: drivers, broadcast soil descriptors, and lat/lon at level 2 only."""
    level = AwarenessLevel(level)
    return BASE_FEATURES + (LOCATION_FEATURES if level == AwarenessLevel.LEVEL2 else ())


def interpolate_gaps(values, max_gap, name="value"):
    """Fill NaN runs linearly between observed neighbours.

    Interior runs longer than ``max_gap`` raise. Runs touching either end are
    filled with the nearest observed value under the same length limit.
    """
    v = np.array(values, dtype=np.float64)
    miss = np.isnan(v)
    if not miss.any():
        return v
    obs = np.flatnonzero(~miss)
    if obs.size == 0:
        raise DataError(f"{name}: no observed values to interpolate from")
    # locate runs of missing values
    edges = np.diff(np.concatenate([[0], miss.astype(np.int8), [0]]))
    starts, stops = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    for a, b in zip(starts, stops):
        if b - a > max_gap:
            raise DataError(f"{name}: gap of {b - a} days (days {a}-{b - 1}) exceeds max_gap={max_gap}")
    v[miss] = np.interp(np.flatnonzero(miss), obs, v[obs])
    return v


def fill_sample(sample, max_gap):
    if not sample.days.has_missing():
        return sample
    filled = {f: interpolate_gaps(getattr(sample.days, f), max_gap, f"{sample.sample_id}.{f}")
              for f in DRIVER_FIELDS}
    return replace(sample, days=DailyDrivers(**filled))


def raw_features(sample, features=ALL_FEATURES):
    """``(T, len(features))`` physical-unit input matrix for one sample."""
    T = sample.n_days
    cols = []
    for f in features:
        if f in DRIVER_FIELDS:
            cols.append(getattr(sample.days, f))
        elif f in STATIC_FIELDS or f in LOCATION_FEATURES:
            cols.append(np.full(T, float(getattr(sample, f))))
        else:
            raise ConfigError(f"unknown feature {f!r}")
    return np.column_stack(cols)


@dataclass
class NormStats:
    features: dict = field(default_factory=dict)   # name -> (mean, std)
    targets: dict = field(default_factory=dict)    # ra/rh/yield -> (mean, std)

    def _ms(self, features):
        try:
            m = np.array([self.features[f][0] for f in features])
            s = np.array([self.features[f][1] for f in features])
        except KeyError as exc:
            raise ConfigError(f"no normalization statistics for feature {exc.args[0]!r}") from None
        return m, s

    def apply(self, X, features):
        m, s = self._ms(features)
        return (np.asarray(X, dtype=np.float64) - m) / s

    def denormalize(self, Z, features):
        m, s = self._ms(features)
        return np.asarray(Z, dtype=np.float64) * s + m

    def apply_target(self, name, v):
        m, s = self.targets[name]
        return (np.asarray(v, dtype=np.float64) - m) / s

    def denormalize_target(self, name, z):
        m, s = self.targets[name]
        return np.asarray(z, dtype=np.float64) * s + m

    def to_dict(self):
        return {"features": {k: list(v) for k, v in self.features.items()},
                "targets": {k: list(v) for k, v in self.targets.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls({k: tuple(v) for k, v in d["features"].items()},
                   {k: tuple(v) for k, v in d["targets"].items()})


def _mean_std(v):
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        return 0.0, 1.0
    return float(v.mean()), max(float(v.std()), STD_FLOOR)


def fit_normalizer(train_samples, train_targets, features=ALL_FEATURES) -> NormStats:
    """Per-feature statistics over every training day; target statistics over observed values only."""
    if not train_samples:
        raise DataError("cannot fit a normalizer on an empty training split")
    X = np.concatenate([raw_features(s, features) for s in train_samples])
    stats = NormStats()
    for j, f in enumerate(features):
        stats.features[f] = _mean_std(X[:, j])
    stats.targets["ra"] = _mean_std(np.concatenate([t.ra[t.mask] for t in train_targets]))
    stats.targets["rh"] = _mean_std(np.concatenate([t.rh[t.mask] for t in train_targets]))
    stats.targets["yield"] = _mean_std([t.yield_target for t in train_targets if t.yield_observed])
    return stats


class PreparedSet:
    """A dataset normalized once for a given feature layout, ready for batching."""

    def __init__(self, samples, targets, norm: NormStats, features):
        self.samples = samples
        self.targets = targets
        self.features = tuple(features)
        self.norm = norm
        if TEMP_FEATURE not in self.features:
            raise ConfigError(f"feature layout lacks {TEMP_FEATURE}")
        self.temp_index = self.features.index(TEMP_FEATURE)
        self.temp_std = norm.features[TEMP_FEATURE][1]
        self.X = [norm.apply(raw_features(s, self.features), self.features) for s in samples]
        self.flux = []
        for t in targets:
            f = np.column_stack([norm.apply_target("ra", t.ra), norm.apply_target("rh", t.rh)])
            f[~t.mask] = 0.0
            self.flux.append(f)
        self.mask = [t.mask for t in targets]
        self.gpp = [s.days.gpp for s in samples]
        self.y = np.array([norm.apply_target("yield", t.yield_target) if t.yield_observed else 0.0
                           for t in targets])
        self.ymask = np.array([t.yield_observed for t in targets], dtype=bool)
        self.lengths = np.array([s.n_days for s in samples])

    def __len__(self):
        return len(self.samples)

    def batch(self, idx) -> Batch:
        idx = list(idx)
        T = {int(self.lengths[i]) for i in idx}
        if len(T) != 1:
            raise DataError("a batch must hold samples of equal length")
        st = self.norm.targets
        return Batch(
            X=np.stack([self.X[i] for i in idx], axis=1),
            flux_target=np.stack([self.flux[i] for i in idx], axis=1),
            flux_mask=np.stack([self.mask[i] for i in idx], axis=1),
            yield_target=self.y[idx],
            yield_mask=self.ymask[idx],
            gpp=np.stack([self.gpp[i] for i in idx], axis=1),
            target_stats={k: st[k] for k in TARGETS},
            temp_index=self.temp_index,
            temp_std=self.temp_std,
        )

    def batches(self, order, batch_size):
        """Consecutive chunks of ``order``, each split further by sequence length."""
        order = list(order)
        for k in range(0, len(order), batch_size):
            chunk = order[k:k + batch_size]
            for T in sorted({int(self.lengths[i]) for i in chunk}):
                yield self.batch([i for i in chunk if self.lengths[i] == T])
