"""Rule-based region detection from coordinates, partitioning, and shift statistics."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ClassificationError, ConfigError, DomainError
from .records import DRIVER_FIELDS

POLICIES = ("reject", "nearest")


@dataclass(frozen=True)
class RegionBox:
    name: str
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not self.name:
            raise ConfigError("region name must be nonempty")
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ConfigError(f"region {self.name}: box bounds must satisfy min < max")

    @property
    def centroid(self):
        return (0.5 * (self.lat_min + self.lat_max), 0.5 * (self.lon_min + self.lon_max))

    def contains(self, lat, lon):
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max

    def centroid_distance(self, lat, lon):
        c_lat, c_lon = self.centroid
        return math.hypot(lat - c_lat, lon - c_lon)


@dataclass(frozen=True)
class RegionConfig:
    regions: tuple
    out_of_region_policy: str = "reject"

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        names = [r.name for r in self.regions]
        if not names:
            raise ConfigError("at least one region is required")
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate region names in {names}")
        if self.out_of_region_policy not in POLICIES:
            raise ConfigError(f"out_of_region_policy must be one of {POLICIES}")

    @property
    def names(self):
        return [r.name for r in self.regions]

    def box(self, name):
        for r in self.regions:
            if r.name == name:
                return r
        raise ConfigError(f"unknown region {name!r}; configured: {self.names}")

    @classmethod
    def from_dict(cls, d):
        boxes = [RegionBox(name, *map(float, b)) for name, b in d["boxes"].items()]
        return cls(tuple(boxes), d.get("out_of_region_policy", "reject"))


def _nearest(boxes, lat, lon):
    return min(boxes, key=lambda r: r.centroid_distance(lat, lon)).name


def detect_region(lat, lon, cfg: RegionConfig, sample_id=None) -> str:
    """Region whose box contains the point; overlaps and (optionally) misses
    go to the nearest box centroid in degree space."""
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise DomainError(f"coordinates ({lat}, {lon}) out of range")
    hits = [r for r in cfg.regions if r.contains(lat, lon)]
    if len(hits) == 1:
        return hits[0].name
    if hits:
        return _nearest(hits, lat, lon)
    if cfg.out_of_region_policy == "nearest":
        return _nearest(cfg.regions, lat, lon)
    raise ClassificationError(lat, lon, sample_id)


def partition(dataset, cfg: RegionConfig):
    """Map region name -> sample indices (ascending). Regions without samples are omitted."""
    buckets = {}
    for i, s in enumerate(dataset):
        buckets.setdefault(detect_region(s.lat, s.lon, cfg, s.sample_id), []).append(i)
    return {name: buckets[name] for name in cfg.names if name in buckets}


@dataclass
class FeatureStats:
    mean: float
    std: float
    n_samples: int
    n_values: int


@dataclass
class ShiftReport:
    stats: dict = field(default_factory=dict)   # (region, feature) -> FeatureStats | None
    smd: dict = field(default_factory=dict)     # (region_a, region_b, feature) -> float | None

    def get_smd(self, a, b, feature):
        key = (a, b, feature) if (a, b, feature) in self.smd else (b, a, feature)
        return self.smd[key]


def standardized_mean_difference(mu_a, sd_a, mu_b, sd_b):
    denom = math.sqrt(0.5 * (sd_a * sd_a + sd_b * sd_b))
    diff = abs(mu_a - mu_b)
    if denom == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / denom


def shift_report(dataset, parts, features=DRIVER_FIELDS) -> ShiftReport:
    """Per-region mean/std of pooled daily feature values and pairwise SMD.

    Regions with fewer than two samples get ``None`` statistics, and every
    SMD involving them is ``None``.
    """
    rep = ShiftReport()
    for region, idx in parts.items():
        for f in features:
            if len(idx) < 2:
                rep.stats[(region, f)] = None
                continue
            vals = np.concatenate([getattr(dataset[i].days, f) for i in idx])
            vals = vals[~np.isnan(vals)]
            rep.stats[(region, f)] = FeatureStats(float(vals.mean()), float(vals.std()), len(idx), vals.size)
    for a, b in itertools.combinations(parts, 2):
        for f in features:
            sa, sb = rep.stats[(a, f)], rep.stats[(b, f)]
            rep.smd[(a, b, f)] = None if sa is None or sb is None else \
                standardized_mean_difference(sa.mean, sa.std, sb.mean, sb.std)
    return rep
