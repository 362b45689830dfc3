"""In-memory records for one field-site sample and its targets.

Sequences are stored as parallel float arrays (one per variable). NaN marks
a missing driver value that preprocessing has yet to fill.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

DRIVER_FIELDS = ("t_air_c", "srad_mj", "precip_mm", "moisture_frac", "gpp")
STATIC_FIELDS = ("clay_frac", "om_pct")

_RANGES = {
    "srad_mj": (0.0, np.inf),
    "precip_mm": (0.0, np.inf),
    "moisture_frac": (0.05, 0.95),
    "gpp": (0.0, np.inf),
}


@dataclass
class DailyDrivers:
    t_air_c: np.ndarray
    srad_mj: np.ndarray
    precip_mm: np.ndarray
    moisture_frac: np.ndarray
    gpp: np.ndarray

    def __post_init__(self):
        n = None
        for name in DRIVER_FIELDS:
            a = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            setattr(self, name, a)
            if n is None:
                n = a.shape
            elif a.shape != n:
                raise DataError(f"driver {name} has length {a.shape}, expected {n}")
            lo, hi = _RANGES.get(name, (-np.inf, np.inf))
            ok = np.isnan(a) | ((a >= lo) & (a <= hi))
            if not ok.all():
                bad = int(np.flatnonzero(~ok)[0])
                raise DataError(f"driver {name}={a[bad]} on day {bad} outside [{lo}, {hi}]")

    def __len__(self):
        return len(self.t_air_c)

    def matrix(self):
        """``(T, 5)`` array in ``DRIVER_FIELDS`` order."""
        return np.column_stack([getattr(self, f) for f in DRIVER_FIELDS])

    @classmethod
    def from_matrix(cls, m):
        return cls(*(m[:, i] for i in range(len(DRIVER_FIELDS))))

    def has_missing(self):
        return bool(np.isnan(self.matrix()).any())


@dataclass
class SampleSeries:
    sample_id: str
    lat: float
    lon: float
    clay_frac: float
    om_pct: float
    days: DailyDrivers
    region: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.days) < 1:
            raise DataError(f"sample {self.sample_id} has no days")
        if not 0.0 <= self.clay_frac <= 1.0:
            raise DataError(f"sample {self.sample_id}: clay_frac {self.clay_frac} outside [0, 1]")
        if self.om_pct < 0:
            raise DataError(f"sample {self.sample_id}: negative om_pct")

    @property
    def n_days(self):
        return len(self.days)


@dataclass
class TargetSeries:
    ra: np.ndarray
    rh: np.ndarray
    mask: np.ndarray
    yield_target: float
    yield_observed: bool = True

    def __post_init__(self):
        self.ra = np.asarray(self.ra, dtype=np.float64)
        self.rh = np.asarray(self.rh, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if not (self.ra.shape == self.rh.shape == self.mask.shape):
            raise DataError("ra, rh and mask must have equal lengths")
        self.yield_target = float(self.yield_target)
        self.yield_observed = bool(self.yield_observed)
