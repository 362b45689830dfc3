"""Process-based surrogate producing region-parameterized drivers and fluxes.

Heterotrophic respiration follows a Q10 law scaled by a parabolic moisture
response and soil organic matter; autotrophic respiration is a fixed share of
GPP; GPP is light-use efficiency times radiation with temperature and
moisture limitation.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .ndmath import RngStream
from .records import DailyDrivers, SampleSeries, TargetSeries
from .regions import detect_region

YIELD_SCALE = 0.01
PHASE_DAY = 100
YEAR_DAYS = 365.0
MAX_LOCATION_DRAWS = 10_000


@dataclass(frozen=True)
class RegionProcessParams:
    q10: float
    r_base: float
    f_ra: float
    lue: float
    t_mean_c: float
    t_amp_c: float
    m_eq: float
    k_om: float
    harvest_index: float
    noise_sigma: float

    def __post_init__(self):
        checks = [
            ("q10", self.q10 > 1),
            ("r_base", self.r_base > 0),
            ("f_ra", 0 < self.f_ra < 1),
            ("lue", self.lue > 0),
            ("m_eq", 0.05 < self.m_eq < 0.95),
            ("k_om", self.k_om >= 0),
            ("harvest_index", 0 < self.harvest_index < 1),
            ("noise_sigma", self.noise_sigma >= 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"process parameter {name}={getattr(self, name)} out of range")
        for name, v in asdict(self).items():
            if not math.isfinite(v):
                raise ConfigError(f"process parameter {name} must be finite")

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DriverNoise:
    temp_sigma: float = 2.0
    srad_sigma: float = 1.5
    moisture_sigma: float = 0.03
    precip_mean: float = 3.0

    def __post_init__(self):
        if min(self.temp_sigma, self.srad_sigma, self.moisture_sigma, self.precip_mean) < 0:
            raise ConfigError("driver noise settings must be >= 0")


@dataclass
class TrueFluxes:
    ra: np.ndarray
    rh: np.ndarray


def moisture_response(m):
    return 4.0 * m * (1.0 - m)


def process_model_step(d: DailyDrivers, p: RegionProcessParams, om_pct) -> TrueFluxes:
    """Daily Ra and Rh; works elementwise over whole driver sequences."""
    rh = p.r_base * p.q10 ** ((d.t_air_c - 10.0) / 10.0) * moisture_response(d.moisture_frac) * (1.0 + p.k_om * om_pct)
    ra = p.f_ra * d.gpp
    return TrueFluxes(ra=ra, rh=rh)


def seasonal(days):
    return np.sin(2.0 * math.pi * (days - PHASE_DAY) / YEAR_DAYS)


def gpp_model(srad, t_air, m, lue):
    return lue * srad * np.clip(t_air / 25.0, 0.0, 1.0) * moisture_response(m)


def generate_drivers(p: RegionProcessParams, n_days: int, rng: RngStream,
                     noise: DriverNoise = DriverNoise(), start_day: int = 0) -> DailyDrivers:
    """Daily weather, soil moisture and GPP for one year-like run.

    The first day's moisture equals ``m_eq``; later days follow a clamped
    AR(1) pull towards it. Random draws are taken in a fixed order
    (temperature, radiation, moisture, precipitation noise) regardless of the
    noise magnitudes, so zeroing one sigma does not shift the others.
    """
    if n_days < 1:
        raise ConfigError("n_days must be >= 1")
    days = np.arange(start_day, start_day + n_days, dtype=np.float64)
    s = seasonal(days)
    e_t = rng.normal(n_days, std=1.0)
    e_s = rng.normal(n_days, std=1.0)
    e_m = rng.normal(n_days, std=1.0)
    precip = rng.exponential(n_days, mean=1.0) * noise.precip_mean

    t_air = p.t_mean_c + p.t_amp_c * s + noise.temp_sigma * e_t
    srad = np.maximum(0.0, 12.0 + 8.0 * s + noise.srad_sigma * e_s)
    m = np.empty(n_days)
    m[0] = p.m_eq
    for t in range(1, n_days):
        m[t] = min(0.95, max(0.05, m[t - 1] + 0.08 * (p.m_eq - m[t - 1]) + noise.moisture_sigma * e_m[t]))
    gpp = gpp_model(srad, t_air, m, p.lue)
    return DailyDrivers(t_air, srad, precip, m, gpp)


def annual_yield(gpp, ra, harvest_index):
    return harvest_index * float(np.sum(gpp - ra)) * YIELD_SCALE


def _draw_location(region, box, rng, region_cfg):
    for _ in range(MAX_LOCATION_DRAWS):
        lat = float(rng.uniform(None, box.lat_min, box.lat_max))
        lon = float(rng.uniform(None, box.lon_min, box.lon_max))
        if detect_region(lat, lon, region_cfg) == region:
            return lat, lon
    raise ConfigError(f"region {region!r}: its box is almost entirely claimed by overlapping regions")


def generate_region_dataset(region: str, p: RegionProcessParams, n_samples: int, n_days: int,
                            rng: RngStream, region_cfg, noise: DriverNoise = DriverNoise(),
                            flux_obs_frac: float = 1.0, yield_obs_frac: float = 1.0,
                            start_day: int = 0):
    """Samples and noisy targets for one region.

    Locations are uniform over the part of the region's bounding box that the
    detector assigns to it, so overlaps with neighbouring boxes never hold
    another region's samples. Flux targets are the
    true fluxes plus Gaussian noise, clamped at zero. ``flux_obs_frac`` and
    ``yield_obs_frac`` thin the observation masks at random (1.0 keeps all).
    """
    if n_samples < 1 or n_days < 1:
        raise ConfigError("n_samples and n_days must be >= 1")
    box = region_cfg.box(region)
    samples, targets = [], []
    for i in range(n_samples):
        lat, lon = _draw_location(region, box, rng, region_cfg)
        clay = float(rng.uniform(None, 0.1, 0.4))
        om = float(rng.uniform(None, 1.0, 6.0))
        d = generate_drivers(p, n_days, rng, noise, start_day)
        true = process_model_step(d, p, om)
        ra = np.maximum(0.0, true.ra + p.noise_sigma * rng.normal(n_days))
        rh = np.maximum(0.0, true.rh + p.noise_sigma * rng.normal(n_days))
        y = annual_yield(d.gpp, true.ra, p.harvest_index) + p.noise_sigma * rng.normal()
        mask = rng.uniform(n_days) < flux_obs_frac
        y_obs = bool(rng.uniform() < yield_obs_frac)
        sid = f"{region}-{i:04d}"
        samples.append(SampleSeries(sid, lat, lon, clay, om, d, region=region))
        targets.append(TargetSeries(ra, rh, mask, y, y_obs))
    return samples, targets
