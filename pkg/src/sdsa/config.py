"""Experiment configuration: a single YAML document, validated strictly on load."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError
from .kgloss import LossWeights
from .regions import RegionConfig
from .synthgen import DriverNoise, RegionProcessParams

DATA_KINDS = ("synthetic", "observed")


def default_config_path() -> Path:
    return Path(str(resources.files("sdsa") / "configs" / "default.yaml"))


def _take(d, section, required=(), optional=()):
    if not isinstance(d, dict):
        raise ConfigError(f"{section}: expected a mapping")
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ConfigError(f"{section}: missing keys {missing}")
    return d


@dataclass(frozen=True)
class StepSpec:
    name: str
    data: str
    epochs: int
    lr: float
    weights: LossWeights
    encoder_lr_mult: float = 1.0

    @property
    def shared(self):
        """Synthetic steps form the pretraining shared by all level-3 region models."""
        return self.data == "synthetic"


@dataclass(frozen=True)
class ProtocolConfig:
    steps: tuple
    batch_size: int
    patience: int
    max_gap: int
    beta1: float
    beta2: float
    eps: float


@dataclass(frozen=True)
class GeneratorConfig:
    n_samples: int
    n_days: int
    start_day: int
    noise: DriverNoise
    presets: dict
    flux_obs_frac: float
    yield_obs_frac: float


@dataclass(frozen=True)
class SplitConfig:
    train: float
    val: float
    test: float


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    levels: tuple
    regions: RegionConfig
    generator: GeneratorConfig
    splits: SplitConfig
    model: dict
    loss: LossWeights
    protocol: ProtocolConfig
    raw: dict

    @property
    def hash(self):
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed):
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        return parse_config(raw)


def _loss(d, base=None, section="loss"):
    fields = LossWeights.__dataclass_fields__
    _take(d, section, optional=fields)
    try:
        vals = {k: float(v) for k, v in d.items()}
        return replace(base, **vals) if base is not None else LossWeights(**vals)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{section}: {exc}") from exc


def _positive_int(v, name, minimum=1):
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {v!r}")
    return v


def parse_config(raw: dict) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    _take(raw, "config", required=("seed", "regions", "generator", "splits", "model", "loss", "protocol"),
          optional=("levels",))
    seed = _positive_int(raw["seed"], "seed", minimum=0)
    levels = tuple(raw.get("levels", [1, 2, 3]))
    if not levels or any(lv not in (1, 2, 3) for lv in levels):
        raise ConfigError(f"levels must be a nonempty subset of [1, 2, 3], got {list(levels)}")

    r = _take(raw["regions"], "regions", required=("boxes",), optional=("out_of_region_policy",))
    for name, box in r["boxes"].items():
        if not isinstance(box, (list, tuple)) or len(box) != 4:
            raise ConfigError(f"regions.boxes.{name}: expected [lat_min, lat_max, lon_min, lon_max]")
    regions = RegionConfig.from_dict(r)

    g = _take(raw["generator"], "generator", required=("n_samples", "n_days", "shared", "presets"),
              optional=("start_day", "driver_noise", "observed"))
    n_samples = _positive_int(g["n_samples"], "generator.n_samples")
    n_days = _positive_int(g["n_days"], "generator.n_days")
    noise = DriverNoise(**_take(g.get("driver_noise", {}), "generator.driver_noise",
                                optional=DriverNoise.__dataclass_fields__))
    shared_keys = ("lue", "k_om", "harvest_index", "noise_sigma")
    region_keys = ("q10", "r_base", "f_ra", "m_eq", "t_mean_c", "t_amp_c")
    shared = _take(g["shared"], "generator.shared", optional=shared_keys + region_keys)
    presets = {}
    for name, p in g["presets"].items():
        regions.box(name)
        _take(p, f"generator.presets.{name}", optional=shared_keys + region_keys)
        merged = {**shared, **p}
        missing = [k for k in shared_keys + region_keys if k not in merged]
        if missing:
            raise ConfigError(f"generator.presets.{name}: missing {missing}")
        presets[name] = RegionProcessParams(**{k: float(v) for k, v in merged.items()})
    for name in regions.names:
        if name not in presets:
            raise ConfigError(f"generator.presets: no preset for region {name!r}")
    obs = _take(g.get("observed", {}), "generator.observed", optional=("flux_obs_frac", "yield_obs_frac"))
    fo, yo = float(obs.get("flux_obs_frac", 1.0)), float(obs.get("yield_obs_frac", 1.0))
    if not (0 < fo <= 1 and 0 <= yo <= 1):
        raise ConfigError("observation fractions must lie in (0, 1] (flux) and [0, 1] (yield)")
    generator = GeneratorConfig(n_samples, n_days, int(g.get("start_day", 0)), noise, presets, fo, yo)

    s = _take(raw["splits"], "splits", required=("train", "val", "test"))
    splits = SplitConfig(*(float(s[k]) for k in ("train", "val", "test")))
    if min(splits.train, splits.val, splits.test) < 0 or splits.train <= 0 or \
            abs(splits.train + splits.val + splits.test - 1.0) > 1e-9:
        raise ConfigError("split fractions must be >= 0, train > 0, and sum to 1")

    m = _take(raw["model"], "model", required=("hidden_dim", "n_layers", "att_dim"))
    model = {k: _positive_int(m[k], f"model.{k}") for k in ("hidden_dim", "n_layers", "att_dim")}

    loss = _loss(raw["loss"])

    p = _take(raw["protocol"], "protocol", required=("steps", "batch_size", "patience"),
              optional=("max_gap", "beta1", "beta2", "eps"))
    steps = []
    for i, st in enumerate(p["steps"]):
        sec = f"protocol.steps[{i}]"
        _take(st, sec, required=("name", "data", "epochs", "lr"), optional=("weights", "encoder_lr_mult"))
        if st["data"] not in DATA_KINDS:
            raise ConfigError(f"{sec}.data must be one of {DATA_KINDS}")
        w = _loss(st.get("weights", {}), base=loss, section=f"{sec}.weights")
        lr, mult = float(st["lr"]), float(st.get("encoder_lr_mult", 1.0))
        if lr <= 0 or mult < 0:
            raise ConfigError(f"{sec}: lr must be > 0 and encoder_lr_mult >= 0")
        steps.append(StepSpec(str(st["name"]), st["data"], _positive_int(st["epochs"], f"{sec}.epochs", 0),
                              lr, w, mult))
    names = [st.name for st in steps]
    if not steps or len(set(names)) != len(names):
        raise ConfigError("protocol.steps must be nonempty with unique names")
    shared_flags = [st.shared for st in steps]
    if shared_flags != sorted(shared_flags, reverse=True):
        raise ConfigError("synthetic (pretraining) steps must precede observed steps")
    protocol = ProtocolConfig(
        tuple(steps),
        _positive_int(p["batch_size"], "protocol.batch_size"),
        _positive_int(p["patience"], "protocol.patience"),
        _positive_int(p.get("max_gap", 3), "protocol.max_gap", 0),
        float(p.get("beta1", 0.9)), float(p.get("beta2", 0.999)), float(p.get("eps", 1e-8)),
    )
    if not (0 <= protocol.beta1 < 1 and 0 <= protocol.beta2 < 1 and protocol.eps > 0):
        raise ConfigError("Adam hyperparameters out of range")

    return ExperimentConfig(seed, levels, regions, generator, splits, model, loss, protocol, raw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    return parse_config(raw)


def load_default_config() -> ExperimentConfig:
    return load_config(default_config_path())
