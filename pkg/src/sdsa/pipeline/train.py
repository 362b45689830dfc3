"""Splits and the five-step pretrain / fine-tune protocol."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..config import ExperimentConfig, StepSpec
from ..errors import ConfigError
from ..kgloss import LossWeights, masked_mse, total_loss
from ..model import AwarenessLevel, ModelConfig, ModelParams, forward, init_params, is_encoder
from ..ndmath import RngStream, derive_stream
from ..regions import partition
from .optim import AdamHyper, AdamState, adam_step
from .preprocess import ALL_FEATURES, NormStats, PreparedSet, feature_layout, fill_sample, fit_normalizer

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
POOLED = "pooled"


@dataclass
class SplitData:
    """A dataset with per-region train/val/test index lists."""

    samples: list
    targets: list
    parts: dict   # region -> {"train": [...], "val": [...], "test": [...]}

    def indices(self, split, regions=None):
        regions = self.parts if regions is None else regions
        return [i for r in regions for i in self.parts[r][split]]

    def subset(self, split, region):
        idx = self.parts[region][split]
        return [self.samples[i] for i in idx], [self.targets[i] for i in idx]


def split_counts(n, fractions):
    n_train = int(round(fractions.train * n))
    n_val = int(round(fractions.val * n))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def make_splits(samples, targets, cfg: ExperimentConfig, rng: RngStream, label) -> SplitData:
    """Per-region seeded shuffle of sample ids, then train/val/test slices.

    Gaps in the drivers are filled first so every later stage sees complete
    sequences.
    """
    samples = [fill_sample(s, cfg.protocol.max_gap) for s in samples]
    parts = {}
    for region, idx in partition(samples, cfg.regions).items():
        idx = sorted(idx, key=lambda i: samples[i].sample_id)
        perm = derive_stream(rng, f"split:{label}:{region}").permutation(len(idx))
        shuffled = [idx[k] for k in perm]
        n_train, n_val, _ = split_counts(len(idx), cfg.splits)
        parts[region] = {
            "train": shuffled[:n_train],
            "val": shuffled[n_train:n_train + n_val],
            "test": shuffled[n_train + n_val:],
        }
    return SplitData(samples, targets, parts)


@dataclass
class BundleEntry:
    params: ModelParams
    norm: NormStats


@dataclass
class TrainedBundle:
    awareness_level: AwarenessLevel
    features: tuple
    entries: dict
    history: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def entry_for(self, region):
        if self.awareness_level == AwarenessLevel.LEVEL3:
            return self.entries[region]
        return self.entries[POOLED]


def data_loss(params, prep: PreparedSet, idx, weights: LossWeights, batch_size=64, backend=None):
    """Weighted flux + yield MSE (normalized units), pooled over ``idx``."""
    if not idx:
        return float("nan")
    se_f = n_f = se_y = n_y = 0.0
    for b in prep.batches(idx, batch_size):
        out, _ = forward(params, b.X, backend=backend)
        v, _ = masked_mse(out.flux, b.flux_target, b.flux_mask[..., None])
        n = 2 * int(b.flux_mask.sum())
        se_f += v * n
        n_f += n
        v, _ = masked_mse(out.yield_, b.yield_target, b.yield_mask)
        n = int(b.yield_mask.sum())
        se_y += v * n
        n_y += n
    mse_f = se_f / n_f if n_f else 0.0
    mse_y = se_y / n_y if n_y else 0.0
    return weights.flux_weight * mse_f + weights.yield_weight * mse_y


def run_step(params, step: StepSpec, prep: PreparedSet, train_idx, val_idx, rng: RngStream,
             cfg: ExperimentConfig, tag, backend=None):
    """Train one protocol step with early stopping; returns the best parameters and history."""
    pc = cfg.protocol
    hyper = AdamHyper(step.lr, pc.beta1, pc.beta2, pc.eps)
    mult = step.encoder_lr_mult

    def lr_scale(name):
        return mult if is_encoder(name) else 1.0

    monitor = val_idx if val_idx else train_idx
    state = AdamState()
    best = data_loss(params, prep, monitor, step.weights, backend=backend)
    best_params, wait = params, 0
    history = []
    for epoch in range(step.epochs):
        order = [train_idx[k] for k in rng.permutation(len(train_idx))]
        acc, n_seen = None, 0
        for batch in prep.batches(order, pc.batch_size):
            bd, grads = total_loss(params, batch, step.weights, backend=backend)
            params, state = adam_step(params, grads, state, hyper, lr_scale)
            vals = np.array([bd.total, bd.mse_flux, bd.mse_yield, bd.pen_nonneg, bd.pen_budget,
                             bd.pen_response, bd.reg_l2]) * batch.size
            acc = vals if acc is None else acc + vals
            n_seen += batch.size
        acc = acc / n_seen
        val = data_loss(params, prep, monitor, step.weights, backend=backend)
        history.append({
            "tag": tag, "step": step.name, "epoch": epoch,
            "train": dict(zip(("total", "mse_flux", "mse_yield", "pen_nonneg", "pen_budget",
                               "pen_response", "reg_l2"), map(float, acc))),
            "val_mse": float(val),
        })
        log.debug("%s %s epoch %d train %.5f val %.5f", tag, step.name, epoch, acc[0], val)
        if val < best:
            best, best_params, wait = val, params, 0
        else:
            wait += 1
            if wait >= pc.patience:
                break
    log.info("%s %s: %d epochs, best val %.5f", tag, step.name, len(history), best)
    return best_params, history


def _fingerprint(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def train_five_step(cfg: ExperimentConfig, synthetic: SplitData, observed: SplitData, level,
                    rng: RngStream, pretrain_cache=None, backend=None) -> TrainedBundle:
    """Pretrain on synthetic data, then fine-tune on observed data.

    Synthetic steps run once on pooled data. Observed steps run on pooled
    data for levels 1 and 2, and once per configured region (each starting
    from the shared pretrained weights) for level 3.

    ``pretrain_cache`` is an optional dict reused across calls; the shared
    steps of levels 1 and 3 are identical and run only once when given.
    """
    level = AwarenessLevel(level)
    features = feature_layout(level)
    region_names = cfg.regions.names
    syn_train = synthetic.indices("train")
    if not syn_train:
        raise ConfigError("synthetic training split is empty")
    norm = fit_normalizer([synthetic.samples[i] for i in syn_train],
                          [synthetic.targets[i] for i in syn_train], ALL_FEATURES)
    syn = PreparedSet(synthetic.samples, synthetic.targets, norm, features)
    obs = PreparedSet(observed.samples, observed.targets, norm, features)

    # Levels 1 and 3 share a layout, so shared-step streams are keyed on the layout.
    layout_key = "loc" if AwarenessLevel.LEVEL2 == level else "noloc"
    base_level = AwarenessLevel.LEVEL2 if level == AwarenessLevel.LEVEL2 else AwarenessLevel.LEVEL1
    mcfg = ModelConfig(features, cfg.model["hidden_dim"], cfg.model["n_layers"], cfg.model["att_dim"], base_level)
    shared_steps = [s for s in cfg.protocol.steps if s.shared]
    tuned_steps = [s for s in cfg.protocol.steps if not s.shared]

    key = None
    if pretrain_cache is not None:
        key = (cfg.hash, features, _fingerprint(*syn.X, *syn.flux, np.array(syn_train)))
    if key is not None and key in pretrain_cache:
        params, shared_hist = pretrain_cache[key]
        log.info("reusing shared pretraining for layout %s", layout_key)
    else:
        params = init_params(mcfg, derive_stream(rng, f"init:{layout_key}"))
        shared_hist = []
        syn_val = synthetic.indices("val")
        for step in shared_steps:
            srng = derive_stream(rng, f"step:{layout_key}:{step.name}")
            params, h = run_step(params, step, syn, syn_train, syn_val, srng, cfg, "shared", backend)
            shared_hist += h
        if key is not None:
            pretrain_cache[key] = (params, shared_hist)

    history = list(shared_hist)
    entries = {}
    if level == AwarenessLevel.LEVEL3:
        for region in region_names:
            tr = observed.parts.get(region, {}).get("train", [])
            if not tr:
                raise ConfigError(f"region {region!r} has no observed training samples")
            va = observed.parts[region]["val"]
            p = params.tagged(region)
            for step in tuned_steps:
                srng = derive_stream(rng, f"step:L3:{region}:{step.name}")
                p, h = run_step(p, step, obs, tr, va, srng, cfg, region, backend)
                history += h
            entries[region] = BundleEntry(p, norm)
    else:
        tr, va = observed.indices("train"), observed.indices("val")
        if not tr:
            raise ConfigError("observed training split is empty")
        p = params
        for step in tuned_steps:
            srng = derive_stream(rng, f"step:L{int(level)}:{POOLED}:{step.name}")
            p, h = run_step(p, step, obs, tr, va, srng, cfg, POOLED, backend)
            history += h
        entries[POOLED] = BundleEntry(p, norm)

    prov = {
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "level": int(level),
        "backend": backend or kernels.BACKEND,
        "regions": region_names,
    }
    return TrainedBundle(level, features, entries, history, prov)
