"""Training objective: masked data misfit, physical soft constraints, and L2.

Constraints are evaluated on physical-unit predictions:

* non-negativity of both respiration fluxes
* autotrophic respiration no larger than same-day GPP
* heterotrophic respiration must not drop when air temperature is raised
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import model as M
from .errors import ConfigError, DomainError, ShapeError


@dataclass(frozen=True)
class LossWeights:
    flux_weight: float = 1.0
    yield_weight: float = 1.0
    lambda_nonneg: float = 0.1
    lambda_budget: float = 0.1
    lambda_response: float = 0.1
    lambda_l2: float = 1e-5
    response_delta_t: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"loss weight {k} must be finite and >= 0, got {v}")
        if self.response_delta_t <= 0:
            raise ConfigError("response_delta_t must be positive")
        if self.flux_weight == 0 and self.yield_weight == 0:
            raise ConfigError("at least one of flux_weight / yield_weight must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    mse_flux: float
    mse_yield: float
    pen_nonneg: float
    pen_budget: float
    pen_response: float
    reg_l2: float
    n_observed_flux_days: int

    @staticmethod
    def compose(w: LossWeights, mse_flux, mse_yield, pen_nonneg, pen_budget, pen_response, reg_l2):
        return (w.flux_weight * mse_flux + w.yield_weight * mse_yield + w.lambda_nonneg * pen_nonneg
                + w.lambda_budget * pen_budget + w.lambda_response * pen_response + w.lambda_l2 * reg_l2)

    def recompose(self, w: LossWeights):
        return self.compose(w, self.mse_flux, self.mse_yield, self.pen_nonneg, self.pen_budget,
                            self.pen_response, self.reg_l2)

    def as_dict(self):
        return asdict(self)


@dataclass
class Batch:
    """Normalized model inputs plus everything the loss needs, time-major.

    ``flux_target`` is ``(T, B, 2)`` (ra, rh) in normalized units with zeros
    where ``flux_mask`` is False; ``gpp`` is physical. ``target_stats`` maps
    ra/rh/yield to ``(mean, std)``.
    """

    X: np.ndarray
    flux_target: np.ndarray
    flux_mask: np.ndarray
    yield_target: np.ndarray
    yield_mask: np.ndarray
    gpp: np.ndarray
    target_stats: dict
    temp_index: int
    temp_std: float

    @property
    def size(self):
        return self.X.shape[1]


def masked_mse(pred, target, mask):
    """Mean squared error over observed entries and its gradient w.r.t. ``pred``.

    ``mask`` broadcasts against ``pred``. With nothing observed the value is
    0 and the gradient is zero.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    m = np.broadcast_to(np.asarray(mask, dtype=bool), pred.shape)
    n = int(m.sum())
    if n == 0:
        return 0.0, np.zeros_like(pred)
    diff = np.where(m, pred - target, 0.0)
    return float((diff * diff).sum() / n), 2.0 * diff / n


def penalty_nonneg(pred):
    pred = np.asarray(pred, dtype=np.float64)
    neg = np.maximum(0.0, -pred)
    n = pred.size
    return float((neg * neg).sum() / n), -2.0 * neg / n


def penalty_budget(ra_hat, gpp):
    ra_hat = np.asarray(ra_hat, dtype=np.float64)
    gpp = np.asarray(gpp, dtype=np.float64)
    if ra_hat.shape != gpp.shape:
        raise ShapeError(f"ra prediction shape {ra_hat.shape} != gpp shape {gpp.shape}")
    excess = np.maximum(0.0, ra_hat - gpp)
    n = ra_hat.size
    return float((excess * excess).sum() / n), 2.0 * excess / n


def response_gap(rh, rh_warm):
    """Penalty on ``rh`` exceeding ``rh_warm``; returns value and both gradients."""
    gap = np.maximum(0.0, rh - rh_warm)
    n = gap.size
    g = 2.0 * gap / n
    return float((gap * gap).sum() / n), g, -g


def warmed(X, temp_index, delta_t, temp_std):
    if delta_t <= 0:
        raise DomainError("temperature probe delta must be positive")
    if not 0 <= temp_index < X.shape[-1]:
        raise ConfigError(f"temperature feature index {temp_index} outside {X.shape[-1]} features")
    Xp = np.array(X, dtype=np.float64)
    Xp[..., temp_index] += delta_t / temp_std
    return Xp


def penalty_response(params, X, temp_index, delta_t, temp_std, rh_stats,
                     forward_fn=M.forward, backward_fn=M.backward):
    """Warming-probe penalty and its parameter gradient.

    Runs ``forward_fn`` on ``X`` and on a copy with the temperature feature
    raised by ``delta_t`` physical degrees, and backpropagates through both.
    ``forward_fn(params, X) -> (output with .flux, cache)`` and
    ``backward_fn(cache, params, d_flux, d_yield) -> grads`` may be swapped
    for any model with that interface.
    """
    Xp = warmed(X, temp_index, delta_t, temp_std)
    m_rh, s_rh = rh_stats
    out, cache = forward_fn(params, X)
    out_p, cache_p = forward_fn(params, Xp)
    rh = out.flux[..., 1] * s_rh + m_rh
    rh_p = out_p.flux[..., 1] * s_rh + m_rh
    value, g, gp = response_gap(rh, rh_p)
    d = np.zeros_like(out.flux)
    dp = np.zeros_like(out_p.flux)
    d[..., 1] = g * s_rh
    dp[..., 1] = gp * s_rh
    grads = backward_fn(cache, params, d, None)
    grads_p = backward_fn(cache_p, params, dp, None)
    return value, {k: grads[k] + grads_p[k] for k in grads}


def l2_term(params):
    reg = 0.0
    grads = {}
    for name, a in params.arrays.items():
        if M.is_bias(name):
            grads[name] = np.zeros_like(a)
        else:
            reg += float((a * a).sum())
            grads[name] = 2.0 * a
    return reg, grads


def total_loss(params, batch: Batch, weights: LossWeights, backend=None):
    """Composite loss over a batch and its exact parameter gradient.

    Data terms pool all observed entries in the batch; penalties average over
    every day (and flux) of every sample; L2 sums squared weights, biases
    excluded. The warming probe runs only when ``lambda_response > 0``;
    otherwise ``pen_response`` is reported as 0.
    """
    if batch.size == 0:
        raise ShapeError("empty batch")
    w = weights
    st = batch.target_stats
    (m_ra, s_ra), (m_rh, s_rh) = st["ra"], st["rh"]
    scale = np.array([s_ra, s_rh])

    # the warming probe rides along as extra batch columns; samples never interact
    probe = w.lambda_response > 0
    B = batch.size
    X = batch.X
    if probe:
        X = np.concatenate([X, warmed(X, batch.temp_index, w.response_delta_t, batch.temp_std)], axis=1)
    out, cache = M.forward(params, X, backend=backend)
    flux = out.flux[:, :B]
    mse_flux, d_main = masked_mse(flux, batch.flux_target, batch.flux_mask[..., None])
    mse_yield, d_y = masked_mse(out.yield_[:B], batch.yield_target, batch.yield_mask)
    d_flux = np.zeros_like(out.flux)
    d_yield = np.zeros_like(out.yield_)
    d_flux[:, :B] = w.flux_weight * d_main
    d_yield[:B] = w.yield_weight * d_y

    phys = flux * scale + np.array([m_ra, m_rh])
    pen_nonneg, g_nonneg = penalty_nonneg(phys)
    d_flux[:, :B] += w.lambda_nonneg * g_nonneg * scale
    pen_budget, g_budget = penalty_budget(phys[..., 0], batch.gpp)
    d_flux[:, :B, 0] += w.lambda_budget * g_budget * s_ra

    pen_response = 0.0
    if probe:
        rh_p = out.flux[:, B:, 1] * s_rh + m_rh
        pen_response, g, gp = response_gap(phys[..., 1], rh_p)
        d_flux[:, :B, 1] += w.lambda_response * g * s_rh
        d_flux[:, B:, 1] = w.lambda_response * gp * s_rh

    reg_l2, g_l2 = l2_term(params)
    grads = M.backward(cache, params, d_flux, d_yield, backend=backend)
    for k in grads:
        grads[k] += w.lambda_l2 * g_l2[k]

    total = LossBreakdown.compose(w, mse_flux, mse_yield, pen_nonneg, pen_budget, pen_response, reg_l2)
    bd = LossBreakdown(total, mse_flux, mse_yield, pen_nonneg, pen_budget, pen_response, reg_l2,
                       int(batch.flux_mask.sum()))
    return bd, grads
