"""Functional Adam: every step returns fresh parameters and optimizer state."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import ModelParams


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def _arrays(params):
    if isinstance(params, ModelParams):
        return params.arrays
    if isinstance(params, dict):
        return params
    return {"theta": params}


def adam_step(params, grads, state: AdamState, hyper: AdamHyper, lr_scale=None):
    """One bias-corrected Adam update.

    ``params``/``grads`` are ModelParams or dicts of arrays (a bare array is
    accepted too). ``lr_scale`` optionally maps a parameter name to a
    learning-rate multiplier.
    """
    arrs = _arrays(params)
    gs = _arrays(grads)
    t = state.step + 1
    b1, b2 = hyper.beta1, hyper.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new, m_new, v_new = {}, {}, {}
    for name, theta in arrs.items():
        g = np.asarray(gs[name], dtype=np.float64)
        m = b1 * state.m.get(name, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1.0 - b2) * (g * g)
        lr = hyper.lr * (lr_scale(name) if lr_scale is not None else 1.0)
        new[name] = theta - lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
        m_new[name], v_new[name] = m, v
    state = AdamState(m_new, v_new, t)
    if isinstance(params, ModelParams):
        return params.replace(arrays=new), state
    if isinstance(params, dict):
        return new, state
    return new["theta"], state
