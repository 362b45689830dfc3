"""GRU encoder with per-day flux heads and an attention-pooled yield head.

Arrays are time-major: a batch of inputs is ``X[t, b, feature]``. The model
works entirely in normalized units; ``to_prediction`` maps outputs back to
physical units.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError, UsageError
from .ndmath import RngStream, affine, sigmoid, stable_softmax, tanh_act

LOCATION_FEATURES = ("lat", "lon")
GATES = ("z", "r", "h")


class AwarenessLevel(enum.IntEnum):
    """How much of the model is allowed to know about location.

    1: nothing; 2: lat/lon as input features with shared weights;
    3: one weight set per region.
    """

    LEVEL1 = 1
    LEVEL2 = 2
    LEVEL3 = 3


@dataclass(frozen=True)
class ModelConfig:
    features: tuple
    hidden_dim: int = 64
    n_layers: int = 2
    att_dim: int = 32
    awareness_level: AwarenessLevel = AwarenessLevel.LEVEL1

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "awareness_level", AwarenessLevel(self.awareness_level))
        if min(len(self.features), self.hidden_dim, self.n_layers, self.att_dim) < 1:
            raise ConfigError("model dimensions must be positive")
        if len(set(self.features)) != len(self.features):
            raise ConfigError(f"duplicate feature names in {self.features}")
        has_loc = [f in self.features for f in LOCATION_FEATURES]
        if self.awareness_level == AwarenessLevel.LEVEL2 and not all(has_loc):
            raise ConfigError("level 2 models take lat and lon as input features")
        if self.awareness_level != AwarenessLevel.LEVEL2 and any(has_loc):
            raise ConfigError(f"level {int(self.awareness_level)} models must not see lat/lon")

    @property
    def input_dim(self):
        return len(self.features)

    def param_shapes(self):
        H, A = self.hidden_dim, self.att_dim
        shapes = {}
        d_in = self.input_dim
        for layer in range(self.n_layers):
            for g in GATES:
                shapes[f"gru{layer}.W_{g}"] = (H, d_in)
            for g in GATES:
                shapes[f"gru{layer}.U_{g}"] = (H, H)
            for g in GATES:
                shapes[f"gru{layer}.b_{g}"] = (H,)
            d_in = H
        shapes["att.W_a"] = (A, H)
        shapes["att.b_a"] = (A,)
        shapes["att.v_a"] = (A,)
        shapes["flux.W_f"] = (2, H)
        shapes["flux.b_f"] = (2,)
        shapes["yield.w_y"] = (H,)
        shapes["yield.b_y"] = (1,)
        return shapes


def is_bias(name):
    return ".b_" in name


def is_encoder(name):
    return name.startswith("gru")


@dataclass
class ModelParams:
    """Every trainable array, keyed by name, plus the owning region for level 3."""

    config: ModelConfig
    arrays: dict
    region_tag: str | None = None

    def __post_init__(self):
        shapes = self.config.param_shapes()
        if list(shapes) != list(self.arrays):
            raise ShapeError("parameter names do not match the model configuration")
        for name, shp in shapes.items():
            a = self.arrays[name]
            if a.shape != shp:
                raise ShapeError(f"{name} has shape {a.shape}, expected {shp}")
        if (self.region_tag is not None) != (self.config.awareness_level == AwarenessLevel.LEVEL3):
            raise ConfigError("region_tag is set exactly for level 3 parameters")

    def __getitem__(self, name):
        return self.arrays[name]

    @property
    def names(self):
        return list(self.arrays)

    @property
    def size(self):
        return sum(a.size for a in self.arrays.values())

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays.values()])

    def with_flat(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ShapeError(f"flat vector has shape {vec.shape}, expected ({self.size},)")
        out, i = {}, 0
        for name, a in self.arrays.items():
            out[name] = vec[i:i + a.size].reshape(a.shape).copy()
            i += a.size
        return ModelParams(self.config, out, self.region_tag)

    def replace(self, arrays=None, region_tag=None):
        return ModelParams(self.config, dict(arrays if arrays is not None else self.arrays),
                           region_tag if region_tag is not None else self.region_tag)

    def tagged(self, region_tag):
        cfg = self.config
        if region_tag is not None and cfg.awareness_level != AwarenessLevel.LEVEL3:
            cfg = ModelConfig(cfg.features, cfg.hidden_dim, cfg.n_layers, cfg.att_dim, AwarenessLevel.LEVEL3)
        return ModelParams(cfg, {k: v.copy() for k, v in self.arrays.items()}, region_tag)


def flatten_grads(params, grads):
    return np.concatenate([grads[n].ravel() for n in params.names])


def init_params(cfg: ModelConfig, rng: RngStream, region_tag=None) -> ModelParams:
    """Glorot-uniform weights (vectors count as 1-row matrices), zero biases."""
    arrays = {}
    for name, shp in cfg.param_shapes().items():
        if is_bias(name):
            arrays[name] = np.zeros(shp)
            continue
        fan_out, fan_in = shp if len(shp) == 2 else (1, shp[0])
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        arrays[name] = rng.uniform(shp, -limit, limit)
    return ModelParams(cfg, arrays, region_tag)


@dataclass
class GRULayer:
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @classmethod
    def from_params(cls, params, layer):
        p = f"gru{layer}."
        return cls(**{k: params[p + k] for k in cls.__dataclass_fields__})

    def stacked(self):
        W = np.vstack([self.W_z, self.W_r, self.W_h])
        U = np.vstack([self.U_z, self.U_r, self.U_h])
        b = np.concatenate([self.b_z, self.b_r, self.b_h])
        return W, U, b


def gru_cell_forward(x_t, h_prev, layer: GRULayer):
    """One GRU step: ``h_t = (1 - z) * h_prev + z * candidate``."""
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if h_prev.shape != (layer.U_h.shape[1],):
        raise ShapeError(f"U_h has shape {layer.U_h.shape} but h_prev has shape {h_prev.shape}")
    z = sigmoid(affine(layer.W_z, x_t, layer.b_z) + layer.U_z @ h_prev)
    r = sigmoid(affine(layer.W_r, x_t, layer.b_r) + layer.U_r @ h_prev)
    cand = tanh_act(affine(layer.W_h, x_t, layer.b_h) + layer.U_h @ (r * h_prev))
    return (1.0 - z) * h_prev + z * cand


def attention_pool(hs, W_a, b_a, v_a):
    """Additive attention over time.

    ``hs`` is ``(T, H)`` or ``(T, B, H)``. Returns ``(context, weights)``
    with weights softmax-normalized along time.
    """
    hs = np.asarray(hs, dtype=np.float64)
    if hs.shape[0] == 0:
        raise ShapeError("attention over an empty sequence")
    S = np.tanh(hs @ W_a.T + b_a)
    scores = S @ v_a
    w = stable_softmax(scores, axis=0)
    context = np.einsum("t...,t...h->...h", w, hs)
    return context, w


def _mm(X, M):
    """``X @ M`` for a time-major ``(T, B, K)`` array as a single GEMM."""
    T, B, K = X.shape
    return (X.reshape(T * B, K) @ M).reshape(T, B, M.shape[1])


@dataclass
class ForwardCache:
    params: ModelParams
    X: np.ndarray
    layers: list = field(default_factory=list)
    S: np.ndarray = None
    attn: np.ndarray = None
    context: np.ndarray = None


@dataclass
class ModelOutput:
    flux: np.ndarray      # (T, B, 2) normalized ra, rh
    yield_: np.ndarray    # (B,) normalized
    attn: np.ndarray      # (T, B)


def forward(params: ModelParams, X, backend=None):
    """Run the model on a time-major batch ``X`` of shape ``(T, B, D)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, None, :]
    cfg = params.config
    if X.ndim != 3 or X.shape[2] != cfg.input_dim:
        raise ConfigError(f"input has shape {X.shape}; model expects {cfg.input_dim} features {cfg.features}")
    T, B, _ = X.shape
    if T < 1:
        raise ShapeError("sequence must have at least one day")
    cache = ForwardCache(params, X)
    inp = X
    for layer in range(cfg.n_layers):
        W, U, b = GRULayer.from_params(params, layer).stacked()
        A = _mm(inp, W.T) + b
        h0 = np.zeros((B, cfg.hidden_dim))
        Hs, Z, R, HT = kernels.gru_forward(A, U, h0, backend=backend)
        cache.layers.append((inp, Hs, Z, R, HT, W, U))
        inp = Hs
    top = inp
    flux = _mm(top, params["flux.W_f"].T) + params["flux.b_f"]
    S = np.tanh(_mm(top, params["att.W_a"].T) + params["att.b_a"])
    attn = stable_softmax(_mm(S, params["att.v_a"][:, None])[..., 0], axis=0)
    context = (attn[:, :, None] * top).sum(axis=0)
    y = context @ params["yield.w_y"] + params["yield.b_y"][0]
    cache.S, cache.attn, cache.context = S, attn, context
    return ModelOutput(flux, y, attn), cache


def backward(cache: ForwardCache, params: ModelParams, d_flux, d_yield, backend=None):
    """Parameter gradients given loss gradients on the normalized outputs.

    ``d_flux`` matches ``ModelOutput.flux`` and ``d_yield`` matches
    ``ModelOutput.yield_``; either may be None.
    """
    if cache.params is not params:
        raise UsageError("forward cache was produced with a different parameter set")
    cfg = params.config
    top = cache.layers[-1][1]
    T, B, H = top.shape
    grads = {}
    d_flux = np.zeros((T, B, 2)) if d_flux is None else np.asarray(d_flux, dtype=np.float64)
    d_yield = np.zeros(B) if d_yield is None else np.asarray(d_yield, dtype=np.float64)
    if d_flux.shape != (T, B, 2) or d_yield.shape != (B,):
        raise UsageError(f"upstream gradient shapes {d_flux.shape}, {d_yield.shape} do not match the cache")

    grads["flux.W_f"] = d_flux.reshape(-1, 2).T @ top.reshape(-1, H)
    grads["flux.b_f"] = d_flux.sum(axis=(0, 1))
    dtop = _mm(d_flux, params["flux.W_f"])

    w_y = params["yield.w_y"]
    grads["yield.w_y"] = d_yield @ cache.context
    grads["yield.b_y"] = np.array([d_yield.sum()])
    d_ctx = d_yield[:, None] * w_y[None, :]
    attn, S = cache.attn, cache.S
    dtop += attn[:, :, None] * d_ctx[None, :, :]
    d_attn = (top * d_ctx[None]).sum(axis=2)
    d_scores = attn * (d_attn - (attn * d_attn).sum(axis=0, keepdims=True))
    grads["att.v_a"] = d_scores.reshape(-1) @ S.reshape(-1, S.shape[2])
    d_pre = d_scores[:, :, None] * params["att.v_a"] * (1.0 - S * S)
    A_dim = S.shape[2]
    grads["att.W_a"] = d_pre.reshape(-1, A_dim).T @ top.reshape(-1, H)
    grads["att.b_a"] = d_pre.sum(axis=(0, 1))
    dtop += _mm(d_pre, params["att.W_a"])

    dH = dtop
    for layer in range(cfg.n_layers - 1, -1, -1):
        inp, Hs, Z, R, HT, W, U = cache.layers[layer]
        h0 = np.zeros((B, H))
        dA, _ = kernels.gru_backward(dH, Hs, Z, R, HT, h0, U, backend=backend)
        H_prev = np.concatenate([h0[None], Hs[:-1]], axis=0)
        d_in = inp.shape[2]
        dA2 = dA.reshape(-1, 3 * H)
        dW = dA2.T @ inp.reshape(-1, d_in)
        dU_zr = dA2[:, :2 * H].T @ H_prev.reshape(-1, H)
        dU_h = dA2[:, 2 * H:].T @ (R * H_prev).reshape(-1, H)
        db = dA2.sum(axis=0)
        p = f"gru{layer}."
        for i, g in enumerate(GATES):
            grads[p + f"W_{g}"] = dW[i * H:(i + 1) * H]
            grads[p + f"b_{g}"] = db[i * H:(i + 1) * H]
        grads[p + "U_z"] = dU_zr[:H]
        grads[p + "U_r"] = dU_zr[H:]
        grads[p + "U_h"] = dU_h
        if layer > 0:
            dH = _mm(dA, W)
    return {n: np.ascontiguousarray(grads[n]) for n in params.names}


@dataclass
class Prediction:
    """Model output in physical units for a batch (time-major) or one sample."""

    ra_hat: np.ndarray
    rh_hat: np.ndarray
    yield_hat: np.ndarray
    attention_weights: np.ndarray


def to_prediction(out: ModelOutput, target_stats) -> Prediction:
    """``target_stats`` maps ra/rh/yield to ``(mean, std)``."""
    (m_ra, s_ra), (m_rh, s_rh), (m_y, s_y) = (target_stats[k] for k in ("ra", "rh", "yield"))
    return Prediction(
        ra_hat=out.flux[..., 0] * s_ra + m_ra,
        rh_hat=out.flux[..., 1] * s_rh + m_rh,
        yield_hat=out.yield_ * s_y + m_y,
        attention_weights=out.attn,
    )
