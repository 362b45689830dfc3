"""Dense float64 helpers, seeded random streams and a finite-difference oracle.

Vectors and matrices are plain ``numpy.ndarray`` objects of dtype float64.
"""
from __future__ import annotations

import hashlib
import math

import numpy as np

from .errors import DomainError, NumericError, ShapeError

_TWO_PI = 2.0 * math.pi


def affine(W, x, b):
    """Return ``W @ x + b`` with explicit shape checks."""
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or x.ndim != 1 or b.ndim != 1:
        raise ShapeError(f"affine expects a matrix and two vectors, got {W.shape}, {x.shape}, {b.shape}")
    if W.shape[1] != x.shape[0]:
        raise ShapeError(f"W has shape {W.shape} but x has shape {x.shape}")
    if W.shape[0] != b.shape[0]:
        raise ShapeError(f"W has shape {W.shape} but b has shape {b.shape}")
    return W @ x + b


def stable_softmax(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[axis] == 0:
        raise DomainError("softmax of an empty vector")
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def sigmoid(x):
    """Logistic function, overflow-free for any finite input."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def tanh_act(x):
    out = np.tanh(np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


class RngStream:
    """Seeded random stream.

    Bits come from numpy's PCG64 seeded with ``seed``. Only uniform doubles
    (``Generator.random``) are taken from numpy; every other distribution is
    a fixed transform of those uniforms so sequences do not depend on
    numpy's own sampling algorithms:

    * normal: Box-Muller on consecutive uniform pairs ``(u1, u2)``, emitting
      ``r*cos(2*pi*u2)`` then ``r*sin(2*pi*u2)`` with ``r = sqrt(-2 ln(1-u1))``
    * exponential: ``-mean * ln(1-u)``
    * permutation: stable argsort of ``n`` uniforms
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def __repr__(self):
        return f"RngStream(seed={self.seed})"

    def uniform(self, size=None, low=0.0, high=1.0):
        u = self._gen.random(size)
        return low + (high - low) * u

    def normal(self, size=None, mean=0.0, std=1.0):
        n = 1 if size is None else int(np.prod(size))
        m = (n + 1) // 2
        u = self._gen.random(2 * m).reshape(m, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = _TWO_PI * u[:, 1]
        z = np.empty((m, 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        z = mean + std * z.ravel()[:n]
        return float(z[0]) if size is None else z.reshape(size)

    def exponential(self, size=None, mean=1.0):
        return -mean * np.log1p(-self._gen.random(size))

    def permutation(self, n: int):
        return np.argsort(self._gen.random(n), kind="stable")


def derive_stream(base: RngStream, label: str) -> RngStream:
    """Child stream keyed on ``(base.seed, label)``; ignores how far ``base`` has advanced."""
    digest = hashlib.blake2b(f"{base.seed}:{label}".encode(), digest_size=8).digest()
    return RngStream(int.from_bytes(digest, "little"))


def finite_diff_gradient(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if h <= 0:
        raise DomainError("step h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NumericError(f"non-finite function value while perturbing component {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(a, b):
    """Elementwise ``|a-b| / max(1, |a|, |b|)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
