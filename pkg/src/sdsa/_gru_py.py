"""Pure-numpy GRU time loop; reference for the compiled ``_gru_core``.

Layout, shared with the compiled version:
    A   (T, B, 3H)  input projections ``x_t @ W.T + b`` in gate order z, r, h
    U   (3H, H)     stacked recurrent weights U_z, U_r, U_h
    h0  (B, H)
Forward returns hidden states Hs and gate caches Z, R, HT (candidate), all (T, B, H).
Backward takes dHs, the loss gradient w.r.t. every emitted h_t (excluding the
recurrent path), and returns gradients w.r.t. the pre-activations A and h0.
"""
import numpy as np


def _sig(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def gru_forward(A, U, h0):
    T, B, H3 = A.shape
    H = H3 // 3
    U_zr = U[: 2 * H]
    U_h = U[2 * H:]
    Hs = np.empty((T, B, H))
    Z = np.empty((T, B, H))
    R = np.empty((T, B, H))
    HT = np.empty((T, B, H))
    h = h0
    for t in range(T):
        a = A[t]
        rec = h @ U_zr.T
        z = _sig(a[:, :H] + rec[:, :H])
        r = _sig(a[:, H:2 * H] + rec[:, H:])
        ht = np.tanh(a[:, 2 * H:] + (r * h) @ U_h.T)
        h = (1.0 - z) * h + z * ht
        Hs[t], Z[t], R[t], HT[t] = h, z, r, ht
    return Hs, Z, R, HT


def gru_backward(dHs, Hs, Z, R, HT, h0, U):
    T, B, H = Hs.shape
    U_zr = U[: 2 * H]
    U_h = U[2 * H:]
    dA = np.empty((T, B, 3 * H))
    dh = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        h_prev = Hs[t - 1] if t > 0 else h0
        z, r, ht = Z[t], R[t], HT[t]
        dh = dh + dHs[t]
        da_h = dh * z * (1.0 - ht * ht)
        da_z = dh * (ht - h_prev) * z * (1.0 - z)
        drh = da_h @ U_h
        da_r = drh * h_prev * r * (1.0 - r)
        dA[t, :, :H] = da_z
        dA[t, :, H:2 * H] = da_r
        dA[t, :, 2 * H:] = da_h
        dh = dh * (1.0 - z) + drh * r + dA[t, :, :2 * H] @ U_zr
    return dA, dh
