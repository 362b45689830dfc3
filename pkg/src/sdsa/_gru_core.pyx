# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled GRU time loop. Same contract as ``sdsa._gru_py``.

Row-major (B, K) buffers are handed to column-major BLAS as their (K, B)
transposes, so ``h @ U.T`` becomes ``dgemm('T', 'N')`` on the raw buffers.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh, fabs
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sig(double x) nogil:
    cdef double e = exp(-fabs(x))
    if x >= 0:
        return 1.0 / (1.0 + e)
    return e / (1.0 + e)


def gru_forward(double[:, :, ::1] A, double[:, ::1] U, double[:, ::1] h0):
    cdef int T = A.shape[0], B = A.shape[1], H = A.shape[2] // 3
    cdef int H2 = 2 * H, H3 = 3 * H
    cdef int BH = B * H
    Hs_arr = np.empty((T, B, H))
    Z_arr = np.empty((T, B, H))
    R_arr = np.empty((T, B, H))
    HT_arr = np.empty((T, B, H))
    rec_arr = np.empty((B, H2))
    gate_arr = np.empty(2 * B * H)
    rh_arr = np.empty(B * H)
    hu_arr = np.empty(B * H)
    cdef double[:, :, ::1] Hs = Hs_arr, Z = Z_arr, R = R_arr, HT = HT_arr
    cdef double[:, ::1] rec = rec_arr
    cdef double[::1] gate = gate_arr, rh = rh_arr, hu = hu_arr
    cdef double *hp
    cdef double *zt
    cdef double *rt
    cdef double *htt
    cdef double *ht_out
    cdef double one = 1.0, zero = 0.0
    cdef char tr = b'T', nt = b'N'
    cdef int t, b, j, i
    with nogil:
        for t in range(T):
            if t == 0:
                hp = &h0[0, 0]
            else:
                hp = &Hs[t - 1, 0, 0]
            zt = &Z[t, 0, 0]
            rt = &R[t, 0, 0]
            htt = &HT[t, 0, 0]
            ht_out = &Hs[t, 0, 0]
            # rec = h_prev @ U_zr.T
            dgemm(&tr, &nt, &H2, &B, &H, &one, &U[0, 0], &H, hp, &H, &zero, &rec[0, 0], &H2)
            for b in range(B):
                for j in range(H):
                    gate[b * H + j] = A[t, b, j] + rec[b, j]
                    gate[BH + b * H + j] = A[t, b, H + j] + rec[b, H + j]
            for i in range(2 * BH):
                gate[i] = 1.0 / (1.0 + exp(-gate[i]))
            for i in range(BH):
                zt[i] = gate[i]
                rt[i] = gate[BH + i]
                rh[i] = gate[BH + i] * hp[i]
            # hu = (r * h_prev) @ U_h.T
            dgemm(&tr, &nt, &H, &B, &H, &one, &U[H2, 0], &H, &rh[0], &H, &zero, &hu[0], &H)
            for b in range(B):
                for j in range(H):
                    hu[b * H + j] += A[t, b, H2 + j]
            for i in range(BH):
                htt[i] = tanh(hu[i])
            for i in range(BH):
                ht_out[i] = (1.0 - zt[i]) * hp[i] + zt[i] * htt[i]
    return Hs_arr, Z_arr, R_arr, HT_arr


def gru_backward(double[:, :, ::1] dHs, double[:, :, ::1] Hs, double[:, :, ::1] Z,
                 double[:, :, ::1] R, double[:, :, ::1] HT, double[:, ::1] h0,
                 double[:, ::1] U):
    cdef int T = Hs.shape[0], B = Hs.shape[1], H = Hs.shape[2]
    cdef int H2 = 2 * H, H3 = 3 * H
    dA_arr = np.empty((T, B, H3))
    dh_arr = np.zeros((B, H))
    drh_arr = np.empty((B, H))
    cdef double[:, :, ::1] dA = dA_arr
    cdef double[:, ::1] dh = dh_arr, drh = drh_arr
    cdef const double *hp
    cdef double one = 1.0, zero = 0.0
    cdef char nt = b'N'
    cdef int t, b, j
    cdef double z, r, ht, g, hprev
    with nogil:
        for t in range(T - 1, -1, -1):
            if t == 0:
                hp = &h0[0, 0]
            else:
                hp = &Hs[t - 1, 0, 0]
            for b in range(B):
                for j in range(H):
                    g = dh[b, j] + dHs[t, b, j]
                    dh[b, j] = g
                    z = Z[t, b, j]
                    ht = HT[t, b, j]
                    dA[t, b, H2 + j] = g * z * (1.0 - ht * ht)
                    dA[t, b, j] = g * (ht - hp[b * H + j]) * z * (1.0 - z)
            # drh = da_h @ U_h
            dgemm(&nt, &nt, &H, &B, &H, &one, &U[H2, 0], &H, &dA[t, 0, H2], &H3, &zero, &drh[0, 0], &H)
            for b in range(B):
                for j in range(H):
                    r = R[t, b, j]
                    hprev = hp[b * H + j]
                    dA[t, b, H + j] = drh[b, j] * hprev * r * (1.0 - r)
                    dh[b, j] = dh[b, j] * (1.0 - Z[t, b, j]) + drh[b, j] * r
            # dh += dA_zr @ U_zr
            dgemm(&nt, &nt, &H, &B, &H2, &one, &U[0, 0], &H, &dA[t, 0, 0], &H3, &one, &dh[0, 0], &H)
    return dA_arr, dh_arr
