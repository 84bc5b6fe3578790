# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM kernels.  Same signatures and results as ``_kernels_py``.

Samples are processed one at a time with plain C loops; at the sizes this
network runs at (H ~ 5, I = 6) that beats NumPy's per-call overhead by a
wide margin.  Gradients are accumulated in sample order, so results are
deterministic.
"""

import numpy as np

from libc.math cimport exp, log, tanh
from libc.stdint cimport int64_t


cdef inline double _sigm(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


cdef void _run(const double[:, ::1] W, const double[:, ::1] U, const double[::1] b,
               const double[:, :, ::1] X, Py_ssize_t n,
               double[:, ::1] hs, double[:, ::1] cs, double[:, ::1] gates,
               double[:, ::1] tcs) noexcept nogil:
    # hs, cs: (K+1, H) with row 0 = zeros; gates: (K, 4H); tcs: (K, H)
    cdef Py_ssize_t K = X.shape[1], I = X.shape[2], H = U.shape[1], G = 4 * U.shape[1]
    cdef Py_ssize_t t, r, k
    cdef double s
    for k in range(H):
        hs[0, k] = 0.0
        cs[0, k] = 0.0
    for t in range(K):
        for r in range(G):
            s = b[r]
            for k in range(I):
                s = s + W[r, k] * X[n, t, k]
            for k in range(H):
                s = s + U[r, k] * hs[t, k]
            gates[t, r] = s
        for k in range(H):
            gates[t, k] = _sigm(gates[t, k])
            gates[t, H + k] = _sigm(gates[t, H + k])
            gates[t, 2 * H + k] = tanh(gates[t, 2 * H + k])
            gates[t, 3 * H + k] = _sigm(gates[t, 3 * H + k])
            cs[t + 1, k] = gates[t, H + k] * cs[t, k] + gates[t, k] * gates[t, 2 * H + k]
            tcs[t, k] = tanh(cs[t + 1, k])
            hs[t + 1, k] = gates[t, 3 * H + k] * tcs[t, k]


cdef void _head(const double[:, ::1] V, const double[::1] c, const double[::1] h,
                double[::1] out) noexcept nogil:
    cdef Py_ssize_t C = V.shape[0], H = V.shape[1], j, k
    cdef double s, m, tot
    for j in range(C):
        s = c[j]
        for k in range(H):
            s = s + V[j, k] * h[k]
        out[j] = s
    m = out[0]
    for j in range(1, C):
        if out[j] > m:
            m = out[j]
    tot = 0.0
    for j in range(C):
        out[j] = out[j] - m
        tot = tot + exp(out[j])
    tot = log(tot)
    for j in range(C):
        out[j] = out[j] - tot


def hidden_states(const double[:, ::1] W, const double[:, ::1] U, const double[::1] b,
                  const double[:, ::1] V, const double[::1] c, const double[:, :, ::1] X):
    cdef Py_ssize_t B = X.shape[0], K = X.shape[1], H = U.shape[1], n, t, k
    out = np.empty((B, K, H))
    cdef double[:, :, ::1] o = out
    hs = np.empty((K + 1, H)); cs = np.empty((K + 1, H))
    gates = np.empty((K, 4 * H)); tcs = np.empty((K, H))
    cdef double[:, ::1] hv = hs, cv = cs, gv = gates, tv = tcs
    with nogil:
        for n in range(B):
            _run(W, U, b, X, n, hv, cv, gv, tv)
            for t in range(K):
                for k in range(H):
                    o[n, t, k] = hv[t + 1, k]
    return out


def forward(const double[:, ::1] W, const double[:, ::1] U, const double[::1] b,
            const double[:, ::1] V, const double[::1] c, const double[:, :, ::1] X):
    cdef Py_ssize_t B = X.shape[0], K = X.shape[1], H = U.shape[1], C = V.shape[0], n
    out = np.empty((B, C))
    cdef double[:, ::1] o = out
    hs = np.empty((K + 1, H)); cs = np.empty((K + 1, H))
    gates = np.empty((K, 4 * H)); tcs = np.empty((K, H))
    cdef double[:, ::1] hv = hs, cv = cs, gv = gates, tv = tcs
    with nogil:
        for n in range(B):
            _run(W, U, b, X, n, hv, cv, gv, tv)
            _head(V, c, hv[K], o[n])
    return out


def loss_and_grad(const double[:, ::1] W, const double[:, ::1] U, const double[::1] b,
                  const double[:, ::1] V, const double[::1] c, const double[:, :, ::1] X,
                  const int64_t[::1] y):
    cdef Py_ssize_t B = X.shape[0], K = X.shape[1], I = X.shape[2]
    cdef Py_ssize_t H = U.shape[1], G = 4 * U.shape[1], C = V.shape[0]
    cdef Py_ssize_t n, t, r, k, j
    cdef double loss = 0.0, p, dct, ig, fg, gg, og, invB = 1.0 / B

    gW = np.zeros((G, I)); gU = np.zeros((G, H)); gb = np.zeros(G)
    gV = np.zeros((C, H)); gc = np.zeros(C)
    cdef double[:, ::1] dW = gW, dU = gU, dV = gV
    cdef double[::1] db = gb, dc = gc

    hs = np.empty((K + 1, H)); cs = np.empty((K + 1, H))
    gates = np.empty((K, G)); tcs = np.empty((K, H))
    lp = np.empty(C); dz = np.empty(C)
    dh = np.empty(H); dh_prev = np.empty(H); dcell = np.empty(H); da = np.empty(G)
    cdef double[:, ::1] hv = hs, cv = cs, gv = gates, tv = tcs
    cdef double[::1] lpv = lp, dzv = dz, dhv = dh, dhp = dh_prev, dcv = dcell, dav = da

    with nogil:
        for n in range(B):
            _run(W, U, b, X, n, hv, cv, gv, tv)
            _head(V, c, hv[K], lpv)
            loss = loss - lpv[y[n]]
            for j in range(C):
                dzv[j] = exp(lpv[j]) * invB
            dzv[y[n]] = dzv[y[n]] - invB
            for j in range(C):
                dc[j] = dc[j] + dzv[j]
                for k in range(H):
                    dV[j, k] = dV[j, k] + dzv[j] * hv[K, k]
            for k in range(H):
                p = 0.0
                for j in range(C):
                    p = p + dzv[j] * V[j, k]
                dhv[k] = p
                dcv[k] = 0.0
            for t in range(K - 1, -1, -1):
                for k in range(H):
                    ig = gv[t, k]; fg = gv[t, H + k]; gg = gv[t, 2 * H + k]; og = gv[t, 3 * H + k]
                    dct = dcv[k] + dhv[k] * og * (1.0 - tv[t, k] * tv[t, k])
                    dav[k] = dct * gg * ig * (1.0 - ig)
                    dav[H + k] = dct * cv[t, k] * fg * (1.0 - fg)
                    dav[2 * H + k] = dct * ig * (1.0 - gg * gg)
                    dav[3 * H + k] = dhv[k] * tv[t, k] * og * (1.0 - og)
                    dcv[k] = dct * fg
                for r in range(G):
                    db[r] = db[r] + dav[r]
                    for k in range(I):
                        dW[r, k] = dW[r, k] + dav[r] * X[n, t, k]
                    for k in range(H):
                        dU[r, k] = dU[r, k] + dav[r] * hv[t, k]
                for k in range(H):
                    p = 0.0
                    for r in range(G):
                        p = p + dav[r] * U[r, k]
                    dhp[k] = p
                for k in range(H):
                    dhv[k] = dhp[k]
    return loss * invB, gW, gU, gb, gV, gc
