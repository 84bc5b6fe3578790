"""NumPy LSTM kernels; reference path and fallback when the extension is absent.

All functions take the five parameter blocks ``W (4H, I)``, ``U (4H, H)``,
``b (4H,)``, ``V (C, H)``, ``c (C,)`` and a batch ``X (B, K, I)`` that is
already normalised.  Gate rows are ordered input, forget, cell, output.
"""

import numpy as np


def _sigmoid(x):
    # exp overflow -> inf -> 0.0, the correct limit (same as the C kernel)
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _log_softmax(z):
    m = z.max(axis=1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def hidden_states(W, U, b, V, c, X):
    """Hidden state after every step, shape ``(B, K, H)``."""
    B, K, _ = X.shape
    H = U.shape[1]
    h = np.zeros((B, H))
    cell = np.zeros((B, H))
    out = np.empty((B, K, H))
    for t in range(K):
        a = X[:, t] @ W.T + h @ U.T + b
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        cell = f * cell + i * g
        h = o * np.tanh(cell)
        out[:, t] = h
    return out


def forward(W, U, b, V, c, X):
    """Log-probabilities ``(B, C)``."""
    h = hidden_states(W, U, b, V, c, X)[:, -1]
    return _log_softmax(h @ V.T + c)


def loss_and_grad(W, U, b, V, c, X, y):
    """Mean NLL over the batch and its gradient w.r.t. every block (BPTT over all K steps)."""
    B, K, _ = X.shape
    H = U.shape[1]
    hs = np.zeros((K + 1, B, H))
    cs = np.zeros((K + 1, B, H))
    gates = np.empty((K, B, 4 * H))
    tcs = np.empty((K, B, H))
    for t in range(K):
        a = X[:, t] @ W.T + hs[t] @ U.T + b
        gt = gates[t]
        gt[:, :H] = _sigmoid(a[:, :H])
        gt[:, H : 2 * H] = _sigmoid(a[:, H : 2 * H])
        gt[:, 2 * H : 3 * H] = np.tanh(a[:, 2 * H : 3 * H])
        gt[:, 3 * H :] = _sigmoid(a[:, 3 * H :])
        cs[t + 1] = gt[:, H : 2 * H] * cs[t] + gt[:, :H] * gt[:, 2 * H : 3 * H]
        tcs[t] = np.tanh(cs[t + 1])
        hs[t + 1] = gt[:, 3 * H :] * tcs[t]

    lp = _log_softmax(hs[K] @ V.T + c)
    rows = np.arange(B)
    loss = -lp[rows, y].mean()

    dz = np.exp(lp)
    dz[rows, y] -= 1.0
    dz /= B
    dV = dz.T @ hs[K]
    dc = dz.sum(axis=0)

    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros_like(b)
    dh = dz @ V
    dcell = np.zeros((B, H))
    da = np.empty((B, 4 * H))
    for t in range(K - 1, -1, -1):
        gt = gates[t]
        i, f, g, o = gt[:, :H], gt[:, H : 2 * H], gt[:, 2 * H : 3 * H], gt[:, 3 * H :]
        dcell = dcell + dh * o * (1.0 - tcs[t] ** 2)
        da[:, :H] = dcell * g * i * (1.0 - i)
        da[:, H : 2 * H] = dcell * cs[t] * f * (1.0 - f)
        da[:, 2 * H : 3 * H] = dcell * i * (1.0 - g**2)
        da[:, 3 * H :] = dh * tcs[t] * o * (1.0 - o)
        dW += da.T @ X[:, t]
        dU += da.T @ hs[t]
        db += da.sum(axis=0)
        dh = da @ U
        dcell = dcell * f
    return loss, dW, dU, db, dV, dc
