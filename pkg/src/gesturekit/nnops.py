"""Minimal NumPy layer kernels with matching backward passes.

Everything is float64 and batch-first. Caches returned by the forward
functions are opaque tuples consumed by the corresponding backward.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dout, x):
    return dout * (x > 0.0)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # x: (n, d_in), w: (d_out, d_in), b: (d_out,)
    return x @ w.T + b


def dense_backward(dout, x, w):
    dw = dout.T @ x
    db = dout.sum(axis=0)
    dx = dout @ w
    return dx, dw, db


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_rows(probs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Summed cross-entropy over rows plus the gradient w.r.t. the logits."""
    n = probs.shape[0]
    picked = np.clip(probs[np.arange(n), targets], 1e-12, None)
    loss = float(-np.log(picked).sum())
    dlogits = probs.copy()
    dlogits[np.arange(n), targets] -= 1.0
    return loss, dlogits


def _im2col3(x: np.ndarray) -> np.ndarray:
    # x: (n, c, h, w) zero-padded by 1 -> (n, c*9, h*w), stride 1.
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    cols = np.empty((n, c * 9, h * w), dtype=x.dtype)
    k = 0
    for dy in range(3):
        for dx in range(3):
            patch = xp[:, :, dy : dy + h, dx : dx + w]
            cols[:, k::9, :] = patch.reshape(n, c, h * w)
            k += 1
    return cols


def conv3x3(x: np.ndarray, w: np.ndarray):
    """3x3 convolution, stride 1, zero pad 1, no bias. x: (n,c,h,w), w: (f,c,3,3)."""
    n, c, h, wd = x.shape
    f = w.shape[0]
    cols = _im2col3(x)
    wmat = w.reshape(f, c * 9)
    out = np.matmul(wmat, cols).reshape(n, f, h, wd)
    return out, (cols, w, x.shape)


def conv3x3_backward(dout: np.ndarray, cache):
    cols, w, xshape = cache
    n, c, h, wd = xshape
    f = w.shape[0]
    dmat = dout.reshape(n, f, h * wd)
    dw = np.matmul(dmat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    dcols = np.matmul(w.reshape(f, c * 9).T, dmat)
    # col2im: scatter the nine shifted views back into the padded frame.
    dxp = np.zeros((n, c, h + 2, wd + 2))
    k = 0
    for dy in range(3):
        for dx in range(3):
            dxp[:, :, dy : dy + h, dx : dx + wd] += dcols[:, k::9, :].reshape(n, c, h, wd)
            k += 1
    return dxp[:, :, 1:-1, 1:-1], dw


def batchnorm_train(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    """Per-channel batch normalization over (n, h, w). x: (n, c, h, w)."""
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, (xhat, inv, gamma), mean, var


def batchnorm_train_backward(dout: np.ndarray, cache):
    xhat, inv, gamma = cache
    m = dout.shape[0] * dout.shape[2] * dout.shape[3]
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    # Standard reduction of the batch-stat dependency to two channel sums.
    sum_dxhat = dxhat.sum(axis=(0, 2, 3))
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3))
    dx = (inv[None, :, None, None] / m) * (
        m * dxhat
        - sum_dxhat[None, :, None, None]
        - xhat * sum_dxhat_xhat[None, :, None, None]
    )
    return dx, dgamma, dbeta


def batchnorm_infer(x: np.ndarray, gamma, beta, mean, var) -> np.ndarray:
    inv = 1.0 / np.sqrt(var + BN_EPS)
    return gamma[None, :, None, None] * (x - mean[None, :, None, None]) * inv[
        None, :, None, None
    ] + beta[None, :, None, None]


def maxpool2(x: np.ndarray):
    """2x2 max pooling, stride 2; odd trailing rows/cols are dropped."""
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    win = x[:, :, : 2 * ho, : 2 * wo].reshape(n, c, ho, 2, wo, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    idx = win.argmax(axis=-1)  # first max wins on ties
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2_backward(dout: np.ndarray, cache):
    idx, xshape = cache
    n, c, h, w = xshape
    ho, wo = h // 2, w // 2
    dwin = np.zeros((n, c, ho, wo, 4))
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dx = np.zeros(xshape)
    dx[:, :, : 2 * ho, : 2 * wo] = (
        dwin.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
    )
    return dx


def lstm_step(x: np.ndarray, h: np.ndarray, c: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray):
    """One LSTM step. Gate order in the packed weights is (i, f, g, o).

    x: (e,), h/c: (d,), wx: (4d, e), wh: (4d, d), b: (4d,).
    """
    d = h.shape[0]
    z = wx @ x + wh @ h + b
    i = sigmoid(z[:d])
    f = sigmoid(z[d : 2 * d])
    g = np.tanh(z[2 * d : 3 * d])
    o = sigmoid(z[3 * d :])
    c_new = f * c + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    return h_new, c_new, (x, h, c, i, f, g, o, c_new, tanh_c, wx, wh)


def lstm_step_backward(dh: np.ndarray, dc: np.ndarray, cache):
    """Gradients for one step; returns (dx, dh_prev, dc_prev, dwx, dwh, db)."""
    x, h, c, i, f, g, o, c_new, tanh_c, wx, wh = cache
    do = dh * tanh_c
    dc_total = dc + dh * o * (1.0 - tanh_c**2)
    di = dc_total * g
    df = dc_total * c
    dg = dc_total * i
    dc_prev = dc_total * f
    dz = np.concatenate(
        [
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g**2),
            do * o * (1.0 - o),
        ]
    )
    dwx = np.outer(dz, x)
    dwh = np.outer(dz, h)
    dx = wx.T @ dz
    dh_prev = wh.T @ dz
    return dx, dh_prev, dc_prev, dwx, dwh, dz
