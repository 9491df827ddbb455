"""Pure-NumPy Elman forward pass and backpropagation through time.

Same signatures as the compiled ``_rnn_ext`` module; used when the extension
is unavailable or ``ALRT_PURE_PYTHON=1``.
"""
import numpy as np


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(W_xh, W_hh, b_h, W_hy, b_y, X):
    T = X.shape[0]
    H = W_hh.shape[0]
    pre = X @ W_xh.T + b_h
    hs = np.empty((T, H))
    h = np.zeros(H)
    for t in range(T):
        h = np.tanh(pre[t] + W_hh @ h)
        hs[t] = h
    probs = _sigmoid(hs @ W_hy + b_y)
    return hs, probs


def backward(W_xh, W_hh, W_hy, X, hs, probs, y, w_neg, w_pos):
    """Gradients of the mean weighted cross-entropy over the sequence."""
    T, H = hs.shape
    y = y.astype(np.float64)
    g = (w_pos * y * (probs - 1.0) + w_neg * (1.0 - y) * probs) / T
    d_W_hy = g @ hs
    d_b_y = g.sum()
    da = np.empty((T, H))
    carry = np.zeros(H)
    for t in range(T - 1, -1, -1):
        dh = g[t] * W_hy + carry
        da[t] = dh * (1.0 - hs[t] * hs[t])
        carry = W_hh.T @ da[t]
    d_W_xh = da.T @ X
    d_W_hh = da[1:].T @ hs[:-1] if T > 1 else np.zeros((H, H))
    d_b_h = da.sum(axis=0)
    return d_W_xh, d_W_hh, d_b_h, d_W_hy, d_b_y
