"""Pure-numpy implementations of the hot kernels.

Same signatures as the compiled ``_ckernels`` extension; selected by
:mod:`moegan.kernels` when the extension is unavailable.
"""
import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def gru_forward(gx, gh, h):
    """Gate math of one GRU step.

    ``gx``/``gh`` are the (B, 3D) input and hidden projections laid out as
    [reset | update | candidate]. Returns ``(h_new, r, z, n)``.
    """
    d = h.shape[-1]
    r = _sigmoid(gx[:, :d] + gh[:, :d])
    z = _sigmoid(gx[:, d:2 * d] + gh[:, d:2 * d])
    n = np.tanh(gx[:, 2 * d:] + r * gh[:, 2 * d:])
    h_new = (1.0 - z) * n + z * h
    return h_new, r, z, n


def gru_backward(dh_new, gh, h, r, z, n):
    """Returns ``(d_gx, d_gh, dh)`` where ``dh`` is the direct path only."""
    d = h.shape[-1]
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dh = dh_new * z
    da_n = dn * (1.0 - n * n)
    da_z = dz * z * (1.0 - z)
    da_r = da_n * gh[:, 2 * d:] * r * (1.0 - r)
    d_gx = np.concatenate([da_r, da_z, da_n], axis=1)
    d_gh = np.concatenate([da_r, da_z, da_n * r], axis=1)
    return d_gx, d_gh, dh


def max_over_time(y):
    """Max over axis 1 of a (B, L, C) array; ties resolve to the lowest index."""
    idx = np.argmax(y, axis=1)
    vals = np.take_along_axis(y, idx[:, None, :], axis=1)[:, 0, :]
    return vals, idx.astype(np.int64)


def conv_max_backward(x, w, idx, g):
    """Backward of valid conv followed by max-over-time.

    x: (B, T, E), w: (K, E, C), idx: (B, C) argmax positions, g: (B, C).
    Returns ``(dx, dw)``. Dense route: scatter ``g`` into a (B, L, C) map and
    run the two full products.
    """
    b, t, e = x.shape
    k, _, c = w.shape
    length = t - k + 1
    dense = np.zeros((b, length, c), dtype=g.dtype)
    np.put_along_axis(dense, idx[:, None, :], g[:, None, :], axis=1)
    cols = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)  # (B, L, E, K)
    cols = cols.transpose(0, 1, 3, 2).reshape(b * length, k * e)
    flat = dense.reshape(b * length, c)
    dw = (cols.T @ flat).reshape(k, e, c)
    dcols = (flat @ w.reshape(k * e, c).T).reshape(b, length, k, e)
    dx = np.zeros_like(x, dtype=dcols.dtype)
    for j in range(k):
        dx[:, j:j + length, :] += dcols[:, :, j, :]
    return dx, dw


def adam_update(p, g, m, v, lr, beta1, beta2, eps, c1, c2):
    """In-place bias-corrected Adam on flat arrays; moments kept in ``p``'s dtype."""
    g64 = g.astype(np.float64)
    m64 = beta1 * m + (1.0 - beta1) * g64
    v64 = beta2 * v + (1.0 - beta2) * g64 * g64
    m[...] = m64
    v[...] = v64
    p[...] = p - lr * (m64 / c1) / (np.sqrt(v64 / c2) + eps)


def sum_squares(a):
    a = a.astype(np.float64)
    return float(np.dot(a, a))
