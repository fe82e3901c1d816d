"""Kernel backend selection.

The compiled extension is used when importable; otherwise the numpy
fallback. Set ``MOEGAN_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from moegan import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("MOEGAN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from moegan import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def _common(*arrays):
    dtype = np.result_type(*arrays)
    if dtype not in (np.float32, np.float64):
        dtype = np.float64
    return [np.ascontiguousarray(a, dtype=dtype) for a in arrays]


def gru_forward(gx, gh, h):
    return _impl.gru_forward(*_common(gx, gh, h))


def gru_backward(dh_new, gh, h, r, z, n):
    return _impl.gru_backward(*_common(dh_new, gh, h, r, z, n))


def max_over_time(y):
    (y,) = _common(y)
    return _impl.max_over_time(y)


def conv_max_backward(x, w, idx, g):
    x, w, g = _common(x, w, g)
    return _impl.conv_max_backward(x, w, np.ascontiguousarray(idx, dtype=np.int64), g)


def use_backend(name):
    """Switch backend at runtime ("cython" or "python"); returns the previous name."""
    global _impl, BACKEND
    previous = BACKEND
    if name == "python":
        _impl, BACKEND = _pykernels, "python"
    elif name == "cython":
        from moegan import _ckernels

        _impl, BACKEND = _ckernels, "cython"
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return previous


def adam_update(p, g, m, v, lr, beta1, beta2, eps, c1, c2):
    """In-place Adam update of flat, same-dtype, contiguous ``p``, ``m``, ``v``."""
    g = np.ascontiguousarray(g, dtype=p.dtype)
    _impl.adam_update(p, g, m, v, float(lr), float(beta1), float(beta2), float(eps), float(c1), float(c2))


def sum_squares(a):
    """Sum of squares accumulated in double precision."""
    a = np.ascontiguousarray(a).reshape(-1)
    if a.dtype not in (np.float32, np.float64):
        a = a.astype(np.float64)
    return float(_impl.sum_squares(a))
