"""Shared test oracles: finite differences and relative-error comparison."""

from __future__ import annotations

import numpy as np


def numeric_grad(loss_fn, param, step=1e-5):
    """Central finite differences of a scalar-returning loss_fn w.r.t. one
    parameter, perturbing entries in place."""
    g = np.zeros_like(param.value)
    it = np.nditer(param.value, flags=["multi_index"])
    for _ in it:
        ij = it.multi_index
        orig = param.value[ij]
        param.value[ij] = orig + step
        f_plus = loss_fn()
        param.value[ij] = orig - step
        f_minus = loss_fn()
        param.value[ij] = orig
        g[ij] = (f_plus - f_minus) / (2.0 * step)
    return g


def max_rel_err(analytic, numeric, floor=1e-5):
    """max |a - n| / max(|a| + |n|, floor) over all entries."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.abs(a) + np.abs(n), floor)
    return float(np.max(np.abs(a - n) / denom))


def triple_loop_matmul(a, b):
    """Scalar-only matrix product oracle."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out
