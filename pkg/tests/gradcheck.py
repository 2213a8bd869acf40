"""Central finite-difference gradient checking helpers."""

from __future__ import annotations

import numpy as np


def fd_gradient(f, x: np.ndarray, h: float = 1e-3, indices=None) -> np.ndarray:
    """Central differences of scalar-valued f at x.

    With ``indices`` (list of flat indices) only those entries are probed
    and the rest of the returned array stays zero.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    probe = range(flat.size) if indices is None else indices
    for i in probe:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Worst elementwise relative error, ignoring entries tiny on both sides."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def random_probe(rng: np.random.Generator, size: int, k: int = 12) -> list[int]:
    """Up to k distinct flat indices to probe in a big tensor."""
    if size <= k:
        return list(range(size))
    return sorted(rng.choice(size, size=k, replace=False).tolist())
