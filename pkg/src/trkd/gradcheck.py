"""Central finite differences for checking hand-written gradients."""
import numpy as np

__all__ = ["numerical_gradient", "relative_error"]


def numerical_gradient(f, x, h=1e-5):
    """Central differences of scalar ``f`` at ``x`` (any shape, float64)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def relative_error(analytic, numeric, floor=1e-8, noise=0.0):
    """Largest elementwise ``|a - n| / max(|a|, |n|)`` over entries with
    ``|a| > floor``; 0.0 when no entry qualifies.

    ``noise`` is an absolute allowance subtracted from ``|a - n|`` first,
    for callers that know the rounding floor of their differences.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    keep = np.abs(a) > floor
    if not keep.any():
        return 0.0
    a, n = a[keep], n[keep]
    gap = np.maximum(np.abs(a - n) - noise, 0.0)
    return float(np.max(gap / np.maximum(np.abs(a), np.abs(n))))
