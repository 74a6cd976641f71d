"""Geometric-decay fit shared by the elasticity tests and the acceptance script."""

import numpy as np


def geometric_fit(errors, start=1, floor=1e-13):
    """Per-step ratio and ``R^2`` of a line through ``log10 e`` from ``start`` until the roundoff floor."""
    e = np.asarray(errors, dtype=float)
    stop = len(e)
    hit = np.flatnonzero(e <= max(e.min() * 100, floor))
    if hit.size:
        stop = int(hit[0])
    J = np.arange(start, max(stop, start + 3))
    y = np.log10(e[J])
    A = np.column_stack([J, np.ones_like(J, dtype=float)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    ss = ((y - y.mean()) ** 2).sum()
    r2 = 1 - (res**2).sum() / ss if ss > 0 else 1.0
    return 10 ** coef[0], r2
