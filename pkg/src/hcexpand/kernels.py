"""Element-level kernels for P1 triangles.

Every kernel has a numba implementation (``_*_nb``) and a vectorised numpy
implementation (``_*_np``). The public names dispatch on ``_accel.USE_NUMBA``.
The numba loops write each element into its own output slot, so results do not
depend on the thread count.
"""

import numpy as np

from . import _accel
from ._accel import njit, prange


# -- scalar P1 stiffness ----------------------------------------------------

@njit(parallel=True)
def _stiffness_local_nb(nodes, tris, weight):
    nt = tris.shape[0]
    out = np.empty((nt, 3, 3))
    for e in prange(nt):
        i, j, k = tris[e, 0], tris[e, 1], tris[e, 2]
        x1, y1 = nodes[i, 0], nodes[i, 1]
        x2, y2 = nodes[j, 0], nodes[j, 1]
        x3, y3 = nodes[k, 0], nodes[k, 1]
        det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
        area = 0.5 * det
        # barycentric gradients times det
        bx0 = y2 - y3
        bx1 = y3 - y1
        bx2 = y1 - y2
        by0 = x3 - x2
        by1 = x1 - x3
        by2 = x2 - x1
        s = weight[e] * area / (det * det)
        out[e, 0, 0] = s * (bx0 * bx0 + by0 * by0)
        out[e, 0, 1] = s * (bx0 * bx1 + by0 * by1)
        out[e, 0, 2] = s * (bx0 * bx2 + by0 * by2)
        out[e, 1, 1] = s * (bx1 * bx1 + by1 * by1)
        out[e, 1, 2] = s * (bx1 * bx2 + by1 * by2)
        out[e, 2, 2] = s * (bx2 * bx2 + by2 * by2)
        out[e, 1, 0] = out[e, 0, 1]
        out[e, 2, 0] = out[e, 0, 2]
        out[e, 2, 1] = out[e, 1, 2]
    return out


def _stiffness_local_np(nodes, tris, weight):
    p = nodes[tris]
    x1, y1 = p[:, 0, 0], p[:, 0, 1]
    x2, y2 = p[:, 1, 0], p[:, 1, 1]
    x3, y3 = p[:, 2, 0], p[:, 2, 1]
    det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    area = 0.5 * det
    bx = np.stack([y2 - y3, y3 - y1, y1 - y2], axis=1)
    by = np.stack([x3 - x2, x1 - x3, x2 - x1], axis=1)
    s = weight * area / (det * det)
    return s[:, None, None] * (bx[:, :, None] * bx[:, None, :] + by[:, :, None] * by[:, None, :])


def stiffness_local(nodes, tris, weight):
    """Local P1 stiffness matrices ``weight_K * int_K grad(phi_i) . grad(phi_j)``, shape (T, 3, 3)."""
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _stiffness_local_nb(nodes, tris, weight)
    return _stiffness_local_np(nodes, tris, weight)


# -- scalar P1 mass ----------------------------------------------------------

@njit(parallel=True)
def _mass_local_nb(nodes, tris):
    nt = tris.shape[0]
    out = np.empty((nt, 3, 3))
    for e in prange(nt):
        i, j, k = tris[e, 0], tris[e, 1], tris[e, 2]
        det = (nodes[j, 0] - nodes[i, 0]) * (nodes[k, 1] - nodes[i, 1]) - (
            nodes[k, 0] - nodes[i, 0]
        ) * (nodes[j, 1] - nodes[i, 1])
        a12 = 0.5 * det / 12.0
        for r in range(3):
            for c in range(3):
                out[e, r, c] = a12
            out[e, r, r] = 2.0 * a12
    return out


def _mass_local_np(nodes, tris):
    p = nodes[tris]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 2, 0] - p[:, 0, 0]) * (
        p[:, 1, 1] - p[:, 0, 1]
    )
    a12 = 0.5 * det / 12.0
    return a12[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None, :, :]


def mass_local(nodes, tris):
    """Exact local P1 mass matrices ``|K|/12 * (1 + delta_ij)``, shape (T, 3, 3)."""
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    if _accel.USE_NUMBA:
        return _mass_local_nb(nodes, tris)
    return _mass_local_np(nodes, tris)


# -- plane elasticity -----------------------------------------------------------

@njit(parallel=True)
def _elastic_local_nb(nodes, tris, young, lam, mu):
    nt = tris.shape[0]
    out = np.empty((nt, 6, 6))
    for e in prange(nt):
        i, j, k = tris[e, 0], tris[e, 1], tris[e, 2]
        x1, y1 = nodes[i, 0], nodes[i, 1]
        x2, y2 = nodes[j, 0], nodes[j, 1]
        x3, y3 = nodes[k, 0], nodes[k, 1]
        det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
        area = 0.5 * det
        bx = np.empty(3)
        by = np.empty(3)
        bx[0] = (y2 - y3) / det
        bx[1] = (y3 - y1) / det
        bx[2] = (y1 - y2) / det
        by[0] = (x3 - x2) / det
        by[1] = (x1 - x3) / det
        by[2] = (x2 - x1) / det
        B = np.zeros((3, 6))
        for a in range(3):
            B[0, 2 * a] = bx[a]
            B[1, 2 * a + 1] = by[a]
            B[2, 2 * a] = by[a]
            B[2, 2 * a + 1] = bx[a]
        lt = lam[e]
        mt = mu[e]
        D = np.zeros((3, 3))
        D[0, 0] = 2.0 * mt + lt
        D[1, 1] = 2.0 * mt + lt
        D[0, 1] = lt
        D[1, 0] = lt
        D[2, 2] = mt
        s = young[e] * area
        for r in range(6):
            for c in range(6):
                acc = 0.0
                for p in range(3):
                    for q in range(3):
                        acc += B[p, r] * D[p, q] * B[q, c]
                out[e, r, c] = s * acc
    return out


def _elastic_local_np(nodes, tris, young, lam, mu):
    p = nodes[tris]
    x1, y1 = p[:, 0, 0], p[:, 0, 1]
    x2, y2 = p[:, 1, 0], p[:, 1, 1]
    x3, y3 = p[:, 2, 0], p[:, 2, 1]
    det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    area = 0.5 * det
    bx = np.stack([y2 - y3, y3 - y1, y1 - y2], axis=1) / det[:, None]
    by = np.stack([x3 - x2, x1 - x3, x2 - x1], axis=1) / det[:, None]
    nt = tris.shape[0]
    B = np.zeros((nt, 3, 6))
    B[:, 0, 0::2] = bx
    B[:, 1, 1::2] = by
    B[:, 2, 0::2] = by
    B[:, 2, 1::2] = bx
    D = np.zeros((nt, 3, 3))
    D[:, 0, 0] = 2.0 * mu + lam
    D[:, 1, 1] = 2.0 * mu + lam
    D[:, 0, 1] = lam
    D[:, 1, 0] = lam
    D[:, 2, 2] = mu
    return (young * area)[:, None, None] * np.einsum("epr,epq,eqc->erc", B, D, B)


def elastic_local(nodes, tris, young, lam, mu):
    """Local plane-elasticity matrices, interleaved dofs (ux0, uy0, ux1, ...), shape (T, 6, 6).

    Bilinear form ``E * (2 mu eps(u):eps(v) + lam div(u) div(v))`` with per-element
    ``young``, ``lam`` and ``mu``.
    """
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    young = np.ascontiguousarray(young, dtype=np.float64)
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _elastic_local_nb(nodes, tris, young, lam, mu)
    return _elastic_local_np(nodes, tris, young, lam, mu)


# -- geometry ------------------------------------------------------------------

@njit(parallel=True)
def _triangle_metrics_nb(nodes, tris):
    nt = tris.shape[0]
    out = np.empty((nt, 4))  # signed area, diameter, inradius, min angle
    for e in prange(nt):
        i, j, k = tris[e, 0], tris[e, 1], tris[e, 2]
        ax, ay = nodes[i, 0], nodes[i, 1]
        bx, by = nodes[j, 0], nodes[j, 1]
        cx, cy = nodes[k, 0], nodes[k, 1]
        area = 0.5 * ((bx - ax) * (cy - ay) - (cx - ax) * (by - ay))
        la = np.sqrt((bx - cx) ** 2 + (by - cy) ** 2)
        lb = np.sqrt((cx - ax) ** 2 + (cy - ay) ** 2)
        lc = np.sqrt((ax - bx) ** 2 + (ay - by) ** 2)
        out[e, 0] = area
        out[e, 1] = max(la, max(lb, lc))
        out[e, 2] = 2.0 * abs(area) / (la + lb + lc)
        # smallest angle is opposite the shortest edge
        s = min(la, min(lb, lc))
        if s == la:
            p, q = lb, lc
        elif s == lb:
            p, q = la, lc
        else:
            p, q = la, lb
        cosv = (p * p + q * q - s * s) / (2.0 * p * q)
        cosv = min(1.0, max(-1.0, cosv))
        out[e, 3] = np.arccos(cosv)
    return out


def _triangle_metrics_np(nodes, tris):
    p = nodes[tris]
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    area = 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))
    la = np.sqrt(((b - c) ** 2).sum(axis=1))
    lb = np.sqrt(((c - a) ** 2).sum(axis=1))
    lc = np.sqrt(((a - b) ** 2).sum(axis=1))
    lengths = np.stack([la, lb, lc], axis=1)
    srt = np.sort(lengths, axis=1)
    s, p_, q_ = srt[:, 0], srt[:, 1], srt[:, 2]
    cosv = np.clip((p_ * p_ + q_ * q_ - s * s) / (2.0 * p_ * q_), -1.0, 1.0)
    return np.stack(
        [area, lengths.max(axis=1), 2.0 * np.abs(area) / lengths.sum(axis=1), np.arccos(cosv)], axis=1
    )


def triangle_metrics(nodes, tris):
    """Per-element (signed area, diameter, inradius, min angle in radians), shape (T, 4)."""
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    if _accel.USE_NUMBA:
        return _triangle_metrics_nb(nodes, tris)
    return _triangle_metrics_np(nodes, tris)
