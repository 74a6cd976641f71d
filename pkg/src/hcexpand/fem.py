"""P1 finite-element assembly and sparse solves on tagged meshes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SolverError
from .kernels import mass_local, stiffness_local, triangle_metrics

DEFAULT_TOL = 1e-10


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def element_mask(mesh, tag_filter=None):
    """Boolean mask of elements whose tag is in ``tag_filter`` (all when None)."""
    if tag_filter is None:
        return np.ones(mesh.num_triangles, dtype=bool)
    tags = np.atleast_1d(np.asarray(list(tag_filter) if not np.isscalar(tag_filter) else [tag_filter]))
    valid = set(range(mesh.num_inclusions + 1))
    unknown = [int(t) for t in tags if int(t) not in valid]
    if unknown:
        raise ValueError(f"unknown tag(s) {unknown}; mesh has tags 0..{mesh.num_inclusions}")
    return np.isin(mesh.tags, tags)


def _coeff_per_element(mesh, coeff):
    """Accept a scalar, a mapping tag -> value, or a sequence indexed by tag."""
    if coeff is None:
        return np.ones(mesh.num_triangles)
    if np.isscalar(coeff):
        return np.full(mesh.num_triangles, float(coeff))
    if isinstance(coeff, dict):
        table = np.ones(mesh.num_inclusions + 1)
        for t, v in coeff.items():
            table[int(t)] = float(v)
        return table[mesh.tags]
    table = np.asarray(coeff, dtype=float)
    if table.shape == (mesh.num_triangles,):
        return table
    return table[mesh.tags]


def scatter(local, dofs, n):
    """Sum element matrices ``local`` (T, k, k) with dof map ``dofs`` (T, k) into a CSR matrix."""
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_stiffness(mesh, coeff=None, tag_filter=None):
    """``sum_K coeff(tag_K) int_K grad(phi_i) . grad(phi_j)`` over elements in ``tag_filter``."""
    mask = element_mask(mesh, tag_filter)
    w = _coeff_per_element(mesh, coeff)[mask]
    if np.any(w <= 0):
        raise ValueError("stiffness coefficients must be positive")
    tris = mesh.triangles[mask]
    return scatter(stiffness_local(mesh.nodes, tris, w), tris, mesh.num_nodes)


def assemble_mass(mesh, tag_filter=None):
    mask = element_mask(mesh, tag_filter)
    tris = mesh.triangles[mask]
    return scatter(mass_local(mesh.nodes, tris), tris, mesh.num_nodes)


def _evaluate(f, pts):
    if f is None:
        return np.zeros(len(pts))
    if np.isscalar(f):
        return np.full(len(pts), float(f))
    val = np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)
    return np.broadcast_to(val, (len(pts),)).copy() if val.ndim == 0 else val


def assemble_load(mesh, f, tag_filter=None):
    """Load vector ``int f phi_i`` with the edge-midpoint rule (exact for quadratics)."""
    mask = element_mask(mesh, tag_filter)
    tris = mesh.triangles[mask]
    p = mesh.nodes[tris]
    area = triangle_metrics(mesh.nodes, tris)[:, 0]
    m01 = 0.5 * (p[:, 0] + p[:, 1])
    m12 = 0.5 * (p[:, 1] + p[:, 2])
    m20 = 0.5 * (p[:, 2] + p[:, 0])
    f01, f12, f20 = (_evaluate(f, m) for m in (m01, m12, m20))
    # phi_a = 1/2 at the two midpoints on edges through a, 0 at the third
    local = (area / 3.0)[:, None] * 0.5 * np.stack([f01 + f20, f01 + f12, f12 + f20], axis=1)
    return np.bincount(tris.ravel(), weights=local.ravel(), minlength=mesh.num_nodes)


def assemble_vector_load(mesh, f, tag_filter=None):
    """Interleaved load ``(int f_x phi_i, int f_y phi_i)`` for a vector source ``f(x, y) -> (fx, fy)``."""
    out = np.zeros(2 * mesh.num_nodes)
    if f is None:
        return out
    if callable(f):
        fx = lambda x, y: np.asarray(f(x, y)[0], dtype=float) * np.ones_like(x)  # noqa: E731
        fy = lambda x, y: np.asarray(f(x, y)[1], dtype=float) * np.ones_like(x)  # noqa: E731
    else:
        fx, fy = float(f[0]), float(f[1])
    out[0::2] = assemble_load(mesh, fx, tag_filter)
    out[1::2] = assemble_load(mesh, fy, tag_filter)
    return out


def lumped_mass(mesh, tag_filter=None):
    """Row sums of the consistent mass matrix."""
    return np.asarray(assemble_mass(mesh, tag_filter).sum(axis=1)).ravel()


def interpolate(mesh, g):
    """Nodal interpolant of a scalar function (or constant)."""
    return _evaluate(g, mesh.nodes)


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def _factorize(A):
    A = sp.csc_matrix(A)
    try:
        return splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc


def backward_error(A, x, b):
    """Normwise relative backward error ``|b - A x| / (|A| |x| + |b|)`` in the infinity norm."""
    r = b - A @ x
    anorm = abs(A).sum(axis=1).max() if A.shape[0] else 0.0
    denom = anorm * np.abs(x).max(initial=0.0) + np.abs(b).max(initial=0.0)
    if denom == 0:
        return 0.0
    return float(np.abs(r).max() / denom)


def _solve_checked(lu, A, b, tol, what):
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError(f"{what}: non-finite solution (singular system?)")
    err = backward_error(A, x, b)
    if err > tol:
        # one step of iterative refinement before giving up
        x = x + lu.solve(b - A @ x)
        err = backward_error(A, x, b)
        if err > tol:
            raise SolverError(f"{what}: relative residual {err:.3e} exceeds tol {tol:.1e}")
    return x


class DirichletSolver:
    """Factor ``K[free, free]`` once, then solve for any load and boundary data.

    Parameters
    ----------
    K : sparse matrix
    fixed : int array
        Dofs with prescribed values. Every other dof is free.
    """

    def __init__(self, K, fixed, free=None, tol=DEFAULT_TOL):
        K = sp.csr_matrix(K)
        n = K.shape[0]
        self.n = n
        self.tol = tol
        self.fixed = np.unique(np.asarray(fixed, dtype=np.int64))
        if free is None:
            mask = np.ones(n, dtype=bool)
            mask[self.fixed] = False
            free = np.flatnonzero(mask)
        self.free = np.asarray(free, dtype=np.int64)
        self.K = K
        self.K_ff = K[self.free][:, self.free].tocsc()
        self.K_fb = K[self.free][:, self.fixed].tocsc()
        self._lu = _factorize(self.K_ff) if len(self.free) else None

    def solve(self, load=None, fixed_values=None):
        """Full-length solution with ``u[fixed] = fixed_values`` and ``(K u)[free] = load[free]``."""
        u = np.zeros(self.n)
        if fixed_values is not None:
            fv = np.asarray(fixed_values, dtype=float)
            u[self.fixed] = fv if fv.shape == self.fixed.shape else fv[self.fixed]
        if self._lu is None:
            return u
        rhs = np.zeros(len(self.free)) if load is None else np.asarray(load, dtype=float)[self.free].copy()
        if self.fixed.size:
            rhs -= self.K_fb @ u[self.fixed]
        u[self.free] = _solve_checked(self._lu, self.K_ff, rhs, self.tol, "Dirichlet solve")
        return u

    def solve_many(self, fixed_values):
        """Harmonic extensions of several boundary data columns at once (zero load)."""
        fv = np.asarray(fixed_values, dtype=float)
        U = np.zeros((self.n, fv.shape[1]))
        U[self.fixed] = fv
        if self._lu is None:
            return U
        rhs = -(self.K_fb @ fv)
        X = self._lu.solve(np.asfortranarray(rhs))
        for k in range(X.shape[1]):
            err = backward_error(self.K_ff, X[:, k], rhs[:, k])
            if err > self.tol:
                X[:, k] = _solve_checked(self._lu, self.K_ff, rhs[:, k], self.tol, "Dirichlet solve")
        U[self.free] = X
        return U


def solve_dirichlet(K, load, boundary_nodes, boundary_values, tol=DEFAULT_TOL):
    """Eliminate ``boundary_nodes`` and solve ``K_ff u_f = load_f - K_fb g_b``.

    ``boundary_values`` is either one value per boundary node or a full-length vector.
    """
    boundary_nodes = np.asarray(boundary_nodes, dtype=np.int64)
    if boundary_nodes.size == 0:
        raise SolverError("Dirichlet solve needs at least one boundary node")
    order = np.argsort(boundary_nodes, kind="stable")
    bv = np.asarray(boundary_values, dtype=float)
    if bv.shape == boundary_nodes.shape:
        full = np.zeros(K.shape[0])
        full[boundary_nodes[order]] = bv[order]
        bv = full
    return DirichletSolver(K, boundary_nodes, tol=tol).solve(load, bv)


class NeumannSolver:
    """Saddle-point solver for ``[[K, C], [C^T, 0]] [u; lam] = [rhs; 0]``.

    ``K`` is a (local) singular stiffness whose kernel is spanned by the range of
    the constraint columns ``C`` projected appropriately.
    """

    def __init__(self, K_sub, constraints, tol=DEFAULT_TOL):
        K_sub = sp.csr_matrix(K_sub)
        C = np.atleast_2d(np.asarray(constraints, dtype=float))
        if C.shape[0] != K_sub.shape[0]:
            C = C.T
        self.C = C
        self.n, self.k = C.shape
        self.tol = tol
        self.K = K_sub
        self.S = sp.bmat([[K_sub, sp.csr_matrix(C)], [sp.csr_matrix(C.T), None]], format="csc")
        self._lu = _factorize(self.S)

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        full = np.concatenate([rhs, np.zeros(self.k)])
        x = _solve_checked(self._lu, self.S, full, self.tol, "constrained Neumann solve")
        u, lam = x[: self.n], x[self.n:]
        scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
        if np.linalg.norm(self.C @ lam) > 1e-8 * scale:
            warnings.warn(
                f"Neumann data incompatible with the kernel: |C lam| / |rhs| = "
                f"{np.linalg.norm(self.C @ lam) / scale:.2e}",
                RuntimeWarning,
                stacklevel=2,
            )
        return u, lam


def solve_constrained_neumann(K_sub, rhs, constraints, tol=DEFAULT_TOL):
    """Solve ``K u + C lam = rhs``, ``C^T u = 0``; return ``(u, lam)``."""
    return NeumannSolver(K_sub, constraints, tol).solve(rhs)


# ---------------------------------------------------------------------------
# fluxes and norms
# ---------------------------------------------------------------------------

def discrete_flux(K_background, field, mesh, interface_tag):
    """Residual ``K_background @ field`` kept on the interface nodes of ``interface_tag``, zero elsewhere."""
    r = K_background @ np.asarray(field, dtype=float)
    out = np.zeros_like(r)
    idx = mesh.interface_nodes(interface_tag) if interface_tag else mesh.outer_nodes
    if r.shape[0] == 2 * mesh.num_nodes:
        idx = np.column_stack([2 * idx, 2 * idx + 1]).ravel()
    out[idx] = r[idx]
    return out


@dataclass(frozen=True)
class FieldNorms:
    l2: float
    h1_semi: float
    h1: float
    energy: float


def field_norms(field, mass, stiffness, energy_matrix=None):
    """L2, H1-seminorm, H1 and energy norms of a nodal field from assembled matrices."""
    u = np.asarray(field, dtype=float)
    for name, mat in (("mass", mass), ("stiffness", stiffness), ("energy", energy_matrix)):
        if mat is not None and mat.shape != (u.size, u.size):
            raise ValueError(f"{name} matrix has shape {mat.shape}, field has {u.size} entries")
    l2 = float(u @ (mass @ u))
    semi = float(u @ (stiffness @ u))
    en = semi if energy_matrix is None else float(u @ (energy_matrix @ u))
    clip = lambda v: np.sqrt(max(v, 0.0))  # noqa: E731
    return FieldNorms(clip(l2), clip(semi), clip(l2 + semi), clip(en))


# 7-point degree-5 rule on the reference triangle (barycentric coordinates, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_W0, _W1, _W2 = 0.225, 0.132394152788506, 0.125939180544827
QUAD7_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
        [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
    ]
)
QUAD7_W = np.array([_W0, _W1, _W1, _W1, _W2, _W2, _W2])


def p1_gradients(mesh):
    """Per-element gradients of the three hat functions, shape (T, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / det[:, None]
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / det[:, None]
    return np.stack([gx, gy], axis=-1)


def quadrature_errors(mesh, u, exact, exact_grad):
    """L2 and H1-seminorm errors of a P1 field against an analytic solution.

    Parameters
    ----------
    u : (N,) nodal values
    exact : callable (x, y) -> values
    exact_grad : callable (x, y) -> (dx, dy)
    """
    tris = mesh.triangles
    p = mesh.nodes[tris]
    area = triangle_metrics(mesh.nodes, tris)[:, 0]
    qp = np.einsum("qk,tkd->tqd", QUAD7_BARY, p)
    uq = np.einsum("qk,tk->tq", QUAD7_BARY, u[tris])
    ex = np.asarray(exact(qp[..., 0], qp[..., 1]), dtype=float)
    gx, gy = exact_grad(qp[..., 0], qp[..., 1])
    grad = np.einsum("tk,tkd->td", u[tris], p1_gradients(mesh))
    l2 = np.sum(area[:, None] * QUAD7_W[None] * (uq - ex) ** 2)
    h1 = np.sum(area[:, None] * QUAD7_W[None] * ((grad[:, 0:1] - gx) ** 2 + (grad[:, 1:2] - gy) ** 2))
    return float(np.sqrt(l2)), float(np.sqrt(h1))
