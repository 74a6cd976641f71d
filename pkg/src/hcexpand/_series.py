"""Contrast-expansion engine shared by the scalar and the elastic problems.

The discrete high-contrast system is ``(K0 + eta K1) u = F`` where ``K0`` is the
stiffness assembled on background elements and ``K1`` the unit-coefficient
stiffness on inclusion elements. Dofs fall into three disjoint groups: the
outer boundary (Dirichlet), the closure of each inclusion, and the open
background ("free0"). On every inclusion closure ``K1`` has a known kernel
spanned by the columns of ``kernel[m]`` (constants, or rigid motions).

Writing ``u = sum eta^-j u_j`` and matching powers gives ``K1 u_0 = 0``,
``K0 u_0 + K1 u_1 = F`` and ``K0 u_j + K1 u_{j+1} = 0``. The recursion below
never sees ``eta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from scipy.sparse.linalg import splu

from .errors import ConsistencyError, SolverError
from .fem import DEFAULT_TOL, DirichletSolver, NeumannSolver, backward_error

FLUX_TOL = 1e-9


@dataclass(frozen=True)
class DofLayout:
    """Disjoint dof groups.

    Attributes
    ----------
    n : total number of dofs
    outer : Dirichlet dofs on the outer boundary
    closures : per inclusion, the dofs of its closed region
    interfaces : per inclusion, the dofs on its interface (subset of the closure)
    """

    n: int
    outer: np.ndarray
    closures: tuple
    interfaces: tuple

    @property
    def num_inclusions(self):
        return len(self.closures)

    @property
    def fixed_for_background(self):
        """Dofs held fixed in a background Dirichlet solve: outer boundary and every inclusion closure."""
        parts = [self.outer, *self.closures]
        return np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)

    @property
    def free0(self):
        mask = np.ones(self.n, dtype=bool)
        mask[self.fixed_for_background] = False
        return np.flatnonzero(mask)


@dataclass
class CoarseBasis:
    """Characteristic fields (columns of ``R``) and their background Gram matrix ``A = R^T K0 R``."""

    R: np.ndarray
    A: np.ndarray
    cho: tuple = field(repr=False)
    block_sizes: tuple = ()

    def solve(self, rhs):
        return sla.cho_solve(self.cho, rhs)


def factor_gram(A, what="coarse matrix"):
    A = 0.5 * (A + A.T)
    try:
        return sla.cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ConsistencyError(f"{what} is not positive definite") from exc


def mass_orthonormal(basis, weights):
    """Columns of ``weights[:, None] * basis @ Q`` with ``(basis Q)^T W (basis Q) = I``."""
    G = basis.T @ (weights[:, None] * basis)
    L = np.linalg.cholesky(G)
    Q = np.linalg.inv(L).T
    return (weights[:, None] * basis) @ Q


class ExpansionEngine:
    """Shared machinery for one mesh and one choice of background/inclusion stiffness.

    Parameters
    ----------
    K0, K1 : sparse matrices
        Background and (unit) inclusion stiffness.
    layout : DofLayout
    kernel : list of arrays
        ``kernel[m]`` has shape (len(closures[m]), L): values of the kernel
        fields of ``K1`` on the closure dofs.
    weights : array
        Lumped-mass weight per dof, used for the mean-zero / rigid-orthogonality constraint.
    """

    def __init__(self, K0, K1, layout, kernel, weights, tol=DEFAULT_TOL):
        self.K0 = sp.csr_matrix(K0)
        self.K1 = sp.csr_matrix(K1)
        self.layout = layout
        self.kernel = [np.asarray(k, dtype=float) for k in kernel]
        self.weights = np.asarray(weights, dtype=float)
        self.tol = tol
        self.background = DirichletSolver(self.K0, layout.fixed_for_background, free=layout.free0, tol=tol)
        self._neumann = [None] * layout.num_inclusions
        self._data_scale = 0.0  # size of the most recent first-step data
        self._basis = None

    # -- characteristic fields ---------------------------------------------

    @property
    def basis(self) -> CoarseBasis:
        if self._basis is None:
            self._basis = self._build_basis()
        return self._basis

    def _build_basis(self):
        lay = self.layout
        fixed = self.background.fixed
        cols = sum(k.shape[1] for k in self.kernel)
        data = np.zeros((lay.n, cols))
        c = 0
        sizes = []
        for m, clos in enumerate(lay.closures):
            L = self.kernel[m].shape[1]
            data[clos, c:c + L] = self.kernel[m]
            c += L
            sizes.append(L)
        R = self.background.solve_many(data[fixed]) if cols else np.zeros((lay.n, 0))
        A = R.T @ (self.K0 @ R)
        if cols:
            asym = np.abs(A - A.T).max() / max(np.abs(A).max(), np.finfo(float).tiny)
            if asym > 1e-10:
                raise ConsistencyError(f"coarse matrix asymmetric (relative {asym:.2e})")
        cho = factor_gram(A) if cols else (np.zeros((0, 0)), True)
        return CoarseBasis(R=R, A=0.5 * (A + A.T), cho=cho, block_sizes=tuple(sizes))

    def set_basis(self, R, A):
        """Install previously computed fields (e.g. from a cache) instead of rebuilding them."""
        R = np.asarray(R, dtype=float)
        cols = sum(k.shape[1] for k in self.kernel)
        if R.shape != (self.layout.n, cols) or np.shape(A) != (cols, cols):
            raise ConsistencyError("cached basis does not match this system")
        cho = factor_gram(A) if cols else (np.zeros((0, 0)), True)
        sizes = tuple(k.shape[1] for k in self.kernel)
        self._basis = CoarseBasis(R=R, A=0.5 * (A + A.T), cho=cho, block_sizes=sizes)
        return self._basis

    # -- leading term --------------------------------------------------------

    def background_lift(self, F, g_outer):
        """``u00``: ``g`` on the outer boundary, zero on every inclusion, ``K0 u = F`` in the open background."""
        full = np.zeros(self.layout.n)
        full[self.layout.outer] = g_outer
        return self.background.solve(F, full)

    def leading_term(self, F, g_outer):
        """Return ``(u0, u00, coefficients)``."""
        u00 = self.background_lift(F, g_outer)
        B = self.basis
        if B.R.shape[1] == 0:
            return u00, u00, np.zeros(0)
        b = B.R.T @ (F - self.K0 @ u00)
        coef = B.solve(b)
        return u00 + B.R @ coef, u00, coef

    # -- recursion -----------------------------------------------------------

    def neumann_solver(self, m):
        if self._neumann[m] is None:
            clos = self.layout.closures[m]
            K_mm = self.K1[clos][:, clos]
            C = mass_orthonormal(self.kernel[m], self.weights[clos])
            self._neumann[m] = NeumannSolver(K_mm, C, tol=self.tol)
        return self._neumann[m]

    def next_term(self, u_j, F=None):
        """``u_{j+1}`` from ``K1 u_{j+1} = F - K0 u_j`` on inclusions, then balancing.

        ``F`` is passed only for ``j = 0``. Returns ``(u_next, coefficients, tilde)``.
        """
        lay = self.layout
        resid = -(self.K0 @ u_j)
        # size of the summands, so that data which cancels to roundoff is judged fairly
        magnitude = abs(self.K0) @ np.abs(u_j)
        if F is not None:
            resid = resid + F
            magnitude = magnitude + np.abs(F)
            # first step: remember the data size; later terms below its roundoff are noise
            self._data_scale = float(np.linalg.norm(magnitude))
        floor = 1e3 * np.finfo(float).eps * self._data_scale
        tilde_vals = np.zeros(lay.n)
        for m, clos in enumerate(lay.closures):
            rhs = resid[clos]
            solver = self.neumann_solver(m)
            xi = self.kernel[m]
            proj = xi.T @ rhs
            compat = np.abs(proj) / np.maximum(np.linalg.norm(xi, axis=0), np.finfo(float).tiny)
            scale = max(np.linalg.norm(rhs), np.linalg.norm(magnitude[clos]), np.finfo(float).tiny)
            if compat.max(initial=0.0) > max(1e-8 * scale, floor):
                raise ConsistencyError(
                    f"inclusion {m + 1}: Neumann data not compatible "
                    f"(|<rhs, xi>| / |rhs| |xi| = {compat.max() / scale:.3e})"
                )
            # drop the roundoff-level incompatible part
            rhs = rhs - xi @ np.linalg.solve(xi.T @ xi, proj)
            u_loc, _ = solver.solve(rhs)
            tilde_vals[clos] = u_loc
        tilde = self.background.solve(None, tilde_vals)
        B = self.basis
        if B.R.shape[1]:
            Y = -(B.R.T @ (self.K0 @ tilde))
            coef = B.solve(Y)
            u_next = tilde + B.R @ coef
        else:
            coef = np.zeros(0)
            u_next = tilde
        self.check_balance(u_next, tilde)
        return u_next, coef, tilde

    def flux_residual(self, u, reference=None):
        """Normalised ``|R^T K0 u|`` per coarse column, divided by ``|chi|_K0 |u|_K0``.

        ``reference`` (the unbalanced field) guards against dividing by a field
        that is itself pure roundoff.
        """
        B = self.basis
        if B.R.shape[1] == 0:
            return np.zeros(0)
        Ku = self.K0 @ u
        unorm = np.sqrt(max(float(u @ Ku), 0.0))
        if reference is not None:
            unorm = max(unorm, np.sqrt(max(float(reference @ (self.K0 @ reference)), 0.0)))
        cnorm = np.sqrt(np.maximum(np.diag(B.A), 0.0))
        denom = np.maximum(cnorm * unorm, np.finfo(float).tiny)
        return np.abs(B.R.T @ Ku) / denom

    def check_balance(self, u, reference=None):
        r = self.flux_residual(u, reference)
        if r.size and r.max() > FLUX_TOL:
            raise ConsistencyError(f"flux balance violated after correction ({r.max():.3e})")

    def expand(self, F, g_outer, J):
        """Terms ``u_0..u_J`` and per-term coefficients."""
        u0, u00, c0 = self.leading_term(F, g_outer)
        terms, coefs = [u0], [c0]
        for j in range(J):
            u_next, c, _ = self.next_term(terms[-1], F if j == 0 else None)
            terms.append(u_next)
            coefs.append(c)
        return terms, coefs, u00

    # -- oracle --------------------------------------------------------------

    def direct(self, F, g_outer, contrast, method="split"):
        """Solve ``(K0 + contrast K1) u = F`` with ``u = g`` on the outer boundary.

        ``method="assembled"`` factors the summed matrix, whose conditioning
        grows with the contrast. ``method="split"`` writes ``u = kernel a + w /
        contrast`` on every inclusion closure, with ``w`` orthogonal to the
        constraint columns, and solves the equivalent system in
        ``(u_background, a, w)``; its entries stay bounded as the contrast
        grows.
        """
        full = np.zeros(self.layout.n)
        full[self.layout.outer] = g_outer
        if method == "assembled" or self.layout.num_inclusions == 0:
            K = self.K0 + contrast * self.K1
            return DirichletSolver(K, self.layout.outer, tol=self.tol).solve(F, full)
        if method != "split":
            raise ValueError(f"unknown direct method {method!r}")
        return self._direct_split(F, full, float(contrast))

    def _direct_split(self, F, full, contrast):
        lay = self.layout
        n = lay.n
        closure = np.concatenate(lay.closures)
        free = lay.free0
        rows = np.concatenate([free, closure])  # equations kept, in this order
        # unknown map: u = P z + u_fixed with z = (u_free, a_1.., w_closure)
        nf, nc = len(free), len(closure)
        nk = sum(k.shape[1] for k in self.kernel)
        p_rows, p_cols, p_vals = [free], [np.arange(nf)], [np.ones(nf)]
        Cblocks = []
        col_a, off = nf, 0
        for m, clos in enumerate(lay.closures):
            xi = self.kernel[m]
            L = xi.shape[1]
            r, c = np.nonzero(xi)
            p_rows.append(clos[r])
            p_cols.append(col_a + c)
            p_vals.append(xi[r, c])
            w_idx = nf + nk + off + np.arange(len(clos))
            p_rows.append(clos)
            p_cols.append(w_idx)
            p_vals.append(np.full(len(clos), 1.0 / contrast))
            Cblocks.append((mass_orthonormal(xi, self.weights[clos]), off))
            col_a += L
            off += len(clos)
        nz = nf + nk + nc
        P = sp.csr_matrix(
            (np.concatenate(p_vals), (np.concatenate(p_rows), np.concatenate(p_cols))), shape=(n, nz)
        )
        # K1 acts on w directly (K1 u = K1 w / contrast and the contrast cancels)
        W = sp.csr_matrix(
            (np.ones(nc), (closure, nf + nk + np.arange(nc))), shape=(n, nz)
        )
        top = (self.K0 @ P + self.K1 @ W)[rows]
        cr, cc, cv = [], [], []
        for k, (C, off) in enumerate(Cblocks):
            r, c = np.nonzero(C.T)
            cr.append(r + sum(b[0].shape[1] for b in Cblocks[:k]))
            cc.append(nf + nk + off + c)
            cv.append(C.T[r, c])
        Cmat = sp.csr_matrix((np.concatenate(cv), (np.concatenate(cr), np.concatenate(cc))), shape=(nk, nz))
        S = sp.vstack([top, Cmat]).tocsc()
        rhs = np.concatenate([(F - self.K0 @ full)[rows], np.zeros(nk)])
        try:
            lu = splu(S)
        except RuntimeError as exc:
            raise SolverError(f"split direct solve: factorization failed ({exc})") from exc
        z = lu.solve(rhs)
        for _ in range(2):
            if backward_error(S, z, rhs) <= 1e-14:
                break
            z = z + lu.solve(rhs - S @ z)
        err = backward_error(S, z, rhs)
        if not np.all(np.isfinite(z)) or err > self.tol:
            raise SolverError(f"split direct solve: relative residual {err:.3e} exceeds tol {self.tol:.1e}")
        return full + P @ z


def partial_sums(terms, contrast, first_power=0):
    """Running sums ``sum_{j<=J} contrast^-(j) u_j``; ``first_power`` is the exponent of the first term."""
    out = []
    acc = np.zeros_like(terms[0])
    for k, t in enumerate(terms):
        acc = acc + float(contrast) ** (-(first_power + k)) * t
        out.append(acc.copy())
    return out


def soft_expansion(K0, K1, layout, F, g_outer, J, tol=DEFAULT_TOL):
    """Terms ``u_{-1}, u_0, ..., u_J`` for ``(K0 + eps K1) u = F`` with small ``eps``.

    Matching powers of ``eps`` gives ``K0 u_{-1} = 0``, ``K0 u_0 + K1 u_{-1} = F``
    and ``K0 u_j + K1 u_{j-1} = 0``. On the closed background each term is a
    ``K0`` Dirichlet solve (outer data only for ``u_0``); inside the inclusions
    the ``K1`` rows close the system.
    """
    n = layout.n
    closure = np.unique(np.concatenate(layout.closures))
    iface = np.unique(np.concatenate(layout.interfaces))
    interior = np.setdiff1d(closure, iface)
    # background-closure solve: fixed = outer + inclusion interiors
    bg = DirichletSolver(K0, np.union1d(layout.outer, interior), tol=tol)
    # inclusion-interior solve: fixed = everything except the interiors
    inc = DirichletSolver(K1, np.setdiff1d(np.arange(n), interior), free=interior, tol=tol)

    u_m1 = inc.solve(F, np.zeros(n))  # zero trace on the interface, zero outside
    terms = [u_m1]
    prev = u_m1
    for j in range(J + 1):
        load = -(K1 @ prev)
        if j == 0:
            load = load + F
        fixed = np.zeros(n)
        if j == 0:
            fixed[layout.outer] = g_outer
        u = bg.solve(load, fixed)  # interior values are zero at this stage
        u = inc.solve(None, u)  # K1-harmonic extension of the interface values
        terms.append(u)
        prev = u
    return terms
