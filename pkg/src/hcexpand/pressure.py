"""Contrast expansion for the scalar equation ``-div(kappa grad u) = f`` with ``kappa = eta`` on inclusions.

Typical use::

    spec = ProblemSpec(mesh, contrast=100.0, source=1.0, boundary=0.0)
    series = expand(spec, J=6)
    approx = series.partial_sum(100.0, 6)
"""

from __future__ import annotations

import hashlib
import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from . import fem
from ._series import DofLayout, ExpansionEngine
from .errors import ConfigError, PreconditionError

_SYSTEMS = weakref.WeakKeyDictionary()


class ScalarSystem:
    """Matrices and the expansion engine for one mesh, built once and shared."""

    def __init__(self, mesh, tol=fem.DEFAULT_TOL):
        self.mesh = mesh
        M = mesh.num_inclusions
        self.K0 = fem.assemble_stiffness(mesh, tag_filter=[0])
        inc_tags = list(range(1, M + 1))
        if M:
            self.K1 = fem.assemble_stiffness(mesh, tag_filter=inc_tags)
        else:
            self.K1 = self.K0 * 0.0
        self.K_full = fem.assemble_stiffness(mesh)
        self.mass = fem.assemble_mass(mesh)
        self.lumped = np.asarray(self.mass.sum(axis=1)).ravel()
        self.layout = DofLayout(
            n=mesh.num_nodes,
            outer=mesh.outer_nodes,
            closures=tuple(mesh.inclusion_nodes(m) for m in range(1, M + 1)),
            interfaces=tuple(mesh.interface_nodes(m) for m in range(1, M + 1)),
        )
        kernel = [np.ones((len(c), 1)) for c in self.layout.closures]
        self.engine = ExpansionEngine(self.K0, self.K1, self.layout, kernel, self.lumped, tol=tol)

    def h1_norm(self, u):
        return math.sqrt(max(float(u @ (self.mass @ u) + u @ (self.K_full @ u)), 0.0))

    def l2_norm(self, u):
        return math.sqrt(max(float(u @ (self.mass @ u)), 0.0))


def scalar_system(mesh) -> ScalarSystem:
    sys_ = _SYSTEMS.get(mesh)
    if sys_ is None:
        sys_ = ScalarSystem(mesh)
        _SYSTEMS[mesh] = sys_
    return sys_


@dataclass(frozen=True)
class ProblemSpec:
    """Mesh, contrast ``eta`` (coefficient on every inclusion), source ``f`` and boundary data ``g``.

    ``source`` and ``boundary`` are constants or vectorised callables ``(x, y) -> values``.
    """

    mesh: object
    contrast: float
    source: object = 0.0
    boundary: object = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.contrast) and self.contrast > 0):
            raise ConfigError(f"contrast must be positive, got {self.contrast}", "/contrast")

    @property
    def system(self) -> ScalarSystem:
        return scalar_system(self.mesh)

    def load(self):
        return fem.assemble_load(self.mesh, self.source)

    def boundary_values(self):
        return fem.interpolate(self.mesh, self.boundary)[self.mesh.outer_nodes]

    def with_contrast(self, eta):
        return ProblemSpec(self.mesh, eta, self.source, self.boundary)


@dataclass
class InclusionBasis:
    """Harmonic characteristic fields (columns of ``chi``) and the coarse matrix ``A``."""

    chi: np.ndarray
    A: np.ndarray
    _coarse: object = field(repr=False, default=None)

    def solve(self, rhs):
        return self._coarse.solve(rhs)

    @property
    def num_inclusions(self):
        return self.chi.shape[1]


@dataclass
class ExpansionSeries:
    """Terms ``u_0..u_J`` and balancing constants; ``constants[j][m]`` belongs to term ``j``."""

    terms: list
    constants: list
    u00: np.ndarray
    problem_hash: str = ""

    @property
    def J(self):
        return len(self.terms) - 1

    def partial_sum(self, eta, J=None):
        J = self.J if J is None else J
        acc = np.zeros_like(self.terms[0])
        for j in range(J + 1):
            acc = acc + float(eta) ** (-j) * self.terms[j]
        return acc

    def partial_sums(self, eta):
        out, acc = [], np.zeros_like(self.terms[0])
        for j, t in enumerate(self.terms):
            acc = acc + float(eta) ** (-j) * t
            out.append(acc.copy())
        return out


def problem_hash(spec: ProblemSpec) -> str:
    """Hash of everything the series depends on (mesh, f, g); the contrast is excluded."""
    h = hashlib.sha256()
    m = spec.mesh
    for a in (m.nodes, m.triangles, m.tags):
        h.update(np.ascontiguousarray(a).tobytes())
    h.update(spec.load().tobytes())
    h.update(spec.boundary_values().tobytes())
    return h.hexdigest()[:16]


def compute_characteristics(mesh) -> InclusionBasis:
    """Harmonic characteristic function of every inclusion and ``A[m, l] = int_{D_0} grad chi_m . grad chi_l``."""
    B = scalar_system(mesh).engine.basis
    return InclusionBasis(chi=B.R, A=B.A, _coarse=B)


def compute_u00(spec: ProblemSpec):
    """Background lift: ``g`` on the outer boundary, 0 on inclusions, driven by ``f`` in between."""
    return spec.system.engine.background_lift(spec.load(), spec.boundary_values())


def compute_u0(spec: ProblemSpec, basis=None, u00=None):
    """Leading term and its per-inclusion constants ``(u0, c)``."""
    eng = spec.system.engine
    F = spec.load()
    if u00 is None:
        u00 = eng.background_lift(F, spec.boundary_values())
    B = eng.basis
    if B.R.shape[1] == 0:
        return u00.copy(), np.zeros(0)
    c = B.solve(B.R.T @ (F - eng.K0 @ u00))
    return u00 + B.R @ c, c


def next_term(series: ExpansionSeries, spec: ProblemSpec, basis=None):
    """Append ``u_{J+1}`` to ``series`` (in place) and return it."""
    eng = spec.system.engine
    F = spec.load() if series.J == 0 else None
    u_next, c, _ = eng.next_term(series.terms[-1], F)
    series.terms.append(u_next)
    series.constants.append(c)
    return u_next


def expand(spec: ProblemSpec, J: int) -> ExpansionSeries:
    """Terms ``u_0..u_J``; independent of ``spec.contrast``."""
    if J < 0:
        raise ConfigError("J must be non-negative", "/jmax")
    eng = spec.system.engine
    F = spec.load()
    if spec.mesh.num_inclusions == 0:
        u = eng.background_lift(F, spec.boundary_values())
        return ExpansionSeries([u], [np.zeros(0)], u, problem_hash(spec))
    terms, coefs, u00 = eng.expand(F, spec.boundary_values(), J)
    return ExpansionSeries(terms, coefs, u00, problem_hash(spec))


def solve_direct(spec: ProblemSpec):
    """Full FEM solve with coefficient ``eta`` on inclusions and 1 on the background."""
    sys_ = spec.system
    return sys_.engine.direct(spec.load(), spec.boundary_values(), spec.contrast)


# ---------------------------------------------------------------------------
# error reports
# ---------------------------------------------------------------------------

def relative_error(mesh, reference, approx, norm="h1"):
    sys_ = scalar_system(mesh)
    f = sys_.h1_norm if norm == "h1" else sys_.l2_norm
    den = f(reference)
    return f(reference - approx) / den if den > 0 else f(reference - approx)


@dataclass
class TruncationReport:
    """``errors[i, J]`` is the relative error of the ``J``-th partial sum at ``contrasts[i]``."""

    contrasts: np.ndarray
    errors: np.ndarray
    norm: str = "h1"

    def floor(self, i):
        return float(self.errors[i].min())

    def terms_needed(self, eta, tol):
        """Smallest ``J`` whose partial sum has error <= tol; ``inf`` when tol is below the floor."""
        i = int(np.flatnonzero(np.isclose(self.contrasts, eta))[0])
        hit = np.flatnonzero(self.errors[i] <= tol)
        return int(hit[0]) if hit.size else math.inf

    def slope(self, i, J_range=None):
        """Least-squares slope and ``R^2`` of ``log10 e(J)`` against ``J``."""
        e = self.errors[i]
        Js = np.arange(len(e)) if J_range is None else np.asarray(J_range)
        y = np.log10(e[Js])
        A = np.column_stack([Js, np.ones_like(Js, dtype=float)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        pred = A @ coef
        ss_res = float(((y - pred) ** 2).sum())
        ss_tot = float(((y - y.mean()) ** 2).sum())
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        return float(coef[0]), r2

    def pre_floor_range(self, i, floor_factor=100.0, min_error=1e-13, skip_leading=True):
        """Indices ``J`` used for slope fits.

        The range stops before the error first comes within ``floor_factor`` of
        the roundoff floor. With ``skip_leading`` it starts at ``J = 1``: the
        first correction can remove a whole error component at once, so the
        ``J = 0 -> 1`` drop is not representative of the asymptotic rate.
        """
        e = self.errors[i]
        floor = max(e.min(), min_error)
        idx = np.flatnonzero(e <= floor * floor_factor)
        stop = int(idx[0]) if idx.size else len(e)
        start = 1 if skip_leading and stop >= 4 else 0
        return np.arange(start, max(stop, start + 2))

    def rows(self):
        for i, eta in enumerate(self.contrasts):
            for J, e in enumerate(self.errors[i]):
                yield J, float(eta), float(e)


def truncation_report(spec: ProblemSpec, series: ExpansionSeries, contrasts, J_max=None, norm="h1"):
    """Relative errors of the partial sums against direct solves on the same mesh."""
    J_max = series.J if J_max is None else min(J_max, series.J)
    contrasts = np.asarray(contrasts, dtype=float)
    errs = np.zeros((len(contrasts), J_max + 1))
    for i, eta in enumerate(contrasts):
        ref = solve_direct(spec.with_contrast(eta))
        for J, s in enumerate(series.partial_sums(eta)[: J_max + 1]):
            errs[i, J] = relative_error(spec.mesh, ref, s, norm)
    return TruncationReport(contrasts, errs, norm)


def terms_needed(spec, series, eta, tol):
    return truncation_report(spec, series, [eta]).terms_needed(eta, tol)


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyCoefficients:
    E0: float
    E1: float
    cross: float  # int_{D_0} grad u0 . grad u1, zero when g = 0

    def predict(self, eta):
        return self.E0 + self.E1 / eta


def _require_zero_boundary(spec):
    g = spec.boundary_values()
    if np.any(np.abs(g) > 0):
        raise PreconditionError("energy expansion requires zero boundary data (g = 0)")


def energy_coefficients(spec: ProblemSpec, series: ExpansionSeries) -> EnergyCoefficients:
    """``E0 = |u0|^2`` over the background, ``E1 = |u1|^2`` over the inclusions."""
    _require_zero_boundary(spec)
    if series.J < 1:
        raise PreconditionError("energy expansion needs at least two terms")
    sys_ = spec.system
    u0, u1 = series.terms[0], series.terms[1]
    E0 = float(u0 @ (sys_.K0 @ u0))
    E1 = float(u1 @ (sys_.K1 @ u1)) + 2.0 * float(u0 @ (sys_.K0 @ u1))
    cross = float(u0 @ (sys_.K0 @ u1))
    return EnergyCoefficients(E0, E1, cross)


def direct_energy(spec: ProblemSpec, u=None):
    """``u^T (K0 + eta K1) u`` for the direct solution."""
    u = solve_direct(spec) if u is None else u
    sys_ = spec.system
    return float(u @ (sys_.K0 @ u) + spec.contrast * (u @ (sys_.K1 @ u)))
