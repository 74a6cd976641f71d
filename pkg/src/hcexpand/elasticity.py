"""Plane linear elasticity with a stiff (``E = eta``) or soft (``E = eps``) inclusion.

Displacements are interleaved: dof ``2 i`` is ``u_x`` and ``2 i + 1`` is ``u_y``
at node ``i``. The bilinear form is ``E (2 mu eps(u):eps(v) + lam div u div v)``
with ``lam = nu / (2 (1 + nu) (1 - 2 nu))`` and ``mu = 1 / (2 (1 + nu))``.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from ._series import DofLayout, ExpansionEngine, soft_expansion
from .errors import ConfigError, PreconditionError, ValidationError
from .kernels import elastic_local

_SYSTEMS = weakref.WeakKeyDictionary()


def elastic_parameters(nu):
    """Normalised Lame parameters ``(lam, mu)`` for Poisson ratio ``nu`` in (0, 0.5)."""
    nu = float(nu)
    if not (0.0 < nu < 0.5):
        raise ValidationError(f"Poisson ratio must satisfy 0 < nu < 0.5, got {nu}")
    return nu / (2.0 * (1.0 + nu) * (1.0 - 2.0 * nu)), 1.0 / (2.0 * (1.0 + nu))


def vector_dofs(nodes):
    nodes = np.asarray(nodes, dtype=np.int64)
    return np.column_stack([2 * nodes, 2 * nodes + 1]).ravel()


def assemble_elastic_stiffness(mesh, young=1.0, nu=0.3, tag_filter=None):
    """Elastic stiffness (2N x 2N). ``young`` and ``nu`` are scalars, tag mappings or per-tag sequences."""
    mask = fem.element_mask(mesh, tag_filter)
    E = fem._coeff_per_element(mesh, young)[mask]
    if np.any(E <= 0):
        raise ValidationError("Young's modulus must be positive")
    if np.isscalar(nu):
        lam, mu = elastic_parameters(nu)
        lam = np.full(mask.sum(), lam)
        mu = np.full(mask.sum(), mu)
    else:
        nus = fem._coeff_per_element(mesh, nu)[mask]
        lm = np.array([elastic_parameters(v) for v in nus]).reshape(-1, 2)
        lam, mu = lm[:, 0], lm[:, 1]
    tris = mesh.triangles[mask]
    local = elastic_local(mesh.nodes, tris, E, lam, mu)
    dofs = np.empty((len(tris), 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * tris
    dofs[:, 1::2] = 2 * tris + 1
    return fem.scatter(local, dofs, 2 * mesh.num_nodes)


def rigid_body_basis(points, center=(0.0, 0.0)):
    """Interleaved values of the translations ``(1, 0)``, ``(0, 1)`` and the rotation ``(y, -x)``, shape (2n, 3)."""
    p = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    n = len(p)
    R = np.zeros((2 * n, 3))
    R[0::2, 0] = 1.0
    R[1::2, 1] = 1.0
    R[0::2, 2] = p[:, 1]
    R[1::2, 2] = -p[:, 0]
    return R


def element_strains(mesh, u):
    """Per-element ``(eps_xx, eps_yy, gamma_xy)`` of an interleaved P1 displacement."""
    g = fem.p1_gradients(mesh)  # (T, 3, 2)
    ux = u[0::2][mesh.triangles]
    uy = u[1::2][mesh.triangles]
    exx = np.einsum("tk,tk->t", ux, g[..., 0])
    eyy = np.einsum("tk,tk->t", uy, g[..., 1])
    gxy = np.einsum("tk,tk->t", ux, g[..., 1]) + np.einsum("tk,tk->t", uy, g[..., 0])
    return np.column_stack([exx, eyy, gxy])


class ElasticSystem:
    """Unit-modulus background and inclusion stiffness plus the expansion engine."""

    def __init__(self, mesh, nu, tol=fem.DEFAULT_TOL):
        if mesh.num_inclusions < 1:
            raise PreconditionError("elastic expansion needs at least one inclusion")
        self.mesh = mesh
        self.nu = float(nu)
        M = mesh.num_inclusions
        self.K0 = assemble_elastic_stiffness(mesh, 1.0, nu, tag_filter=[0])
        self.K1 = assemble_elastic_stiffness(mesh, 1.0, nu, tag_filter=list(range(1, M + 1)))
        smass = fem.assemble_mass(mesh)
        sstiff = fem.assemble_stiffness(mesh)
        eye = sp.identity(2, format="csr")
        self.mass = sp.kron(smass, eye, format="csr")
        self.h1 = self.mass + sp.kron(sstiff, eye, format="csr")
        lumped = np.asarray(smass.sum(axis=1)).ravel()
        self.weights = np.repeat(lumped, 2)
        closures = tuple(vector_dofs(mesh.inclusion_nodes(m)) for m in range(1, M + 1))
        self.layout = DofLayout(
            n=2 * mesh.num_nodes,
            outer=vector_dofs(mesh.outer_nodes),
            closures=closures,
            interfaces=tuple(vector_dofs(mesh.interface_nodes(m)) for m in range(1, M + 1)),
        )
        self.centers = [mesh.nodes[mesh.inclusion_nodes(m)].mean(axis=0) for m in range(1, M + 1)]
        kernel = [
            rigid_body_basis(mesh.nodes[mesh.inclusion_nodes(m)], self.centers[m - 1])
            for m in range(1, M + 1)
        ]
        self.kernel = kernel
        self.engine = ExpansionEngine(self.K0, self.K1, self.layout, kernel, self.weights, tol=tol)

    def h1_norm(self, u):
        return math.sqrt(max(float(u @ (self.h1 @ u)), 0.0))

    def energy_norm(self, u):
        return math.sqrt(max(float(u @ ((self.K0 + self.K1) @ u)), 0.0))


def elastic_system(mesh, nu) -> ElasticSystem:
    cache = _SYSTEMS.setdefault(mesh, {})
    key = float(nu)
    if key not in cache:
        cache[key] = ElasticSystem(mesh, nu)
    return cache[key]


def _vector_values(func, pts):
    if func is None:
        return np.zeros((len(pts), 2))
    if callable(func):
        vx, vy = func(pts[:, 0], pts[:, 1])
        return np.column_stack([np.broadcast_to(vx, len(pts)), np.broadcast_to(vy, len(pts))]).astype(float)
    v = np.asarray(func, dtype=float).reshape(2)
    return np.tile(v, (len(pts), 1))


@dataclass(frozen=True)
class ElasticSpec:
    """Elastic problem with one high-contrast inclusion.

    ``mode="stiff"``: ``E = contrast > 1`` on the inclusion. ``mode="soft"``:
    ``E = contrast`` in (0, 1). ``source`` and ``boundary`` are constant pairs or
    callables ``(x, y) -> (vx, vy)``.
    """

    mesh: object
    contrast: float
    nu: float = 0.3
    source: object = (0.0, 0.0)
    boundary: object = (0.0, 0.0)
    mode: str = "stiff"

    def __post_init__(self):
        elastic_parameters(self.nu)
        if self.mode not in ("stiff", "soft"):
            raise ConfigError(f"mode must be 'stiff' or 'soft', got {self.mode!r}", "/mode")
        if not (np.isfinite(self.contrast) and self.contrast > 0):
            raise ConfigError(f"contrast must be positive, got {self.contrast}", "/contrast")

    @property
    def system(self) -> ElasticSystem:
        return elastic_system(self.mesh, self.nu)

    def load(self):
        if self.source is None:
            return np.zeros(2 * self.mesh.num_nodes)
        if callable(self.source):
            return fem.assemble_vector_load(self.mesh, self.source)
        return fem.assemble_vector_load(self.mesh, tuple(self.source))

    def boundary_values(self):
        vals = _vector_values(self.boundary, self.mesh.nodes[self.mesh.outer_nodes])
        return vals.ravel()

    def with_contrast(self, c):
        return ElasticSpec(self.mesh, c, self.nu, self.source, self.boundary, self.mode)


@dataclass
class ElasticSeries:
    """Terms and rigid-motion coefficients. ``first_power`` is 0 (stiff) or -1 (soft)."""

    terms: list
    constants: list
    u00: np.ndarray = None
    tildes: list = None
    first_power: int = 0

    @property
    def J(self):
        return len(self.terms) - 1 + self.first_power

    def partial_sums(self, contrast, mode="stiff"):
        """Stiff: ``sum contrast^-j u_j``; soft: ``sum contrast^j u_j`` starting at ``j = -1``."""
        out, acc = [], np.zeros_like(self.terms[0])
        for k, t in enumerate(self.terms):
            j = k + self.first_power
            w = float(contrast) ** (-j) if mode == "stiff" else float(contrast) ** j
            acc = acc + w * t
            out.append(acc.copy())
        return out


def rb_characteristics(mesh, nu=0.3):
    """Elastic-harmonic extensions of the rigid motions (columns) and their Gram matrix."""
    B = elastic_system(mesh, nu).engine.basis
    return B.R, B.A


def compute_u0_elastic(spec: ElasticSpec):
    """``(u0, u00, c)``; ``u0`` is a rigid motion on the inclusion."""
    eng = spec.system.engine
    return eng.leading_term(spec.load(), spec.boundary_values())


def next_term_elastic(series: ElasticSeries, spec: ElasticSpec):
    eng = spec.system.engine
    F = spec.load() if len(series.terms) == 1 else None
    u_next, c, tilde = eng.next_term(series.terms[-1], F)
    series.terms.append(u_next)
    series.constants.append(c)
    if series.tildes is not None:
        series.tildes.append(tilde)
    return u_next


def expand_elastic(spec: ElasticSpec, J: int) -> ElasticSeries:
    """Stiff-inclusion series ``u_0..u_J`` (independent of the contrast)."""
    if spec.mode != "stiff":
        raise PreconditionError("expand_elastic handles the stiff case; use expand_soft_inclusion")
    u0, u00, c0 = compute_u0_elastic(spec)
    series = ElasticSeries([u0], [c0], u00, [None])
    for _ in range(J):
        next_term_elastic(series, spec)
    return series


def expand_soft_inclusion(spec: ElasticSpec, J: int) -> ElasticSeries:
    """Soft-inclusion series ``u_{-1}, u_0, ..., u_J`` in powers of the softness."""
    sys_ = spec.system
    terms = soft_expansion(sys_.K0, sys_.K1, sys_.layout, spec.load(), spec.boundary_values(), J)
    return ElasticSeries(terms, [], None, None, first_power=-1)


def solve_direct_elastic(spec: ElasticSpec):
    """Full solve with ``E = contrast`` on the inclusion and 1 on the background."""
    eng = spec.system.engine
    method = "split" if spec.mode == "stiff" and spec.contrast > 1 else "assembled"
    return eng.direct(spec.load(), spec.boundary_values(), spec.contrast, method=method)


def relative_error(spec, reference, approx):
    sys_ = spec.system
    den = sys_.h1_norm(reference)
    return sys_.h1_norm(reference - approx) / den if den > 0 else sys_.h1_norm(reference - approx)


def series_errors(spec: ElasticSpec, series: ElasticSeries, contrasts):
    """Relative H1 errors ``errors[i, k]`` of the ``k``-th partial sum at each contrast."""
    out = np.zeros((len(contrasts), len(series.terms)))
    for i, c in enumerate(contrasts):
        s = spec.with_contrast(c)
        ref = solve_direct_elastic(s)
        for k, ps in enumerate(series.partial_sums(c, spec.mode)):
            out[i, k] = relative_error(s, ref, ps)
    return out


def rb_fit_residual(spec: ElasticSpec, u):
    """Relative least-squares residual of ``u`` against rigid motions on each inclusion (max over inclusions)."""
    sys_ = spec.system
    worst = 0.0
    for m, clos in enumerate(sys_.layout.closures):
        xi = sys_.kernel[m]
        v = u[clos]
        coef, *_ = np.linalg.lstsq(xi, v, rcond=None)
        nv = np.linalg.norm(v)
        if nv > 0:
            worst = max(worst, float(np.linalg.norm(v - xi @ coef) / nv))
    return worst


def balancing_amplification(spec: ElasticSpec, series: ElasticSeries):
    """``max_j |u_j|_E / |tilde u_j|_E`` over computed terms ``j >= 1`` (energy norm, unit modulus)."""
    sys_ = spec.system
    ratios = []
    for u, t in zip(series.terms[1:], (series.tildes or [None])[1:]):
        if t is None:
            continue
        nt = sys_.energy_norm(t)
        if nt > 0:
            ratios.append(sys_.energy_norm(u) / nt)
    return max(ratios) if ratios else float("nan")
