"""Characteristic functions and background lift computed on delta-neighbourhoods.

``chi_m^delta`` is 1 on inclusion ``m``, harmonic in the background part of the
neighbourhood ``D_{m,delta}`` and 0 on the rest of the mesh. The lift
``u00^delta`` is computed on the strip of width ``delta`` along the outer
boundary. Both feed the same coarse system as the global fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ResolutionError
from .fem import DirichletSolver
from ._series import factor_gram
from .pressure import ProblemSpec, compute_u0, compute_u00, scalar_system


@dataclass(frozen=True)
class DeltaNeighborhood:
    """Element mask of a neighbourhood and the nodes that are solved for on it.

    Attributes
    ----------
    index : inclusion number (0 for the outer-boundary strip)
    delta : width
    elements : boolean mask over triangles
    free_nodes : background-interior nodes whose incident elements all lie in the mask
    """

    index: int
    delta: float
    elements: np.ndarray
    free_nodes: np.ndarray

    def area(self, mesh):
        return float(mesh.areas[self.elements].sum())


def _distance_to_inclusion(mesh, m, pts):
    geom = mesh.geometry
    if geom is not None:
        return np.maximum(geom.inclusions[m - 1].signed_distance(pts), 0.0)
    iface = mesh.nodes[mesh.interface_nodes(m)]
    d, _ = cKDTree(iface).query(pts)
    return d


def _distance_to_outer(mesh, pts):
    geom = mesh.geometry
    if geom is not None:
        return np.abs(geom.outer.signed_distance(pts))
    d, _ = cKDTree(mesh.nodes[mesh.outer_nodes]).query(pts)
    return d


def _touching(mesh, nodes):
    """Elements with at least one vertex in ``nodes``."""
    flag = np.zeros(mesh.num_nodes, dtype=bool)
    flag[nodes] = True
    return flag[mesh.triangles].any(axis=1)


def _free_nodes(mesh, mask):
    inside = mesh.nodes_with_all_elements_in(mask)
    inside &= mesh.node_region == 0
    return np.flatnonzero(inside)


def build_neighborhood(mesh, m, delta) -> DeltaNeighborhood:
    """``D_{m,delta}``: inclusion ``m``, background elements whose centroid lies within ``delta``
    of it, and the ring of elements touching its interface."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    mask = mesh.tags == m
    near = (mesh.tags == 0) & (_distance_to_inclusion(mesh, m, mesh.centroids) < delta)
    ring = (mesh.tags == 0) & _touching(mesh, mesh.interface_nodes(m))
    mask = mask | near | ring
    return DeltaNeighborhood(m, float(delta), mask, _free_nodes(mesh, mask))


def build_boundary_strip(mesh, delta) -> DeltaNeighborhood:
    """``D^delta``: background elements within ``delta`` of the outer boundary, plus the first ring."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    near = (mesh.tags == 0) & (_distance_to_outer(mesh, mesh.centroids) < delta)
    ring = (mesh.tags == 0) & _touching(mesh, mesh.outer_nodes)
    mask = near | ring
    return DeltaNeighborhood(0, float(delta), mask, _free_nodes(mesh, mask))


def _patch_solve(K0, n, free, fixed_values):
    """Solve ``K0 u = 0`` on ``free`` with every other node held at ``fixed_values``."""
    if free.size == 0:
        return fixed_values.copy()
    fixed = np.setdiff1d(np.arange(n), free)
    return DirichletSolver(K0, fixed, free=free).solve(None, fixed_values)


@dataclass
class LocalizedBasis:
    """Localized characteristic fields (columns of ``chi``) and their coarse matrix."""

    delta: float
    chi: np.ndarray
    A: np.ndarray
    neighborhoods: list
    cho: tuple = None

    def solve(self, rhs):
        import scipy.linalg as sla

        return sla.cho_solve(self.cho, rhs)


def localized_characteristics(mesh, delta, allow_empty=False) -> LocalizedBasis:
    """``chi_m^delta`` for every inclusion and ``A^delta``.

    Raises
    ------
    ResolutionError
        When a neighbourhood has no node to solve for (``delta`` below one
        element layer) and ``allow_empty`` is false.
    """
    sys_ = scalar_system(mesh)
    n = mesh.num_nodes
    M = mesh.num_inclusions
    chi = np.zeros((n, M))
    hoods = []
    for m in range(1, M + 1):
        hood = build_neighborhood(mesh, m, delta)
        if hood.free_nodes.size == 0 and not allow_empty:
            raise ResolutionError(
                f"delta={delta} leaves no free node around inclusion {m}; increase delta or refine"
            )
        data = np.zeros(n)
        data[mesh.inclusion_nodes(m)] = 1.0
        chi[:, m - 1] = _patch_solve(sys_.K0, n, hood.free_nodes, data)
        hoods.append(hood)
    A = chi.T @ (sys_.K0 @ chi)
    A = 0.5 * (A + A.T)
    return LocalizedBasis(float(delta), chi, A, hoods, factor_gram(A, "localized coarse matrix"))


def compute_u00_delta(spec: ProblemSpec, delta, allow_empty=False):
    """Lift on the boundary strip: ``g`` on the outer boundary, 0 on the inner edge of the strip."""
    mesh = spec.mesh
    sys_ = scalar_system(mesh)
    strip = build_boundary_strip(mesh, delta)
    if strip.free_nodes.size == 0 and not allow_empty:
        raise ResolutionError(f"delta={delta} leaves no free node in the boundary strip")
    fixed_vals = np.zeros(mesh.num_nodes)
    fixed_vals[mesh.outer_nodes] = spec.boundary_values()
    if strip.free_nodes.size == 0:
        return fixed_vals
    fixed = np.setdiff1d(np.arange(mesh.num_nodes), strip.free_nodes)
    return DirichletSolver(sys_.K0, fixed, free=strip.free_nodes).solve(spec.load(), fixed_vals)


@dataclass(frozen=True)
class LocalizedLeadingTerm:
    u0: np.ndarray
    u00: np.ndarray
    uc: np.ndarray
    constants: np.ndarray


def compute_u0_delta(spec: ProblemSpec, delta, basis=None, allow_empty=False) -> LocalizedLeadingTerm:
    """``u0^delta = u00^delta + sum_m c_m^delta chi_m^delta`` with ``A^delta c^delta = b^delta``."""
    sys_ = spec.system
    basis = basis or localized_characteristics(spec.mesh, delta, allow_empty=allow_empty)
    u00 = compute_u00_delta(spec, delta, allow_empty=allow_empty)
    b = basis.chi.T @ (spec.load() - sys_.K0 @ u00)
    c = basis.solve(b)
    uc = basis.chi @ c
    return LocalizedLeadingTerm(u00 + uc, u00, uc, c)


@dataclass(frozen=True)
class SweepRow:
    delta: float
    err_u0: float
    err_u00: float
    err_uc: float


def boundary_lift(spec):
    """Nodal lift of the boundary data: ``g`` on outer-boundary nodes, 0 elsewhere."""
    lift = np.zeros(spec.mesh.num_nodes)
    lift[spec.mesh.outer_nodes] = spec.boundary_values()
    return lift


def delta_error_sweep(spec: ProblemSpec, deltas, normalization="free"):
    """Relative H1 errors of the localized leading term for each ``delta``.

    Parameters
    ----------
    normalization : {"free", "full"}
        ``"free"`` divides by the norm of the field minus its boundary nodal
        lift (the part that is actually solved for); ``"full"`` by the plain
        norm. Differences are unaffected because both fields share the lift.
    """
    sys_ = spec.system
    u00 = compute_u00(spec)
    u0, _ = compute_u0(spec, u00=u00)
    uc = u0 - u00
    lift = boundary_lift(spec) if normalization == "free" else np.zeros_like(u0)
    if normalization not in ("free", "full"):
        raise ValueError("normalization must be 'free' or 'full'")
    n_u0 = sys_.h1_norm(u0 - lift)
    n_u00 = sys_.h1_norm(u00 - lift)
    rows = []
    for d in deltas:
        loc = compute_u0_delta(spec, d, allow_empty=True)
        rows.append(
            SweepRow(
                float(d),
                sys_.h1_norm(u0 - loc.u0) / n_u0,
                sys_.h1_norm(u00 - loc.u00) / n_u00 if n_u00 > 0 else sys_.h1_norm(u00 - loc.u00),
                sys_.h1_norm(uc - loc.uc) / n_u0,
            )
        )
    return rows


def is_monotone(values, jitter=0.05):
    """Non-increasing up to a relative ``jitter``."""
    v = np.asarray(values, dtype=float)
    return bool(np.all(v[1:] <= v[:-1] * (1.0 + jitter) + 1e-15))


DEFAULT_DELTAS = (0.001, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def domain_diameter(mesh):
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    return float(math.hypot(*(hi - lo)))
