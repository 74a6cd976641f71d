"""Invariant checks shared by the module tests and the acceptance script."""

import numpy as np

from hcexpand.pressure import ProblemSpec, compute_characteristics, expand


def inclusion_constancy(mesh, u):
    """Largest spread of ``u`` over an inclusion closure, relative to ``max |u|``."""
    scale = max(np.abs(u).max(), 1e-300)
    return max(np.ptp(u[mesh.inclusion_nodes(m)]) for m in range(1, mesh.num_inclusions + 1)) / scale


def flux_balance(spec, series):
    """Largest normalised coarse residual ``|chi_m^T (K0 u_j - F delta_j0)|`` over terms and inclusions."""
    sys_ = spec.system
    B = compute_characteristics(spec.mesh)
    F = spec.load()
    cn = np.sqrt(np.diag(B.A))
    worst = 0.0
    for j, u in enumerate(series.terms):
        r = sys_.K0 @ u - (F if j == 0 else 0.0)
        scale = max(np.sqrt(max(u @ (sys_.K0 @ u), 0.0)), np.linalg.norm(F) if j == 0 else 0.0, 1e-300)
        worst = max(worst, float((np.abs(B.chi.T @ r) / (cn * scale)).max()))
    return worst


def is_spd(A):
    A = np.asarray(A)
    return bool(np.allclose(A, A.T, rtol=0, atol=1e-12 * np.abs(A).max()) and np.linalg.eigvalsh(A).min() > 0)


def eta_independent(mesh, source, boundary, J, etas=(10.0, 1e6)):
    """Terms computed with different contrasts are bit-identical (fresh caches each time)."""
    from hcexpand import pressure

    runs = []
    for eta in etas:
        pressure._SYSTEMS.pop(mesh, None)
        runs.append(expand(ProblemSpec(mesh, eta, source, boundary), J).terms)
    return all(np.array_equal(a, b) for a, b in zip(runs[0], runs[1]))


def neumann_violation(spec, series):
    """``|C^T u_loc|`` of every inclusion solve used to build the terms."""
    eng = spec.system.engine
    F = spec.load()
    worst = 0.0
    for j, u in enumerate(series.terms[:-1]):
        resid = -(eng.K0 @ u) + (F if j == 0 else 0.0)
        for m, clos in enumerate(eng.layout.closures):
            solver = eng.neumann_solver(m)
            u_loc, _ = solver.solve(resid[clos])
            worst = max(worst, float(np.abs(solver.C.T @ u_loc).max() / max(np.abs(u_loc).max(), 1e-300)))
    return worst
