"""Time the numba element kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--refine N] [--repeat R]

Both paths are called directly, so the ``HCEXPAND_DISABLE_NUMBA`` switch does
not matter here. The first numba call (compilation or cache load) is excluded.
"""

import argparse
import time

import numpy as np

from hcexpand import kernels
from hcexpand.mesh import generate_mesh, refine_uniform, thirty_six_inclusions


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run(refine=1, repeat=5, out=print):
    mesh = generate_mesh(thirty_six_inclusions())
    for _ in range(refine):
        mesh = refine_uniform(mesh)
    nodes = np.ascontiguousarray(mesh.nodes)
    tris = np.ascontiguousarray(mesh.triangles, dtype=np.int64)
    ones = np.ones(len(tris))
    lam, mu = np.full(len(tris), 0.58), np.full(len(tris), 0.38)
    cases = {
        "stiffness": (lambda: kernels._stiffness_local_nb(nodes, tris, ones),
                      lambda: kernels._stiffness_local_np(nodes, tris, ones)),
        "mass": (lambda: kernels._mass_local_nb(nodes, tris), lambda: kernels._mass_local_np(nodes, tris)),
        "elastic": (lambda: kernels._elastic_local_nb(nodes, tris, ones, lam, mu),
                    lambda: kernels._elastic_local_np(nodes, tris, ones, lam, mu)),
        "metrics": (lambda: kernels._triangle_metrics_nb(nodes, tris),
                    lambda: kernels._triangle_metrics_np(nodes, tris)),
    }
    out(f"{len(tris)} triangles, best of {repeat}")
    out(f"{'kernel':<10} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8} {'max diff':>9}")
    rows = []
    for name, (nb, npy) in cases.items():
        a = nb()  # warm-up
        b = npy()
        t_nb, t_np = best_of(nb, repeat), best_of(npy, repeat)
        diff = float(np.abs(a - b).max())
        rows.append((name, t_nb, t_np, diff))
        out(f"{name:<10} {1e3 * t_nb:11.2f} {1e3 * t_np:11.2f} {t_np / t_nb:8.1f} {diff:9.1e}")
    return rows


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--refine", type=int, default=1)
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args()
    run(a.refine, a.repeat)
