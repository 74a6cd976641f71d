"""Command-line front end.

Usage::

    hcexpand <group> <action> [--config PATH] [--out DIR] [--threads N] [--tol X] [--jmax N]

Exit codes: 0 ok, 2 configuration error, 3 solver error, 4 validation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time
from fractions import Fraction

import numpy as np

from . import _accel
from .cache import ArtifactCache, mesh_key
from .config import ExperimentConfig, parse_config, parse_config_dict
from .errors import (
    ConfigError,
    ConsistencyError,
    GeometryError,
    HcexpandError,
    PreconditionError,
    SolverError,
    ValidationError,
)
from .mesh import generate_mesh, load_mesh, mesh_quality, refine_uniform, save_mesh, validate_mesh

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDATION = 0, 2, 3, 4

COMMANDS = {
    "mesh": ("gen", "refine", "check"),
    "solve": ("direct",),
    "expand": ("pressure", "elastic"),
    "sweep": ("delta",),
    "report": ("error", "energy", "terms-needed"),
    "run": ("1d-example",),
}


def exit_code_for(exc):
    if isinstance(exc, (ConfigError, PreconditionError)):
        return EXIT_CONFIG
    if isinstance(exc, (SolverError, ConsistencyError)):
        return EXIT_SOLVER
    if isinstance(exc, (ValidationError, GeometryError)):
        return EXIT_VALIDATION
    return EXIT_SOLVER


# ---------------------------------------------------------------------------
# pipeline pieces
# ---------------------------------------------------------------------------

class Context:
    """Parsed config, output writer, optional cache and a stopwatch."""

    def __init__(self, cfg: ExperimentConfig, writer, mesh_override=None):
        self.cfg = cfg
        self.writer = writer
        self.cache = ArtifactCache(cfg.cache_dir) if cfg.cache_dir else None
        self.mesh_override = mesh_override
        self.timings = {}

    def timed(self, label, fn, *args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        self.timings[label] = self.timings.get(label, 0.0) + time.perf_counter() - t0
        return out

    def mesh(self):
        cfg = self.cfg
        path = self.mesh_override or cfg.mesh_path
        if path is not None:
            if not os.path.exists(path):
                raise ConfigError(f"mesh file {path} not found", "/mesh")
            m = load_mesh(path)
        elif cfg.geometry is None:
            raise ConfigError("this command needs a geometry, preset or mesh", "/")
        elif self.cache is not None:
            m = self.cache.mesh(cfg.geometry_hash(), lambda: generate_mesh(cfg.geometry), cfg.geometry)
        else:
            m = generate_mesh(cfg.geometry)
        for _ in range(cfg.refinements):
            m = refine_uniform(m)
        return m

    def scalar_spec(self, mesh, contrast=None):
        from .pressure import ProblemSpec

        spec = ProblemSpec(mesh, contrast or self.cfg.contrasts[0], self.cfg.source, self.cfg.boundary)
        self._attach_basis(spec.system.engine, mesh, "scalar")
        return spec

    def elastic_spec(self, mesh, contrast=None):
        from .elasticity import ElasticSpec

        cfg = self.cfg
        spec = ElasticSpec(mesh, contrast or cfg.contrasts[0], cfg.nu, cfg.source, cfg.boundary, cfg.mode)
        if cfg.mode == "stiff":
            self._attach_basis(spec.system.engine, mesh, f"elastic-nu{cfg.nu!r}")
        return spec

    def _attach_basis(self, engine, mesh, kind):
        if self.cache is None or engine._basis is not None:
            return
        R, A = self.cache.basis(kind, mesh_key(mesh), lambda: (engine.basis.R, engine.basis.A))
        if engine._basis is None:
            engine.set_basis(R, A)


def _require(cfg, problem, command):
    if cfg.problem != problem:
        raise ConfigError(f"'{command}' needs problem={problem!r}, config has {cfg.problem!r}", "/problem")


def _eta_label(c):
    return format(float(c), "g").replace("+", "")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _quality_rows(mesh):
    q = mesh_quality(mesh)
    return [
        ("num_nodes", mesh.num_nodes),
        ("num_triangles", mesh.num_triangles),
        ("num_inclusions", mesh.num_inclusions),
        ("h", q.h),
        ("min_angle_deg", q.min_angle),
        ("max_aspect_ratio", q.max_aspect_ratio),
    ]


def cmd_mesh(ctx, action):
    mesh = ctx.timed("mesh", ctx.mesh)
    if action == "refine":
        mesh = ctx.timed("refine", refine_uniform, mesh)
    if action == "check":
        ctx.timed("validate", validate_mesh, mesh)
    else:
        save_mesh(mesh, ctx.writer.out / "mesh.json")
        ctx.writer._track(ctx.writer.out / "mesh.json")
    ctx.writer.csv("mesh_quality.csv", ("metric", "value"), _quality_rows(mesh))


def cmd_solve(ctx, action):
    from .reporting import nodal_rows, vector_rows

    mesh = ctx.timed("mesh", ctx.mesh)
    cfg = ctx.cfg
    for c in cfg.contrasts:
        if cfg.problem == "elastic":
            from .elasticity import solve_direct_elastic

            u = ctx.timed("direct", solve_direct_elastic, ctx.elastic_spec(mesh, c))
            ctx.writer.csv(f"direct_c{_eta_label(c)}.csv", ("node_id", "x", "y", "ux", "uy"), vector_rows(mesh, u))
        else:
            from .pressure import solve_direct

            u = ctx.timed("direct", solve_direct, ctx.scalar_spec(mesh, c))
            ctx.writer.csv(f"direct_eta{_eta_label(c)}.csv", ("node_id", "x", "y", "value"), nodal_rows(mesh, u))


def _term_name(j):
    return f"term_m{-j}.csv" if j < 0 else f"term_{j:02d}.csv"


def cmd_expand(ctx, action):
    from .reporting import nodal_rows, vector_rows

    cfg = ctx.cfg
    if cfg.problem == "1d" and action == "pressure":
        return cmd_run(ctx, "1d-example")
    _require(cfg, "pressure" if action == "pressure" else "elastic", f"expand {action}")
    mesh = ctx.timed("mesh", ctx.mesh)
    if action == "pressure":
        from .pressure import expand

        series = ctx.timed("expand", expand, ctx.scalar_spec(mesh), cfg.jmax)
        for j, t in enumerate(series.terms):
            ctx.writer.csv(_term_name(j), ("node_id", "x", "y", "value"), nodal_rows(mesh, t))
        rows = [(j, m + 1, c[m]) for j, c in enumerate(series.constants) for m in range(len(c))]
        ctx.writer.csv("constants.csv", ("j", "m", "c"), rows)
        return
    from .elasticity import expand_elastic, expand_soft_inclusion

    spec = ctx.elastic_spec(mesh)
    build = expand_elastic if cfg.mode == "stiff" else expand_soft_inclusion
    series = ctx.timed("expand", build, spec, cfg.jmax)
    for k, t in enumerate(series.terms):
        ctx.writer.csv(_term_name(k + series.first_power), ("node_id", "x", "y", "ux", "uy"), vector_rows(mesh, t))
    rows = []
    for j, c in enumerate(series.constants):
        c = np.asarray(c).reshape(-1, 3)
        for m in range(c.shape[0]):
            for mode in range(3):
                rows.append((j, m + 1, mode, c[m, mode]))
    ctx.writer.csv("constants.csv", ("j", "m", "rigid_mode", "c"), rows)


def cmd_sweep(ctx, action):
    from .localized import DEFAULT_DELTAS, delta_error_sweep

    cfg = ctx.cfg
    _require(cfg, "pressure", "sweep delta")
    mesh = ctx.timed("mesh", ctx.mesh)
    deltas = cfg.deltas or DEFAULT_DELTAS
    rows = ctx.timed("sweep", delta_error_sweep, ctx.scalar_spec(mesh), deltas, cfg.normalization)
    ctx.writer.csv(
        "sweep.csv",
        ("delta", "err_u0", "err_u00", "err_uc"),
        ((r.delta, r.err_u0, r.err_u00, r.err_uc) for r in rows),
    )


def _scalar_report(ctx, mesh):
    from .pressure import expand, truncation_report

    spec = ctx.scalar_spec(mesh)
    series = ctx.timed("expand", expand, spec, ctx.cfg.jmax)
    rep = ctx.timed("direct", truncation_report, spec, series, ctx.cfg.contrasts)
    return spec, series, rep


def cmd_report(ctx, action):
    cfg = ctx.cfg
    mesh = ctx.timed("mesh", ctx.mesh)
    if action == "error" and cfg.problem == "elastic":
        from .elasticity import expand_elastic, expand_soft_inclusion, series_errors

        spec = ctx.elastic_spec(mesh)
        build = expand_elastic if cfg.mode == "stiff" else expand_soft_inclusion
        series = ctx.timed("expand", build, spec, cfg.jmax)
        errs = ctx.timed("direct", series_errors, spec, series, cfg.contrasts)
        rows = [
            (k + series.first_power, c, errs[i, k], cfg.mode)
            for i, c in enumerate(cfg.contrasts)
            for k in range(errs.shape[1])
        ]
        ctx.writer.csv("errors.csv", ("J", "contrast", "rel_err_H1", "mode"), rows)
        return
    _require(cfg, "pressure", f"report {action}")
    if action == "error":
        _, _, rep = _scalar_report(ctx, mesh)
        ctx.writer.csv("errors.csv", ("J", "eta", "rel_err_H1"), rep.rows())
        slopes = []
        for i, eta in enumerate(rep.contrasts):
            Js = rep.pre_floor_range(i)
            s, r2 = rep.slope(i, Js)
            slopes.append((float(eta), s, r2, int(Js[0]), int(Js[-1])))
        ctx.writer.csv("slopes.csv", ("eta", "slope", "r2", "J_first", "J_last"), slopes)
    elif action == "terms-needed":
        _, _, rep = _scalar_report(ctx, mesh)
        rows = [(float(e), cfg.tol, rep.terms_needed(e, cfg.tol), rep.floor(i)) for i, e in enumerate(rep.contrasts)]
        ctx.writer.csv("terms_needed.csv", ("eta", "tol", "terms_needed", "floor"), rows)
    else:
        from .pressure import direct_energy, energy_coefficients, expand

        spec = ctx.scalar_spec(mesh)
        series = ctx.timed("expand", expand, spec, 1)
        co = energy_coefficients(spec, series)
        rows = []
        for eta in cfg.contrasts:
            E = ctx.timed("direct", direct_energy, spec.with_contrast(eta))
            rows.append((eta, E, co.E0, co.E1, co.predict(eta), abs(E - co.predict(eta))))
        ctx.writer.csv("energy.csv", ("eta", "E_direct", "E0", "E1", "E_predicted", "remainder"), rows)
        ctx.writer.csv("energy_coefficients.csv", ("E0", "E1", "cross"), [(co.E0, co.E1, co.cross)])


def _frac(v):
    return f"{v.numerator}/{v.denominator}" if isinstance(v, Fraction) and v.denominator != 1 else str(v)


def cmd_run(ctx, action):
    from .oned import Interval1DSpec, compare_1d, expansion_terms_1d, bar_example

    cfg = ctx.cfg
    _require(cfg, "1d", "run 1d-example")
    iv = cfg.interval
    etas = [Fraction(c).limit_denominator(10**12) for c in (cfg.raw.get("contrasts") or (2, 10, 100))]
    if iv is None:
        spec = bar_example(etas[0])
    else:
        spec = Interval1DSpec(iv["a"], iv["b"], iv["p"], iv["q"], etas[0], iv.get("u_a", 0), iv.get("u_b", 0))
    J = cfg.jmax
    series = ctx.timed("expand", expansion_terms_1d, spec, J)
    rows = []
    for j, t in enumerate(series.terms):
        for x, v in zip(t.breakpoints, t.values):
            rows.append((j, _frac(x), _frac(v), float(x), float(v)))
    ctx.writer.csv("terms_1d.csv", ("j", "x_exact", "value_exact", "x", "value"), rows)
    pieces = []
    for j, t in enumerate(series.terms):
        bp = t.breakpoints
        for k, (s, icpt) in enumerate(t.pieces()):
            pieces.append((j, k, _frac(bp[k]), _frac(bp[k + 1]), _frac(s), _frac(icpt)))
    ctx.writer.csv("pieces_1d.csv", ("j", "piece", "x_left", "x_right", "slope", "intercept"), pieces)
    ctx.writer.csv("constants_1d.csv", ("j", "c"), ((j, _frac(c)) for j, c in enumerate(series.constants)))
    xs = np.linspace(float(spec.a), float(spec.b), cfg.samples)
    ctx.writer.csv(
        "terms_sampled_1d.csv",
        ("x", *(f"u{j}" for j in range(len(series.terms)))),
        ([x, *(float(t(x)) for t in series.terms)] for x in xs),
    )
    comps = ctx.timed("compare", compare_1d, spec, J, etas)
    rows = []
    for cmp_ in comps:
        e = cmp_.max_errors
        for k in range(len(e)):
            ratio = e[k] / e[k - 1] if k and e[k - 1] != 0 else None
            rows.append((_frac(cmp_.eta), k, float(e[k]), "" if ratio is None else _frac(ratio)))
    ctx.writer.csv("errors_1d.csv", ("eta", "J", "max_error", "ratio_exact"), rows)


HANDLERS = {"mesh": cmd_mesh, "solve": cmd_solve, "expand": cmd_expand, "sweep": cmd_sweep,
            "report": cmd_report, "run": cmd_run}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="hcexpand", description="High-contrast expansion experiments.")
    groups = p.add_subparsers(dest="group", required=True)
    for group, actions in COMMANDS.items():
        g = groups.add_parser(group)
        sub = g.add_subparsers(dest="action", required=True)
        for action in actions:
            a = sub.add_parser(action)
            a.add_argument("--config", help="JSON experiment config")
            a.add_argument("--out", default="out", help="output directory (default: ./out)")
            a.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
            a.add_argument("--tol", type=float, default=None, help="truncation tolerance")
            a.add_argument("--jmax", type=int, default=None, help="number of correction terms")
            if group == "mesh":
                a.add_argument("--mesh", default=None, help="mesh JSON file (overrides the config)")
    return p


def _load_config(args):
    if args.config:
        cfg = parse_config(args.config)
    elif args.group == "run" or getattr(args, "mesh", None):
        cfg = parse_config_dict({"problem": "1d"} if args.group == "run" else {"problem": "pressure", "mesh": args.mesh})
    else:
        raise ConfigError("--config is required for this command", "")
    overrides = {}
    if args.tol is not None:
        if not args.tol > 0:
            raise ConfigError("tol must be positive", "/tol")
        overrides["tol"] = args.tol
    if args.jmax is not None:
        if args.jmax < 0:
            raise ConfigError("jmax must be non-negative", "/jmax")
        overrides["jmax"] = args.jmax
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("threads must be at least 1", "/threads")
        overrides["threads"] = args.threads
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def main(argv=None):
    from .reporting import ArtifactWriter

    args = build_parser().parse_args(argv)
    command = f"{args.group} {args.action}"
    writer = None
    try:
        cfg = _load_config(args)
        _accel.set_threads(cfg.threads if cfg.threads is not None else os.cpu_count())
        writer = ArtifactWriter(args.out, cfg.hash, command)
        ctx = Context(cfg, writer, mesh_override=getattr(args, "mesh", None))
        t0 = time.perf_counter()
        HANDLERS[args.group](ctx, args.action)
        ctx.timings["total"] = time.perf_counter() - t0
        writer.finish(ctx.timings, {"backend": _accel.backend(), "threads": cfg.threads})
    except HcexpandError as exc:
        if writer is not None:
            writer.abort()
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except BaseException:
        if writer is not None:
            writer.abort()
        raise
    print(f"{command}: wrote {len(writer.artifacts)} artifact(s) to {writer.out}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
