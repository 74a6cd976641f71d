"""Experiment configuration: strict JSON parsing with JSON-pointer error messages."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .mesh import Disk, GeometrySpec, Polygon, Rectangle, sixty_inclusions, thirty_six_inclusions

DEFAULT_TOL = 1e-8
DEFAULT_JMAX = 25
DEFAULT_SOLVER_TOL = 1e-10

_NUM = {"type": "number"}
_FUNC = {
    "oneOf": [
        {"type": "number"},
        {"type": "string", "enum": ["zero", "one", "x1", "x2", "x1+x2^2"]},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": ["constant", "linear_x1", "quadratic", "polynomial"]},
                "value": _NUM,
                "coefficients": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "minItems": 3,
                        "maxItems": 3,
                        "items": [
                            {"type": "integer", "minimum": 0},
                            {"type": "integer", "minimum": 0},
                            _NUM,
                        ],
                    },
                },
            },
        },
    ]
}
_VFUNC = {"type": "array", "minItems": 2, "maxItems": 2, "items": _FUNC}
_SHAPE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type"],
    "properties": {
        "type": {"enum": ["disk", "rectangle", "polygon"]},
        "center": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "bounds": {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4},
        "vertices": {
            "type": "array",
            "minItems": 3,
            "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        },
    },
}
SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "problem": {"enum": ["pressure", "elastic", "1d"]},
        "mode": {"enum": ["stiff", "soft"]},
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "required": ["outer", "target_h"],
            "properties": {
                "outer": _SHAPE,
                "inclusions": {"type": "array", "items": _SHAPE},
                "target_h": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "preset": {"enum": ["thirty_six", "sixty"]},
        "preset_h": {"type": "number", "exclusiveMinimum": 0},
        "mesh": {"type": "string"},
        "refinements": {"type": "integer", "minimum": 0},
        "contrasts": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "source": {"oneOf": [_FUNC, _VFUNC]},
        "boundary": {"oneOf": [_FUNC, _VFUNC]},
        "nu": {"type": "number"},
        "jmax": {"type": "integer", "minimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "solver_tol": {"type": "number", "exclusiveMinimum": 0},
        "deltas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "normalization": {"enum": ["free", "full"]},
        "threads": {"type": "integer", "minimum": 1},
        "cache_dir": {"type": "string"},
        "samples": {"type": "integer", "minimum": 2},
        "interval": {
            "type": "object",
            "additionalProperties": False,
            "required": ["a", "b", "p", "q"],
            "properties": {k: _NUM for k in ("a", "b", "p", "q", "u_a", "u_b")},
        },
    },
}


def _pointer(path):
    return "/" + "/".join(str(p) for p in path) if path else "/"


def make_function(spec, pointer="/"):
    """Vectorised scalar function ``(x, y) -> values`` from a catalogue entry."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return float(spec)
    if isinstance(spec, str):
        return {
            "zero": 0.0,
            "one": 1.0,
            "x1": lambda x, y: np.asarray(x, dtype=float),
            "x2": lambda x, y: np.asarray(y, dtype=float),
            "x1+x2^2": lambda x, y: np.asarray(x, dtype=float) + np.asarray(y, dtype=float) ** 2,
        }[spec]
    kind = spec["type"]
    if kind == "constant":
        if "value" not in spec:
            raise ConfigError("constant needs 'value'", pointer + "/value")
        return float(spec["value"])
    if kind == "linear_x1":
        return make_function("x1")
    if kind == "quadratic":
        return make_function("x1+x2^2")
    coefs = spec.get("coefficients")
    if not coefs:
        raise ConfigError("polynomial needs 'coefficients'", pointer + "/coefficients")
    terms = [(int(i), int(j), float(c)) for i, j, c in coefs]

    def poly(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for i, j, c in terms:
            out = out + c * x**i * y**j
        return out

    return poly


def make_vector_function(spec, pointer="/"):
    if isinstance(spec, list):
        fx, fy = (make_function(s, f"{pointer}/{k}") for k, s in enumerate(spec))

        def vec(x, y):
            ones = np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape)
            vx = fx(x, y) if callable(fx) else fx * ones
            vy = fy(x, y) if callable(fy) else fy * ones
            return vx, vy

        return vec
    f = make_function(spec, pointer)
    if callable(f):
        return lambda x, y: (f(x, y), np.zeros_like(np.asarray(x, dtype=float)))
    return (f, 0.0)


def _shape(d, pointer):
    kind = d["type"]
    try:
        if kind == "disk":
            (cx, cy), r = d["center"], d["radius"]
            return Disk(float(cx), float(cy), float(r))
        if kind == "rectangle":
            return Rectangle(*map(float, d["bounds"]))
        return Polygon(tuple(tuple(map(float, v)) for v in d["vertices"]))
    except KeyError as exc:
        raise ConfigError(f"{kind} needs '{exc.args[0]}'", pointer) from exc


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict = field(repr=False)
    problem: str = "pressure"
    mode: str = "stiff"
    geometry: GeometrySpec | None = None
    mesh_path: str | None = None
    refinements: int = 0
    contrasts: tuple = (10.0,)
    source: object = 0.0
    boundary: object = 0.0
    nu: float = 0.3
    jmax: int = DEFAULT_JMAX
    tol: float = DEFAULT_TOL
    solver_tol: float = DEFAULT_SOLVER_TOL
    deltas: tuple = ()
    normalization: str = "free"
    threads: int | None = None
    cache_dir: str | None = None
    interval: dict | None = None
    samples: int = 41

    @property
    def hash(self):
        return config_hash(self.raw)

    def geometry_hash(self):
        payload = {k: self.raw.get(k) for k in ("geometry", "preset", "preset_h", "mesh", "refinements")}
        return config_hash(payload)


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def parse_config_dict(d, base_dir=None) -> ExperimentConfig:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            raise ConfigError(f"unknown key(s) {extra}", _pointer(err.absolute_path))
        raise ConfigError(err.message, _pointer(err.absolute_path))

    problem = d.get("problem", "pressure")
    mode = d.get("mode", "stiff")
    geometry = None
    if "geometry" in d:
        g = d["geometry"]
        outer = _shape(g["outer"], "/geometry/outer")
        if isinstance(outer, Polygon):
            raise ConfigError("outer domain must be a rectangle or a disk", "/geometry/outer/type")
        incs = tuple(_shape(s, f"/geometry/inclusions/{k}") for k, s in enumerate(g.get("inclusions", [])))
        geometry = GeometrySpec(outer, incs, float(g["target_h"]))
    elif "preset" in d:
        builder = {"thirty_six": thirty_six_inclusions, "sixty": sixty_inclusions}[d["preset"]]
        geometry = builder(d["preset_h"]) if "preset_h" in d else builder()
    sources = [k for k in ("geometry", "preset", "mesh") if k in d]
    if len(sources) > 1:
        raise ConfigError(f"give only one of geometry, preset, mesh (got {sources})", "/")
    if problem != "1d" and not sources:
        raise ConfigError("one of geometry, preset or mesh is required", "/")
    mesh_path = None
    if "mesh" in d:
        mesh_path = str(Path(base_dir or ".") / d["mesh"]) if not Path(d["mesh"]).is_absolute() else d["mesh"]

    contrasts = tuple(float(c) for c in d.get("contrasts", [10.0]))
    for k, c in enumerate(contrasts):
        if problem == "elastic" and mode == "soft":
            if not (0.0 < c < 1.0):
                raise ConfigError(f"softness must lie in (0, 1), got {c}", f"/contrasts/{k}")
        elif not c > 1.0:
            raise ConfigError(f"contrast must exceed 1, got {c}", f"/contrasts/{k}")

    nu = float(d.get("nu", 0.3))
    if not 0.0 < nu < 0.5:
        raise ConfigError(f"nu must satisfy 0 < nu < 0.5, got {nu}", "/nu")
    vector = problem == "elastic"
    conv = make_vector_function if vector else make_function
    for key in ("source", "boundary"):
        if key in d and isinstance(d[key], list) and not vector:
            raise ConfigError("vector data given for a scalar problem", f"/{key}")
    source = conv(d.get("source", 0.0), "/source")
    boundary = conv(d.get("boundary", 0.0), "/boundary")
    interval = d.get("interval")
    if interval is not None and not (interval["a"] < interval["p"] < interval["q"] < interval["b"]):
        raise ConfigError("need a < p < q < b", "/interval")
    return ExperimentConfig(
        raw=d,
        problem=problem,
        mode=mode,
        geometry=geometry,
        mesh_path=mesh_path,
        refinements=int(d.get("refinements", 0)),
        contrasts=contrasts,
        source=source,
        boundary=boundary,
        nu=nu,
        jmax=int(d.get("jmax", DEFAULT_JMAX)),
        tol=float(d.get("tol", DEFAULT_TOL)),
        solver_tol=float(d.get("solver_tol", DEFAULT_SOLVER_TOL)),
        deltas=tuple(float(x) for x in d.get("deltas", ())),
        normalization=d.get("normalization", "free"),
        threads=d.get("threads"),
        cache_dir=d.get("cache_dir"),
        interval=interval,
        samples=int(d.get("samples", 41)),
    )


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} not found", "")
    try:
        d = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}", "") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object", "")
    return parse_config_dict(d, base_dir=p.parent)
