"""Deterministic CSV artifacts and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import shutil
from importlib import metadata
from pathlib import Path

import numpy as np


def fmt(value):
    """Shortest round-trip text for numbers; integers stay integers."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def _version(pkg):
    try:
        return metadata.version(pkg)
    except metadata.PackageNotFoundError:
        return "unknown"


def software_versions():
    return {
        "python": platform.python_version(),
        **{p: _version(p) for p in ("hcexpand", "numpy", "scipy", "numba")},
    }


class ArtifactWriter:
    """Writes CSV files into ``out_dir`` and tracks them for the manifest.

    ``abort()`` deletes everything this writer produced, including the
    directory when the writer created it.
    """

    def __init__(self, out_dir, config_hash, command):
        self.out = Path(out_dir)
        self.created_dir = not self.out.exists()
        self.out.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.command = command
        self.artifacts = []

    def _track(self, path):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.artifacts.append({"name": path.name, "sha256": digest, "config_hash": self.config_hash})

    def csv(self, name, header, rows):
        path = self.out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
        self._track(path)
        return path

    def text(self, name, content):
        path = self.out / name
        path.write_text(content, encoding="utf-8", newline="\n")
        self._track(path)
        return path

    def finish(self, timings, extra=None):
        manifest = {
            "command": self.command,
            "config_hash": self.config_hash,
            "versions": software_versions(),
            "timings_s": {k: round(v, 6) for k, v in timings.items()},
            "artifacts": self.artifacts,
        }
        if extra:
            manifest.update(extra)
        path = self.out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def abort(self):
        for a in self.artifacts:
            (self.out / a["name"]).unlink(missing_ok=True)
        (self.out / "manifest.json").unlink(missing_ok=True)
        self.artifacts = []
        if self.created_dir and self.out.exists():
            shutil.rmtree(self.out, ignore_errors=True)


def nodal_rows(mesh, u):
    """``(node_id, x, y, value)`` rows for a scalar field."""
    for i, (x, y) in enumerate(mesh.nodes):
        yield i, float(x), float(y), float(u[i])


def vector_rows(mesh, u):
    """``(node_id, x, y, ux, uy)`` rows for an interleaved vector field."""
    u = np.asarray(u).reshape(-1, 2)
    for i, (x, y) in enumerate(mesh.nodes):
        yield i, float(x), float(y), float(u[i, 0]), float(u[i, 1])
