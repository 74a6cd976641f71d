"""On-disk, content-addressed store for meshes and characteristic bases.

Each entry is an ``.npz`` file named by its key. The file also records a
SHA-256 digest of its arrays; a mismatch on load (truncated or edited file)
triggers a warning and the caller recomputes.
"""

from __future__ import annotations

import hashlib
import os
import warnings
from pathlib import Path

import numpy as np

from .mesh import Mesh, validate_mesh


def _digest(arrays):
    h = hashlib.sha256()
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        h.update(name.encode())
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def array_key(*parts) -> str:
    """Stable key from strings, numbers and arrays."""
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, np.ndarray):
            h.update(np.ascontiguousarray(p).tobytes())
        else:
            h.update(repr(p).encode())
        h.update(b"|")
    return h.hexdigest()[:24]


def mesh_key(mesh) -> str:
    return array_key(mesh.nodes, mesh.triangles, mesh.tags)


class ArtifactCache:
    """Directory of ``<kind>-<key>.npz`` entries.

    Parameters
    ----------
    root : path
        Created on first store.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.hits = 0
        self.misses = 0

    def path(self, kind, key):
        return self.root / f"{kind}-{key}.npz"

    def store(self, kind, key, arrays):
        self.root.mkdir(parents=True, exist_ok=True)
        arrays = {k: np.asarray(v) for k, v in arrays.items()}
        target = self.path(kind, key)
        tmp = target.with_suffix(".tmp.npz")
        np.savez(tmp, __digest__=np.array(_digest(arrays)), **arrays)
        os.replace(tmp, target)
        return target

    def load(self, kind, key):
        """Arrays stored under ``key`` or ``None`` (missing or corrupt, the latter with a warning)."""
        p = self.path(kind, key)
        if not p.exists():
            self.misses += 1
            return None
        try:
            with np.load(p, allow_pickle=False) as z:
                arrays = {k: z[k] for k in z.files if k != "__digest__"}
                stored = str(z["__digest__"])
        except Exception as exc:  # unreadable archive
            warnings.warn(f"cache entry {p.name} unreadable ({exc}); recomputing", RuntimeWarning, stacklevel=2)
            self.misses += 1
            return None
        if stored != _digest(arrays):
            warnings.warn(f"cache entry {p.name} failed its hash check; recomputing", RuntimeWarning, stacklevel=2)
            self.misses += 1
            return None
        self.hits += 1
        return arrays

    def get_or_compute(self, kind, key, compute):
        """``compute()`` returns a dict of arrays; stored when not already cached."""
        got = self.load(kind, key)
        if got is not None:
            return got
        arrays = compute()
        self.store(kind, key, arrays)
        return arrays

    # -- typed helpers ------------------------------------------------------

    def mesh(self, key, build, geometry=None):
        def compute():
            m = build()
            return {
                "nodes": m.nodes,
                "triangles": m.triangles,
                "tags": m.tags,
                "boundary_edges": m.boundary_edges,
                "edge_tags": m.edge_tags,
                "num_inclusions": np.array(m.num_inclusions),
            }

        a = self.get_or_compute("mesh", key, compute)
        mesh = Mesh(
            nodes=a["nodes"],
            triangles=a["triangles"],
            tags=a["tags"],
            boundary_edges=a["boundary_edges"],
            edge_tags=a["edge_tags"],
            num_inclusions=int(a["num_inclusions"]),
            geometry=geometry,
        )
        validate_mesh(mesh)
        return mesh

    def basis(self, kind, key, build):
        """Characteristic fields ``R`` and coarse matrix ``A`` under ``basis-<kind>``."""
        def compute():
            R, A = build()
            return {"R": R, "A": A}

        a = self.get_or_compute(f"basis-{kind}", key, compute)
        return a["R"], a["A"]
