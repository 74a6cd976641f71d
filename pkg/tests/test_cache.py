import numpy as np
import pytest

from hcexpand.cache import ArtifactCache, array_key, mesh_key
from hcexpand.localized import localized_characteristics
from hcexpand.mesh import generate_mesh
from hcexpand.pressure import ProblemSpec, expand, scalar_system


def test_store_load_roundtrip(tmp_path):
    c = ArtifactCache(tmp_path)
    arrays = {"R": np.arange(6.0).reshape(3, 2), "A": np.eye(2)}
    c.store("basis", "k1", arrays)
    got = c.load("basis", "k1")
    for k in arrays:
        np.testing.assert_array_equal(got[k], arrays[k])
    assert c.load("basis", "missing") is None


def test_corrupt_entry_recomputed_with_warning(tmp_path):
    c = ArtifactCache(tmp_path)
    c.store("basis", "k", {"R": np.ones(4)})
    p = c.path("basis", "k")
    with np.load(p) as z:
        d = {k: z[k] for k in z.files}
    d["R"] = d["R"] * 2  # content no longer matches its digest
    np.savez(p, **d)
    calls = []
    with pytest.warns(RuntimeWarning, match="hash check"):
        out = c.get_or_compute("basis", "k", lambda: calls.append(1) or {"R": np.zeros(4)})
    assert calls == [1]
    np.testing.assert_array_equal(out["R"], 0)
    assert c.load("basis", "k") is not None


def test_mesh_cache_skips_generation(tmp_path, disk_mesh):
    c = ArtifactCache(tmp_path)
    built = []

    def build():
        built.append(1)
        return disk_mesh

    m1 = c.mesh("g", build, disk_mesh.geometry)
    m2 = c.mesh("g", build, disk_mesh.geometry)
    assert built == [1]
    assert m1.same_structure(disk_mesh) and m2.same_structure(disk_mesh)


def test_basis_cache_identical_and_series_unchanged(tmp_path, disk_mesh):
    c = ArtifactCache(tmp_path)
    eng = scalar_system(disk_mesh).engine
    R, A = c.basis("scalar", mesh_key(disk_mesh), lambda: (eng.basis.R, eng.basis.A))
    R2, A2 = c.basis("scalar", mesh_key(disk_mesh), lambda: pytest.fail("should be cached"))
    np.testing.assert_array_equal(R, R2)
    np.testing.assert_array_equal(A, A2)
    ref = expand(ProblemSpec(disk_mesh, 10.0, 1.0), 4).terms
    eng.set_basis(R2, A2)
    again = expand(ProblemSpec(disk_mesh, 1e3, 1.0), 4).terms
    for a, b in zip(ref, again):
        np.testing.assert_array_equal(a, b)


def test_keys_react_to_delta_and_nu(disk_mesh):
    k = mesh_key(disk_mesh)
    assert array_key(k, "localized", 0.1) != array_key(k, "localized", 0.2)
    assert array_key(k, "elastic", 0.3) != array_key(k, "elastic", 0.25)
    # contrast is not part of any key: terms do not depend on it
    assert array_key(k, "scalar") == array_key(k, "scalar")
