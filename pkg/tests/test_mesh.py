import json

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from conftest import regular_polygon
from hcexpand.errors import GeometryError, MeshFormatError, MeshValidationError, ResolutionError
from hcexpand.mesh import (
    Disk,
    GeometrySpec,
    Mesh,
    Polygon,
    Rectangle,
    generate_mesh,
    load_mesh,
    mesh_from_dict,
    mesh_quality,
    mesh_to_dict,
    refine_uniform,
    save_mesh,
    validate_mesh,
)


def test_square_without_inclusions_h_half():
    m = generate_mesh(GeometrySpec(Rectangle(0, 0, 1, 1), (), 0.5))
    assert m.num_triangles == 8
    assert np.isclose(m.areas.sum(), 1.0)
    assert m.num_inclusions == 0


def test_disk_inclusion_tagging(disk_mesh):
    area = disk_mesh.tag_area(1)
    assert abs(area - np.pi * 0.04) / (np.pi * 0.04) < 0.05
    assert np.isclose(disk_mesh.areas.sum(), 1.0)
    # every interface node sits on the circle
    pts = disk_mesh.nodes[disk_mesh.interface_nodes(1)]
    assert np.allclose(np.hypot(pts[:, 0] - 0.5, pts[:, 1] - 0.5), 0.2, atol=1e-12)


def test_interface_nodes_belong_to_both_regions(disk_mesh):
    iface = disk_mesh.interface_nodes(1)
    indptr, elems = disk_mesh.node_elements
    for v in iface[:10]:
        tags = set(disk_mesh.tags[elems[indptr[v]:indptr[v + 1]]].tolist())
        assert tags == {0, 1}


def test_outer_nodes_on_boundary(disk_mesh):
    pts = disk_mesh.nodes[disk_mesh.outer_nodes]
    on = np.isclose(pts, 0.0) | np.isclose(pts, 1.0)
    assert on.any(axis=1).all()


def test_thirty_six_inclusions(thirty_six_mesh):
    m = thirty_six_mesh
    assert m.num_inclusions == 36
    for k in range(1, 37):
        assert m.tag_area(k) > 0.8 * np.pi * 0.07**2
    assert mesh_quality(m).min_angle > 15


def test_polygon_inclusion():
    poly = Polygon(((0.3, 0.3), (0.7, 0.3), (0.7, 0.7), (0.3, 0.7)))
    m = generate_mesh(GeometrySpec(Rectangle(0, 0, 1, 1), (poly,), 1 / 16))
    assert np.isclose(m.tag_area(1), 0.16, rtol=1e-10)


def test_overlapping_inclusions_rejected():
    spec = GeometrySpec(Rectangle(0, 0, 1, 1), (Disk(0.4, 0.5, 0.15), Disk(0.6, 0.5, 0.15)), 0.05)
    with pytest.raises(GeometryError):
        generate_mesh(spec)


def test_inclusion_touching_boundary_rejected():
    with pytest.raises(GeometryError):
        generate_mesh(GeometrySpec(Rectangle(0, 0, 1, 1), (Disk(0.1, 0.5, 0.1),), 0.02))


def test_unresolved_inclusion_raises_resolution_error():
    with pytest.raises(ResolutionError):
        generate_mesh(GeometrySpec(Rectangle(0, 0, 1, 1), (Disk(0.5, 0.5, 0.01),), 0.2))


def test_refine_quarters_triangles_and_keeps_tags(disk_mesh):
    fine = refine_uniform(disk_mesh)
    assert fine.num_triangles == 4 * disk_mesh.num_triangles
    assert np.isclose(fine.areas.sum(), 1.0)
    # snapped interface stays on the circle, so inclusion area grows toward pi r^2
    assert abs(fine.tag_area(1) - np.pi * 0.04) < abs(disk_mesh.tag_area(1) - np.pi * 0.04)
    assert mesh_quality(fine).h < 0.6 * mesh_quality(disk_mesh).h
    validate_mesh(fine)


def test_roundtrip_io(tmp_path, disk_mesh):
    p = tmp_path / "m.json"
    save_mesh(disk_mesh, p)
    back = load_mesh(p)
    assert back.same_structure(disk_mesh)
    assert np.array_equal(back.nodes, disk_mesh.nodes)


def test_malformed_file(tmp_path, disk_mesh):
    d = mesh_to_dict(disk_mesh)
    d["triangles"][3] = [0, 1]
    with pytest.raises(MeshFormatError):
        mesh_from_dict(d)
    d = mesh_to_dict(disk_mesh)
    d["extra"] = 1
    with pytest.raises(MeshFormatError):
        mesh_from_dict(d)
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(MeshFormatError):
        load_mesh(p)


def test_inverted_triangle_names_element(disk_mesh):
    d = mesh_to_dict(disk_mesh)
    t = d["triangles"][5]
    d["triangles"][5] = [t[1], t[0], t[2]]
    with pytest.raises(MeshValidationError, match="5"):
        mesh_from_dict(d)


def test_inconsistent_edges_detected(disk_mesh):
    d = mesh_to_dict(disk_mesh)
    k = next(i for i, e in enumerate(d["boundary_edges"]) if e[2] == 0)
    d["boundary_edges"][k][2] = 1
    with pytest.raises(MeshValidationError):
        mesh_from_dict(d)


def test_arrays_are_read_only(disk_mesh):
    with pytest.raises(ValueError):
        disk_mesh.nodes[0, 0] = 3.0


@settings(max_examples=12, deadline=None)
@given(
    cx=st.floats(0.35, 0.65),
    cy=st.floats(0.35, 0.65),
    r=st.floats(0.08, 0.2),
    h=st.sampled_from([1 / 10, 1 / 14, 1 / 20]),
)
def test_random_single_disk_meshes_are_valid(cx, cy, r, h):
    assume(min(cx, cy, 1 - cx, 1 - cy) - r >= 2 * h)
    m = generate_mesh(GeometrySpec(Rectangle(0, 0, 1, 1), (Disk(cx, cy, r),), h))
    validate_mesh(m)
    assert np.isclose(m.areas.sum(), 1.0)
    assert (m.areas > 0).all()
    assert m.interface_nodes(1).size >= 8


@settings(max_examples=8, deadline=None)
@given(n=st.integers(5, 16), r=st.floats(0.1, 0.3))
def test_regular_polygons_mesh_exactly(n, r):
    poly = regular_polygon(n, r)
    m = generate_mesh(GeometrySpec(Rectangle(0, 0, 1, 1), (poly,), 1 / 16))
    assert np.isclose(m.tag_area(1), poly.area, rtol=1e-9)
