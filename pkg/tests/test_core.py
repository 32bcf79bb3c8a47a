"""Mesh representation, I/O, validation, normalization, adjacency."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshlearn.core import (NONE, Mesh, MeshError, build_adjacency,
                            compute_geometry, euler_characteristic, load_mesh,
                            load_obj, load_off, normalize_mesh, save_off,
                            validate_mesh)
from meshlearn.data import box, icosahedron, icosphere, torus

from conftest import (closed_corpus, jitter_mesh, rigid_transform,
                      single_triangle, tetrahedron)
from oracles import oracle_adjacency


# ---------------------------------------------------------------------------
# file I/O


def test_load_off_minimal_triangle():
    mesh = load_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    assert mesh.num_vertices == 3
    assert mesh.num_faces == 1
    assert mesh.faces.tolist() == [[0, 1, 2]]


def test_load_off_header_on_counts_line():
    mesh = load_off("OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    assert (mesh.num_vertices, mesh.num_faces) == (3, 1)


def test_load_off_quad_rejected_with_line_number():
    text = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"
    with pytest.raises(MeshError, match="non-triangle face at line 7"):
        load_off(text)


def test_load_off_index_out_of_range():
    with pytest.raises(MeshError, match="out of range"):
        load_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n")


def test_load_off_truncated():
    with pytest.raises(MeshError, match="truncated"):
        load_off("OFF\n3 1 0\n0 0 0\n1 0 0\n")


def test_load_obj_quad_rejected():
    text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"
    with pytest.raises(MeshError, match="non-triangle face at line 5"):
        load_obj(text)


def test_load_obj_with_subindices_and_negative_indices():
    text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 -1\n"
    mesh = load_obj(text)
    assert mesh.faces.tolist() == [[0, 1, 2]]


def test_load_mesh_format_sniffing():
    off = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
    obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"
    assert load_mesh(off).num_faces == 1
    assert load_mesh(obj).num_faces == 1
    assert load_mesh(off.encode()).num_faces == 1


def test_save_off_round_trip_bit_exact(rng):
    mesh = jitter_mesh(icosahedron(), rng)
    buf = io.StringIO()
    save_off(mesh, buf)
    back = load_off(buf.getvalue())
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.faces, mesh.faces)


def test_tetrahedron_off_euler():
    buf = io.StringIO()
    save_off(tetrahedron(), buf)
    mesh = load_off(buf.getvalue())
    assert (mesh.num_vertices, mesh.num_faces) == (4, 4)
    assert euler_characteristic(mesh) == 2


# ---------------------------------------------------------------------------
# validation


def test_validate_tetrahedron():
    report = validate_mesh(tetrahedron())
    assert report.manifold and report.oriented
    assert report.border_edges == 0
    assert report.degenerate_faces == [] and report.invalid_faces == []
    assert report.ok


def test_validate_single_triangle_borders():
    report = validate_mesh(single_triangle())
    assert report.manifold
    assert report.border_edges == 3


def test_validate_misoriented_pair():
    # two triangles traversing the shared edge (1, 2) in the same direction
    v = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
    f = np.array([[0, 1, 2], [3, 1, 2]])
    report = validate_mesh(Mesh(v, f))
    assert not report.oriented
    assert not report.ok


def test_validate_nonmanifold_edge():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1]])
    f = np.array([[0, 1, 2], [0, 1, 3], [1, 0, 4]])
    report = validate_mesh(Mesh(v, f))
    assert not report.manifold
    assert (0, 1) in report.nonmanifold_edges


def test_validate_degenerate_and_invalid_faces():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]])
    f = np.array([[0, 1, 2], [0, 1, 1], [0, 1, 3]])
    report = validate_mesh(Mesh(v, f))
    assert report.degenerate_faces == [0]   # collinear
    assert report.invalid_faces == [1]      # repeated index


# ---------------------------------------------------------------------------
# normalization


def test_normalize_triangle_example():
    mesh = Mesh(np.array([[0.0, 0, 0], [2, 0, 0], [0, 2, 0]]),
                np.array([[0, 1, 2]]))
    out = normalize_mesh(mesh)
    assert np.allclose(out.vertices.mean(axis=0), 0, atol=1e-12)
    assert abs(np.linalg.norm(out.vertices, axis=1).max() - 1.0) <= 1e-12


def test_normalize_idempotent(rng):
    mesh = jitter_mesh(icosphere(1), rng)
    once = normalize_mesh(mesh)
    twice = normalize_mesh(once)
    assert np.allclose(once.vertices, twice.vertices, atol=1e-12)


def test_normalize_similarity_invariance():
    mesh = jitter_mesh(icosahedron(), np.random.default_rng(5))
    moved = mesh.with_geometry(mesh.vertices * 7.0 + np.array([5.0, 5, 5]))
    a = normalize_mesh(mesh).vertices
    b = normalize_mesh(moved).vertices
    assert np.allclose(a, b, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(0.01, 100), tx=st.floats(-50, 50),
       ty=st.floats(-50, 50), tz=st.floats(-50, 50))
def test_normalize_similarity_invariance_property(scale, tx, ty, tz):
    mesh = jitter_mesh(icosahedron(), np.random.default_rng(11))
    moved = mesh.with_geometry(mesh.vertices * scale + np.array([tx, ty, tz]))
    assert np.allclose(normalize_mesh(mesh).vertices,
                       normalize_mesh(moved).vertices, atol=1e-9)


def test_normalize_zero_scale_error():
    mesh = Mesh(np.zeros((3, 3)), np.array([[0, 1, 2]]))
    with pytest.raises(MeshError, match="zero scale|coincident"):
        normalize_mesh(mesh)


# ---------------------------------------------------------------------------
# adjacency


def test_adjacency_tetrahedron_total_tie():
    adj = build_adjacency(tetrahedron())
    # all edges equal length: tie-break is ascending neighbor index
    assert adj.neighbors[0].tolist() == [1, 2, 3]
    for f in range(4):
        assert sorted(adj.neighbors[f].tolist()) == sorted(set(range(4)) - {f})


def test_adjacency_single_triangle_all_none():
    adj = build_adjacency(single_triangle())
    assert adj.neighbors.tolist() == [[NONE, NONE, NONE]]


def test_adjacency_symmetry_icosahedron():
    adj = build_adjacency(icosahedron())
    for f in range(20):
        for g in adj.neighbors[f]:
            assert f in adj.neighbors[g]


def test_adjacency_matches_oracle_icosahedron():
    mesh = icosahedron()
    adj = build_adjacency(mesh)
    nb, se = oracle_adjacency(mesh)
    assert np.array_equal(adj.neighbors, nb)
    assert np.array_equal(adj.shared_edges, se)


def test_adjacency_matches_oracle_corpus_200():
    # every corpus mesh up to 200 faces, plus a couple larger shapes
    meshes = closed_corpus(seeds=range(12)) + [icosphere(1), torus(10, 10),
                                               single_triangle()]
    for mesh in meshes:
        assert mesh.num_faces <= 200
        adj = build_adjacency(mesh)
        nb, se = oracle_adjacency(mesh)
        assert np.array_equal(adj.neighbors, nb), mesh.name
        assert np.array_equal(adj.shared_edges, se), mesh.name


def test_adjacency_nonmanifold_raises():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1]])
    f = np.array([[0, 1, 2], [0, 1, 3], [1, 0, 4]])
    with pytest.raises(MeshError, match=r"non-manifold edge \(0, 1\)"):
        build_adjacency(Mesh(v, f))


def test_adjacency_rigid_transform_bit_identical():
    base = jitter_mesh(icosphere(1), np.random.default_rng(7))
    ref = build_adjacency(base)
    rng = np.random.default_rng(21)
    for _ in range(20):
        moved = rigid_transform(base, rng, scale=True)
        adj = build_adjacency(moved)
        assert np.array_equal(adj.neighbors, ref.neighbors)
        assert np.array_equal(adj.shared_edges, ref.shared_edges)


def test_closed_meshes_have_no_none_slots():
    for mesh in [tetrahedron(), icosahedron(), box(2), torus(6, 4)]:
        adj = build_adjacency(mesh)
        assert (adj.neighbors != NONE).all()
        assert compute_geometry(mesh).face_areas.sum() > 0


# ---------------------------------------------------------------------------
# geometry


def test_face_normal_ccw_triangle():
    geo = compute_geometry(single_triangle())
    assert np.allclose(geo.face_normals[0], [0, 0, 1], atol=1e-12)
    assert np.allclose(geo.face_centroids[0], [1 / 3, 1 / 3, 0], atol=1e-15)
    assert np.isclose(geo.face_areas[0], 0.5)


def test_flat_square_vertex_normals():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    f = np.array([[0, 1, 2], [0, 2, 3]])
    geo = compute_geometry(Mesh(v, f))
    assert np.allclose(geo.vertex_normals, [[0, 0, 1]] * 4, atol=1e-12)


def test_icosahedron_vertex_normals_equal_positions():
    mesh = icosahedron()
    geo = compute_geometry(mesh)
    assert np.allclose(geo.vertex_normals, mesh.vertices, atol=1e-6)


def test_compute_geometry_zero_area_raises():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
    with pytest.raises(MeshError, match="zero-area face 0"):
        compute_geometry(Mesh(v, np.array([[0, 1, 2]])))


def test_geometry_centroids_and_unit_normals_corpus():
    for mesh in closed_corpus(seeds=range(6)):
        geo = compute_geometry(mesh)
        assert np.allclose(geo.face_centroids,
                           mesh.vertices[mesh.faces].mean(axis=1), atol=1e-12)
        assert np.allclose(np.linalg.norm(geo.face_normals, axis=1), 1, atol=1e-9)
        assert np.allclose(np.linalg.norm(geo.vertex_normals, axis=1), 1, atol=1e-9)


# ---------------------------------------------------------------------------
# Euler characteristic


def test_euler_characteristics():
    assert euler_characteristic(tetrahedron()) == 2
    assert euler_characteristic(icosahedron()) == 2
    assert euler_characteristic(icosphere(2)) == 2
    assert euler_characteristic(box(3)) == 2
    assert euler_characteristic(torus(8, 5)) == 0
