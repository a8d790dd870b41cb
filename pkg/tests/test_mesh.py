import json

import numpy as np
import pytest

from viscosim.errors import SchemaError
from viscosim.mesh import (LoadCase, SolidMesh, StateField, build_beam_mesh,
                           extract_surface, load_mesh, save_mesh)


def test_beam_counts_match_closed_forms():
    for nx, ny, nz in [(5, 5, 20), (2, 2, 8), (1, 1, 1), (3, 1, 4)]:
        mesh = build_beam_mesh(10, 10, 40, nx, ny, nz)
        assert mesh.n_nodes == (nx + 1) * (ny + 1) * (nz + 1)
        assert mesh.n_elements == nx * ny * nz


def test_paper_size_beam():
    mesh = build_beam_mesh(10, 10, 40, 5, 5, 20)
    assert mesh.n_elements == 500
    assert mesh.n_nodes == 756


def test_single_brick():
    mesh = build_beam_mesh(1, 1, 1, 1, 1, 1)
    assert mesh.n_nodes == 8
    assert mesh.n_elements == 1
    assert len(mesh.fixed_nodes) == 4          # z=0 face of a unit brick
    assert np.allclose(mesh.rest_positions[mesh.fixed_nodes][:, 2], 0.0)
    assert mesh.surface_triangles.shape == (12, 3)   # 6 quads -> 12 triangles


def test_desk_beam_dimensions():
    mesh = build_beam_mesh(10, 10, 40, 2, 2, 8)
    assert mesh.n_elements == 32
    assert mesh.n_nodes == 81


def test_invalid_beam_arguments():
    with pytest.raises(ValueError):
        build_beam_mesh(0, 1, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        build_beam_mesh(1, 1, 1, 0, 1, 1)


def test_surface_normals_point_outward():
    mesh = build_beam_mesh(2, 2, 2, 2, 2, 2)
    center = mesh.rest_positions.mean(axis=0)
    p = mesh.rest_positions
    tri = mesh.surface_triangles
    normals = np.cross(p[tri[:, 1]] - p[tri[:, 0]], p[tri[:, 2]] - p[tri[:, 0]])
    centroids = p[tri].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", normals, centroids - center) > 0)


def test_single_tet_fixture(tmp_path):
    doc = {
        "schema": "mesh/1",
        "element_kind": "tet4",
        "nodes": [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]],
        "elements": [[0, 1, 2, 3]],
        "fixed": [0],
    }
    path = tmp_path / "tet.json"
    path.write_text(json.dumps(doc))
    mesh = load_mesh(path)
    assert mesh.n_nodes == 4
    assert mesh.n_elements == 1
    assert mesh.surface_triangles.shape == (4, 3)


def test_mesh_round_trip(tmp_path):
    mesh = build_beam_mesh(10, 10, 40, 2, 2, 3)
    path = tmp_path / "beam.json"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert np.array_equal(back.rest_positions, mesh.rest_positions)
    assert np.array_equal(back.elements, mesh.elements)
    assert np.array_equal(back.fixed_nodes, mesh.fixed_nodes)
    assert np.array_equal(back.surface_triangles, mesh.surface_triangles)


def test_out_of_range_element_index(tmp_path):
    doc = {
        "schema": "mesh/1",
        "element_kind": "tet4",
        "nodes": [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]],
        "elements": [[0, 1, 2, 4]],   # node 4 does not exist
        "fixed": [],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match="element 0"):
        load_mesh(path)


def test_bad_schema_and_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        load_mesh(path)
    path.write_text(json.dumps({"schema": "mesh/2", "element_kind": "hex8",
                                "nodes": [], "elements": []}))
    with pytest.raises(SchemaError, match="mesh/1"):
        load_mesh(path)


def test_mixed_element_width_rejected(tmp_path):
    doc = {"schema": "mesh/1", "element_kind": "tet4",
           "nodes": [[0, 0, 0]] * 8,
           "elements": [[0, 1, 2, 3], [0, 1, 2, 3, 4, 5, 6, 7]], "fixed": []}
    path = tmp_path / "mixed.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        load_mesh(path)


def test_directed_edges_sorted_and_symmetric():
    mesh = build_beam_mesh(1, 1, 1, 1, 1, 1)
    src, dst = mesh.directed_edges
    assert src.size == 24                      # 12 undirected brick edges
    pairs = set(zip(src.tolist(), dst.tolist()))
    assert all((b, a) in pairs for a, b in pairs)
    order = np.lexsort((src, dst))
    assert np.array_equal(order, np.arange(src.size))


def test_load_case_validation():
    mesh = build_beam_mesh(1, 1, 1, 1, 1, 1)
    fixed = int(mesh.fixed_nodes[0])
    with pytest.raises(ValueError, match="Dirichlet"):
        LoadCase((fixed,), np.array([1.0, 0, 0])).check_against(mesh)
    with pytest.raises(ValueError):
        LoadCase((0,), np.array([np.inf, 0, 0]))


def test_state_field_rest():
    mesh = build_beam_mesh(1, 1, 2, 1, 1, 2)
    state = StateField.rest(mesh)
    assert state.n_nodes == mesh.n_nodes
    assert np.array_equal(state.q, mesh.rest_positions)
    assert not state.v.any() and not state.sigma.any()
    node = state.node(3)
    assert node.z.shape == (12,)
