import json
import math

import numpy as np
import pytest

from brinkman_vem.core.errors import MeshError, MeshFormatError, MeshGenerationError, TaggingError
from brinkman_vem.models.geometry import BackwardStep, CylinderChannel, Everywhere, HalfPlane, TagRule
from brinkman_vem.services.mesh import (
    DEFAULT_TAG,
    PolygonalMesh,
    fan_apex,
    generate,
    kernel_chebyshev,
    outward_normals,
    quality,
    read_mesh,
    tag_boundary,
    write_mesh,
)

LID_RULES = [
    TagRule(tag="lid", where=HalfPlane(a=0.0, b=-1.0, c=-1.0)),
    TagRule(tag="wall", where=Everywhere()),
]


def _is_convex(points):
    d = np.roll(points, -1, axis=0) - points
    cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
    return bool(np.all(cross > -1e-12))


def test_quad_grid_counts():
    mesh = generate("quad", 64)
    assert mesh.n_cells == 64
    assert mesh.n_vertices == 81
    assert mesh.n_edges == 144
    assert mesh.h == pytest.approx(math.sqrt(2) / 8)
    assert mesh.tags == [DEFAULT_TAG]
    assert len(mesh.boundary_edges) == 32


def test_triangle_grid_counts():
    mesh = generate("triangle", 128)
    assert mesh.n_cells == 128
    assert mesh.n_vertices == 81
    assert float(mesh.areas.sum()) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "family, n_cells",
    [("quad", 7), ("triangle", 7), ("triangle", 36), ("quad", 3), ("nonconvex", 2)],
)
def test_impossible_cell_counts_are_rejected(family, n_cells):
    with pytest.raises(MeshGenerationError):
        generate(family, n_cells)


@pytest.mark.parametrize("n_cells", [16, 64])
def test_nonconvex_family_has_reentrant_star_shaped_cells(n_cells):
    mesh = generate("nonconvex", n_cells)
    assert mesh.n_cells == n_cells
    assert float(mesh.areas.sum()) == pytest.approx(1.0)
    assert not any(_is_convex(mesh.cell_points(c)) for c in range(mesh.n_cells))
    report = quality(mesh)
    assert all(report.star_shaped)
    assert report.min_kernel_ratio > 0.0


@pytest.mark.parametrize(
    "family, n_cells", [("quad", 16), ("triangle", 32), ("nonconvex", 16), ("voronoi", 40)]
)
def test_interior_edge_normals_are_antiparallel(family, n_cells):
    mesh = generate(family, n_cells, seed=3)
    normals = {}
    for c in range(mesh.n_cells):
        cell_normals, _ = outward_normals(mesh.cell_points(c))
        for local, edge in enumerate(mesh.cell_edges[c]):
            normals.setdefault(int(edge), []).append(cell_normals[local])
    interior = [pair for pair in normals.values() if len(pair) == 2]
    assert len(interior) == sum(len(cells) == 2 for cells in mesh.edge_cells)
    for first, second in interior:
        assert first + second == pytest.approx(np.zeros(2), abs=1e-12)


@pytest.mark.parametrize("family, sizes", [("quad", (16, 64, 256)), ("triangle", (32, 128, 512))])
def test_mesh_size_halves_on_structured_levels(family, sizes):
    meshes = [generate(family, n) for n in sizes]
    for mesh in meshes:
        assert mesh.mean_h == pytest.approx(mesh.h, rel=1e-12)
    for coarse, fine in zip(meshes, meshes[1:]):
        assert fine.h == pytest.approx(0.5 * coarse.h, rel=1e-12)


def test_voronoi_is_deterministic_for_a_seed():
    first = generate("voronoi", 64, seed=3)
    second = generate("voronoi", 64, seed=3)
    other = generate("voronoi", 64, seed=4)
    assert first.n_cells == 64
    assert np.array_equal(first.vertices, second.vertices)
    assert [c.tolist() for c in first.cells] == [c.tolist() for c in second.cells]
    assert not np.array_equal(first.vertices, other.vertices) or first.n_vertices != other.n_vertices
    assert float(first.areas.sum()) == pytest.approx(1.0)


@pytest.mark.parametrize("family, n_cells", [("quad", 16), ("triangle", 32), ("quad", 64)])
def test_backward_step_lattice(family, n_cells):
    mesh = generate(family, n_cells, domain=BackwardStep())
    assert mesh.n_cells == n_cells
    assert float(mesh.areas.sum()) == pytest.approx(16.0)


def test_backward_step_voronoi_covers_domain():
    mesh = generate("voronoi", 128, seed=2, domain=BackwardStep())
    assert float(mesh.areas.sum()) == pytest.approx(16.0)


def test_backward_step_rejects_lattice_counts():
    with pytest.raises(MeshGenerationError):
        generate("quad", 20, domain=BackwardStep())
    with pytest.raises(MeshGenerationError):
        generate("nonconvex", 16, domain=BackwardStep())


def test_cylinder_channel_triangulation():
    domain = CylinderChannel()
    mesh = generate("triangle", 2048, seed=0, domain=domain)
    assert 1024 < mesh.n_cells < 3072
    area = float(mesh.areas.sum())
    assert domain.area <= area < domain.length * domain.height
    assert area == pytest.approx(domain.area, rel=0.01)
    with pytest.raises(MeshGenerationError):
        generate("quad", 2048, domain=domain)


def test_cylinder_channel_too_coarse():
    with pytest.raises(MeshGenerationError):
        generate("triangle", 16, domain=CylinderChannel())


def test_tagging_first_rule_wins():
    mesh = tag_boundary(generate("quad", 16), LID_RULES)
    assert mesh.tags == ["lid", "wall"]
    lid = [e for e in mesh.boundary_edges if e.tag == "lid"]
    assert len(lid) == 4
    for edge in lid:
        assert mesh.edge_midpoint(edge.start, edge.end)[1] == pytest.approx(1.0)


def test_tagging_reports_unmatched_edges():
    with pytest.raises(TaggingError) as info:
        tag_boundary(generate("quad", 16), LID_RULES[:1])
    assert len(info.value.edges) == 12


def test_invalid_cells_are_rejected():
    square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    with pytest.raises(MeshError):
        PolygonalMesh.from_cells(square, [[0, 3, 2, 1]])
    with pytest.raises(MeshError):
        PolygonalMesh.from_cells(square, [[0, 1, 3, 2]])
    with pytest.raises(MeshError):
        PolygonalMesh.from_cells(square, [[0, 1]])


def test_kernel_of_unit_square():
    points = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    center, radius = kernel_chebyshev(points)
    assert center == pytest.approx([0.5, 0.5])
    assert radius == pytest.approx(0.5)
    assert fan_apex(points, np.array([0.5, 0.5]), math.sqrt(2)) == pytest.approx([0.5, 0.5])


def test_fan_apex_moves_into_kernel_of_l_shape():
    # centroid of this L lies outside its kernel
    points = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 0.2], [0.2, 0.2], [0.2, 3.0], [0.0, 3.0]])
    centroid = points.mean(axis=0)
    apex = fan_apex(points, centroid, 3.0 * math.sqrt(2))
    assert 0.0 < apex[0] < 0.2 and 0.0 < apex[1] < 0.2


def test_mesh_file_round_trip(tmp_path):
    mesh = tag_boundary(generate("nonconvex", 9), LID_RULES)
    path = write_mesh(mesh, tmp_path / "sub" / "mesh.json")
    loaded = read_mesh(path)
    assert np.allclose(loaded.vertices, mesh.vertices)
    assert loaded.boundary == mesh.boundary
    assert loaded.n_cells == mesh.n_cells


def test_mesh_file_errors(tmp_path):
    with pytest.raises(MeshFormatError):
        read_mesh(tmp_path / "missing.json")

    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json")
    with pytest.raises(MeshFormatError) as info:
        read_mesh(bad_json)
    assert "line 1" in str(info.value)

    missing_key = tmp_path / "partial.json"
    missing_key.write_text(json.dumps({"vertices": [[0, 0]], "boundary": []}))
    with pytest.raises(MeshFormatError) as info:
        read_mesh(missing_key)
    assert "missing key 'cells'" in str(info.value)

    out_of_range = tmp_path / "range.json"
    out_of_range.write_text(
        json.dumps({"vertices": [[0, 0], [1, 0], [0, 1]], "cells": [[0, 1, 5]], "boundary": []})
    )
    with pytest.raises(MeshFormatError) as info:
        read_mesh(out_of_range)
    assert "vertex 5" in str(info.value)

    untagged = tmp_path / "untagged.json"
    untagged.write_text(
        json.dumps({"vertices": [[0, 0], [1, 0], [0, 1]], "cells": [[0, 1, 2]], "boundary": []})
    )
    with pytest.raises(MeshFormatError):
        read_mesh(untagged)
