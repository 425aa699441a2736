import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmofem.errors import GeometryError, MeshBoundsError
from bmofem.mesh import (
    Mesh,
    build_uniform_mesh,
    cell_areas,
    interior_vertex_indices,
    mesh_to_text,
    refine,
    shape_regularity_ratio,
)

# diameter / inradius of a right isoceles triangle with legs h:
# sqrt(2) h / ((2 - sqrt(2)) h / 2) = 2 + 2 sqrt(2)
STRUCTURED_RATIO = 2.0 + 2.0 * math.sqrt(2.0)


def test_level0_base_decomposition():
    m = build_uniform_mesh(0)
    assert m.num_cells == 2
    assert m.num_vertices == 4
    assert m.boundary_vertex_flags.all()


def test_level1_counts_and_interior_vertex():
    m = build_uniform_mesh(1)
    assert m.num_cells == 8
    assert m.num_vertices == 9
    interior = interior_vertex_indices(m)
    assert interior.size == 1
    assert np.allclose(m.vertices[interior[0]], [0.5, 0.5])


def test_level3_measure_additivity():
    m = build_uniform_mesh(3)
    assert m.num_cells == 128
    assert abs(cell_areas(m).sum() - 1.0) <= 1e-12


@settings(deadline=None, max_examples=8)
@given(level=st.integers(min_value=0, max_value=5))
def test_structured_counts(level):
    m = build_uniform_mesh(level)
    n = 2**level
    assert m.num_cells == 2 * n * n
    assert m.num_vertices == (n + 1) ** 2
    assert interior_vertex_indices(m).size == (n - 1) ** 2
    assert abs(cell_areas(m).sum() - 1.0) <= 1e-12
    assert (cell_areas(m) > 0).all()


def test_level_bounds_error():
    with pytest.raises(MeshBoundsError, match="12"):
        build_uniform_mesh(13)
    with pytest.raises(MeshBoundsError):
        build_uniform_mesh(-1)


def test_refine_matches_next_level():
    coarse = build_uniform_mesh(0)
    fine = refine(coarse)
    direct = build_uniform_mesh(1)
    assert np.array_equal(fine.vertices, direct.vertices)
    assert np.array_equal(fine.cells, direct.cells)
    assert np.array_equal(fine.boundary_vertex_flags, direct.boundary_vertex_flags)


def test_refine_nesting():
    coarse = build_uniform_mesh(2)
    fine = refine(coarse)
    # vertex set of the parent is a subset of the child vertex set
    coarse_set = {tuple(v) for v in coarse.vertices}
    fine_set = {tuple(v) for v in fine.vertices}
    assert coarse_set <= fine_set
    # each parent cell is the union of four children: count children whose
    # centroid lies in each parent, and match areas
    fine_centroids = fine.vertices[fine.cells].mean(axis=1)
    fine_area = np.abs(cell_areas(fine))
    coarse_coords = coarse.vertices[coarse.cells]
    for k in range(coarse.num_cells):
        v0, v1, v2 = coarse_coords[k]
        d = np.column_stack([v1 - v0, v2 - v0])
        bary = np.linalg.solve(d, (fine_centroids - v0).T).T
        inside = (bary[:, 0] >= -1e-14) & (bary[:, 1] >= -1e-14) & (
            bary.sum(axis=1) <= 1 + 1e-14
        )
        assert inside.sum() == 4
        assert abs(fine_area[inside].sum() - np.abs(cell_areas(coarse))[k]) <= 1e-14


def test_refinement_scaling():
    coarse = build_uniform_mesh(1)
    fine = refine(coarse)
    assert np.allclose(fine.cell_diameters, coarse.cell_diameters[0] / 2.0)
    assert np.allclose(np.abs(cell_areas(fine)), np.abs(cell_areas(coarse))[0] / 4.0)


def test_conformity_edge_structure():
    m = build_uniform_mesh(3)
    edges = Counter()
    for tri in m.cells:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            edges[frozenset((tri[a], tri[b]))] += 1
    assert set(edges.values()) <= {1, 2}
    boundary_edges = [e for e, c in edges.items() if c == 1]
    # every boundary edge connects two boundary vertices
    for e in boundary_edges:
        assert all(m.boundary_vertex_flags[v] for v in e)
    assert len(boundary_edges) == 4 * 2**3


def test_shape_regularity_structured_all_levels():
    for level in range(5):
        ratio = shape_regularity_ratio(build_uniform_mesh(level))
        assert ratio == pytest.approx(STRUCTURED_RATIO, rel=1e-12)


def test_shape_regularity_equilateral():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])
    m = Mesh(
        vertices=verts,
        cells=np.array([[0, 1, 2]]),
        boundary_vertex_flags=np.ones(3, dtype=bool),
        level=0,
        cell_diameters=np.array([1.0]),
    )
    assert shape_regularity_ratio(m) == pytest.approx(2.0 * math.sqrt(3.0), rel=1e-12)


def test_shape_regularity_degrades_under_perturbation():
    base = build_uniform_mesh(1)
    verts = base.vertices.copy()
    center = np.flatnonzero((verts[:, 0] == 0.5) & (verts[:, 1] == 0.5))[0]
    verts[center] += [0.07, 0.03]
    perturbed = Mesh(
        vertices=verts,
        cells=base.cells,
        boundary_vertex_flags=base.boundary_vertex_flags,
        level=base.level,
        cell_diameters=base.cell_diameters,
    )
    assert shape_regularity_ratio(perturbed) > shape_regularity_ratio(base)


def test_shape_regularity_degenerate_cell_error():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    m = Mesh(
        vertices=verts,
        cells=np.array([[0, 1, 2]]),
        boundary_vertex_flags=np.ones(3, dtype=bool),
        level=0,
        cell_diameters=np.array([2.0]),
    )
    with pytest.raises(GeometryError, match="cell 0"):
        shape_regularity_ratio(m)


def test_mesh_is_immutable():
    m = build_uniform_mesh(1)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
    with pytest.raises(ValueError):
        m.cells[0, 0] = 7


def test_mesh_export_format():
    m = build_uniform_mesh(0)
    text = mesh_to_text(m)
    lines = text.strip().split("\n")
    assert len(lines) == m.num_vertices + m.num_cells
    assert lines[0].split() == ["v", "0.0", "0.0", "1"]
    cell_lines = [l for l in lines if l.startswith("c ")]
    assert len(cell_lines) == 2
    first = cell_lines[0].split()
    assert first[0] == "c" and all(tok.isdigit() for tok in first[1:])
