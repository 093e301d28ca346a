import io

import numpy as np
import pytest

from mixedgreen.geometry import BoundaryDecomposition, PolygonalDomain, Segment
from mixedgreen.mesh import (
    TRI_QUAD,
    MeshError,
    dump_mesh,
    graded_refine_toward,
    load_mesh,
    rectangle_mesh,
    refine,
    triangulate,
)

from conftest import BOTTOM, LEFT, UNIT_SQUARE, square


def _conforming(mesh):
    """Every interior edge has two triangles, every boundary edge one."""
    et = mesh.edge_triangles
    n_adj = (et >= 0).sum(axis=1)
    on_b = np.zeros(len(mesh.edges), dtype=bool)
    on_b[mesh.boundary_edge_index] = True
    return np.all(n_adj[on_b] == 1) and np.all(n_adj[~on_b] == 2)


def test_triangulate_square_half():
    dom, dec = square([BOTTOM])
    m = triangulate(dom, dec, 0.5)
    assert m.h <= 0.5
    assert m.n_triangles >= 8
    assert np.all(m.areas > 0)
    assert m.min_angle >= 20.0
    assert _conforming(m)


def test_area_sum_matches_polygon():
    dom = PolygonalDomain([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)], M=2, R0=0.125)
    dec = BoundaryDecomposition.from_edges(dom, [0])
    m = triangulate(dom, dec, 0.1)
    assert m.total_area() == pytest.approx(dom.area, rel=1e-12)


def test_transition_point_is_node():
    dom = PolygonalDomain(UNIT_SQUARE, M=2, R0=0.25)
    dec = BoundaryDecomposition(dom, (Segment(1, 0.0, 0.3, "D"),), default="N")
    m = triangulate(dom, dec, 0.2)
    assert np.min(np.hypot(*(m.nodes - [1.0, 0.3]).T)) < 1e-14
    # labels switch exactly at the transition point
    be = m.boundary_edges
    mids = m.nodes[be].mean(axis=1)
    right = np.abs(mids[:, 0] - 1) < 1e-12
    assert np.all(m.boundary_labels[right & (mids[:, 1] < 0.3)] == "D")
    assert np.all(m.boundary_labels[right & (mids[:, 1] > 0.3)] == "N")


def test_target_h_zero_rejected():
    dom, dec = square([BOTTOM])
    with pytest.raises(MeshError):
        triangulate(dom, dec, 0.0)


def test_node_budget():
    dom, dec = square([BOTTOM])
    with pytest.raises(MeshError):
        triangulate(dom, dec, 1e-4)
    with pytest.raises(MeshError):
        refine(triangulate(dom, dec, 0.25), max_nodes=50)


def test_refine_two_triangle_square():
    dom, dec = square([BOTTOM])
    m = rectangle_mesh(dom, dec, 1)
    assert m.n_triangles == 2
    r = refine(m)
    assert r.n_triangles == 8
    assert r.h == pytest.approx(m.h / 2)
    assert len(r.boundary_edges) == 2 * len(m.boundary_edges)
    for lab in "DN":
        assert (r.boundary_labels == lab).sum() == 2 * (m.boundary_labels == lab).sum()
    assert _conforming(r)


def test_refine_halves_h():
    dom, dec = square([BOTTOM, LEFT])
    m = triangulate(dom, dec, 0.5)
    r = refine(m)
    assert r.h == pytest.approx(0.5 * m.h)
    assert r.n_triangles == 4 * m.n_triangles
    assert r.min_angle == pytest.approx(m.min_angle)
    assert np.array_equal(r.dirichlet_nodes[: m.n_nodes], m.dirichlet_nodes)


def test_graded_refinement():
    dom, dec = square([BOTTOM])
    m = triangulate(dom, dec, 0.125)
    x = np.array([0.5, 0.5])
    levels = []
    for lv in range(4):
        g = graded_refine_toward(m, x, lv)
        t, _ = g.locate(x[None])
        levels.append((g.n_triangles, g.diameters[t[0]]))
        assert _conforming(g)
        assert g.total_area() == pytest.approx(1.0, rel=1e-12)
        assert np.all(g.areas > 0)
    for lv, ((n0, _), (n1, h1)) in enumerate(zip(levels, levels[1:]), start=1):
        assert n1 > n0
        assert h1 <= m.h * 2.0**-lv * (1 + 1e-12)


def test_quadrature_exact_for_quartics():
    lam, w = TRI_QUAD
    # reference triangle (0,0),(1,0),(0,1): ∫ x^a y^b = a! b! / (a+b+2)!
    from math import factorial

    x, y = lam[:, 1], lam[:, 2]
    for a in range(5):
        for b in range(5 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert 0.5 * np.sum(w * x**a * y**b) == pytest.approx(exact, rel=1e-13, abs=1e-15)


def test_dump_load_roundtrip():
    dom = PolygonalDomain(UNIT_SQUARE, M=2, R0=0.25)
    dec = BoundaryDecomposition(dom, (Segment(0, 0.5, 0.5, "D"),), default="N")
    m = triangulate(dom, dec, 0.25)
    buf = io.StringIO()
    dump_mesh(m, buf)
    text = buf.getvalue()
    assert text.startswith("NODES ")
    assert "TRIANGLES" in text and "BOUNDARY" in text
    m2 = load_mesh(io.StringIO(text), dom, dec)
    assert np.array_equal(m.nodes, m2.nodes)
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.array_equal(m.boundary_labels, m2.boundary_labels)
    assert np.array_equal(m.dirichlet_nodes, m2.dirichlet_nodes)
    assert m.dirichlet_nodes.sum() == 1


def test_locate():
    dom, dec = square([BOTTOM])
    m = triangulate(dom, dec, 0.2)
    pts = np.array([[0.1, 0.1], [0.999, 0.5], [1.5, 0.5]])
    tri, lam = m.locate(pts)
    assert tri[0] >= 0 and tri[1] >= 0 and tri[2] == -1
    rec = np.einsum("nk,nkd->nd", lam[:2], m.nodes[m.triangles[tri[:2]]])
    assert np.allclose(rec, pts[:2])
