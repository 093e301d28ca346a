import numpy as np
import pytest
from scipy.integrate import trapezoid

from mixedgreen.bogovskii import (
    BogovskiiOperator,
    build_chain,
    chain_report,
    decompose,
    local_bogovskii,
    solve_div,
)
from mixedgreen.fem import FESpace, Field
from mixedgreen.geometry import GeometryError, PolygonalDomain, BoundaryDecomposition
from mixedgreen.mesh import triangulate
from mixedgreen.reporting import dumps

from conftest import BOTTOM, LEFT, RIGHT, TOP, square

TOP_N = [BOTTOM, RIGHT, LEFT]
_OPS = {}


def top_n_operator(h=1 / 16):
    if h not in _OPS:
        dom, dec = square(TOP_N)
        V = FESpace(triangulate(dom, dec, h))
        _OPS[h] = BogovskiiOperator(V, build_chain(dom, dec))
    return _OPS[h]


def test_chain_on_square_with_top_n():
    dom, dec = square(TOP_N)
    ch = build_chain(dom, dec)
    assert 1 <= len(ch) <= 40
    assert np.allclose(ch.flux_point, [0.5, 1.0])
    assert np.allclose(ch.flux_normal, [0.0, 1.0])
    assert ch.s == pytest.approx(dom.R0 / (2 * dom.M))
    # cores cover Ω and every later domain overlaps its predecessors by a fixed fraction of R0²
    from shapely.ops import unary_union

    assert dom.polygon.difference(unary_union(ch.cores)).area <= 1e-9
    assert np.all(ch.overlap_areas[1:] >= 0.05 * dom.R0**2)


def test_chain_single_domain():
    # a strip no larger than one core: the anchor's half-radius cylinder covers it
    dom = PolygonalDomain([(0, 0), (1, 0), (1, 0.1), (0, 0.1)], M=4, R0=1.0)
    dec = BoundaryDecomposition.from_edges(dom, TOP_N)
    assert len(build_chain(dom, dec)) == 1


def test_chain_requires_n():
    dom, dec = square([BOTTOM, RIGHT, TOP, LEFT])
    with pytest.raises(GeometryError, match="NOpen"):
        build_chain(dom, dec)


def test_chain_deterministic():
    dom, dec = square(TOP_N)
    a, b = build_chain(dom, dec), build_chain(dom, dec)
    assert np.array_equal(a.centers, b.centers)


def test_decompose_constant():
    op = top_n_operator()
    V = op.space
    w = V.quad_weights
    f = np.ones_like(w)
    pieces = decompose(op, f)
    assert np.abs(sum(pieces) - f).max() <= 1e-12
    for p in pieces[1:]:
        assert abs(np.sum(w * p)) <= 1e-12
    assert np.sum(w * pieces[0]) == pytest.approx(1.0, abs=1e-12)
    for p, patch in zip(pieces, op.patches):
        assert not np.any(p[~patch.tri_mask])


def test_decompose_support_in_first_domain():
    op = top_n_operator()
    V = op.space
    f = np.where(op.patches[0].tri_mask[:, None], V.quad_points[..., 0], 0.0)
    pieces = decompose(op, f)
    assert np.array_equal(pieces[0], f)
    assert all(not p.any() for p in pieces[1:])


def test_local_bogovskii():
    op = top_n_operator()
    V = op.space
    j = len(op.patches) // 2
    mask = op.patches[j].tri_mask
    assert not local_bogovskii(op, j, np.zeros_like(V.quad_weights)).coef.any()
    cx = V.mesh.centroids[mask, 0].mean()
    f = np.where(mask[:, None], np.sign(V.quad_points[..., 0] - cx), 0.0)
    f = np.where(mask[:, None], f - np.sum(V.quad_weights * f) / V.quad_weights[mask].sum(), 0.0)
    u = local_bogovskii(op, j, f)
    # zero trace on the patch boundary and outside it
    inside = np.zeros(V.n_p2, dtype=bool)
    inside[op.patches[j].velocity_dofs % V.n_p2] = True
    u1, u2 = u.components
    assert not u1[~inside].any() and not u2[~inside].any()
    # weak divergence against local pressures
    r = -(V.divergence @ u.coef) - V.pressure_load(f)
    assert np.abs(r[op.patches[j].pressure_nodes]).max() <= 1e-10 * np.abs(V.pressure_load(np.abs(f))).max()
    # mass balance: the flux through the cut equals the mass on the left
    ys = np.linspace(V.mesh.nodes[:, 1].min(), V.mesh.nodes[:, 1].max(), 4001)
    cut = np.column_stack([np.full_like(ys, cx), ys])
    flux = trapezoid(u(cut)[:, 0], ys)
    left = np.sum(np.where(V.quad_points[..., 0] < cx, V.quad_weights * f, 0.0))
    assert flux == pytest.approx(left, rel=0.05)


def test_local_bogovskii_rejects_mean():
    op = top_n_operator()
    V = op.space
    f = np.where(op.patches[1].tri_mask[:, None], 0.1, 0.0) * np.ones_like(V.quad_weights)
    with pytest.raises(ValueError, match="mean"):
        local_bogovskii(op, 1, f)


def test_solve_div_zero_and_constant():
    op = top_n_operator()
    V = op.space
    u, info = solve_div(V, f=lambda x: np.zeros(len(x)), operator=op)
    assert not u.coef.any()
    u, info = solve_div(V, f=lambda x: np.ones(len(x)), operator=op)
    assert info["residual"] <= 1e-10
    assert info["d_trace"] <= 1e-12
    assert info["n_flux"] == pytest.approx(1.0, abs=1e-8)


def test_solve_div_linear(rng):
    op = top_n_operator()
    V = op.space
    f = rng.standard_normal(V.quad_weights.shape)
    g = np.sin(3 * V.quad_points[..., 0]) + 0.2
    a, b = 1.7, -0.3
    uf = op(f)
    ug = op(g)
    uab = op(a * f + b * g)
    assert np.linalg.norm(uab.coef - a * uf.coef - b * ug.coef) <= 1e-9 * np.linalg.norm(uab.coef)
    u, info = solve_div(V, f=f, operator=op)
    assert info["residual"] <= 1e-10


def test_solve_div_accepts_pressure_field():
    op = top_n_operator()
    V = op.space
    p = Field(V, V.interpolate_pressure(lambda x: x[:, 0] * x[:, 1]), "pressure")
    _, info = solve_div(V, f=p, operator=op)
    assert info["residual"] <= 1e-10
    with pytest.raises(ValueError):
        op(Field(V, np.zeros(V.n_velocity)))


def test_operator_requires_n():
    dom, dec = square([BOTTOM, RIGHT, TOP, LEFT])
    V = FESpace(triangulate(dom, dec, 0.25))
    ch = build_chain(*square(TOP_N))
    with pytest.raises(GeometryError):
        BogovskiiOperator(V, ch)


def test_flux_field():
    op = top_n_operator()
    eta = op.flux
    assert eta.boundary_flux == pytest.approx(1.0, abs=1e-10)
    V = op.space
    u1, u2 = eta.field.components
    assert not u1[V.dirichlet_nodes].any() and not u2[V.dirichlet_nodes].any()


def test_chain_report_serializable():
    op = top_n_operator()
    _, stages = op(lambda x: np.ones(len(x)), return_stages=True)
    rep = chain_report(op.chain, op, stages)
    text = dumps(rep)
    assert '"n_domains"' in text and len(rep["domains"]) == len(op.chain)
    assert all("overlap_area" in d and "f_L2" in d for d in rep["domains"])
