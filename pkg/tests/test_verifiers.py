import numpy as np
import pytest
from shapely.geometry import LineString, Point

from mixedgreen import green as gr
from mixedgreen import verifiers as vf
from mixedgreen.fem import FESpace, Field
from mixedgreen.geometry import BoundaryDecomposition, GeometryError, PolygonalDomain
from mixedgreen.mesh import TriangleMesh, triangulate

from conftest import BOTTOM, LEFT, RIGHT, TOP, UNIT_SQUARE, square, square_space


# --------------------------------------------------------------------- Korn
def test_korn_rigid_rotation_has_zero_strain():
    V = square_space([BOTTOM], 1 / 8)
    w = vf.rigid_rotation(V, (0.3, 0.7))
    assert abs(w.coef @ (V.stiffness_eps @ w.coef)) <= 1e-12
    assert w.coef @ (V.stiffness_grad @ w.coef) > 0.1


def test_korn_empty_d_witnessed_by_rotation():
    V = square_space([], 1 / 8)
    rep = vf.korn_constant(V)
    assert not rep["pass"]
    assert abs(rep["constant"]) <= 1e-8
    assert "rigid rotation" in rep["witness"]
    assert "empty" in rep["hypothesis"]


def test_korn_point_d_is_degenerate():
    dom = PolygonalDomain(UNIT_SQUARE, M=2.0, R0=0.25)
    dec = BoundaryDecomposition(dom, [(0, 0.5, 0.5, "D")])
    V = FESpace(triangulate(dom, dec, 1 / 8))
    rep = vf.korn_constant(V)
    assert not rep["pass"] and abs(rep["constant"]) <= 1e-8
    assert "single point" in rep["hypothesis"]


def test_korn_square_bottom_positive_and_below_one():
    V = square_space([BOTTOM], 1 / 8)
    rep = vf.korn_constant(V)
    assert rep["pass"] and rep["converged"]
    assert 0.01 < rep["constant"] < 1.0
    u = rep["minimizer"]
    assert np.abs(u.coef[V.dirichlet_dofs]).max() == 0.0
    # Rayleigh quotient of the returned minimizer reproduces the constant
    assert vf._rayleigh(V, u.coef) == pytest.approx(rep["constant"], rel=1e-8)


def test_korn_more_dirichlet_is_larger():
    c1 = vf.korn_constant(square_space([BOTTOM], 1 / 8))["constant"]
    c2 = vf.korn_constant(square_space([BOTTOM, LEFT], 1 / 8))["constant"]
    assert c2 >= c1 - 1e-10


def test_korn_translation_and_dilation_invariant():
    V = square_space([BOTTOM], 1 / 8)
    m = V.mesh
    base = vf.korn_constant(V)["constant"]
    for shift, scale in (((3.0, -2.0), 1.0), ((0.0, 0.0), 2.5)):
        dom = PolygonalDomain(scale * m.domain.vertices + shift, M=2.0, R0=0.25 * scale)
        dec = BoundaryDecomposition.from_edges(dom, [BOTTOM])
        moved = TriangleMesh(scale * m.nodes + shift, m.triangles, m.boundary_edges, m.boundary_labels,
                             m.dirichlet_nodes, dom, dec)
        assert vf.korn_constant(FESpace(moved))["constant"] == pytest.approx(base, rel=1e-6)


def test_korn_dual_route():
    V = square_space([BOTTOM], 1 / 8)
    rep = vf.korn_constant(V, dual=True)
    d = rep["dual"]
    assert d["identity_defect"] <= 1e-8
    assert d["divergence_residual"] <= 1e-8
    assert d["v_trace_on_N"] <= 1e-12
    assert d["mu_estimate"] <= d["mu_norm"] * (1 + 1e-8)
    # the implied lower bound is a genuine lower bound
    assert d["korn_lower_bound"] <= rep["constant"] + 1e-12
    c, cd = rep["constant"], d["constant"]
    assert c / 4 <= cd <= 4 * c


# --------------------------------------------------------- Poincaré–Sobolev
def test_poincare_zero_field_is_zero():
    V = square_space([BOTTOM], 1 / 16)
    rep = vf.poincare_sobolev_check(V, [(0.5, 0.5)], [0.1], fields=[Field(V, np.zeros(V.n_velocity))])
    assert rep["constant"] == 0.0 and rep["pass"]


def test_poincare_constant_away_from_d_is_annihilated():
    V = square_space([BOTTOM], 1 / 16)
    u = Field(V, V.interpolate(lambda p: np.tile([1.5, -2.0], (len(p), 1))))
    rep = vf.poincare_sobolev_check(V, [(0.5, 0.7)], [0.1], fields=[u])
    assert rep["constant"] == 0.0
    assert not rep["entries"][0]["touches_D"]


def test_poincare_uses_zero_mean_when_touching_d():
    V = square_space([BOTTOM], 1 / 16)
    u = Field(V, V.interpolate(lambda p: np.column_stack([p[:, 1], 0 * p[:, 1]])))
    rep = vf.poincare_sobolev_check(V, [(0.5, 0.05)], [0.1], fields=[u])
    assert rep["entries"][0]["touches_D"]
    assert 0 < rep["constant"] < np.inf


def test_poincare_linear_scale_stable():
    V = square_space([BOTTOM], 1 / 32)
    R0 = V.mesh.domain.R0
    u = Field(V, V.interpolate(lambda p: np.column_stack([p[:, 1], 2 * p[:, 1]])))
    radii = [R0 / 4, R0 / 8, R0 / 16]
    rep = vf.poincare_sobolev_check(V, [(0.5, 0.0), (0.3, 0.5), (0.6, 0.6)], radii, q=1.5, fields=[u])
    assert rep["pass"]
    vals = list(rep["per_scale"].values())
    assert max(vals) / min(vals) < 2.0


def test_poincare_random_fields_bounded():
    V = square_space([BOTTOM, LEFT], 1 / 16)
    R0 = V.mesh.domain.R0
    rep = vf.poincare_sobolev_check(V, [(0.2, 0.2), (0.7, 0.5), (1.0, 1.0)], [R0 / 2, R0 / 4], n_random=3)
    assert rep["pass"] and rep["constant"] < 10


def test_poincare_rejects_bad_inputs():
    V = square_space([BOTTOM], 1 / 8)
    with pytest.raises(ValueError):
        vf.poincare_sobolev_check(V, [(0.5, 0.5)], [0.1], q=2.0)
    with pytest.raises(GeometryError):
        vf.poincare_sobolev_check(V, [(0.5, 0.5)], [100.0])


# -------------------------------------------------------------- Caccioppoli
def test_caccioppoli_constant_is_zero():
    V = square_space([BOTTOM], 1 / 16)
    u = Field(V, V.interpolate(lambda p: np.tile([1.0, 1.0], (len(p), 1))))
    rep = vf.caccioppoli_check([u], [(0.5, 0.7)], [0.1])
    assert rep["constant"] <= 1e-12 and rep["pass"]


def test_caccioppoli_green_bounded_and_negative_control_fails():
    V = square_space([BOTTOM, LEFT], 1 / 16)
    pole = np.array([0.25, 0.25])
    cols = gr.green_columns(V, pole)
    fields = [c.velocity for c in cols]
    centers = [(0.75, 0.75), (0.8, 0.4), (0.5, 0.9)]
    radii = [0.05, 0.1]
    rep = vf.caccioppoli_check(fields, centers, radii, pole=pole, pole_radius=cols[0].rho)
    assert rep["pass"] and rep["constant"] < 5
    neg = vf.caccioppoli_negative_control(V, centers, radii, bound=rep["constant"])
    assert neg["violates_bound"] and neg["constant"] > 2 * rep["constant"]


def test_caccioppoli_rejects_pole_zone():
    V = square_space([BOTTOM, LEFT], 1 / 8)
    cols = gr.green_columns(V, (0.5, 0.5))
    with pytest.raises(GeometryError):
        vf.caccioppoli_check([cols[0].velocity], [(0.6, 0.5)], [0.1], pole=np.array([0.5, 0.5]), pole_radius=cols[0].rho)


# ------------------------------------------------------------- local Hölder
def test_holder_constant_field():
    V = square_space([BOTTOM], 1 / 8)
    u = Field(V, V.interpolate(lambda p: np.tile([2.0, -1.0], (len(p), 1))))
    rep = vf.local_holder_check(u, (0.5, 0.5), 0.2)
    assert rep["exponent"] == np.inf and rep["constant"] == 1.0
    assert rep["mvt_constant"] == pytest.approx(1.0, rel=1e-12)


def test_holder_linear_recovers_one():
    V = square_space([BOTTOM], 1 / 8)
    u = Field(V, V.interpolate(lambda p: np.column_stack([p[:, 0] + 2 * p[:, 1], -p[:, 0]])))
    rep = vf.local_holder_check(u, (0.5, 0.5), 0.2)
    assert rep["exponent"] == pytest.approx(1.0, abs=0.05)


def test_holder_deterministic_given_seed():
    V = square_space([BOTTOM], 1 / 8)
    u = vf.random_smooth_field(V, np.random.default_rng(0))
    a = vf.local_holder_check(u, (0.5, 0.5), 0.2, seed=3)
    b = vf.local_holder_check(u, (0.5, 0.5), 0.2, seed=3)
    assert a == b


# ------------------------------------------------------------------ helpers
def test_label_geometry():
    dom, dec = square([BOTTOM, RIGHT])
    g = vf.label_geometry(dom, dec, "D")
    assert g.length == pytest.approx(2.0, abs=1e-12)
    assert g.distance(Point(0, 0)) == 0 and g.distance(Point(1, 1)) == 0
    assert g.distance(Point(0, 1)) == pytest.approx(1.0)
    n = vf.label_geometry(dom, dec, "N")
    assert n.length == pytest.approx(2.0, abs=1e-12)
    dom, dec = square([])
    assert vf.label_geometry(dom, dec, "D") is None
    dec = BoundaryDecomposition(dom, [(0, 0.5, 0.5, "D")])
    p = vf.label_geometry(dom, dec, "D")
    assert p.geom_type == "Point" and p.distance(Point(0.5, 0)) <= 1e-12


def test_region_weights_area():
    V = square_space([TOP], 1 / 16)
    region = LineString([(0, 0.5), (1, 0.5)]).buffer(0.1, cap_style="flat")
    assert vf.region_weights(V, region).sum() == pytest.approx(0.2, rel=0.02)
