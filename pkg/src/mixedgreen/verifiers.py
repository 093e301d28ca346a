"""Computable versions of the functional inequalities used by the theory.

Each check returns a plain dict report ``{check, parameters, constant,
exponent, pass, seed, ...}`` so it can be written to JSON as is.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse.linalg as spla
import shapely
from scipy.linalg import eigh
from shapely.geometry import LineString, Point
from shapely.ops import unary_union

from .bogovskii import BogovskiiOperator, build_chain
from .fem import FESpace, Field
from .geometry import GeometryError, local_domain

log = logging.getLogger(__name__)

__all__ = [
    "korn_constant",
    "korn_dual_route",
    "rigid_rotation",
    "poincare_sobolev_check",
    "caccioppoli_check",
    "caccioppoli_negative_control",
    "local_holder_check",
    "region_weights",
    "label_geometry",
    "random_smooth_field",
]


# ------------------------------------------------------------------ helpers
def rigid_rotation(space, center=(0.0, 0.0)):
    """P2 interpolant of ``(-(y2 - c2), y1 - c1)`` (exact: the field is linear)."""
    c = np.asarray(center, dtype=float)
    return Field(space, space.interpolate(lambda p: np.column_stack([-(p[:, 1] - c[1]), p[:, 0] - c[0]])))


def _rayleigh(space, coef):
    e = coef @ (space.stiffness_eps @ coef)
    g = coef @ (space.stiffness_grad @ coef)
    return float(e / (2 * g)) if g > 0 else np.nan


def region_weights(space, region):
    """Quadrature weights restricted to a shapely region (zero outside)."""
    qp = space.quad_points.reshape(-1, 2)
    inside = shapely.contains_xy(region, qp[:, 0], qp[:, 1]).reshape(space.quad_weights.shape)
    return np.where(inside, space.quad_weights, 0.0)


def label_geometry(domain, decomposition, label):
    """Shapely geometry of the boundary set with ``label`` (lines and isolated points)."""
    P = domain.perimeter
    offs = domain.arc_offsets
    parts = []
    for a, b in decomposition.intervals(label):
        if b - a <= 1e-14:
            parts.append(Point(domain.point_at_arclength(a)))
            continue
        s = [a] + [o + k * P for k in (0, 1) for o in offs if a < o + k * P < b] + [b]
        parts.append(LineString([domain.point_at_arclength(np.mod(t, P)) for t in sorted(s)]))
    if not parts:
        return None
    return unary_union(parts)


def random_smooth_field(space, rng, n_modes=4, vanish_on_d=True):
    """Random trigonometric velocity field, zeroed at the Dirichlet nodes."""
    minx, miny, maxx, maxy = space.mesh.domain.polygon.bounds
    L = max(maxx - minx, maxy - miny)
    k = rng.integers(0, n_modes + 1, size=(2, 6, 2))
    ph = rng.uniform(0, 2 * np.pi, size=(2, 6))
    amp = rng.standard_normal((2, 6))

    def fn(p):
        out = np.zeros((len(p), 2))
        for a in range(2):
            for j in range(6):
                out[:, a] += amp[a, j] * np.cos(np.pi * (k[a, j, 0] * p[:, 0] + k[a, j, 1] * p[:, 1]) / L + ph[a, j])
        return out

    c = space.interpolate(fn)
    if vanish_on_d:
        c[space.dirichlet_dofs] = 0.0
    return Field(space, c)


# --------------------------------------------------------------------- Korn
def korn_constant(space, tol=1e-8, maxiter=500, block=4, seed=0, dual=False, chain=None):
    """Smallest ``a(u,u) / (2‖∇u‖²)`` over discrete ``u`` vanishing on D.

    Block inverse-power iteration on the pencil ``(K_ε, 2 K_∇)`` with a
    Rayleigh-Ritz step.  When D is empty or a single point the rigid
    rotation about D is admissible and ``c = 0`` is reported with it as the
    witness.
    """
    rep = {"check": "korn", "seed": seed, "parameters": {"tol": tol, "maxiter": maxiter}}
    dn = space.dirichlet_nodes
    dpts = space.p2_nodes[dn]
    degenerate = dpts.shape[0] == 0 or np.ptp(dpts, axis=0).max() <= 1e-12
    if degenerate:
        center = dpts[0] if len(dpts) else space.mesh.domain.vertices.mean(axis=0)
        w = rigid_rotation(space, center)
        q = _rayleigh(space, w.coef)
        rep.update(
            {
                "constant": q,
                "exponent": None,
                "pass": False,
                "hypothesis": "DOpen fails: D is " + ("empty" if len(dpts) == 0 else "a single point"),
                "witness": "rigid rotation about " + str(np.round(center, 12).tolist()),
                "witness_rayleigh": q,
            }
        )
        return rep
    F = space.free_dofs
    Ke = space.stiffness_eps[F][:, F].tocsc()
    Kg = 2 * space.stiffness_grad[F][:, F]
    lu = spla.splu(Ke)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((len(F), block))
    prev, lam, it = np.inf, np.nan, 0
    for it in range(1, maxiter + 1):
        Y = lu.solve(Kg @ X)
        A = Y.T @ (Ke @ Y)
        B = Y.T @ (Kg @ Y)
        vals, vecs = eigh(0.5 * (A + A.T), 0.5 * (B + B.T))
        X = Y @ vecs
        X /= np.sqrt(np.einsum("ij,ij->j", X, Kg @ X))
        lam = float(vals[0])
        if abs(lam - prev) <= tol * abs(lam):
            break
        prev = lam
    coef = np.zeros(space.n_velocity)
    coef[F] = X[:, 0]
    u = Field(space, coef)
    rep.update(
        {
            "constant": lam,
            "exponent": None,
            "iterations": it,
            "converged": bool(abs(lam - prev) <= tol * abs(lam)),
            "pass": bool(lam > 0),
            "minimizer": u,
        }
    )
    if dual:
        rep["dual"] = korn_dual_route(space, u, chain=chain)
    return rep


def korn_dual_route(space, u, alpha=0, i=1, chain=None):
    """Bound ``‖μ^α_i(u)‖`` through a divergence solve vanishing on N.

    With ``f`` the P1 projection of ``μ^α_i(u)`` and ``div v = f``,
    ``v = 0`` on N, the integration-by-parts chain
    ``∫ μ div v = ∫ ε^α_k ∂_i v_k - ε^i_k ∂_α v_k`` is checked and
    ``m = (right side) / ‖f‖`` estimates ``‖μ^α_i(u)‖``.  The implied Korn
    ratio is ``‖ε‖² / (‖ε‖² + 2 m²)``.
    """
    mesh = space.mesh
    sw = FESpace(mesh.with_swapped_labels())
    if chain is None:
        chain = build_chain(mesh.domain, mesh.decomposition.swapped())
    op = BogovskiiOperator(sw, chain)
    w = space.quad_weights
    G = u.grad_at_quadrature()  # G[..., a, k] = ∂_k u_a
    eps = 0.5 * (G + np.swapaxes(G, -1, -2))
    mu = 0.5 * (G[..., alpha, i] - G[..., i, alpha])
    # P1 L² projection of mu
    rhs = space.pressure_load(mu)
    fcoef = spla.spsolve(space.mass_pressure.tocsc(), rhs)
    f = Field(sw, fcoef, "pressure")
    v = op(f)
    Gv = v.grad_at_quadrature()
    divv = Gv[..., 0, 0] + Gv[..., 1, 1]
    lhs = float(np.sum(w * mu * divv))
    rhs_ = float(np.sum(w * (np.einsum("mqk,mqk->mq", eps[..., alpha, :], Gv[..., :, i])
                             - np.einsum("mqk,mqk->mq", eps[..., i, :], Gv[..., :, alpha]))))
    fq = f.at_quadrature()
    fn = float(np.sqrt(np.sum(w * fq**2)))
    En = float(np.sqrt(np.sum(w * np.sum(eps**2, axis=(-2, -1)))))
    mun = float(np.sqrt(np.sum(w * mu**2)))
    gradv = float(np.sqrt(np.sum(w * np.sum(Gv**2, axis=(-2, -1)))))
    CB = gradv / fn if fn > 0 else 0.0
    m = rhs_ / fn if fn > 0 else 0.0
    c_dual = En**2 / (En**2 + 2 * m**2) if En > 0 else np.nan
    scale = max(abs(lhs), abs(rhs_), 1e-300)
    d_nodes = sw.dirichlet_nodes
    return {
        "identity_lhs": lhs,
        "identity_rhs": rhs_,
        "identity_defect": abs(lhs - rhs_) / scale,
        "mu_norm": mun,
        "mu_estimate": m,
        "eps_norm": En,
        "bogovskii_constant": CB,
        "C": 2 * CB,
        "korn_lower_bound": 1.0 / (1.0 + 2 * (2 * CB) ** 2),
        "constant": c_dual,
        "v_trace_on_N": float(np.abs(np.concatenate(v.components)[np.concatenate([d_nodes, d_nodes])]).max(initial=0.0)),
        "divergence_residual": op.residual(v, f),
    }


# --------------------------------------------------------- Poincaré–Sobolev
def _avg(w, vals):
    W = w.sum()
    return np.tensordot(w, vals, axes=(tuple(range(w.ndim)), tuple(range(w.ndim)))) / W if W > 0 else 0.0


def poincare_sobolev_ratio(u, x, r, q, d_geom):
    """LHS/RHS of the Poincaré–Sobolev inequality on ``Ω_r(x)`` / ``Ω_{2r}(x)``."""
    space = u.space
    dom = space.mesh.domain
    om = local_domain(dom, x, r)
    om2 = local_domain(dom, x, 2 * r)
    w1 = region_weights(space, om.region)
    w2 = region_weights(space, om2.region)
    if w1.sum() <= 0 or w2.sum() <= 0:
        raise GeometryError("local domain not resolved by the quadrature")
    val = u.at_quadrature()
    grd = u.grad_at_quadrature()
    touches = d_geom is not None and om.region.distance(d_geom) == 0
    ubar = np.zeros(2) if touches else _avg(w1, val)
    qs = 2 * q / (2 - q)
    lhs = np.sum(w1 * np.linalg.norm(val - ubar, axis=-1) ** qs) ** (1 / qs)
    rhs = np.sum(w2 * np.sqrt(np.sum(grd**2, axis=(-2, -1))) ** q) ** (1 / q)
    # roundoff floor: a constant field has lhs and rhs at machine-epsilon level
    tiny = 1e-12 * float(np.abs(val[w1 > 0]).max(initial=0.0)) * w1.sum() ** (1 / qs)
    if rhs <= tiny:
        return (0.0 if lhs <= tiny else np.inf), touches
    return float(lhs / rhs), touches


def poincare_sobolev_check(space, centers, radii, q=1.5, fields=None, n_random=4, seed=0, bound=None):
    """Worst Poincaré–Sobolev ratio over positions, scales and fields.

    ``fields`` defaults to ``n_random`` random smooth fields vanishing on D.
    ``0/0`` (a field vanishing on the region) counts as ratio 0.
    """
    if not 1 <= q < 2:
        raise ValueError("q must lie in [1, 2)")
    dom = space.mesh.domain
    limit = max(100 * dom.R0, dom.diameter)
    if any(2 * r >= limit for r in radii):
        raise GeometryError("2r exceeds the supported local scale")
    rng = np.random.default_rng(seed)
    if fields is None:
        fields = [random_smooth_field(space, rng) for _ in range(n_random)]
    d_geom = label_geometry(dom, space.mesh.decomposition, "D")
    entries = []
    for x in centers:
        for r in radii:
            for k, u in enumerate(fields):
                ratio, touches = poincare_sobolev_ratio(u, x, r, q, d_geom)
                entries.append({"x": list(map(float, x)), "r": float(r), "field": k, "ratio": ratio, "touches_D": bool(touches)})
    worst = max(e["ratio"] for e in entries) if entries else 0.0
    per_scale = {float(r): max(e["ratio"] for e in entries if e["r"] == r) for r in radii}
    ok = bool(np.isfinite(worst) and (bound is None or worst <= bound))
    return {
        "check": "poincare_sobolev",
        "parameters": {"q": q, "radii": list(map(float, radii)), "n_fields": len(fields)},
        "constant": float(worst),
        "per_scale": per_scale,
        "exponent": None,
        "pass": ok,
        "seed": seed,
        "entries": entries,
    }


# -------------------------------------------------------------- Caccioppoli
def caccioppoli_ratio(u, x, rho, scaled=True):
    """``ρ (avg_{Ω_ρ}|∇u|²)^{1/2} / avg_{Ω_{2ρ}}|u|`` (without ``ρ`` if not ``scaled``)."""
    space = u.space
    dom = space.mesh.domain
    w1 = region_weights(space, local_domain(dom, x, rho).region)
    w2 = region_weights(space, local_domain(dom, x, 2 * rho).region)
    grd = u.grad_at_quadrature()
    val = u.at_quadrature()
    g2 = _avg(w1, np.sum(grd**2, axis=(-2, -1)))
    um = _avg(w2, np.linalg.norm(val, axis=-1))
    if um == 0:
        return 0.0 if g2 == 0 else np.inf
    return float((rho if scaled else 1.0) * np.sqrt(g2) / um)


def _pole_clear(x, rho, pole, pole_radius):
    return pole is None or np.linalg.norm(np.asarray(x) - pole) > 2 * rho * 1.5 + pole_radius


def caccioppoli_check(fields, centers, radii, pole=None, pole_radius=0.0, scaled=True, seed=0, bound=None):
    """Worst Caccioppoli ratio over fields, positions and scales.

    Fields are solutions with zero data near each ``Ω_{2ρ}(x)`` (e.g. Green
    columns away from their pole).  Raises if a local domain reaches the
    pole-exclusion zone.  ``scaled`` multiplies by ``ρ`` so the ratio is
    dimensionless.
    """
    entries = []
    for x in centers:
        for rho in radii:
            if not _pole_clear(x, rho, pole, pole_radius):
                raise GeometryError("local domain intersects the pole-exclusion zone")
            for k, u in enumerate(fields):
                entries.append({"x": list(map(float, x)), "rho": float(rho), "field": k,
                                "ratio": caccioppoli_ratio(u, x, rho, scaled)})
    worst = max(e["ratio"] for e in entries)
    return {
        "check": "caccioppoli",
        "parameters": {"radii": list(map(float, radii)), "scaled": scaled, "n_fields": len(fields)},
        "constant": float(worst),
        "exponent": None,
        "pass": bool(np.isfinite(worst) and (bound is None or worst <= bound)),
        "seed": seed,
        "entries": entries,
    }


def caccioppoli_negative_control(space, centers, radii, bound, n_fields=4, seed=0, scaled=True):
    """Random-coefficient fields (not solutions) tested against ``bound``.

    The control passes its purpose when the worst ratio exceeds ``bound``,
    i.e. the check has teeth.
    """
    rng = np.random.default_rng(seed)
    fields = [Field(space, rng.standard_normal(space.n_velocity)) for _ in range(n_fields)]
    rep = caccioppoli_check(fields, centers, radii, scaled=scaled, seed=seed)
    rep["check"] = "caccioppoli_negative_control"
    rep["bound"] = float(bound)
    rep["violates_bound"] = bool(rep["constant"] > bound)
    rep["pass"] = rep["violates_bound"]
    return rep


# ------------------------------------------------------------- local Hölder
def _sample_in(region, n, rng):
    minx, miny, maxx, maxy = region.bounds
    pts = []
    while len(pts) < n:
        p = rng.uniform([minx, miny], [maxx, maxy], size=(4 * n, 2))
        pts.extend(p[shapely.contains_xy(region, p[:, 0], p[:, 1])].tolist())
    return np.array(pts[:n])


def local_holder_check(u, x, rho, n_pairs=64, ratios=None, seed=0):
    """Fit ``γ`` in ``|u(z)-u(y)| ≤ C (|z-y|/ρ)^γ avg_{Ω_{2ρ}}|u - ū|`` and the mean-value constant.

    Pairs ``y, z = y + tρe`` lie in ``Ω_ρ(x)``; the same directions are used
    for every ratio ``t``.  The mean-value constant is
    ``|u(x)| / avg_{Ω_ρ}|u|``.  A constant field gives ``γ = inf`` and
    ``C = 1``.
    """
    space = u.space
    dom = space.mesh.domain
    rng = np.random.default_rng(seed)
    om = local_domain(dom, x, rho)
    om2 = local_domain(dom, x, 2 * rho)
    ratios = [2.0**-k for k in range(1, 6)] if ratios is None else ratios
    w2 = region_weights(space, om2.region)
    w1 = region_weights(space, om.region)
    val = u.at_quadrature()
    ubar2 = _avg(w2, val)
    osc = float(_avg(w2, np.linalg.norm(val - ubar2, axis=-1)))
    ys = _sample_in(om.region, n_pairs, rng)
    th = rng.uniform(0, 2 * np.pi, size=n_pairs)
    e = np.column_stack([np.cos(th), np.sin(th)])
    uy = u(ys)
    env = []
    for t in ratios:
        zs = ys + t * rho * e
        ok = shapely.contains_xy(om.region, zs[:, 0], zs[:, 1])
        if not np.any(ok):
            continue
        env.append((t, float(np.max(np.linalg.norm(u(zs[ok]) - uy[ok], axis=1)))))
    t_arr = np.array([a for a, _ in env])
    e_arr = np.array([b for _, b in env])
    avg1 = float(_avg(w1, np.linalg.norm(val, axis=-1)))
    ux = float(np.linalg.norm(u(np.atleast_2d(x))[0]))
    mvt = ux / avg1 if avg1 > 0 else (0.0 if ux == 0 else np.inf)
    if osc <= 1e-14 * max(avg1, 1e-300) or np.all(e_arr <= 1e-14 * max(avg1, 1e-300)):
        gamma, C = np.inf, 1.0
    else:
        A = np.column_stack([np.ones_like(t_arr), np.log(t_arr)])
        coef, *_ = np.linalg.lstsq(A, np.log(np.maximum(e_arr, 1e-300) / osc), rcond=None)
        gamma, C = float(coef[1]), float(np.exp(coef[0]))
    return {
        "check": "local_holder",
        "parameters": {"x": list(map(float, x)), "rho": float(rho), "n_pairs": n_pairs},
        "exponent": gamma,
        "constant": C,
        "mvt_constant": float(mvt),
        "oscillation": osc,
        "ratios": t_arr.tolist(),
        "envelope": e_arr.tolist(),
        "pass": bool(gamma > 0 and np.isfinite(mvt)),
        "seed": seed,
    }
