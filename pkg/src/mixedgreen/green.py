"""Discrete Green function of the mixed Stokes problem.

Column α at the pole x is ``(G^{α·}(x,·), Π^α(x,·)) = T⁻¹(e_α δ_x, 0)`` with
the point load replaced by the normalized indicator of a small ball.  On
the discrete level the representation identity

    ⟨mollified δ_x e_α, u⟩ = ∫ G^{αβ}(x,·)(f^β - ∂_β g) + Π^α(x,·) g + ∫_N G^{αβ}(x,·) f_N^β

is exact because the saddle matrix is symmetric.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import local_domain
from .fem import FESpace, Field, _load_vectors, _solve_saddle, p2_values
from .mesh import TRI_QUAD, graded_refine_toward, triangulate
from .norms import field_samples, lorentz_norm

log = logging.getLogger(__name__)

__all__ = [
    "GreenColumn",
    "GreenSample",
    "stokeslet",
    "ball_load",
    "build_green_column",
    "green_columns",
    "evaluate_green",
    "representation_solve",
    "symmetry_probe",
    "probe_points",
    "log_bound_fit",
    "weak_l2_norms",
    "holder_fit",
    "green_grad_norm",
    "SWEEP_COLUMNS",
]

SWEEP_COLUMNS = ["x1", "x2", "y1", "y2", "r", "G11", "G12", "G21", "G22", "Pi1", "Pi2"]
SUBDIVISION_LEVELS = 3


def stokeslet(w):
    """Free-space fundamental solution ``E(w) = (1/4π)(-log|w| I + w⊗w/|w|²)``; (n, 2, 2)."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    r2 = np.sum(w**2, axis=1)
    E = -0.5 * np.log(r2)[:, None, None] * np.eye(2) + w[:, :, None] * w[:, None, :] / r2[:, None, None]
    return E / (4 * np.pi)


@dataclass(eq=False)
class GreenColumn:
    """One column ``(G^{α·}(x,·), Π^α(x,·))`` of the discrete Green function."""

    x: np.ndarray
    alpha: int
    rho: float
    velocity: Field
    pressure: Field
    space: FESpace
    load_integral: float
    residuals: tuple


@dataclass(frozen=True)
class GreenSample:
    x: np.ndarray
    y: np.ndarray
    G: np.ndarray
    Pi: np.ndarray

    @property
    def r(self):
        return float(np.linalg.norm(self.y - self.x))

    def row(self):
        return [*self.x, *self.y, self.r, *self.G.ravel(), *self.Pi]


def _sub_barycentric(level):
    """Quadrature on the reference triangle refined uniformly ``level`` times."""
    lam, w = TRI_QUAD
    tris = [np.eye(3)]
    for _ in range(level):
        new = []
        for T in tris:
            a, b, c = T
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            new += [np.array([a, ab, ca]), np.array([ab, b, bc]), np.array([ca, bc, c]), np.array([ab, bc, ca])]
        tris = new
    pts = np.concatenate([lam @ T for T in tris])
    wts = np.concatenate([w / len(tris)] * len(tris))
    return pts, wts


_SUB = {}


def ball_load(space, x, rho, alpha):
    """Velocity load of ``e_α`` times the normalized indicator of ``B(x, rho)``.

    Triangles cut by the circle are integrated on a uniformly subdivided
    quadrature; the load is normalized so that its quadrature integral is 1.
    Returns the full velocity load vector and the (unnormalized) ball area.
    """
    mesh = space.mesh
    x = np.asarray(x, dtype=float)
    if SUBDIVISION_LEVELS not in _SUB:
        _SUB[SUBDIVISION_LEVELS] = _sub_barycentric(SUBDIVISION_LEVELS)
    slam, sw = _SUB[SUBDIVISION_LEVELS]
    P = mesh.nodes[mesh.triangles]
    d = np.linalg.norm(P - x, axis=2)
    far = d.min(axis=1)
    # distance from x to triangle is at most min vertex distance; a cheap prefilter
    cand = np.nonzero(far <= rho + mesh.diameters)[0]
    inside = cand[np.all(d[cand] <= rho, axis=1)]
    cut = np.setdiff1d(cand, inside)
    out = np.zeros(space.n_velocity)
    total = 0.0
    lam, w = TRI_QUAD
    phi = space.phi
    if len(inside):
        a = mesh.areas[inside]
        le = a[:, None] * (w @ phi)[None, :]
        np.add.at(out, alpha * space.n_p2 + space.cell_dofs[inside], le)
        total += a.sum()
    if len(cut):
        sphi = p2_values(slam)
        pts = np.einsum("qk,mkd->mqd", slam, P[cut])
        ind = (np.sum((pts - x) ** 2, axis=2) <= rho**2).astype(float)
        a = mesh.areas[cut]
        le = np.einsum("m,q,mq,qi->mi", a, sw, ind, sphi)
        np.add.at(out, alpha * space.n_p2 + space.cell_dofs[cut], le)
        total += float(np.sum(a[:, None] * sw[None, :] * ind))
    if total <= 0:
        raise ValueError("mollifier ball is not resolved by the mesh")
    return out / total, total


def local_h(mesh, x):
    tri, _ = mesh.locate(np.atleast_2d(x))
    if tri[0] < 0:
        raise ValueError("pole outside the mesh")
    return float(mesh.diameters[tri[0]])


def build_green_column(space, x, alpha, rho=None):
    """Solve for column ``alpha`` (0 or 1) at pole ``x`` with mollifier radius ``rho``.

    ``rho`` defaults to twice the local mesh size.  Raises if the ball
    leaves Ω; warns if the pole is closer than four local mesh sizes to ∂Ω.
    """
    if alpha not in (0, 1):
        raise ValueError("alpha must be 0 or 1")
    mesh = space.mesh
    x = np.asarray(x, dtype=float)
    h = local_h(mesh, x)
    rho = 2 * h if rho is None else float(rho)
    dist = float(mesh.domain.distance_to_boundary(x)[0])
    if not mesh.domain.contains(x, closed=False)[0] or dist < rho:
        raise ValueError(f"ball B(x, {rho:.3g}) is not contained in the domain")
    if dist < 4 * h:
        warnings.warn(f"pole at distance {dist:.3g} from the boundary is within 4 local mesh sizes", stacklevel=2)
    cache = space.__dict__.setdefault("_green_cache", {})
    key = (round(float(x[0]), 14), round(float(x[1]), 14), alpha, round(rho, 15))
    if key in cache:
        return cache[key]
    load, _ = ball_load(space, x, rho, alpha)
    xu, xp, res = _solve_saddle(space, load[space.free_dofs], np.zeros(space.n_pressure))
    u = np.zeros(space.n_velocity)
    u[space.free_dofs] = xu
    col = GreenColumn(
        x, alpha, rho, Field(space, u, "velocity"), Field(space, xp, "pressure"), space, float(load.sum()), res
    )
    cache[key] = col
    return col


def green_columns(space, x, rho=None):
    return [build_green_column(space, x, a, rho) for a in (0, 1)]


def evaluate_green(columns, y):
    """``G[n, α, β]`` and ``Π[n, α]`` at points ``y`` from the two columns at one pole."""
    if len(columns) != 2 or columns[0].alpha != 0 or columns[1].alpha != 1:
        raise ValueError("need the two columns (alpha = 0, 1) of one pole")
    y = np.atleast_2d(np.asarray(y, dtype=float))
    G = np.stack([c.velocity(y) for c in columns], axis=1)
    Pi = np.stack([c.pressure(y) for c in columns], axis=1)
    return G, Pi


def samples(columns, y):
    G, Pi = evaluate_green(columns, y)
    x = columns[0].x
    return [GreenSample(x, yy, g, p) for yy, g, p in zip(np.atleast_2d(y), G, Pi)]


def representation_solve(space, probe_columns, f=None, g=None, f_N=None, grad_g=None):
    """``u(x)`` at each probe from the Green columns, by quadrature.

    ``probe_columns`` is a list of column pairs, one per probe.  Returns an
    array (n_probes, 2).
    """
    lam, mu = _load_vectors(space, f, g, f_N, grad_g)
    out = []
    for cols in probe_columns:
        if len(cols) != 2:
            raise ValueError("each probe needs both columns")
        row = []
        for c in cols:
            if c.space is not space:
                raise ValueError("probe columns were built on a different space")
            row.append(float(c.velocity.coef @ lam + c.pressure.coef @ mu))
        out.append(row)
    return np.array(out)


def mollified_value(u, x, rho):
    """Average of a velocity field over the quadrature ball ``B(x, rho)``."""
    space = u.space
    return np.array([ball_load(space, x, rho, a)[0] @ u.coef for a in (0, 1)])


def symmetry_probe(space, x, y, rho=None):
    """Defect ``max_{α,β} |G^{αβ}(x,y) - G^{βα}(y,x)|`` and its relative size."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    r = float(np.linalg.norm(x - y))
    if r == 0:
        raise ValueError("symmetry probe needs distinct poles")
    hx, hy = local_h(space.mesh, x), local_h(space.mesh, y)
    cx, cy = green_columns(space, x, rho), green_columns(space, y, rho)
    rr = max(hx, hy, cx[0].rho, cy[0].rho)
    if r < 4 * rr:
        raise ValueError("poles closer than four mollifier/mesh radii")
    Gxy, _ = evaluate_green(cx, y)
    Gyx, _ = evaluate_green(cy, x)
    Gxy, Gyx = Gxy[0], Gyx[0]
    defect = float(np.max(np.abs(Gxy - Gyx.T)))
    scale = float(max(np.abs(Gxy).max(), np.abs(Gyx).max()))
    return {
        "x": x.tolist(),
        "y": y.tolist(),
        "r": r,
        "defect": defect,
        "relative": defect / scale if scale > 0 else 0.0,
        "G_xy": Gxy.tolist(),
        "G_yx": Gyx.tolist(),
    }


def probe_points(domain, x, radii, n_dir=8, margin=0.0):
    """Points ``x + r(cos θ, sin θ)`` inside Ω, ``θ`` on ``n_dir`` directions."""
    x = np.asarray(x, dtype=float)
    th = 2 * np.pi * np.arange(n_dir) / n_dir
    out = []
    for r in radii:
        p = x + r * np.column_stack([np.cos(th), np.sin(th)])
        ok = domain.contains(p, closed=False)
        if margin > 0:
            ok &= domain.distance_to_boundary(p) >= margin
        out.append(p[ok])
    return out


def _linfit(X, Y):
    A = np.column_stack([np.ones_like(X), X])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    pred = A @ coef
    ss = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((Y - pred) ** 2)) / ss if ss > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def log_bound_fit(domain, decomposition, x, base_h, levels=3, n_dir=8, mesh=None):
    """Fit ``max|G(x,y)| ≈ a + b log(d/r)`` over dyadic radii ``4h ≤ r ≤ d/4``.

    The mesh is graded toward ``x`` (``levels`` bisection levels) so the
    local mesh size at the pole is about ``base_h / 2**levels``.
    """
    if mesh is None:
        mesh = graded_refine_toward(triangulate(domain, decomposition, base_h), x, levels)
    space = FESpace(mesh)
    cols = green_columns(space, x)
    h = max(local_h(mesh, x), cols[0].rho)
    d = domain.diameter
    radii = [2.0**-k for k in range(1, 40) if 4 * h <= 2.0**-k <= d / 4]
    pts = probe_points(domain, x, radii, n_dir)
    rows, maxG = [], []
    for r, p in zip(radii, pts):
        if len(p) == 0:
            continue
        G, Pi = evaluate_green(cols, p)
        maxG.append((r, float(np.abs(G).max())))
        for yy, gg, pp in zip(p, G, Pi):
            rows.append(GreenSample(np.asarray(x, float), yy, gg, pp).row())
    r_arr = np.array([m[0] for m in maxG])
    g_arr = np.array([m[1] for m in maxG])
    a, b, r2 = _linfit(np.log(d / r_arr), g_arr)
    return {
        "pole": list(map(float, x)),
        "h_pole": h,
        "n_triangles": mesh.n_triangles,
        "radii": r_arr.tolist(),
        "max_abs_G": g_arr.tolist(),
        "intercept": a,
        "slope": b,
        "r2": r2,
        "stokeslet_slope": 1 / (4 * np.pi),
        "rows": rows,
    }


def _grad_magnitude(col):
    g = col.velocity.grad_at_quadrature()
    return np.sqrt(np.sum(g**2, axis=(-2, -1)))


def weak_l2_norms(space, poles, rho=None):
    """Empirical weak-L² quasinorms of ``|∇G(x,·)|`` and ``|Π(x,·)|`` per pole (max over α)."""
    out = []
    for x in poles:
        cols = green_columns(space, x, rho)
        ng = max(lorentz_norm(field_samples(space, _grad_magnitude(c)), 2, np.inf) for c in cols)
        npi = max(lorentz_norm(field_samples(space, c.pressure.at_quadrature()), 2, np.inf) for c in cols)
        out.append(
            {
                "pole": list(map(float, x)),
                "dist_boundary": float(space.mesh.domain.distance_to_boundary(np.asarray(x))[0]),
                "grad_G": ng,
                "Pi": npi,
            }
        )
    return out


def holder_fit(columns, domain, n_samples=64, ratios=None, seed=0, min_dist=None):
    """Fit ``γ`` in ``|G(x,y) - G(x,z)| ≤ C (|y-z|/|x-y|)^γ`` on far-field triples.

    For each ratio ``t`` the envelope ``max |G(x,y) - G(x,z)|`` over sampled
    pairs with ``|y - z| = t |x - y|`` (``t ≤ 1/2``) is recorded; ``γ`` is the
    slope of log-envelope against ``log t``.
    """
    rng = np.random.default_rng(seed)
    x = columns[0].x
    h = max(local_h(columns[0].space.mesh, x), columns[0].rho)
    min_dist = 4 * h if min_dist is None else min_dist
    ratios = [2.0**-k for k in range(1, 7)] if ratios is None else ratios
    # sample y far from the pole, then z on a small circle around y
    ys = []
    minx, miny, maxx, maxy = domain.polygon.bounds
    while len(ys) < n_samples:
        p = rng.uniform([minx, miny], [maxx, maxy], size=(4 * n_samples, 2))
        ok = domain.contains(p, closed=False) & (np.linalg.norm(p - x, axis=1) >= max(8 * h, 0.1 * domain.diameter))
        ys.extend(p[ok].tolist())
    ys = np.array(ys[:n_samples])
    theta = rng.uniform(0, 2 * np.pi, size=n_samples)
    env = []
    for t in ratios:
        r = t * np.linalg.norm(ys - x, axis=1)
        zs = ys + r[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
        ok = domain.contains(zs, closed=False) & (np.linalg.norm(zs - x, axis=1) >= min_dist)
        if not np.any(ok):
            continue
        Gy, _ = evaluate_green(columns, ys[ok])
        Gz, _ = evaluate_green(columns, zs[ok])
        env.append((t, float(np.max(np.abs(Gy - Gz)))))
    t_arr = np.array([e[0] for e in env])
    e_arr = np.array([e[1] for e in env])
    pos = e_arr > 0
    logC, gamma, r2 = _linfit(np.log(t_arr[pos]), np.log(e_arr[pos]))
    return {"gamma": gamma, "C": float(np.exp(logC)), "r2": r2, "ratios": t_arr.tolist(), "envelope": e_arr.tolist()}


def green_grad_norm(columns, q=2.2, rho=None):
    """``‖∇G(x,·)‖_{L^q(Ω ∖ Ω_rho(x))}``, max over α; ``rho`` defaults to d/8."""
    space = columns[0].space
    x = columns[0].x
    rho = space.mesh.domain.diameter / 8 if rho is None else rho
    region = local_domain(space.mesh.domain, x, rho)
    qp = space.quad_points.reshape(-1, 2)
    far = ~region.contains(qp).reshape(space.quad_weights.shape)
    vals = []
    for c in columns:
        s = field_samples(space, _grad_magnitude(c), far)
        vals.append(float(np.sum(s.weights * s.values**q) ** (1 / q)))
    return max(vals)
