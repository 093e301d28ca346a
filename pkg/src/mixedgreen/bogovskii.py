"""Right inverse of the divergence with zero trace on D.

The domain is covered by a chain of local domains ``ω_j = Ω_{R0}(x_j)``
whose half-radius cores cover Ω.  A datum ``f`` is split into pieces
``f_j`` supported in ``ω_j``, mean-free for ``j ≥ 1``, by the inductive
mean-transfer rule; each piece is inverted locally with zero trace on
``∂ω_j`` and the mass of ``f_0`` is carried out through ``N`` by a flux
field ``η``.

Everything discrete is exact: ``∫ q (div u - f) = 0`` for every P1
pressure ``q`` up to roundoff, and ``u`` vanishes identically on D.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import shapely
from shapely.ops import unary_union

from .fem import Field, SolverError
from .geometry import GeometryError, local_domain, opening_check

log = logging.getLogger(__name__)

__all__ = [
    "ChainCover",
    "FluxField",
    "Patch",
    "BogovskiiOperator",
    "build_chain",
    "decompose",
    "local_bogovskii",
    "solve_div",
    "flux_field",
    "chain_report",
]

MEAN_TOL = 1e-10


@dataclass(eq=False)
class ChainCover:
    """Ordered local domains ``ω_j`` with cores, anchored on N at ``ω_0``."""

    domain: object
    decomposition: object
    R0: float
    s: float
    centers: np.ndarray
    omegas: list
    cores: list
    flux_point: np.ndarray
    flux_normal: np.ndarray
    overlap_areas: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.omegas)


def _candidates(domain, R0):
    """Candidate centres: interior grid, boundary samples and vertices."""
    minx, miny, maxx, maxy = domain.polygon.bounds
    step = R0 / 4
    gx = np.arange(minx + step / 2, maxx, step)
    gy = np.arange(miny + step / 2, maxy, step)
    X, Y = np.meshgrid(gx, gy)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[domain.contains(pts, closed=False)]
    P = domain.perimeter
    nb = max(int(np.ceil(P / step)), 4)
    bpts = np.array([domain.point_at_arclength(s) for s in np.linspace(0, P, nb, endpoint=False)])
    allp = np.vstack([domain.vertices, bpts, pts])
    return np.unique(np.round(allp, 13), axis=0)


def _core(domain, x, R0):
    try:
        return local_domain(domain, x, R0 / 2).region
    except GeometryError:
        return None


def build_chain(domain, decomposition, R0=None, area_tol=1e-9):
    """Cover Ω by cores ``Ω_{R0/2}(x_j)`` and order them breadth-first from ``ω_0``.

    ``ω_0`` is anchored at a point of N whose boundary interval of radius
    ``R0/M`` lies in N.  Raises :class:`GeometryError` when no such point
    exists (N empty or too small).
    """
    R0 = float(domain.R0 if R0 is None else R0)
    if decomposition.is_empty("N"):
        raise GeometryError("N is empty: no admissible anchor for the flux domain (NOpen fails)")
    oc = opening_check(domain, decomposition)
    if not oc["N_open"]:
        raise GeometryError("no boundary interval of radius R0/M inside N (NOpen fails)")
    x0 = np.asarray(oc["N_witness"]["x"], dtype=float)
    s = R0 / (2 * domain.M)
    _, edge, _ = domain.nearest_boundary_point(x0)
    normal = domain.edge_normals[edge]

    target = domain.polygon
    cands = _candidates(domain, R0)
    cores = [_core(domain, c, R0) for c in cands]
    keep = [i for i, c in enumerate(cores) if c is not None and c.area > 0]
    cands = cands[keep]
    cores = np.array([cores[i] for i in keep], dtype=object)

    chosen = [x0]
    chosen_cores = [_core(domain, x0, R0)]
    uncovered = target.difference(chosen_cores[0])
    total = target.area
    while uncovered.area > area_tol * total:
        gain = shapely.area(shapely.intersection(cores, uncovered))
        k = int(np.argmax(gain))
        if gain[k] <= area_tol * total:
            # remnant not reachable by the candidates: centre a core on it
            c = np.array(uncovered.representative_point().coords[0])
            core = _core(domain, c, R0)
            if core is None or core.intersection(uncovered).area <= 0:
                raise GeometryError("could not cover the domain with local domains")
        else:
            c, core = cands[k], cores[k]
        chosen.append(np.asarray(c, dtype=float))
        chosen_cores.append(core)
        uncovered = uncovered.difference(core)

    # breadth-first order over core overlaps, ties by anchor lexicographic order
    n = len(chosen)
    centers = np.array(chosen)
    thr = 1e-10 * R0**2
    adj = [[] for _ in range(n)]
    for i in range(n):
        ov = shapely.area(shapely.intersection(np.array(chosen_cores, dtype=object), chosen_cores[i]))
        adj[i] = [j for j in range(n) if j != i and ov[j] > thr]
    lex = lambda j: (round(centers[j, 0], 12), round(centers[j, 1], 12))
    order, seen, queue = [], {0}, deque([0])
    while queue:
        i = queue.popleft()
        order.append(i)
        for j in sorted((j for j in adj[i] if j not in seen), key=lex):
            seen.add(j)
            queue.append(j)
    if len(order) != n:
        raise GeometryError("local-domain overlap graph is disconnected")
    centers = centers[order]
    cores_o = [chosen_cores[i] for i in order]
    omegas = [local_domain(domain, c, R0) for c in centers]
    ov = [0.0]
    acc = omegas[0].region
    for om in omegas[1:]:
        ov.append(float(om.region.intersection(acc).area))
        acc = unary_union([acc, om.region])
    return ChainCover(domain, decomposition, R0, s, centers, omegas, cores_o, x0, np.asarray(normal), np.array(ov))


# ----------------------------------------------------------------- patches
@dataclass(eq=False)
class Patch:
    """Discrete counterpart of a local domain: a set of mesh triangles."""

    triangles: np.ndarray  # indices into mesh.triangles
    tri_mask: np.ndarray
    velocity_dofs: np.ndarray  # global free-velocity dofs interior to the patch
    pressure_nodes: np.ndarray
    lu: object = None
    K: object = None
    B: object = None


def _boundary_edges_of(mesh, tris):
    te = mesh.triangle_edges[tris].ravel()
    cnt = np.bincount(te, minlength=len(mesh.edges))
    return np.nonzero(cnt == 1)[0]


def _largest_component(mesh, tris):
    if len(tris) == 0:
        return tris
    tset = set(tris.tolist())
    et = mesh.edge_triangles
    comp = {}
    best = []
    for t in tris:
        if t in comp:
            continue
        stack, cur = [t], []
        comp[t] = True
        while stack:
            a = stack.pop()
            cur.append(a)
            for e in mesh.triangle_edges[a]:
                for b in et[e]:
                    if b >= 0 and b != a and b in tset and b not in comp:
                        comp[b] = True
                        stack.append(b)
        if mesh.areas[cur].sum() > mesh.areas[best].sum() if best else True:
            best = cur
    return np.sort(np.array(best, dtype=int))


def _vertex_stars(mesh):
    n = mesh.n_nodes
    rows = mesh.triangles.ravel()
    cols = np.repeat(np.arange(mesh.n_triangles), 3)
    return sp.csr_matrix((np.ones_like(rows), (rows, cols)), shape=(n, mesh.n_triangles))


def patch_triangles(mesh, region, max_fix=1000):
    """Triangles with centroid in ``region``, repaired for P2/P1 stability."""
    c = mesh.centroids
    mask = shapely.contains_xy(region, c[:, 0], c[:, 1])
    tris = _largest_component(mesh, np.nonzero(mask)[0])
    stars = _vertex_stars(mesh)
    on_global = np.zeros(mesh.n_nodes, dtype=bool)
    on_global[mesh.boundary_nodes] = True
    for _ in range(max_fix):
        be = _boundary_edges_of(mesh, tris)
        bnodes = np.zeros(mesh.n_nodes, dtype=bool)
        bnodes[mesh.edges[be].ravel()] = True
        bad = tris[np.all(bnodes[mesh.triangles[tris]], axis=1)]
        if len(bad) == 0:
            break
        t = bad[0]
        verts = [v for v in mesh.triangles[t] if not on_global[v]]
        if not verts:
            break
        v = min(verts, key=lambda v: np.linalg.norm(mesh.nodes[v] - c[t]))
        tris = np.union1d(tris, stars[v].indices)
    return tris


def _build_patch(space, tris):
    mesh = space.mesh
    tri_mask = np.zeros(mesh.n_triangles, dtype=bool)
    tri_mask[tris] = True
    be = _boundary_edges_of(mesh, tris)
    n = space.n_vertices
    node_in = np.zeros(space.n_p2, dtype=bool)
    node_in[space.cell_dofs[tris].ravel()] = True
    node_in[mesh.edges[be].ravel()] = False
    node_in[n + be] = False
    node_in &= ~space.dirichlet_nodes
    nodes = np.nonzero(node_in)[0]
    vdofs = np.concatenate([nodes, space.n_p2 + nodes])
    pnodes = np.unique(mesh.triangles[tris].ravel())
    return Patch(tris, tri_mask, vdofs, pnodes)


def _factor_patch(space, patch):
    # the first local pressure row is implied by the others for mean-free data
    K = space.stiffness_grad[patch.velocity_dofs][:, patch.velocity_dofs]
    B = space.divergence[patch.pressure_nodes[1:]][:, patch.velocity_dofs]
    Kkkt = sp.bmat([[K, B.T], [B, None]], format="csc")
    try:
        patch.lu = spla.splu(Kkkt, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"local divergence problem is singular: {exc}") from exc
    patch.K, patch.B = Kkkt, B


# ------------------------------------------------------------------ flux field
@dataclass(eq=False)
class FluxField:
    """Discrete field ``η`` with ``∫ div η = 1``, supported in ``ω_0`` and zero on D."""

    field: Field
    center: np.ndarray
    radius: float
    divergence_integral: float
    boundary_flux: float


def flux_field(space, chain, patch0):
    """Smooth bump times the outward normal at the anchor, normalized to unit flux."""
    x0, s, nu = chain.flux_point, chain.s, chain.flux_normal
    r2 = np.sum((space.p2_nodes - x0) ** 2, axis=1) / s**2
    bump = np.where(r2 < 1, (1 - r2) ** 3, 0.0)
    # keep only nodes whose support stays in ω_0 and off D
    allowed = np.zeros(space.n_p2, dtype=bool)
    allowed[space.cell_dofs[patch0.triangles].ravel()] = True
    mesh = space.mesh
    be = _boundary_edges_of(mesh, patch0.triangles)
    interior_be = be[mesh.edge_triangles[be, 1] >= 0]  # patch boundary inside Ω
    allowed[mesh.edges[interior_be].ravel()] = False
    allowed[space.n_vertices + interior_be] = False
    allowed &= ~space.dirichlet_nodes
    bump = np.where(allowed, bump, 0.0)
    coef = np.concatenate([bump * nu[0], bump * nu[1]])
    div_int = -float(np.asarray(space.divergence.sum(axis=0)).ravel() @ coef)  # ∫ div η, since Σ_k ψ_k = 1
    if abs(div_int) < 1e-14:
        raise GeometryError("flux bump is unresolved by the mesh; refine near the N anchor")
    coef /= div_int
    fld = Field(space, coef, "velocity")
    # boundary flux on N edges by 3-point Gauss on each edge (exact for P2)
    pts, w, normal, phi, dofs = space.boundary_quadrature("N")
    u1, u2 = fld.components
    vals = np.stack([np.einsum("qi,ki->kq", phi, u[dofs]) for u in (u1, u2)], axis=-1)
    bflux = float(np.sum(w * np.einsum("kqa,ka->kq", vals, normal)))
    return FluxField(fld, x0, s, 1.0, bflux)


# ------------------------------------------------------------- decomposition
def decompose(chain_or_op, f):
    """Split quadrature values ``f`` (m, nq) into chain pieces ``f_0..f_N``.

    Each piece is supported on its discrete patch; pieces ``j ≥ 1`` have
    zero mean and ``Σ f_j = f`` at every quadrature node.
    """
    op = chain_or_op
    space = op.space
    w = space.quad_weights
    f = np.asarray(f, dtype=float)
    masks = [p.tri_mask for p in op.patches]
    union = np.zeros(space.mesh.n_triangles, dtype=bool)
    unions = []
    for m in masks:
        unions.append(union.copy())  # Ω_{k-1}
        union |= m
    if not np.all(union):
        raise GeometryError("chain patches do not cover the mesh")
    cur = f.copy()
    pieces = [None] * len(masks)
    for k in range(len(masks) - 1, 0, -1):
        prev = unions[k]
        new = masks[k] & ~prev
        over = masks[k] & prev
        area = float(w[over].sum())
        if area <= 0:
            raise GeometryError(f"local domain {k} does not overlap its predecessors")
        mass = float(np.sum(w[new] * cur[new]))
        fk = np.zeros_like(cur)
        fk[new] = cur[new]
        fk[over] -= mass / area
        pieces[k] = fk
        cur = cur - fk
    pieces[0] = cur
    return pieces


# ------------------------------------------------------------------ operator
class BogovskiiOperator:
    """Discrete right inverse of the divergence built on a fixed chain.

    Patch factorizations are computed once and reused for every datum.
    """

    def __init__(self, space, chain):
        if not space.has_neumann:
            raise GeometryError("N is empty (NOpen fails)")
        self.space = space
        self.chain = chain
        self.patches = []
        for om in chain.omegas:
            tris = patch_triangles(space.mesh, om.region)
            if len(tris) == 0:
                raise GeometryError("local domain contains no mesh triangles; refine the mesh")
            self.patches.append(_build_patch(space, tris))
        self.flux = flux_field(space, chain, self.patches[0])

    def _quad(self, f):
        sp_ = self.space
        if isinstance(f, Field):
            if f.kind != "pressure":
                raise ValueError("divergence datum must be a scalar field")
            return f.at_quadrature()
        if callable(f):
            return sp_.quad_values(f)
        f = np.asarray(f, dtype=float)
        if f.shape != sp_.quad_weights.shape:
            raise ValueError("datum must be given at the quadrature nodes")
        return f

    def local_solve(self, j, fq, check_mean=True):
        """Minimal-H¹ field on patch ``j`` with ``div u = fq`` against local pressures."""
        sp_ = self.space
        patch = self.patches[j]
        if patch.lu is None:
            _factor_patch(sp_, patch)
        w = sp_.quad_weights
        mean = float(np.sum(w * fq))
        scale = float(np.sum(w * np.abs(fq))) + 1e-300
        if check_mean and abs(mean) > MEAN_TOL * max(scale, 1.0):
            raise ValueError(f"local datum has nonzero mean {mean:.3e}")
        load = sp_.pressure_load(fq)[patch.pressure_nodes[1:]]
        nv = len(patch.velocity_dofs)
        rhs = np.concatenate([np.zeros(nv), -load])
        x = patch.lu.solve(rhs)
        for _ in range(2):
            r = rhs - patch.K @ x
            if np.linalg.norm(r) <= 1e-13 * max(np.linalg.norm(rhs), 1e-300):
                break
            x += patch.lu.solve(r)
        coef = np.zeros(sp_.n_velocity)
        coef[patch.velocity_dofs] = x[:nv]
        return coef

    def __call__(self, f, return_stages=False):
        sp_ = self.space
        fq = self._quad(f)
        pieces = decompose(self, fq)
        w = sp_.quad_weights
        c0 = float(np.sum(w * pieces[0]))
        eta = self.flux.field
        # div η at quadrature nodes
        g = eta.grad_at_quadrature()
        div_eta = g[..., 0, 0] + g[..., 1, 1]
        total = c0 * eta.coef
        stages = []
        for j, fj in enumerate(pieces):
            rhs = fj - c0 * div_eta if j == 0 else fj
            cj = self.local_solve(j, rhs)
            total = total + cj
            if return_stages:
                stages.append(
                    {
                        "index": j,
                        "f_L2": float(np.sqrt(np.sum(w * fj**2))),
                        "u_grad_L2": float(np.sqrt(cj @ (sp_.stiffness_grad @ cj))),
                    }
                )
        u = Field(sp_, total, "velocity")
        return (u, stages) if return_stages else u

    def residual(self, u, f):
        """Scaled ``max_k |∫ ψ_k (div u - f)|``."""
        fq = self._quad(f)
        r = -(self.space.divergence @ u.coef) - self.space.pressure_load(fq)
        scale = max(np.abs(self.space.pressure_load(np.abs(fq))).max(), 1e-300)
        return float(np.abs(r).max() / scale)

    def stability(self, u, f):
        fq = self._quad(f)
        w = self.space.quad_weights
        fn = float(np.sqrt(np.sum(w * fq**2)))
        val = u.at_quadrature()
        grd = u.grad_at_quadrature()
        h1 = float(np.sqrt(np.sum(w * np.sum(val**2, -1)) + np.sum(w * np.sum(grd**2, (-2, -1)))))
        return h1 / fn if fn > 0 else 0.0


def local_bogovskii(op, j, f):
    """Solve on ``ω_j`` for a mean-free datum (quadrature values supported on the patch)."""
    f = op._quad(f)
    outside = ~op.patches[j].tri_mask
    if np.any(f[outside] != 0):
        raise ValueError("datum must be supported on the local domain")
    return Field(op.space, op.local_solve(j, f), "velocity")


def solve_div(space, decomposition=None, f=None, chain=None, operator=None):
    """``u`` with ``div u = f`` discretely and ``u = 0`` on D.

    Returns ``(u, info)`` where ``info`` holds the residual, the D-trace,
    the stability ratio ``‖u‖_{H¹}/‖f‖`` and the N-flux.
    """
    if operator is None:
        if chain is None:
            chain = build_chain(space.mesh.domain, decomposition or space.mesh.decomposition)
        operator = BogovskiiOperator(space, chain)
    u, stages = operator(f, return_stages=True)
    sp_ = space
    d = sp_.dirichlet_nodes
    u1, u2 = u.components
    dtrace = float(max(np.abs(u1[d]).max(initial=0.0), np.abs(u2[d]).max(initial=0.0)))
    pts, w, normal, phi, dofs = sp_.boundary_quadrature("N")
    vals = np.stack([np.einsum("qi,ki->kq", phi, c[dofs]) for c in (u1, u2)], axis=-1)
    nflux = float(np.sum(w * np.einsum("kqa,ka->kq", vals, normal)))
    info = {
        "residual": operator.residual(u, f),
        "d_trace": dtrace,
        "stability": operator.stability(u, f),
        "n_flux": nflux,
        "stages": stages,
    }
    return u, info


def chain_report(chain, operator=None, stages=None):
    """JSON-serializable description of the chain."""
    rep = {
        "R0": chain.R0,
        "s": chain.s,
        "n_domains": len(chain),
        "flux_anchor": chain.flux_point.tolist(),
        "domains": [],
    }
    for j, (c, om) in enumerate(zip(chain.centers, chain.omegas)):
        d = {
            "index": j,
            "anchor": [float(c[0]), float(c[1])],
            "radius": chain.R0,
            "kind": om.kind,
            "area": om.area,
            "overlap_area": float(chain.overlap_areas[j]),
        }
        if operator is not None:
            d["n_triangles"] = int(len(operator.patches[j].triangles))
        if stages is not None:
            d.update({k: v for k, v in stages[j].items() if k != "index"})
        rep["domains"].append(d)
    return rep
