"""Taylor-Hood discretization of the mixed Stokes problem.

Velocity is continuous piecewise quadratic, pressure continuous piecewise
linear.  The bilinear form is ``a(u, v) = 2 ∫ ε(u) : ε(v)`` and the
divergence coupling is ``b(q, v) = -∫ q div v``; the discrete operator

    T(u, p) = (a(u, ·) - ∫ p div ·,  -∫ · div u)

is the block matrix ``[[A, Bᵀ], [B, 0]]`` acting on velocities that vanish
on the Dirichlet set.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import LINE_QUAD, TRI_QUAD

log = logging.getLogger(__name__)

__all__ = [
    "FESpace",
    "Field",
    "SaddleSystem",
    "SolverError",
    "IncompatibleDataError",
    "assemble",
    "solve",
    "apply_T",
    "inf_sup_constant",
    "p2_values",
    "RESIDUAL_TOL",
]

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Singular system or a solve that misses the residual contract."""


class IncompatibleDataError(ValueError):
    """Loads that no solution can satisfy (e.g. ∫g ≠ 0 with N empty)."""


def p2_values(lam):
    """P2 basis at barycentric points ``lam`` (..., 3) -> (..., 6)."""
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0],
        axis=-1,
    )


def p2_gradients(lam, glam):
    """Gradients of the P2 basis.

    ``lam`` is (n, 3) barycentric coordinates, ``glam`` (n, 3, 2) the
    barycentric gradients of the containing triangles.  Returns (n, 6, 2).
    """
    l = lam[..., :, None]
    g0, g1, g2 = glam[..., 0, :], glam[..., 1, :], glam[..., 2, :]
    l0, l1, l2 = l[..., 0, :], l[..., 1, :], l[..., 2, :]
    return np.stack(
        [
            (4 * l0 - 1) * g0,
            (4 * l1 - 1) * g1,
            (4 * l2 - 1) * g2,
            4 * (l1 * g0 + l0 * g1),
            4 * (l2 * g1 + l1 * g2),
            4 * (l0 * g2 + l2 * g0),
        ],
        axis=-2,
    )


class FESpace:
    """P2 velocity / P1 pressure on a mesh with Dirichlet constraints on closed D."""

    def __init__(self, mesh):
        self.mesh = mesh
        n = mesh.n_nodes
        self.n_vertices = n
        self.n_edges = len(mesh.edges)
        self.n_p2 = n + self.n_edges
        self.n_velocity = 2 * self.n_p2
        self.n_pressure = n
        self.cell_dofs = np.hstack([mesh.triangles, n + mesh.triangle_edges])
        e = mesh.edges
        self.p2_nodes = np.vstack([mesh.nodes, 0.5 * (mesh.nodes[e[:, 0]] + mesh.nodes[e[:, 1]])])

        d = np.zeros(self.n_p2, dtype=bool)
        d[:n] = mesh.dirichlet_nodes
        d[n + mesh.boundary_edge_index[mesh.boundary_labels == "D"]] = True
        self.dirichlet_nodes = d
        self.dirichlet_dofs = np.concatenate([np.nonzero(d)[0], self.n_p2 + np.nonzero(d)[0]])
        free = np.ones(self.n_velocity, dtype=bool)
        free[self.dirichlet_dofs] = False
        self.free_dofs = np.nonzero(free)[0]
        self.has_neumann = bool(np.any(mesh.boundary_labels == "N"))
        self.has_dirichlet = bool(np.any(d))

        # barycentric gradients, constant per triangle
        p = mesh.nodes[mesh.triangles]
        A2 = 2 * mesh.areas
        g = np.empty((mesh.n_triangles, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            g[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / A2
            g[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / A2
        self.grad_lambda = g
        lam, w = TRI_QUAD
        self.quad_lambda = lam
        self.quad_points, self.quad_weights = mesh.quadrature_points()
        self.phi = p2_values(lam)  # (nq, 6)
        nq = len(w)
        self.dphi = p2_gradients(
            np.broadcast_to(lam, (mesh.n_triangles, nq, 3)),
            np.broadcast_to(g[:, None], (mesh.n_triangles, nq, 3, 2)),
        )  # (m, nq, 6, 2)
        self.psi = lam  # P1 basis values at quadrature points (nq, 3)

    # ------------------------------------------------------------------ helpers
    def _scatter(self, rows, cols, vals, shape):
        m = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape)
        return m.tocsr()

    def _elem_assemble(self, Ke, rdofs, cdofs, shape):
        r = np.broadcast_to(rdofs[:, :, None], Ke.shape)
        c = np.broadcast_to(cdofs[:, None, :], Ke.shape)
        return self._scatter(r, c, Ke, shape)

    @property
    def velocity_dof_index(self):
        """Velocity dof of (component, P2 node) is ``component * n_p2 + node``."""
        return self.n_p2

    # ----------------------------------------------------------------- matrices
    @cached_property
    def laplace(self):
        Ke = np.einsum("mq,mqid,mqjd->mij", self.quad_weights, self.dphi, self.dphi)
        return self._elem_assemble(Ke, self.cell_dofs, self.cell_dofs, (self.n_p2, self.n_p2))

    def _cross(self, k, l):
        Ke = np.einsum("mq,mqi,mqj->mij", self.quad_weights, self.dphi[..., k], self.dphi[..., l])
        return self._elem_assemble(Ke, self.cell_dofs, self.cell_dofs, (self.n_p2, self.n_p2))

    @cached_property
    def stiffness_eps(self):
        """Matrix of ``a(u, v) = 2 ∫ ε(u) : ε(v)`` on all velocity dofs."""
        L = self.laplace
        D = {(k, l): self._cross(k, l) for k in range(2) for l in range(2)}
        return sp.bmat([[L + D[0, 0], D[1, 0]], [D[0, 1], L + D[1, 1]]], format="csr")

    @cached_property
    def stiffness_grad(self):
        """Matrix of ``∫ ∇u : ∇v`` (vector Laplacian)."""
        return sp.block_diag([self.laplace, self.laplace], format="csr")

    @cached_property
    def mass_p2(self):
        Ke = np.einsum("mq,qi,qj->mij", self.quad_weights, self.phi, self.phi)
        return self._elem_assemble(Ke, self.cell_dofs, self.cell_dofs, (self.n_p2, self.n_p2))

    @cached_property
    def mass_velocity(self):
        return sp.block_diag([self.mass_p2, self.mass_p2], format="csr")

    @cached_property
    def mass_pressure(self):
        Ke = np.einsum("mq,qi,qj->mij", self.quad_weights, self.psi, self.psi)
        t = self.mesh.triangles
        return self._elem_assemble(Ke, t, t, (self.n_pressure, self.n_pressure))

    @cached_property
    def pressure_mean(self):
        """Vector ``(∫ ψ_k)_k``; its dot product with p is ``∫ p``."""
        return np.asarray(self.mass_pressure.sum(axis=1)).ravel()

    @cached_property
    def divergence(self):
        """``B[k, (a, i)] = -∫ ψ_k ∂_a φ_i``."""
        t = self.mesh.triangles
        blocks = []
        for a in range(2):
            Ke = -np.einsum("mq,qk,mqi->mki", self.quad_weights, self.psi, self.dphi[..., a])
            blocks.append(self._elem_assemble(Ke, t, self.cell_dofs, (self.n_pressure, self.n_p2)))
        return sp.hstack(blocks, format="csr")

    # --------------------------------------------------------------- load terms
    def velocity_load(self, values):
        """``∫ f · φ`` for ``values`` of shape (m, nq, 2) at the quadrature points."""
        out = np.zeros(self.n_velocity)
        for a in range(2):
            le = np.einsum("mq,qi,mq->mi", self.quad_weights, self.phi, values[..., a])
            np.add.at(out, a * self.n_p2 + self.cell_dofs, le)
        return out

    def pressure_load(self, values):
        """``∫ g ψ_k`` for ``values`` of shape (m, nq)."""
        out = np.zeros(self.n_pressure)
        le = np.einsum("mq,qk,mq->mk", self.quad_weights, self.psi, values)
        np.add.at(out, self.mesh.triangles, le)
        return out

    @cached_property
    def neumann_edges(self):
        """Boundary N edges as (vertex a, vertex b, P2 midpoint node, outward normal)."""
        mesh = self.mesh
        sel = mesh.boundary_labels == "N"
        be = mesh.boundary_edges[sel]
        mid = self.n_vertices + mesh.boundary_edge_index[sel]
        # orient each edge so the interior lies to its left
        tri = mesh.edge_triangles[mesh.boundary_edge_index[sel], 0]
        third = np.array([[v for v in mesh.triangles[t] if v not in e][0] for t, e in zip(tri, be)], dtype=int)
        a, b = mesh.nodes[be[:, 0]], mesh.nodes[be[:, 1]]
        c = mesh.nodes[third]
        cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        flip = cross < 0
        be = be.copy()
        be[flip] = be[flip][:, ::-1]
        a, b = mesh.nodes[be[:, 0]], mesh.nodes[be[:, 1]]
        t = b - a
        L = np.hypot(*t.T)
        normal = np.column_stack([t[:, 1], -t[:, 0]]) / L[:, None]
        return be, mid, normal, L

    def boundary_quadrature(self, label="N"):
        """Points (k, 3, 2), weights (k, 3), normals (k, 2) and P2 values (3, 3) on edges with ``label``."""
        if label != "N":
            raise ValueError("only N-edge quadrature is needed")
        be, mid, normal, L = self.neumann_edges
        s, w = LINE_QUAD
        a, b = self.mesh.nodes[be[:, 0]], self.mesh.nodes[be[:, 1]]
        pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        phi = np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=1)  # a, b, mid
        return pts, L[:, None] * w[None, :], normal, phi, np.column_stack([be, mid])

    def traction_load(self, f_N):
        out = np.zeros(self.n_velocity)
        if not self.has_neumann or f_N is None:
            return out
        pts, w, normal, phi, dofs = self.boundary_quadrature()
        k = len(w)
        nrm = np.repeat(normal[:, None, :], pts.shape[1], axis=1)
        vals = np.asarray(f_N(pts.reshape(-1, 2), nrm.reshape(-1, 2)), dtype=float).reshape(k, -1, 2)
        for a in range(2):
            le = np.einsum("kq,qi,kq->ki", w, phi, vals[..., a])
            np.add.at(out, a * self.n_p2 + dofs, le)
        return out

    # -------------------------------------------------------------- evaluation
    def interpolate(self, fn):
        """Nodal P2 interpolant of a vector function, as a full coefficient vector."""
        v = np.asarray(fn(self.p2_nodes), dtype=float).reshape(self.n_p2, 2)
        return np.concatenate([v[:, 0], v[:, 1]])

    def interpolate_scalar_p2(self, fn):
        return np.asarray(fn(self.p2_nodes), dtype=float).reshape(self.n_p2)

    def interpolate_pressure(self, fn):
        return np.asarray(fn(self.mesh.nodes), dtype=float).reshape(self.n_pressure)

    def quad_values(self, fn, shape=()):
        pts = self.quad_points.reshape(-1, 2)
        v = np.asarray(fn(pts), dtype=float)
        return v.reshape(self.quad_points.shape[:2] + shape)

    # ------------------------------------------------------------ factorization
    def saddle_matrix(self, form="eps", pin_mean=None):
        """Block matrix of T on free velocity dofs.

        With ``pin_mean`` the first pressure node is removed; for compatible
        data its equation is implied by the others because constants lie in
        the kernel of ``Bᵀ``.  The pressure mean is fixed afterwards.
        """
        pin_mean = (not self.has_neumann) if pin_mean is None else pin_mean
        K = self.stiffness_eps if form == "eps" else self.stiffness_grad
        f = self.free_dofs
        A = K[f][:, f]
        B = self.divergence[:, f]
        if pin_mean:
            B = B[1:]
        return sp.bmat([[A, B.T], [B, None]], format="csc")

    def factorized(self, form="eps", pin_mean=None):
        pin_mean = (not self.has_neumann) if pin_mean is None else pin_mean
        key = (form, pin_mean)
        cache = self.__dict__.setdefault("_lu_cache", {})
        if key not in cache:
            K = self.saddle_matrix(form, pin_mean)
            try:
                lu = spla.splu(K, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SolverError(f"saddle-point factorization failed: {exc}") from exc
            cache[key] = (K, lu)
        return cache[key]

    def saddle_solve(self, rhs_u, rhs_p, form="eps", pin_mean=None):
        """One factorized solve (no refinement); accepts 1-D or 2-D right sides."""
        pin_mean = (not self.has_neumann) if pin_mean is None else pin_mean
        K, lu = self.factorized(form, pin_mean)
        nf = len(self.free_dofs)
        rp = rhs_p[1:] if pin_mean else rhs_p
        x = lu.solve(np.concatenate([rhs_u, rp]))
        xu = x[:nf]
        xp = x[nf:]
        if pin_mean:
            xp = np.concatenate([np.zeros((1,) + xp.shape[1:]), xp])
            xp = xp - np.tensordot(self.pressure_mean, xp, axes=(0, 0)) / self.pressure_mean.sum()
        return xu, xp


class Field:
    """Discrete velocity (P2 vector) or pressure (P1 scalar) field."""

    def __init__(self, space, coef, kind="velocity"):
        if kind not in ("velocity", "pressure"):
            raise ValueError("kind must be 'velocity' or 'pressure'")
        self.space = space
        self.coef = np.asarray(coef, dtype=float)
        self.kind = kind
        n = space.n_velocity if kind == "velocity" else space.n_pressure
        if self.coef.shape != (n,):
            raise ValueError(f"coefficient vector must have length {n}")

    @property
    def components(self):
        n = self.space.n_p2
        return self.coef[:n], self.coef[n:]

    def _locate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tri, lam = self.space.mesh.locate(pts)
        if np.any(tri < 0):
            raise ValueError("evaluation point outside the mesh")
        return pts, tri, lam

    def __call__(self, points):
        pts, tri, lam = self._locate(points)
        if self.kind == "pressure":
            return np.einsum("nk,nk->n", lam, self.coef[self.space.mesh.triangles[tri]])
        phi = p2_values(lam)
        dofs = self.space.cell_dofs[tri]
        u1, u2 = self.components
        return np.column_stack([np.einsum("ni,ni->n", phi, u1[dofs]), np.einsum("ni,ni->n", phi, u2[dofs])])

    def gradient(self, points):
        """Velocity gradient ``G[n, a, i] = ∂u_a/∂x_i`` (pressure: ``∂p/∂x_i``)."""
        pts, tri, lam = self._locate(points)
        glam = self.space.grad_lambda[tri]
        if self.kind == "pressure":
            return np.einsum("nk,nki->ni", self.coef[self.space.mesh.triangles[tri]], glam)
        dphi = p2_gradients(lam, glam)
        dofs = self.space.cell_dofs[tri]
        u1, u2 = self.components
        return np.stack([np.einsum("nj,nji->ni", u[dofs], dphi) for u in (u1, u2)], axis=1)

    def at_quadrature(self):
        sp_ = self.space
        if self.kind == "pressure":
            return np.einsum("qk,mk->mq", sp_.psi, self.coef[sp_.mesh.triangles])
        u1, u2 = self.components
        d = sp_.cell_dofs
        return np.stack([np.einsum("qi,mi->mq", sp_.phi, u[d]) for u in (u1, u2)], axis=-1)

    def grad_at_quadrature(self):
        """(m, nq, 2, 2) velocity gradient, or (m, nq, 2) pressure gradient."""
        sp_ = self.space
        if self.kind == "pressure":
            g = np.einsum("mk,mki->mi", self.coef[sp_.mesh.triangles], sp_.grad_lambda)
            return np.broadcast_to(g[:, None, :], sp_.quad_points.shape[:2] + (2,)).copy()
        u1, u2 = self.components
        d = sp_.cell_dofs
        return np.stack([np.einsum("mi,mqid->mqd", u[d], sp_.dphi) for u in (u1, u2)], axis=2)

    def nodal_values(self):
        """Values at mesh vertices (velocity (n, 2), pressure (n,))."""
        if self.kind == "pressure":
            return self.coef.copy()
        u1, u2 = self.components
        n = self.space.n_vertices
        return np.column_stack([u1[:n], u2[:n]])

    def __add__(self, other):
        return Field(self.space, self.coef + other.coef, self.kind)

    def __sub__(self, other):
        return Field(self.space, self.coef - other.coef, self.kind)

    def __mul__(self, c):
        return Field(self.space, c * self.coef, self.kind)

    __rmul__ = __mul__


@dataclass
class SaddleSystem:
    """Assembled discrete mixed problem on the free velocity dofs."""

    space: FESpace
    A: sp.csr_matrix
    B: sp.csr_matrix
    rhs_lambda: np.ndarray
    rhs_mu: np.ndarray
    lift: np.ndarray
    full_lambda: np.ndarray = field(repr=False, default=None)
    pin_mean: bool = False


def _as_quad(space, fn, shape):
    if fn is None:
        return None
    if callable(fn):
        return space.quad_values(fn, shape)
    v = np.asarray(fn, dtype=float)
    if v.shape != space.quad_points.shape[:2] + shape:
        raise ValueError("load array must be given at the quadrature points")
    return v


def _load_vectors(space, f=None, g=None, f_N=None, grad_g=None):
    lam = np.zeros(space.n_velocity)
    mu = np.zeros(space.n_pressure)
    fq = _as_quad(space, f, (2,))
    if fq is not None:
        lam += space.velocity_load(fq)
    lam += space.traction_load(f_N)
    if g is not None:
        gq = _as_quad(space, g, ())
        if grad_g is not None:
            ggq = _as_quad(space, grad_g, (2,))
        elif callable(g):
            # gradient of the P2 interpolant of g
            coef = space.interpolate_scalar_p2(g)
            ggq = np.einsum("mi,mqid->mqd", coef[space.cell_dofs], space.dphi)
        else:
            raise ValueError("grad_g is required when g is given as quadrature values")
        lam -= space.velocity_load(ggq)
        mu += space.pressure_load(gq)
    return lam, mu


def assemble(space, f=None, g=None, f_N=None, f_D=None, grad_g=None):
    """Assemble the discrete weak mixed problem.

    Loads are callables of points ``(n, 2)`` (``f_N`` also receives the
    outward normals) or arrays at the quadrature points.  The velocity load
    is ``∫ f·φ + ∫_N f_N·φ dσ - ∫ ∇g·φ`` and the pressure load ``∫ g q``, so
    the constraint row enforces ``-div u = g`` weakly.  Nonzero Dirichlet
    data ``f_D`` is lifted by interpolation.
    """
    lam, mu = _load_vectors(space, f, g, f_N, grad_g)
    lift = np.zeros(space.n_velocity)
    if f_D is not None:
        full = space.interpolate(f_D)
        lift[space.dirichlet_dofs] = full[space.dirichlet_dofs]
    K = space.stiffness_eps
    B = space.divergence
    free = space.free_dofs
    rhs_lambda = lam[free] - K[free] @ lift
    rhs_mu = mu - B @ lift
    pin = not space.has_neumann
    if pin:
        total = float(rhs_mu.sum())
        scale = float(np.abs(rhs_mu).sum()) + 1e-300
        if abs(total) > 1e-10 * max(scale, 1.0):
            raise IncompatibleDataError(
                "N is empty: the divergence data must have zero total mass "
                f"(got ∫g + flux = {total:.3e})"
            )
    return SaddleSystem(space, K[free][:, free], B[:, free], rhs_lambda, rhs_mu, lift, lam, pin)


def _relres(r, b, scale):
    """Residual norm relative to the rhs or to the size of the summed terms."""
    den = max(np.linalg.norm(b), np.linalg.norm(scale))
    return 0.0 if den == 0 else float(np.linalg.norm(r) / den)


def _solve_saddle(space, rhs_lambda, rhs_mu, form="eps", pin_mean=None, tol=RESIDUAL_TOL, refine=3):
    """Solve T x = rhs on free dofs, with iterative refinement to the residual contract."""
    if form == "eps" and not space.has_dirichlet:
        raise SolverError("singular system: D is empty, rigid motions lie in the kernel (DOpen fails)")
    K = space.stiffness_eps if form == "eps" else space.stiffness_grad
    f = space.free_dofs
    A = K[f][:, f]
    B = space.divergence[:, f]

    absA, absB = abs(A), abs(B)

    def residual(xu, xp):
        ru = rhs_lambda - (A @ xu + B.T @ xp)
        rp = rhs_mu - B @ xu
        su = absA @ np.abs(xu) + absB.T @ np.abs(xp)
        sp_ = absB @ np.abs(xu)
        return ru, rp, _relres(ru, rhs_lambda, su), _relres(rp, rhs_mu, sp_)

    xu, xp = space.saddle_solve(rhs_lambda, rhs_mu, form, pin_mean)
    for _ in range(refine):
        ru, rp, res_u, res_p = residual(xu, xp)
        if max(res_u, res_p) <= tol:
            break
        du, dp = space.saddle_solve(ru, rp, form, pin_mean)
        xu, xp = xu + du, xp + dp
    ru, rp, res_u, res_p = residual(xu, xp)
    if not (np.all(np.isfinite(xu)) and np.all(np.isfinite(xp))) or max(res_u, res_p) > tol:
        raise SolverError(f"solve missed the residual contract: velocity {res_u:.2e}, pressure {res_p:.2e}")
    return xu, xp, (res_u, res_p)


def solve(system):
    """Discrete ``T^{-1}(λ, μ)``: returns ``(u, p)`` as fields, with the lift added back."""
    space = system.space
    xu, xp, res = _solve_saddle(space, system.rhs_lambda, system.rhs_mu, pin_mean=system.pin_mean)
    u = system.lift.copy()
    u[space.free_dofs] += xu
    uf, pf = Field(space, u, "velocity"), Field(space, xp, "pressure")
    uf.residuals = pf.residuals = res
    return uf, pf


def apply_T(u, p):
    """Forward operator: ``λ = A u + Bᵀ p`` on free dofs, ``μ = B u``."""
    if u.space is not p.space:
        raise ValueError("velocity and pressure live on different spaces")
    if u.kind != "velocity" or p.kind != "pressure":
        raise ValueError("apply_T expects (velocity, pressure)")
    space = u.space
    free = space.free_dofs
    lam = space.stiffness_eps[free] @ u.coef + space.divergence[:, free].T @ p.coef
    mu = space.divergence @ u.coef
    return lam, mu


def inf_sup_constant(space, deflate_constants=None, tol=1e-8, maxiter=500, block=3, seed=0):
    """Discrete inf-sup constant β of the velocity/pressure pairing.

    β² is the smallest eigenvalue of ``B A⁻¹ Bᵀ x = β² M x`` with ``A`` the
    vector Laplacian on free velocity dofs and ``M`` the pressure mass
    matrix.  Computed by inverse subspace iteration through the saddle-point
    factorization.  With N empty the constants are removed unless
    ``deflate_constants=False``, in which case they are a null vector and
    β = 0 is returned.
    """
    deflate = (not space.has_neumann) if deflate_constants is None else deflate_constants
    M = space.mass_pressure
    one = np.ones(space.n_pressure)
    B = space.divergence[:, space.free_dofs]
    if not deflate:
        # look for a constant null vector of Bᵀ before iterating
        w = B.T @ one
        if np.linalg.norm(w) <= 1e-10 * np.sqrt(one @ (M @ one)) * max(1.0, abs(B).max()):
            return 0.0
    pin = deflate and not space.has_neumann
    nf = len(space.free_dofs)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((space.n_pressure, block))

    def deflate_vec(V):
        if pin:
            c = (one @ (M @ V)) / (one @ (M @ one))
            V = V - np.outer(one, c)
        return V

    X = deflate_vec(X)
    prev = np.inf
    beta2 = np.nan
    for it in range(maxiter):
        MX = M @ X
        _, Z = space.saddle_solve(np.zeros((nf, block)), MX, "grad", pin)
        Y = deflate_vec(-Z)  # Y = S⁻¹ M X
        # Rayleigh-Ritz for the pencil (M S⁻¹ M, M) on span(Y)
        MY = M @ Y
        Q = Y.T @ MY
        # S-products: Yᵀ S Y = Yᵀ M X (since S Y = M X)
        SY = Y.T @ MX
        SY = 0.5 * (SY + SY.T)
        evals, evecs = _gen_eig(SY, Q)
        X = Y @ evecs
        X /= np.sqrt(np.einsum("ij,ij->j", X, M @ X))
        beta2 = evals[0]
        if abs(beta2 - prev) <= tol * max(abs(beta2), 1e-300):
            break
        prev = beta2
    return float(np.sqrt(max(beta2, 0.0)))


def _gen_eig(A, B):
    from scipy.linalg import eigh

    w, v = eigh(A, B)
    return w, v
