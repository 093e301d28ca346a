"""Conforming triangle meshes with boundary labels, refinement and quadrature."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "TriangleMesh",
    "MeshError",
    "triangulate",
    "refine",
    "graded_refine_toward",
    "rectangle_mesh",
    "TRI_QUAD",
    "LINE_QUAD",
    "dump_mesh",
    "load_mesh",
]

MAX_NODES = 600_000


class MeshError(ValueError):
    """Infeasible mesh request (bad size, node budget exceeded)."""


# Symmetric degree-4 rule on the reference triangle: barycentric points, weights sum to 1.
def _dunavant4():
    a, wa = 0.445948490915965, 0.223381589678011
    b, wb = 0.091576213509771, 0.109951743655322
    pts = []
    w = []
    for c, wc in ((a, wa), (b, wb)):
        for perm in ((c, c, 1 - 2 * c), (c, 1 - 2 * c, c), (1 - 2 * c, c, c)):
            pts.append(perm)
            w.append(wc)
    return np.array(pts), np.array(w)


TRI_QUAD = _dunavant4()
# three-point Gauss rule on [0, 1] (exact to degree 5)
LINE_QUAD = (
    np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)]),
    np.array([5.0, 8.0, 5.0]) / 18.0,
)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Conforming triangulation.

    ``boundary_labels[k]`` is ``'D'`` or ``'N'`` for ``boundary_edges[k]``;
    ``dirichlet_nodes`` flags vertices on the closed Dirichlet set (this
    includes isolated Dirichlet points that carry no Dirichlet edge).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_labels: np.ndarray
    dirichlet_nodes: np.ndarray
    domain: object = None
    decomposition: object = None

    def __post_init__(self):
        for name in ("nodes", "triangles", "boundary_edges", "boundary_labels", "dirichlet_nodes"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def diameters(self):
        p = self.nodes[self.triangles]
        lens = np.stack([np.hypot(*(p[:, (k + 1) % 3] - p[:, k]).T) for k in range(3)], axis=1)
        return lens.max(axis=1)

    @property
    def h(self):
        return float(self.diameters.max())

    @cached_property
    def angles(self):
        p = self.nodes[self.triangles]
        out = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            c = np.einsum("ij,ij->i", u, v) / (np.hypot(*u.T) * np.hypot(*v.T))
            out.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        return np.stack(out, axis=1)

    @property
    def min_angle(self):
        return float(self.angles.min())

    @cached_property
    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def _edge_data(self):
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        key = np.sort(local, axis=1)
        edges, inv = np.unique(key, axis=0, return_inverse=True)
        return edges, inv.reshape(-1, 3)

    @property
    def edges(self):
        """Unique edges as sorted vertex pairs."""
        return self._edge_data[0]

    @property
    def triangle_edges(self):
        """Edge index of local edges (0,1), (1,2), (2,0) of each triangle."""
        return self._edge_data[1]

    @cached_property
    def boundary_edge_index(self):
        """Index into ``edges`` of each boundary edge."""
        lookup = {tuple(e): k for k, e in enumerate(map(tuple, self.edges))}
        return np.array([lookup[tuple(sorted(e))] for e in self.boundary_edges], dtype=int)

    @cached_property
    def boundary_nodes(self):
        flag = np.zeros(self.n_nodes, dtype=bool)
        flag[self.boundary_edges.ravel()] = True
        return flag

    @cached_property
    def edge_triangles(self):
        """For every edge, the (up to two) adjacent triangles; -1 if absent."""
        out = -np.ones((len(self.edges), 2), dtype=int)
        e = self.triangle_edges.ravel()
        t = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(e, kind="stable")
        e, t = e[order], t[order]
        first = np.ones(len(e), dtype=bool)
        first[1:] = e[1:] != e[:-1]
        out[e[first], 0] = t[first]
        out[e[~first], 1] = t[~first]
        return out

    @cached_property
    def _tree(self):
        return cKDTree(self.centroids)

    def barycentric(self, tri, points):
        p = self.nodes[self.triangles[tri]]
        a, b, c = p[:, 0], p[:, 1], p[:, 2]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        l1 = ((points[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (points[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / det
        l2 = ((b[:, 0] - a[:, 0]) * (points[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (points[:, 0] - a[:, 0])) / det
        return np.column_stack([1 - l1 - l2, l1, l2])

    def locate(self, points, tol=1e-10):
        """Containing triangle and barycentric coordinates; -1 when outside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(pts)
        tri = -np.ones(n, dtype=int)
        bary = np.zeros((n, 3))
        k = min(16, self.n_triangles)
        _, cand = self._tree.query(pts, k=k)
        cand = np.atleast_2d(cand).reshape(n, k)
        best = -np.inf * np.ones(n)
        for j in range(k):
            lam = self.barycentric(cand[:, j], pts)
            score = lam.min(axis=1)
            better = (score > best) & (tri < 0) | (score > best) & (best < -tol)
            tri[better] = cand[better, j]
            bary[better] = lam[better]
            best[better] = score[better]
        miss = best < -tol
        for i in np.nonzero(miss)[0]:
            lam = self.barycentric(np.arange(self.n_triangles), np.repeat(pts[i : i + 1], self.n_triangles, 0))
            j = int(np.argmax(lam.min(axis=1)))
            if lam[j].min() >= -tol:
                tri[i], bary[i], best[i] = j, lam[j], lam[j].min()
        tri[best < -tol] = -1
        return tri, bary

    def quadrature_points(self):
        """Physical quadrature points ``(m, nq, 2)`` and weights ``(m, nq)``."""
        lam, w = TRI_QUAD
        p = self.nodes[self.triangles]
        pts = np.einsum("qk,mkd->mqd", lam, p)
        return pts, self.areas[:, None] * w[None, :]

    def total_area(self):
        return float(self.areas.sum())

    def with_swapped_labels(self):
        """The same mesh with D and N exchanged on the boundary."""
        swap = np.where(self.boundary_labels == "D", "N", "D")
        dn = np.zeros(self.n_nodes, dtype=bool)
        dn[self.boundary_edges[swap == "D"].ravel()] = True
        dec = self.decomposition.swapped() if self.decomposition is not None else None
        return TriangleMesh(self.nodes, self.triangles, self.boundary_edges, swap, dn, self.domain, dec)


def _assemble_mesh(nodes, tris, bedges, blabels, dpoints, domain, decomposition):
    nodes = np.asarray(nodes, dtype=float)
    tris = np.asarray(tris, dtype=int)
    p = nodes[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    bedges = np.asarray(bedges, dtype=int).reshape(-1, 2)
    blabels = np.asarray(blabels, dtype="<U1")
    dn = np.zeros(len(nodes), dtype=bool)
    dn[bedges[blabels == "D"].ravel()] = True
    dn[np.asarray(list(dpoints), dtype=int)] = True
    return TriangleMesh(nodes, tris, bedges, blabels, dn, domain, decomposition)


def _pslg(domain, decomposition):
    """Boundary points, closed-ring segments, segment labels and isolated D nodes."""
    pts = []
    labels = []
    dpoints = []
    wrap = []
    for e in range(domain.n_edges):
        breaks, _, points = decomposition.edge_pieces(e)
        ts = sorted({0.0, 1.0}.union(breaks.tolist(), points))
        for a, b in zip(ts[:-1], ts[1:]):
            if any(abs(a - q) < 1e-12 for q in points):
                dpoints.append(len(pts))
            pts.append(domain.point_on_edge(e, a))
            labels.append(decomposition.label_at(e, 0.5 * (a + b)))
        if any(abs(1.0 - q) < 1e-12 for q in points):
            wrap.append(len(pts))
    n = len(pts)
    dpoints += [k % n for k in wrap]
    segs = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    return np.array(pts), segs, labels, dpoints


def triangulate(domain, decomposition, target_h, min_angle=30.0, max_nodes=MAX_NODES):
    """Quality triangulation with ``h <= target_h``.

    Polygon vertices and D/N transition points are mesh nodes; boundary
    edges inherit the label of the segment they refine.
    """
    import triangle as tr

    if not target_h > 0:
        raise MeshError("target_h must be positive")
    est_nodes = 2.0 * domain.area / (0.5 * target_h**2) + domain.perimeter / target_h
    if est_nodes > max_nodes:
        raise MeshError(f"target_h={target_h:g} exceeds the node budget ({max_nodes})")
    pts, segs, labels, dpoints = _pslg(domain, decomposition)
    markers = np.array([1 if lab == "D" else 2 for lab in labels], dtype=np.int32)[:, None]
    c = 0.9
    for _ in range(40):
        area = math.sqrt(3) / 4 * (c * target_h) ** 2
        out = tr.triangulate(
            {"vertices": pts, "segments": segs, "segment_markers": markers},
            f"pq{min_angle:g}a{area:.20f}",
        )
        nodes, tris = _flip_boundary_triangles(out["vertices"], out["triangles"], out["segments"])
        p = nodes[tris]
        diam = max(np.hypot(*(p[:, (k + 1) % 3] - p[:, k]).T).max() for k in range(3))
        if diam <= target_h:
            break
        c *= 0.9
    else:
        raise MeshError("could not reach the requested mesh size")
    if len(nodes) > max_nodes:
        raise MeshError("node budget exceeded")
    bsegs = out["segments"]
    bmark = out["segment_markers"].ravel()
    blabels = np.where(bmark == 1, "D", "N")
    return _assemble_mesh(nodes, tris, bsegs, blabels, dpoints, domain, decomposition)


def _flip_boundary_triangles(nodes, tris, bsegs):
    """Flip interior edges of triangles whose three vertices are all on the boundary."""
    tris = np.array(tris, dtype=int)
    onb = np.zeros(len(nodes), dtype=bool)
    onb[np.asarray(bsegs).ravel()] = True
    for _ in range(3):
        bad = np.nonzero(onb[tris].all(axis=1))[0]
        if len(bad) == 0:
            break
        edge_map = {}
        for t, tri in enumerate(tris):
            for k in range(3):
                edge_map.setdefault(tuple(sorted((tri[k], tri[(k + 1) % 3]))), []).append(t)
        bset = {tuple(sorted(s)) for s in np.asarray(bsegs)}
        for t in bad:
            tri = tris[t]
            for k in range(3):
                a, b = tri[k], tri[(k + 1) % 3]
                key = tuple(sorted((a, b)))
                if key in bset or len(edge_map.get(key, [])) != 2:
                    continue
                s = [u for u in edge_map[key] if u != t][0]
                c = tri[(k + 2) % 3]
                d = [v for v in tris[s] if v not in (a, b)][0]
                if onb[d]:
                    continue
                # flip (a, b) -> (c, d) if the quad is convex
                t1 = [a, d, c]
                t2 = [d, b, c]
                if _orient(nodes, t1) > 0 and _orient(nodes, t2) > 0:
                    tris[t] = t1
                    tris[s] = t2
                    break
    return nodes, tris


def _orient(nodes, t):
    a, b, c = nodes[t[0]], nodes[t[1]], nodes[t[2]]
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def rectangle_mesh(domain, decomposition, n):
    """Structured right-triangle mesh of an axis-aligned rectangle with ``n`` cells per unit side.

    Only valid when the decomposition's transition points lie on grid nodes.
    """
    v = domain.vertices
    x0, y0 = v.min(axis=0)
    x1, y1 = v.max(axis=0)
    if len(v) != 4 or not np.isclose(domain.area, (x1 - x0) * (y1 - y0)):
        raise MeshError("rectangle_mesh needs an axis-aligned rectangle")
    nx = max(1, int(round(n * (x1 - x0))))
    ny = max(1, int(round(n * (y1 - y0))))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    ring = np.concatenate([idx[0, :], idx[1:, -1], idx[-1, -2::-1], idx[-2:0:-1, 0]])
    bedges = np.column_stack([ring, np.roll(ring, -1)])
    labels, dpoints = _label_edges(nodes, bedges, domain, decomposition)
    return _assemble_mesh(nodes, tris, bedges, labels, dpoints, domain, decomposition)


def _label_edges(nodes, bedges, domain, decomposition):
    labels = []
    for a, b in bedges:
        mid = 0.5 * (nodes[a] + nodes[b])
        _, e, t = domain.nearest_boundary_point(mid)
        labels.append(decomposition.label_at(e, t) if decomposition is not None else "D")
    dpoints = []
    if decomposition is not None:
        for e in range(domain.n_edges):
            _, _, points = decomposition.edge_pieces(e)
            for q in points:
                x = domain.point_on_edge(e, q)
                k = int(np.argmin(np.hypot(*(nodes - x).T)))
                if np.hypot(*(nodes[k] - x)) > 1e-9:
                    raise MeshError("isolated Dirichlet point is not a mesh node")
                dpoints.append(k)
    return labels, dpoints


def refine(mesh, max_nodes=MAX_NODES):
    """Uniform red refinement: every triangle splits into four similar children."""
    edges = mesh.edges
    n = mesh.n_nodes
    if n + len(edges) > max_nodes:
        raise MeshError("node budget exceeded")
    mids = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])
    t = mesh.triangles
    te = mesh.triangle_edges + n
    m01, m12, m20 = te[:, 0], te[:, 1], te[:, 2]
    tris = np.concatenate(
        [
            np.column_stack([t[:, 0], m01, m20]),
            np.column_stack([m01, t[:, 1], m12]),
            np.column_stack([m20, m12, t[:, 2]]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    bmid = mesh.boundary_edge_index + n
    be = mesh.boundary_edges
    bedges = np.concatenate([np.column_stack([be[:, 0], bmid]), np.column_stack([bmid, be[:, 1]])])
    blabels = np.concatenate([mesh.boundary_labels, mesh.boundary_labels])
    dn = np.concatenate([mesh.dirichlet_nodes, np.zeros(len(edges), dtype=bool)])
    dn[bmid[mesh.boundary_labels == "D"]] = True
    return TriangleMesh(nodes, tris, bedges, blabels, dn, mesh.domain, mesh.decomposition)


class _Bisector:
    """Longest-edge bisection with conforming closure along the longest-edge propagation path."""

    def __init__(self, mesh):
        self.nodes = [tuple(p) for p in mesh.nodes]
        self.tris = {i: tuple(int(v) for v in t) for i, t in enumerate(mesh.triangles)}
        self.next_id = len(self.tris)
        self.edge_tris = {}
        for i, t in self.tris.items():
            for e in self._edges(t):
                self.edge_tris.setdefault(e, set()).add(i)
        self.blabel = {tuple(sorted(map(int, e))): lab for e, lab in zip(mesh.boundary_edges, mesh.boundary_labels)}
        self.dnodes = set(np.nonzero(mesh.dirichlet_nodes)[0].tolist())
        self.mid = {}

    @staticmethod
    def _edges(t):
        return [tuple(sorted((t[k], t[(k + 1) % 3]))) for k in range(3)]

    def _len(self, e):
        a, b = self.nodes[e[0]], self.nodes[e[1]]
        return math.hypot(a[0] - b[0], a[1] - b[1])

    def longest(self, t):
        es = self._edges(self.tris[t])
        return max(es, key=lambda e: (round(self._len(e), 12), -e[0], -e[1]))

    def diameter(self, t):
        return max(self._len(e) for e in self._edges(self.tris[t]))

    def neighbor(self, t, e):
        others = self.edge_tris.get(e, set()) - {t}
        return next(iter(others)) if others else None

    def _midpoint(self, e):
        if e not in self.mid:
            a, b = self.nodes[e[0]], self.nodes[e[1]]
            self.nodes.append((0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])))
            m = len(self.nodes) - 1
            self.mid[e] = m
            if e in self.blabel:
                lab = self.blabel.pop(e)
                self.blabel[tuple(sorted((e[0], m)))] = lab
                self.blabel[tuple(sorted((m, e[1])))] = lab
                if lab == "D":
                    self.dnodes.add(m)
        return self.mid[e]

    def _split(self, t, e, m):
        a, b, c = self.tris[t]
        # rotate so that the split edge is (v0, v1)
        tri = (a, b, c)
        for _ in range(3):
            if tuple(sorted(tri[:2])) == e:
                break
            tri = (tri[1], tri[2], tri[0])
        v0, v1, v2 = tri
        for ed in self._edges(self.tris[t]):
            self.edge_tris[ed].discard(t)
        del self.tris[t]
        for child in ((v0, m, v2), (m, v1, v2)):
            i = self.next_id
            self.next_id += 1
            self.tris[i] = child
            for ed in self._edges(child):
                self.edge_tris.setdefault(ed, set()).add(i)

    def bisect(self, t):
        while t in self.tris:
            e = self.longest(t)
            nb = self.neighbor(t, e)
            if nb is not None and self.longest(nb) != e:
                self.bisect(nb)
                continue
            m = self._midpoint(e)
            self._split(t, e, m)
            if nb is not None:
                self._split(nb, e, m)
            return

    def to_mesh(self, mesh):
        ids = sorted(self.tris)
        tris = np.array([self.tris[i] for i in ids], dtype=int)
        bedges = np.array(sorted(self.blabel), dtype=int)
        labels = np.array([self.blabel[tuple(e)] for e in bedges])
        return _assemble_mesh(np.array(self.nodes), tris, bedges, labels, self.dnodes, mesh.domain, mesh.decomposition)


def graded_refine_toward(mesh, point, levels=3, radius=None, max_nodes=MAX_NODES):
    """Refine locally toward ``point`` so that the local mesh size halves per level.

    At level ``l`` every triangle meeting the disk of radius
    ``radius * 2**(1-l)`` (default ``radius = 4 h``) is bisected until its
    diameter is at most ``h * 2**-l``.  Conformity is kept by bisecting
    neighbours along the longest-edge propagation path.
    """
    if levels < 0:
        raise MeshError("levels must be non-negative")
    point = np.asarray(point, dtype=float)
    h0 = mesh.h
    radius = 4.0 * h0 if radius is None else float(radius)
    work = _Bisector(mesh)
    for level in range(1, levels + 1):
        r = radius * 2.0 ** (1 - level)
        target = h0 * 2.0**-level
        while True:
            ids = np.fromiter(work.tris.keys(), dtype=int)
            tv = np.array([work.tris[i] for i in ids], dtype=int)
            xy = np.asarray(work.nodes)[tv]
            lens = np.stack([np.hypot(*(xy[:, (k + 1) % 3] - xy[:, k]).T) for k in range(3)], axis=1)
            diam = lens.max(axis=1)
            cen = xy.mean(axis=1)
            near = np.hypot(*(cen - point).T) < r + diam
            cand = np.nonzero(near & (diam > target * (1 + 1e-12)))[0]
            marked = [int(ids[j]) for j in cand if _tri_disk_distance(xy[j], point) < r]
            if not marked:
                break
            for t in marked:
                if t in work.tris:
                    work.bisect(t)
            if len(work.nodes) > max_nodes:
                raise MeshError("node budget exceeded")
    return work.to_mesh(mesh)


def _tri_disk_distance(pts, x):
    """Distance from ``x`` to a closed triangle."""
    a, b, c = pts
    v0 = b - a
    v1 = c - a
    det = v0[0] * v1[1] - v0[1] * v1[0]
    l1 = ((x[0] - a[0]) * v1[1] - (x[1] - a[1]) * v1[0]) / det
    l2 = (v0[0] * (x[1] - a[1]) - v0[1] * (x[0] - a[0])) / det
    if l1 >= 0 and l2 >= 0 and l1 + l2 <= 1:
        return 0.0
    d = np.inf
    for p, q in ((a, b), (b, c), (c, a)):
        w = q - p
        s = np.clip(np.dot(x - p, w) / np.dot(w, w), 0, 1)
        d = min(d, float(np.hypot(*(p + s * w - x))))
    return d


def dump_mesh(mesh, fh):
    """Write NODES / TRIANGLES / BOUNDARY sections, one record per line."""
    fh.write(f"NODES {mesh.n_nodes}\n")
    for x, y in mesh.nodes:
        fh.write(f"{x:.17g} {y:.17g}\n")
    fh.write(f"TRIANGLES {mesh.n_triangles}\n")
    for a, b, c in mesh.triangles:
        fh.write(f"{a} {b} {c}\n")
    fh.write(f"BOUNDARY {len(mesh.boundary_edges)}\n")
    for (a, b), lab in zip(mesh.boundary_edges, mesh.boundary_labels):
        fh.write(f"{a} {b} {lab}\n")
    extra = np.nonzero(mesh.dirichlet_nodes)[0]
    on_d_edge = set(mesh.boundary_edges[mesh.boundary_labels == "D"].ravel().tolist())
    iso = [int(k) for k in extra if k not in on_d_edge]
    fh.write(f"DIRICHLET_POINTS {len(iso)}\n")
    for k in iso:
        fh.write(f"{k}\n")


def load_mesh(fh, domain=None, decomposition=None):
    lines = iter(fh.read().splitlines())
    sections = {}
    for line in lines:
        if not line.strip():
            continue
        name, count = line.split()
        sections[name] = [next(lines).split() for _ in range(int(count))]
    nodes = np.array(sections["NODES"], dtype=float)
    tris = np.array(sections["TRIANGLES"], dtype=int)
    b = sections["BOUNDARY"]
    bedges = np.array([[int(r[0]), int(r[1])] for r in b], dtype=int)
    labels = [r[2] for r in b]
    dpoints = [int(r[0]) for r in sections.get("DIRICHLET_POINTS", [])]
    return _assemble_mesh(nodes, tris, bedges, labels, dpoints, domain, decomposition)
