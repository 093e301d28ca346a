"""Polygonal Lipschitz domains with a labelled boundary decomposition.

A domain is a simple polygon.  The boundary is split into a closed
Dirichlet part ``D`` and a relatively open traction part ``N``; both are
stored as parameter intervals on the polygon edges.  The multiscale objects
used throughout the package (coordinate cylinders, boundary intervals and
local domains) are built here with exact polygon clipping.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import LineString, Point, Polygon
from shapely.ops import linemerge

__all__ = [
    "PolygonalDomain",
    "BoundaryDecomposition",
    "LocalDomain",
    "GeometryError",
    "estimate_lipschitz_character",
    "coordinate_frame",
    "cylinder",
    "boundary_interval",
    "local_domain",
    "polygon_kernel",
    "ahlfors_david_check",
    "opening_check",
    "load_domain",
    "domain_from_dict",
]

_EPS = 1e-12
# window factor and cylinder aspect from the Lipschitz-graph definition
WINDOW = 200.0
LOCAL_SCALE_LIMIT = 100.0


class GeometryError(ValueError):
    """Invalid geometric input (non-simple polygon, bad scale, point outside)."""


def _signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _cylinder_height(M):
    return 4.0 * M + 2.0


@dataclass(frozen=True, eq=False)
class PolygonalDomain:
    """Simple polygon with Lipschitz metadata.

    ``M`` and ``R0`` may be given explicitly (a working scale for the
    checks); otherwise they are estimated from the polygon so that every
    ``Z_{200 R0}`` window meets the boundary in a single graph.
    """

    vertices: np.ndarray
    M: float | None = None
    R0: float | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("need at least three 2D vertices")
        if np.allclose(v[0], v[-1]):
            v = v[:-1]
        if _signed_area(v) < 0:
            v = v[::-1].copy()
        poly = Polygon(v)
        if not poly.is_valid or not poly.exterior.is_simple or poly.area <= 0:
            raise GeometryError("polygon must be simple with positive area")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        M_est, R0_est = estimate_lipschitz_character(self)
        M = M_est if self.M is None else float(self.M)
        R0 = R0_est if self.R0 is None else float(self.R0)
        if M < 1:
            raise GeometryError("Lipschitz constant M must be >= 1")
        if not 0 < R0 <= self.diameter:
            raise GeometryError("R0 must lie in (0, diameter]")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "R0", R0)

    # basic geometry -----------------------------------------------------
    @property
    def n_edges(self):
        return len(self.vertices)

    @cached_property
    def edges(self):
        n = len(self.vertices)
        return np.column_stack([np.arange(n), (np.arange(n) + 1) % n])

    @cached_property
    def edge_vectors(self):
        return self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]

    @cached_property
    def edge_lengths(self):
        return np.hypot(*self.edge_vectors.T)

    @cached_property
    def edge_tangents(self):
        return self.edge_vectors / self.edge_lengths[:, None]

    @cached_property
    def edge_normals(self):
        """Outward unit normals (counterclockwise orientation)."""
        t = self.edge_tangents
        return np.column_stack([t[:, 1], -t[:, 0]])

    @cached_property
    def arc_offsets(self):
        """Arc-length coordinate of each vertex along the boundary."""
        return np.concatenate([[0.0], np.cumsum(self.edge_lengths)])

    @property
    def perimeter(self):
        return float(self.arc_offsets[-1])

    @cached_property
    def diameter(self):
        v = self.vertices
        d = np.hypot(*(v[:, None, :] - v[None, :, :]).transpose(2, 0, 1))
        return float(d.max())

    @cached_property
    def polygon(self):
        return Polygon(self.vertices)

    @cached_property
    def ring(self):
        return LineString(np.vstack([self.vertices, self.vertices[:1]]))

    @property
    def area(self):
        return float(self.polygon.area)

    @cached_property
    def interior_angles(self):
        """Interior angle at each vertex, in (0, 2 pi)."""
        v = self.vertices
        prev = np.roll(v, 1, axis=0) - v
        nxt = np.roll(v, -1, axis=0) - v
        a = np.arctan2(prev[:, 1], prev[:, 0]) - np.arctan2(nxt[:, 1], nxt[:, 0])
        return np.mod(a, 2 * np.pi)

    def point_on_edge(self, edge, t):
        i, j = self.edges[edge]
        return (1 - t) * self.vertices[i] + t * self.vertices[j]

    def arclength(self, edge, t):
        return float(self.arc_offsets[edge] + t * self.edge_lengths[edge])

    def point_at_arclength(self, s):
        s = float(np.mod(s, self.perimeter))
        e = int(np.searchsorted(self.arc_offsets, s, side="right") - 1)
        e = min(e, self.n_edges - 1)
        t = (s - self.arc_offsets[e]) / self.edge_lengths[e]
        return self.point_on_edge(e, min(max(t, 0.0), 1.0))

    def contains(self, points, closed=True):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        inside = shapely.contains_xy(self.polygon, p[:, 0], p[:, 1])
        if closed:
            inside |= self.distance_to_boundary(p) <= 1e-12 * self.diameter
        return inside

    def distance_to_boundary(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return shapely.distance(self.ring, shapely.points(p))

    def nearest_boundary_point(self, x):
        """Return (point, edge index, edge parameter t) closest to ``x``."""
        x = np.asarray(x, dtype=float)
        a = self.vertices[self.edges[:, 0]]
        d = self.edge_vectors
        t = np.clip(np.einsum("ij,ij->i", x - a, d) / self.edge_lengths**2, 0, 1)
        q = a + t[:, None] * d
        k = int(np.argmin(np.hypot(*(q - x).T)))
        return q[k], k, float(t[k])

    def bisector(self, vertex):
        """Unit vector bisecting the interior angle at ``vertex``, pointing inward."""
        v = self.vertices
        n = len(v)
        u_next = v[(vertex + 1) % n] - v[vertex]
        u_prev = v[vertex - 1] - v[vertex]
        u_next = u_next / np.linalg.norm(u_next)
        u_prev = u_prev / np.linalg.norm(u_prev)
        half = self.interior_angles[vertex] / 2
        c, s = math.cos(half), math.sin(half)
        # rotate the outgoing edge direction counterclockwise by half the angle
        b = np.array([c * u_next[0] - s * u_next[1], s * u_next[0] + c * u_next[1]])
        return b / np.linalg.norm(b)


def estimate_lipschitz_character(domain):
    """Graph-Lipschitz constant ``M`` and scale ``R0`` of a polygon.

    At a vertex with interior angle ``theta`` the two incident edges are
    graphs of slope ``|cot(theta / 2)|`` in the bisector frame; edge interiors
    are flat.  ``R0`` is shrunk until every window ``Z_{200 R0}`` sees only
    one edge, or the two edges of a single vertex.
    """
    theta = domain.interior_angles
    tiny = 1e-6
    if np.any(theta < tiny) or np.any(theta > 2 * np.pi - tiny):
        raise GeometryError("cusp-like vertex: interior angle 0 or 2 pi")
    slopes = np.round(np.abs(1.0 / np.tan(theta / 2)), 12)
    M = max(1.0, float(slopes.max()))

    v = domain.vertices
    n = len(v)
    # separation between non-adjacent edges and from vertices to far edges
    sep = float(domain.edge_lengths.min())
    for i in range(n):
        for j in range(n):
            if j in (i, (i - 1) % n, (i + 1) % n):
                continue
            a = LineString(v[domain.edges[i]])
            b = LineString(v[domain.edges[j]])
            sep = min(sep, a.distance(b))
    phi = np.minimum(theta, 2 * np.pi - theta)
    s = np.where(phi < np.pi / 2, np.sin(phi), 1.0)
    window_radius = WINDOW * math.hypot(1.0, _cylinder_height(M))
    R0 = sep * float(s.min()) / (3.0 * window_radius)
    return M, R0


@dataclass(frozen=True)
class Segment:
    edge: int
    t0: float
    t1: float
    label: str


@dataclass(frozen=True, eq=False)
class BoundaryDecomposition:
    """Labelling of the boundary into ``D`` and ``N``.

    ``segments`` are ``(edge, t0, t1, label)`` with ``0 <= t0 <= t1 <= 1``;
    a segment with ``t0 == t1`` marks an isolated Dirichlet point.  Parts of
    the boundary not covered by any segment receive ``default``.  Transition
    points belong to ``D``.
    """

    domain: PolygonalDomain
    segments: tuple = ()
    default: str = "N"

    def __post_init__(self):
        segs = []
        for s in self.segments:
            if not isinstance(s, Segment):
                s = Segment(int(s[0]), float(s[1]), float(s[2]), str(s[3]))
            if s.label not in ("D", "N"):
                raise GeometryError(f"unknown boundary label {s.label!r}")
            if not 0 <= s.edge < self.domain.n_edges:
                raise GeometryError(f"edge index {s.edge} out of range")
            if not 0 <= s.t0 <= s.t1 <= 1:
                raise GeometryError("segment parameters must satisfy 0 <= t0 <= t1 <= 1")
            segs.append(s)
        if self.default not in ("D", "N"):
            raise GeometryError("default label must be 'D' or 'N'")
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def from_edges(cls, domain, d_edges=(), n_edges=None):
        """Whole edges labelled D; every other edge N."""
        segs = [Segment(int(e), 0.0, 1.0, "D") for e in d_edges]
        return cls(domain, tuple(segs), default="N")

    @classmethod
    def all_dirichlet(cls, domain):
        return cls(domain, (), default="D")

    def swapped(self):
        """The decomposition with the roles of D and N exchanged."""
        swap = {"D": "N", "N": "D"}
        segs = tuple(Segment(s.edge, s.t0, s.t1, swap[s.label]) for s in self.segments)
        return BoundaryDecomposition(self.domain, segs, default=swap[self.default])

    def edge_pieces(self, edge):
        """Sorted breakpoints and labels along one edge.

        Returns ``(breaks, labels, points)`` where ``labels[k]`` is the label of
        ``(breaks[k], breaks[k+1])`` and ``points`` are parameters of isolated
        Dirichlet points.
        """
        segs = [s for s in self.segments if s.edge == edge]
        breaks = {0.0, 1.0}
        points = []
        for s in segs:
            if s.t1 - s.t0 <= _EPS:
                points.append(s.t0)
                breaks.add(s.t0)
            else:
                breaks.update((s.t0, s.t1))
        breaks = np.array(sorted(breaks))
        labels = []
        for a, b in zip(breaks[:-1], breaks[1:]):
            mid = 0.5 * (a + b)
            lab = self.default
            for s in segs:  # later segments override earlier ones
                if s.t1 - s.t0 > _EPS and s.t0 <= mid <= s.t1:
                    lab = s.label
            labels.append(lab)
        # merge consecutive equal labels but keep isolated points
        keep = [0]
        for k in range(1, len(breaks) - 1):
            if labels[k] != labels[k - 1] or any(abs(breaks[k] - p) < _EPS for p in points):
                keep.append(k)
        keep.append(len(breaks) - 1)
        new_breaks = breaks[keep]
        new_labels = [labels[k] for k in keep[:-1]]
        points = [p for p in points if not self._point_inside_d(new_breaks, new_labels, p)]
        return new_breaks, new_labels, points

    @staticmethod
    def _point_inside_d(breaks, labels, p):
        for a, b, lab in zip(breaks[:-1], breaks[1:], labels):
            if lab == "D" and a - _EPS <= p <= b + _EPS:
                return True
        return False

    def label_at(self, edge, t):
        breaks, labels, points = self.edge_pieces(edge)
        if any(abs(t - p) < 1e-12 for p in points):
            return "D"
        for a, b, lab in zip(breaks[:-1], breaks[1:], labels):
            if a - _EPS <= t <= b + _EPS and lab == "D":
                return "D"
        for a, b, lab in zip(breaks[:-1], breaks[1:], labels):
            if a - _EPS <= t <= b + _EPS:
                return lab
        return self.default

    def intervals(self, label):
        """Arc-length intervals ``(s0, s1)`` of the given label, merged.

        Intervals may wrap past the perimeter (``s1 > perimeter``).  Isolated
        Dirichlet points appear as zero-length intervals.
        """
        dom = self.domain
        raw = []
        for e in range(dom.n_edges):
            breaks, labels, points = self.edge_pieces(e)
            for a, b, lab in zip(breaks[:-1], breaks[1:], labels):
                if lab == label:
                    raw.append([dom.arclength(e, a), dom.arclength(e, b)])
            if label == "D":
                for p in points:
                    s = dom.arclength(e, p)
                    raw.append([s, s])
        if not raw:
            return []
        raw.sort()
        merged = [list(raw[0])]
        for a, b in raw[1:]:
            if a <= merged[-1][1] + 1e-12:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        P = dom.perimeter
        if len(merged) > 1 and merged[0][0] <= 1e-12 and merged[-1][1] >= P - 1e-12:
            last = merged.pop()
            merged[0] = [last[0], merged[0][1] + P]
        if len(merged) == 1 and merged[0][0] <= 1e-12 and merged[0][1] >= P - 1e-12:
            merged = [[0.0, P]]
        return [tuple(m) for m in merged]

    def measure(self, label):
        return float(sum(b - a for a, b in self.intervals(label)))

    def is_empty(self, label):
        return not self.intervals(label)

    def transition_points(self):
        """Boundary points where the label changes, plus isolated D points."""
        pts = []
        for e in range(self.domain.n_edges):
            breaks, labels, points = self.edge_pieces(e)
            for k in range(1, len(breaks) - 1):
                pts.append((e, float(breaks[k])))
            for p in points:
                if 0 < p < 1:
                    pts.append((e, float(p)))
        return pts

    def to_dict(self):
        return {
            "boundary": [
                {"edge": s.edge, "t0": s.t0, "t1": s.t1, "label": s.label} for s in self.segments
            ],
            "default_label": self.default,
        }


def _interval_overlap(a0, a1, intervals, P):
    """Measure of [a0, a1] intersected with a union of (possibly wrapping) intervals."""
    total = 0.0
    for b0, b1 in intervals:
        for shift in (-P, 0.0, P):
            lo = max(a0, b0 + shift)
            hi = min(a1, b1 + shift)
            if hi > lo:
                total += hi - lo
    return total


def _point_in_intervals(s, intervals, P, tol=1e-12):
    for b0, b1 in intervals:
        for shift in (-P, 0.0, P):
            if b0 + shift - tol <= s <= b1 + shift + tol:
                return True
    return False


@dataclass(frozen=True)
class Frame:
    """Rotated coordinate frame: ``e2`` points into the domain."""

    e1: np.ndarray
    e2: np.ndarray
    kind: str
    index: int


def coordinate_frame(domain, x, rho):
    """Canonical frame at the boundary point ``x`` for scale ``rho``.

    Within distance ``rho`` of a vertex the bisector frame of that vertex is
    used; elsewhere the frame of the nearest edge.
    """
    x = np.asarray(x, dtype=float)
    dv = np.hypot(*(domain.vertices - x).T)
    k = int(np.argmin(dv))
    if dv[k] <= rho:
        e2 = domain.bisector(k)
        e1 = np.array([e2[1], -e2[0]])
        return Frame(e1, e2, "vertex", k)
    _, e, _ = domain.nearest_boundary_point(x)
    e1 = domain.edge_tangents[e]
    e2 = -domain.edge_normals[e]
    return Frame(e1, e2, "edge", e)


def cylinder(domain, x, rho, frame=None):
    """Coordinate cylinder ``Z_rho(x)`` as a polygon."""
    frame = frame or coordinate_frame(domain, x, rho)
    a = rho
    b = _cylinder_height(domain.M) * rho
    x = np.asarray(x, dtype=float)
    corners = [x + s1 * a * frame.e1 + s2 * b * frame.e2 for s1, s2 in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
    return Polygon(corners)


@dataclass(frozen=True)
class BoundaryInterval:
    """Boundary interval as an arc-length range containing its centre."""

    center: np.ndarray
    rho: float
    s0: float
    s1: float
    geometry: object

    @property
    def length(self):
        return self.s1 - self.s0


def boundary_interval(domain, x, rho):
    """``Delta_rho(x)``: the component of ``Z_rho(x) ∩ ∂Ω`` through ``x``.

    For scales where the domain is a single graph in the cylinder this is the
    whole intersection; at larger working scales only the arc through ``x``
    is kept.
    """
    x = np.asarray(x, dtype=float)
    Z = cylinder(domain, x, rho)
    inter = domain.ring.intersection(Z)
    if inter.is_empty:
        raise GeometryError("point is not on the boundary")
    lines = [g for g in getattr(inter, "geoms", [inter]) if g.geom_type == "LineString"]
    merged = linemerge(lines) if len(lines) > 1 else lines[0]
    parts = list(getattr(merged, "geoms", [merged]))
    px = Point(x)
    comp = min(parts, key=lambda g: g.distance(px))
    P = domain.perimeter
    L = comp.length
    c0, c1 = np.asarray(comp.coords[0]), np.asarray(comp.coords[-1])
    if comp.is_ring or np.allclose(c0, c1) and L > 0.5 * P:
        return BoundaryInterval(x, rho, 0.0, P, comp)
    s1 = domain.ring.project(Point(c0))
    s2 = domain.ring.project(Point(c1))
    sx = domain.ring.project(px)
    candidates = []
    for a, b in ((s1, s2), (s2, s1)):
        if b < a:
            b += P
        candidates.append((a, b))
    # choose the orientation whose length matches and which contains x
    best = min(candidates, key=lambda ab: abs((ab[1] - ab[0]) - L) + (0 if _in_range(sx, ab, P) else P))
    return BoundaryInterval(x, rho, best[0], best[1], comp)


def _in_range(s, ab, P):
    a, b = ab
    for shift in (0.0, P, -P):
        if a - 1e-9 <= s + shift <= b + 1e-9:
            return True
    return False


@dataclass(frozen=True, eq=False)
class LocalDomain:
    """Local domain ``Ω_rho(x)``: an interior disk or a clipped cylinder."""

    center: np.ndarray
    radius: float
    kind: str
    anchor: np.ndarray | None
    region: Polygon
    frame: Frame | None = None

    @property
    def area(self):
        return float(self.region.area)

    def contains(self, points):
        p = np.atleast_2d(points)
        return shapely.contains_xy(self.region, p[:, 0], p[:, 1])

    def kernel(self):
        return polygon_kernel(self.region)


def _disk(x, rho, quad_segs=128):
    return Point(x).buffer(rho, quad_segs=quad_segs)


def local_domain(domain, x, rho):
    """Return ``Ω_rho(x)``.

    A disk when ``dist(x, ∂Ω) > rho``; otherwise ``Ω ∩ Z_rho(x̂)`` with ``x̂``
    the nearest boundary point (the component containing ``x``).
    """
    x = np.asarray(x, dtype=float)
    limit = max(LOCAL_SCALE_LIMIT * domain.R0, domain.diameter)
    if not 0 < rho < limit:
        raise GeometryError(f"scale {rho} outside the supported range (0, {limit:g})")
    if not domain.contains(x)[0]:
        raise GeometryError("point lies outside the closed domain")
    dist = float(domain.distance_to_boundary(x)[0])
    if dist > rho:
        return LocalDomain(x, rho, "interior_disk", None, _disk(x, rho))
    xhat, _, _ = domain.nearest_boundary_point(x)
    frame = coordinate_frame(domain, xhat, rho)
    Z = cylinder(domain, xhat, rho, frame)
    clip = domain.polygon.intersection(Z)
    parts = [g for g in getattr(clip, "geoms", [clip]) if g.geom_type == "Polygon" and g.area > 0]
    if not parts:
        raise GeometryError("empty local domain")
    px = Point(x)
    region = min(parts, key=lambda g: g.distance(px))
    return LocalDomain(x, rho, "boundary_cylinder", xhat, region, frame)


def polygon_kernel(poly):
    """Kernel of a polygon: points from which the whole polygon is visible.

    The polygon is star-shaped iff the kernel is non-empty.
    """
    poly = shapely.geometry.polygon.orient(poly, 1.0)
    coords = np.asarray(poly.exterior.coords)[:-1]
    minx, miny, maxx, maxy = poly.bounds
    big = 4 * max(maxx - minx, maxy - miny) + 1.0
    ker = poly
    n = len(coords)
    for i in range(n):
        a, b = coords[i], coords[(i + 1) % n]
        d = b - a
        L = np.linalg.norm(d)
        if L <= 1e-15:
            continue
        d = d / L
        nrm = np.array([-d[1], d[0]])  # left side is interior for ccw
        half = Polygon([a - big * d, a + big * d, a + big * d + big * nrm, a - big * d + big * nrm])
        ker = ker.intersection(half)
        if ker.is_empty:
            return ker
    return ker


def _sample_arcs(intervals, P):
    """Endpoints, quarter points and midpoints of each arc."""
    out = []
    for a, b in intervals:
        for f in (0.0, 0.25, 0.5, 0.75, 1.0):
            out.append(np.mod(a + f * (b - a), P))
    return np.unique(np.round(np.array(out), 14))


def ahlfors_david_constant(M):
    """Regularity constant implied by Lipschitz character ``M``."""
    return float(2.0 * np.sqrt(1.0 + M**2))


def ahlfors_david_check(domain, decomposition, scales=None):
    """Ahlfors-David regularity of ``D`` at the sampled points and scales.

    For every sample ``x`` on ``D`` and scale ``rho`` computes
    ``σ(Δ_rho(x) ∩ D) / rho`` exactly and reports the extremes per scale.
    The ratios must lie in ``[1/M_ad, M_ad]`` with ``M_ad = 2 sqrt(1 + M²)``,
    the largest arc length a slope-``M`` graph can have over the window.
    """
    R0 = domain.R0
    if scales is None:
        scales = [R0 * 2.0**-k for k in range(1, 9)]
    scales = [float(r) for r in scales]
    if any(not 0 < r < R0 for r in scales):
        raise GeometryError("all scales must satisfy 0 < rho < R0")
    d_int = decomposition.intervals("D")
    if not d_int:
        raise GeometryError("Dirichlet set is empty")
    P = domain.perimeter
    samples = _sample_arcs(d_int, P)
    M = domain.M
    # a graph of slope <= M over a window of half-width rho has length <= 2 rho sqrt(1 + M^2)
    M_ad = ahlfors_david_constant(M)
    per_scale = []
    ok = True
    for rho in scales:
        ratios = []
        for s in samples:
            x = domain.point_at_arclength(s)
            iv = boundary_interval(domain, x, rho)
            ratios.append(_interval_overlap(iv.s0, iv.s1, d_int, P) / rho)
        lo, hi = float(min(ratios)), float(max(ratios))
        passed = lo >= 1.0 / M_ad - 1e-12 and hi <= M_ad + 1e-12
        ok &= passed
        per_scale.append({"rho": rho, "min_ratio": lo, "max_ratio": hi, "pass": bool(passed)})
    return {
        "check": "ahlfors_david",
        "M": M,
        "M_ad": M_ad,
        "R0": R0,
        "n_samples": int(len(samples)),
        "scales": per_scale,
        "pass": bool(ok),
    }


def _opening(domain, intervals, other, rho, n_dense=65):
    P = domain.perimeter
    best = {"found": False, "fraction": 0.0, "x": None, "interval": None}
    if not intervals:
        return best
    for a, b in intervals:
        grid = np.linspace(a, b, n_dense) if b > a else np.array([a])
        # try the arc midpoint first: it is the most likely witness
        order = np.argsort(np.abs(grid - 0.5 * (a + b)))
        for s in grid[order]:
            x = domain.point_at_arclength(s)
            iv = boundary_interval(domain, x, rho)
            inside = _interval_overlap(iv.s0, iv.s1, intervals, P)
            frac = inside / iv.length if iv.length > 0 else 0.0
            if frac > best["fraction"] or best["x"] is None:
                best = {"found": False, "fraction": frac, "x": x.tolist(), "interval": [iv.s0, iv.s1]}
            if iv.length > 0 and iv.length - inside <= 1e-10 * max(1.0, iv.length):
                return {"found": True, "fraction": 1.0, "x": x.tolist(), "interval": [iv.s0, iv.s1]}
    return best


def opening_check(domain, decomposition):
    """Look for ``x ∈ D`` with ``Δ_{R0/M}(x) ⊂ D`` and likewise for ``N``."""
    rho = domain.R0 / domain.M
    d_int = decomposition.intervals("D")
    n_int = decomposition.intervals("N")
    d = _opening(domain, [iv for iv in d_int if iv[1] > iv[0]] or d_int, n_int, rho)
    n = _opening(domain, n_int, d_int, rho)
    if d_int and all(b - a <= 1e-12 for a, b in d_int):
        d["found"] = False
    return {
        "check": "opening",
        "rho": rho,
        "D_open": bool(d["found"]),
        "N_open": bool(n["found"]),
        "D_witness": d,
        "N_witness": n,
        "pass": bool(d["found"] and n["found"]),
    }


def domain_from_dict(spec):
    """Build ``(domain, decomposition)`` from the JSON domain description."""
    if "vertices" not in spec:
        raise GeometryError("domain spec needs 'vertices'")
    dom = PolygonalDomain(np.asarray(spec["vertices"], dtype=float), M=spec.get("M"), R0=spec.get("R0"))
    v_in = np.asarray(spec["vertices"], dtype=float)
    if np.allclose(v_in[0], v_in[-1]):
        v_in = v_in[:-1]
    flipped = _signed_area(v_in) < 0
    segs = []
    n = dom.n_edges
    for rec in spec.get("boundary", []):
        e, t0, t1 = int(rec["edge"]), float(rec.get("t0", 0.0)), float(rec.get("t1", 1.0))
        if flipped:
            # edge i of the input becomes edge n-2-i (mod n) after reversal
            e, t0, t1 = (n - 2 - e) % n, 1.0 - t1, 1.0 - t0
        segs.append(Segment(e, t0, t1, rec["label"]))
    dec = BoundaryDecomposition(dom, tuple(segs), default=spec.get("default_label", "N"))
    return dom, dec


def load_domain(path):
    with open(Path(path)) as fh:
        spec = json.load(fh)
    return domain_from_dict(spec)
