"""
Reference minimal cones (plane, Y, T), cones over spherical graphs, exact
densities and measures in balls, and the structure validator for the
spherical graph K = E ∩ ∂B(0, 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    GeometryError,
    GreatCircleArc,
    LocalWindow,
    Sector,
    SectorCone,
    SphericalGraph,
    as_vec3,
    is_rotation,
)

PLANE, Y, T, CUSTOM = "P", "Y", "T", "custom"

T_SECTOR_ANGLE = float(np.arccos(-1.0 / 3.0))
# density of the tetrahedral cone in R^3; used as d_T by default
D_T_R3 = 3.0 * T_SECTOR_ANGLE

_TETRA = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / np.sqrt(3.0)


def _reference_graph(kind: str) -> SphericalGraph:
    if kind == PLANE:
        return SphericalGraph((GreatCircleArc([0, 0, 1], full_circle=True),))
    if kind == Y:
        north, south = np.array([0.0, 0, 1]), np.array([0.0, 0, -1])
        arcs = []
        for phi in (0.0, 2 * np.pi / 3, 4 * np.pi / 3):
            # half circle through (cos phi, sin phi, 0)
            arcs.append(GreatCircleArc(north, south, normal_hint=[-np.sin(phi), np.cos(phi), 0.0]))
        return SphericalGraph(tuple(arcs))
    if kind == T:
        arcs = [GreatCircleArc(_TETRA[i], _TETRA[j]) for i in range(4) for j in range(i + 1, 4)]
        return SphericalGraph(tuple(arcs))
    raise GeometryError(f"unknown reference cone kind {kind!r}")


class MinimalCone(SectorCone):
    """Cone over a spherical graph, placed by a rotation ``frame`` and ``apex``.

    For the reference kinds the graph is the canonical one: the equator for
    P, three half circles joining the poles of the z axis for Y, the
    projected edges of a regular tetrahedron for T.
    """

    def __init__(self, apex, kind: str = CUSTOM, graph: SphericalGraph | None = None,
                 frame=None):
        frame = np.eye(3) if frame is None else np.asarray(frame, dtype=float)
        if not is_rotation(frame, tol=1e-8):
            raise GeometryError("frame must be a proper rotation")
        if graph is None:
            if kind == CUSTOM:
                raise GeometryError("custom cones need a graph")
            graph = _reference_graph(kind)
        self.kind = kind
        self.graph = graph
        self.frame = frame
        sectors = []
        for arc in graph.arcs:
            e1, e2, ang = arc.frame()
            sectors.append(Sector(as_vec3(apex), frame @ e1, frame @ e2, ang))
        super().__init__(apex, sectors)

    @property
    def world_graph(self) -> SphericalGraph:
        return self.graph.rotated(self.frame)

    def transformed(self, R, t) -> "MinimalCone":
        R = np.asarray(R, dtype=float)
        return MinimalCone(R @ self.apex + t, self.kind, self.graph, R @ self.frame)

    def scaled(self, s, about) -> "MinimalCone":
        about = as_vec3(about)
        return MinimalCone(about + s * (self.apex - about), self.kind, self.graph, self.frame)

    def spine_directions(self) -> np.ndarray:
        """Unit directions of the singular rays (graph vertices), world frame."""
        verts = self.graph.vertices
        return verts @ self.frame.T if len(verts) else np.zeros((0, 3))

    def to_json(self) -> dict:
        return {"kind": self.kind,
                "apex": [float(c) for c in self.apex],
                "frame": [[float(c) for c in row] for row in self.frame],
                "graph": self.graph.to_json() if self.kind == CUSTOM else None}

    def __repr__(self):
        return f"MinimalCone(kind={self.kind!r}, apex={np.round(self.apex, 6).tolist()})"


def construct_reference_cone(kind: str, apex=(0.0, 0.0, 0.0), frame=None) -> MinimalCone:
    return MinimalCone(apex, kind, None, frame)


def cone_density(cone: MinimalCone) -> float:
    """H^2(cone ∩ B(apex, 1)) = H^1(K) / 2."""
    return 0.5 * cone.graph.total_length


# --------------------------------------------------------------------------
# exact areas of convex polygons intersected with disks


def _arc_term(ax, ay, bx, by, R):
    return 0.5 * R * R * np.arctan2(ax * by - ay * bx, ax * bx + ay * by)


def _edge_disk_area(px, py, qx, qy, R):
    """Signed area of triangle(0, p, q) ∩ disk(0, R); vectorized."""
    dx, dy = qx - px, qy - py
    a = dx * dx + dy * dy
    b = px * dx + py * dy
    c = px * px + py * py - R * R
    safe_a = np.where(a > 0, a, 1.0)
    disc = b * b - a * c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t1 = np.clip((-b - sq) / safe_a, 0.0, 1.0)
    t2 = np.clip((-b + sq) / safe_a, 0.0, 1.0)
    miss = (disc <= 0) | (a == 0)
    t1 = np.where(miss, 0.0, t1)
    t2 = np.where(miss, 0.0, t2)
    m1x, m1y = px + t1 * dx, py + t1 * dy
    m2x, m2y = px + t2 * dx, py + t2 * dy
    area = _arc_term(px, py, m1x, m1y, R)
    area = area + 0.5 * (m1x * m2y - m1y * m2x)
    # with t2 = 0 for misses, the last arc spans the whole edge
    area = area + _arc_term(m2x, m2y, qx, qy, R)
    return area


def polygon_disk_area(poly, center, radius) -> float:
    """Area of a simple polygon (k, 2) intersected with a disk."""
    P = np.asarray(poly, dtype=float) - np.asarray(center, dtype=float)
    if len(P) < 3 or radius <= 0:
        return 0.0
    Q = np.roll(P, -1, axis=0)
    return float(abs(np.sum(_edge_disk_area(P[:, 0], P[:, 1], Q[:, 0], Q[:, 1], radius))))


def triangles_disk_area(tri2, radius) -> np.ndarray:
    """Areas of triangles (N, 3, 2), in disk-centered coordinates, inside disks of radius (N,)."""
    tri2 = np.asarray(tri2, dtype=float)
    R = np.asarray(radius, dtype=float)
    total = np.zeros(len(tri2))
    for i in range(3):
        p, q = tri2[:, i], tri2[:, (i + 1) % 3]
        total += _edge_disk_area(p[:, 0], p[:, 1], q[:, 0], q[:, 1], R)
    return np.abs(total)


def _clip_halfplane(poly: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Keep the part of a convex polygon with n . x >= 0."""
    if len(poly) == 0:
        return poly
    out = []
    s = poly @ n
    for i in range(len(poly)):
        j = (i + 1) % len(poly)
        if s[i] >= 0:
            out.append(poly[i])
        if (s[i] >= 0) != (s[j] >= 0):
            t = s[i] / (s[i] - s[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
    return np.array(out).reshape(-1, 2)


def sector_disk_area(alpha: float, center2, rho: float) -> float:
    """Area of the planar sector {angle in [0, alpha]} (apex at 0) inside a disk."""
    if rho <= 0:
        return 0.0
    if alpha >= 2 * np.pi - 1e-12:
        return float(np.pi * rho * rho)
    c = np.asarray(center2, dtype=float)
    h = 1.01 * rho
    box = np.array([[c[0] - h, c[1] - h], [c[0] + h, c[1] - h],
                    [c[0] + h, c[1] + h], [c[0] - h, c[1] + h]])
    poly = _clip_halfplane(box, np.array([0.0, 1.0]))
    poly = _clip_halfplane(poly, np.array([np.sin(alpha), -np.cos(alpha)]))
    if len(poly) < 3:
        return 0.0
    return polygon_disk_area(poly, c, rho)


def cone_measure_in_ball(cone: MinimalCone, ball: LocalWindow, tol: float = 1e-9) -> float:
    """H^2(cone ∩ ball), summed exactly over the planar faces.

    Every face is a planar sector of angle <= pi or a full plane, so the
    sector-disk intersection is exact; ``tol`` is accepted for interface
    compatibility with quadrature-based callers.
    """
    if not tol > 0:
        raise GeometryError("tol must be positive")
    total = 0.0
    for s in cone.sectors:
        sec = s.disk_section(ball.center, ball.radius)
        if sec is None:
            continue
        c2, rho = sec
        total += sector_disk_area(s.alpha, c2, rho)
    return total


# --------------------------------------------------------------------------
# structure validation


@dataclass
class ConeValidationReport:
    is_valid: bool
    violations: list = field(default_factory=list)
    eta0: float = 0.0
    l0: float = 0.0

    def to_json(self) -> dict:
        return {"is_valid": self.is_valid, "eta0": self.eta0, "l0": self.l0,
                "violations": self.violations}


def _arc_pair_distance(a: GreatCircleArc, b: GreatCircleArc, spacing: float = 2e-3) -> float:
    return float(b.distance(a.sample(spacing)).min())


def default_separation(graph: SphericalGraph) -> tuple[float, float]:
    """(eta0, l0) defaults for a graph that the caller did not annotate.

    l0 is the shortest arc; eta0 is half the smallest distance between arcs
    that share no endpoint (half the shortest arc when every pair is adjacent).
    """
    lengths = [a.angle for a in graph.arcs]
    l0 = min(lengths) if lengths else 1.0
    _, ids = graph.endpoint_table()
    dists = []
    for i in range(len(graph.arcs)):
        for j in range(i + 1, len(graph.arcs)):
            si = set(ids[i][ids[i] >= 0])
            sj = set(ids[j][ids[j] >= 0])
            if si & sj:
                continue
            dists.append(_arc_pair_distance(graph.arcs[i], graph.arcs[j]))
    base = min(dists) if dists else l0
    return 0.5 * min(base, l0 if dists else base), l0


def validate_cone_structure(graph: SphericalGraph, eta0: float | None = None,
                            l0: float | None = None, angle_tol: float = 1e-6,
                            sample_spacing: float = 1e-3) -> ConeValidationReport:
    """Check the 3-incidence / 120 degree / min-length / separation rules.

    Malformed graphs raise GeometryError; rule failures are reported.
    """
    if not isinstance(graph, SphericalGraph) or not graph.arcs:
        raise GeometryError("graph must be a non-empty SphericalGraph")
    d_eta, d_l0 = default_separation(graph)
    eta0 = graph.eta0 if eta0 is None else eta0
    l0 = graph.l0 if l0 is None else l0
    eta0 = d_eta if eta0 is None else float(eta0)
    l0 = d_l0 if l0 is None else float(l0)
    if not (eta0 > 0 and l0 > 0):
        raise GeometryError("eta0 and l0 must be positive")

    violations = []
    verts, ids = graph.endpoint_table()
    incident: dict[int, list[tuple[int, int]]] = {v: [] for v in range(len(verts))}
    for i, row in enumerate(ids):
        for end, v in enumerate(row):
            if v >= 0:
                incident[int(v)].append((i, end))

    for v, items in incident.items():
        if len(items) != 3:
            violations.append({"rule": "incidence", "vertex": v, "arcs": [i for i, _ in items],
                               "value": len(items)})
            continue
        tangents = [graph.arcs[i].tangent_at(end) for i, end in items]
        for p in range(3):
            for q in range(p + 1, 3):
                ang = float(np.degrees(np.arccos(np.clip(tangents[p] @ tangents[q], -1, 1))))
                if abs(ang - 120.0) > np.degrees(angle_tol):
                    violations.append({"rule": "angle", "vertex": v,
                                       "arcs": [items[p][0], items[q][0]], "value": ang})

    for i, arc in enumerate(graph.arcs):
        if arc.angle < l0:
            violations.append({"rule": "length", "arcs": [i], "value": arc.angle})

    # separation rule: nearby arcs must share a nearby endpoint
    slack = 1e-9 + 2 * sample_spacing ** 2
    for i, ai in enumerate(graph.arcs):
        xs = ai.sample(sample_spacing)
        for j, aj in enumerate(graph.arcs):
            if i == j:
                continue
            d = aj.distance(xs)
            close = d <= eta0
            if not np.any(close):
                continue
            if ai.full_circle or aj.full_circle:
                k = int(np.argmin(d))
                violations.append({"rule": "separation", "arcs": [i, j], "value": float(d[k])})
                continue
            shared = set(ids[i]) & set(ids[j])
            ok = np.zeros(len(xs), dtype=bool)
            for v in shared:
                ok |= np.linalg.norm(xs - verts[v], axis=1) <= d + slack
            bad = close & ~ok
            if np.any(bad):
                k = int(np.argmin(np.where(bad, d, np.inf)))
                violations.append({"rule": "separation", "arcs": [i, j], "value": float(d[k])})

    return ConeValidationReport(not violations, violations, eta0, l0)


def load_graph(path) -> SphericalGraph:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GeometryError(f"invalid JSON in {path}: {exc}") from exc
    return SphericalGraph.from_json(data)


def save_graph(graph: SphericalGraph, path) -> None:
    with open(path, "w") as fh:
        json.dump(graph.to_json(), fh, indent=2, sort_keys=True)
