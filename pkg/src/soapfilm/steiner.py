"""
Shortest connected sets through at most three points and the 2-Lipschitz
retractions onto Y-sets, pairs of half-lines and segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryError, LocalWindow, as_vec3, orthonormal_complement, unit

COS_120 = -0.5


@dataclass
class Network1D:
    """Union of segments ``nodes[i] -- nodes[j]`` for (i, j) in ``edges``.

    ``steiner_node`` is the index of an added interior node (the Fermat
    point), or None when every node is one of the input points.
    """

    nodes: np.ndarray
    edges: list
    steiner_node: int | None = None
    info: dict = field(default_factory=dict)

    @property
    def total_length(self) -> float:
        return float(sum(np.linalg.norm(self.nodes[i] - self.nodes[j]) for i, j in self.edges))

    def degree(self, i: int) -> int:
        return sum(i in e for e in self.edges)

    def unit_directions(self, i: int) -> np.ndarray:
        out = []
        for a, b in self.edges:
            if i in (a, b):
                other = b if a == i else a
                out.append(unit(self.nodes[other] - self.nodes[i]))
        return np.array(out).reshape(-1, 3)

    def stationarity_residual(self) -> float:
        """|sum of unit edge directions| at the Fermat node (0 when there is none)."""
        if self.steiner_node is None:
            return 0.0
        return float(np.linalg.norm(self.unit_directions(self.steiner_node).sum(axis=0)))

    def to_json(self) -> dict:
        return {"nodes": self.nodes.tolist(), "edges": [list(e) for e in self.edges],
                "steiner_node": self.steiner_node, "total_length": self.total_length,
                "stationarity_residual": self.stationarity_residual(), **self.info}


def _check_distinct(pts: np.ndarray, tol: float = 0.0) -> None:
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.linalg.norm(pts[i] - pts[j]) <= tol:
                raise GeometryError(f"points {i} and {j} coincide")


def _vertex_cosines(a: np.ndarray) -> np.ndarray:
    cos = np.empty(3)
    for i in range(3):
        u = unit(a[(i + 1) % 3] - a[i])
        v = unit(a[(i + 2) % 3] - a[i])
        cos[i] = u @ v
    return cos


def _sum_units(z, a):
    d = np.linalg.norm(z - a, axis=1)
    return ((z - a) / d[:, None]).sum(axis=0), d


def _interior_fermat(a: np.ndarray, tol: float = 1e-13, max_iter: int = 500) -> np.ndarray:
    """Stationary point of sum |z - a_j| for a triangle with all angles < 120 degrees.

    Weiszfeld iterations bring the iterate close; Newton steps in the plane
    of the triangle then drive |sum of unit vectors| to round-off.
    """
    z = a.mean(axis=0)
    for _ in range(max_iter):
        g, d = _sum_units(z, a)
        if np.linalg.norm(g) < 1e-6 or d.min() == 0:
            break
        w = 1.0 / d
        z = (w[:, None] * a).sum(axis=0) / w.sum()
    n = unit(np.cross(a[1] - a[0], a[2] - a[0]))
    e1, e2 = orthonormal_complement(n)
    B = np.column_stack([e1, e2])
    f = lambda p: np.linalg.norm(p - a, axis=1).sum()
    for _ in range(100):
        g, d = _sum_units(z, a)
        if np.linalg.norm(g) <= tol:
            break
        u = (z - a) / d[:, None]
        H = sum((np.eye(3) - np.outer(uj, uj)) / dj for uj, dj in zip(u, d))
        step = B @ np.linalg.solve(B.T @ H @ B, -(B.T @ g))
        t = 1.0
        while f(z + t * step) > f(z) + 1e-16 * abs(f(z)) and t > 1e-8:
            t *= 0.5
        znew = z + t * step
        if np.allclose(znew, z, rtol=0, atol=1e-17):
            break
        z = znew
    return z


def fermat_point(a1, a2, a3) -> Network1D:
    """Shortest connected set containing three distinct points.

    If the triangle has an angle of at least 120 degrees (including the
    collinear case, where the middle point has angle 180), the answer is
    the two sides at that vertex; otherwise it is a star from the interior
    point where the three unit directions sum to zero.
    """
    a = np.array([as_vec3(a1), as_vec3(a2), as_vec3(a3)])
    _check_distinct(a)
    cos = _vertex_cosines(a)
    i = int(np.argmin(cos))
    if cos[i] <= COS_120:
        j, k = (i + 1) % 3, (i + 2) % 3
        edges = [tuple(sorted((i, j))), tuple(sorted((i, k)))]
        return Network1D(a.copy(), edges, None, {"case": "vertex", "vertex": i})
    z = _interior_fermat(a)
    nodes = np.vstack([a, z])
    return Network1D(nodes, [(0, 3), (1, 3), (2, 3)], 3, {"case": "fermat"})


def shortest_network(points, ball: LocalWindow | None = None) -> Network1D:
    """Shortest connected set through one, two or three points of a closed ball."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != 3 or not 1 <= len(pts) <= 3:
        raise GeometryError("expected 1 to 3 points in R^3")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("points must be finite")
    if ball is not None and not np.all(ball.contains(pts, pad=1e-12 * ball.radius)):
        raise GeometryError("points must lie in the closed ball")
    if len(pts) == 1:
        return Network1D(pts.copy(), [], None, {"case": "point"})
    if len(pts) == 2:
        _check_distinct(pts)
        return Network1D(pts.copy(), [(0, 1)], None, {"case": "segment"})
    return fermat_point(*pts)


def spanning_tree_lengths(points) -> dict:
    """Lengths of the three two-edge trees and the minimum spanning tree on three points."""
    a = np.asarray(points, dtype=float)
    d = {(i, j): np.linalg.norm(a[i] - a[j]) for i in range(3) for j in range(i + 1, 3)}
    stars = {i: sum(v for k, v in d.items() if i in k) for i in range(3)}
    return {"stars": stars, "mst": float(sum(sorted(d.values())[:2]))}


# --------------------------------------------------------------------------
# retractions


@dataclass(frozen=True)
class RetractionShape:
    """Target of a retraction: Y ∩ B, (L1 ∪ L2) ∩ B or a segment [a, b].

    For "Y" and "V" ``directions`` are the unit half-line directions from
    ``vertex`` and ``normal`` spans the orthogonal complement of their
    plane; ``ball`` (closed, containing the vertex) may be None for the
    unbounded set. For "segment", ``directions`` holds the endpoints.
    """

    kind: str
    vertex: np.ndarray
    directions: np.ndarray
    normal: np.ndarray | None = None
    ball: LocalWindow | None = None

    def contains(self, p, tol: float = 1e-9) -> np.ndarray:
        p = np.atleast_2d(p)
        return np.linalg.norm(y_retraction(self, p) - p, axis=1) <= tol


def y_shape(center, directions, ball: LocalWindow | None = None, tol: float = 1e-6) -> RetractionShape:
    u = unit(np.asarray(directions, dtype=float))
    if u.shape != (3, 3):
        raise GeometryError("a Y-set has three half-lines")
    n = unit(np.cross(u[0], u[1]))
    if np.linalg.norm(u.sum(axis=0)) > tol or abs(u[2] @ n) > tol:
        raise GeometryError("Y-set half-lines must be coplanar at 120 degrees")
    # rebuild an exact 120-degree frame from the first direction
    e = np.cross(n, u[0])
    s = np.sign(u[1] @ e)
    exact = np.array([u[0], -0.5 * u[0] + s * np.sqrt(3) / 2 * e, -0.5 * u[0] - s * np.sqrt(3) / 2 * e])
    c = as_vec3(center)
    _check_ball(c, ball)
    return RetractionShape("Y", c, exact, n, ball)


def v_shape(vertex, d1, d2, ball: LocalWindow | None = None, tol: float = 1e-12) -> RetractionShape:
    u1, u2 = unit(as_vec3(d1)), unit(as_vec3(d2))
    if u1 @ u2 > COS_120 + tol:
        raise GeometryError("the half-lines must make an angle of at least 120 degrees")
    cr = np.cross(u1, u2)
    n = unit(cr) if np.linalg.norm(cr) > 1e-12 else orthonormal_complement(u1)[0]
    c = as_vec3(vertex)
    _check_ball(c, ball)
    return RetractionShape("V", c, np.array([u1, u2]), n, ball)


def segment_shape(a, b) -> RetractionShape:
    a, b = as_vec3(a), as_vec3(b)
    if np.linalg.norm(b - a) == 0:
        raise GeometryError("degenerate segment")
    return RetractionShape("segment", a, np.array([a, b]))


def _check_ball(c, ball):
    if ball is not None and not ball.contains(c[None], pad=1e-12 * ball.radius)[0]:
        raise GeometryError("the ball must contain the vertex")


def shape_from_network(net: Network1D, ball: LocalWindow | None = None) -> RetractionShape:
    """Retraction target spanned by a shortest network.

    A Fermat star becomes the Y-set of its edges, a two-edge network the
    pair of half-lines at its vertex, a single edge its segment. When no
    ball is given, the closed ball centered at the vertex that just
    contains the network is used.
    """
    if len(net.edges) == 1:
        i, j = net.edges[0]
        return segment_shape(net.nodes[i], net.nodes[j])
    if len(net.edges) == 0:
        raise GeometryError("a single point is not a supported retraction target")
    counts = np.bincount(np.array(net.edges).ravel(), minlength=len(net.nodes))
    v = int(np.argmax(counts))
    if counts[v] != len(net.edges):
        raise GeometryError("unsupported network shape")
    dirs = net.unit_directions(v)
    c = net.nodes[v]
    if ball is None:
        ball = LocalWindow(c, max(np.linalg.norm(net.nodes - c, axis=1)))
    if len(dirs) == 3:
        return y_shape(c, dirs, ball, tol=1e-6)
    return v_shape(c, dirs[0], dirs[1], ball, tol=1e-9)


def _oblique(q, b, e, cot_a):
    """Project along b onto the half-lines cos(a) b ± sin(a) e (coordinates in-plane)."""
    s0 = q @ e
    return np.abs(s0)[:, None] * cot_a * b + s0[:, None] * e, s0


def _clamp_branch(c, u, t, ball):
    if ball is None:
        return t
    q = c - ball.center
    bq = q @ u
    tmax = -bq + np.sqrt(max(bq * bq - (q @ q - ball.radius ** 2), 0.0))
    return np.minimum(t, tmax)


def y_retraction(F, p) -> np.ndarray:
    """h_F(p) = h2(h1(pi_P(p))): project to the plane, slide onto the skeleton, clamp to the ball.

    ``F`` is a RetractionShape or a Network1D (converted by
    ``shape_from_network``). Accepts one point or an (N, 3) array.
    """
    if isinstance(F, Network1D):
        F = shape_from_network(F)
    if not isinstance(F, RetractionShape):
        raise GeometryError("unsupported retraction target")
    p_arr = np.asarray(p, dtype=float)
    single = p_arr.ndim == 1
    P = np.atleast_2d(p_arr)
    if F.kind == "segment":
        a, b = F.directions
        d = b - a
        t = np.clip((P - a) @ d / (d @ d), 0.0, 1.0)
        out = a + t[:, None] * d
        return out[0] if single else out
    c, n = F.vertex, F.normal
    q = P - c
    q = q - (q @ n)[:, None] * n
    out = np.empty_like(q)
    if F.kind == "V":
        u1, u2 = F.directions
        s = u1 + u2
        if np.linalg.norm(s) < 1e-12:
            b, cot_a = np.cross(n, u1), 0.0
        else:
            b = unit(s)
            half = 0.5 * np.arccos(np.clip(u1 @ u2, -1.0, 1.0))
            cot_a = np.cos(half) / np.sin(half)
        e = unit(u1 - u2)
        h, s0 = _oblique(q, b, e, cot_a)
        t = np.linalg.norm(h, axis=1)
        on1 = s0 >= 0
        for mask, u in ((on1, u1), (~on1, u2)):
            tt = _clamp_branch(c, u, t[mask], F.ball)
            out[mask] = tt[:, None] * u
    elif F.kind == "Y":
        u = F.directions
        region = np.argmin(q @ u.T, axis=1)
        cot60 = 1.0 / np.sqrt(3.0)
        for i in range(3):
            sel = region == i
            if not np.any(sel):
                continue
            j, k = (i + 1) % 3, (i + 2) % 3
            b, e = -u[i], unit(u[j] - u[k])
            h, s0 = _oblique(q[sel], b, e, cot60)
            t = np.linalg.norm(h, axis=1)
            res = np.empty((sel.sum(), 3))
            onj = s0 >= 0
            for mask, uu in ((onj, u[j]), (~onj, u[k])):
                tt = _clamp_branch(c, uu, t[mask], F.ball)
                res[mask] = tt[:, None] * uu
            out[sel] = res
    else:
        raise GeometryError(f"unsupported retraction shape {F.kind!r}")
    out = out + c
    return out[0] if single else out


def lipschitz_audit(F, n_pairs: int = 100_000, seed: int = 0, scale: float | None = None) -> dict:
    """Largest |h(p) - h(q)| / |p - q| over random pairs, plus idempotence error.

    Half of the pairs are independent points in a box around the target,
    half are close pairs (|p - q| about 1e-3 of the box) to probe local slopes.
    """
    if isinstance(F, Network1D):
        F = shape_from_network(F)
    rng = np.random.default_rng(seed)
    if scale is None:
        scale = 2.0 * (F.ball.radius if F.ball is not None else 1.0)
        if F.kind == "segment":
            scale = 2.0 * np.linalg.norm(F.directions[1] - F.directions[0])
    center = F.ball.center if F.ball is not None else F.vertex
    m = n_pairs // 2
    p = center + scale * rng.uniform(-1, 1, size=(n_pairs, 3))
    q = np.vstack([center + scale * rng.uniform(-1, 1, size=(m, 3)),
                   p[m:] + 1e-3 * scale * rng.normal(size=(n_pairs - m, 3))])
    hp, hq = y_retraction(F, p), y_retraction(F, q)
    dist = np.linalg.norm(p - q, axis=1)
    ok = dist > 0
    ratio = np.linalg.norm(hp - hq, axis=1)[ok] / dist[ok]
    idem = np.linalg.norm(y_retraction(F, hp) - hp, axis=1).max()
    return {"max_ratio": float(ratio.max()), "idempotence_error": float(idem), "n_pairs": int(ok.sum())}
