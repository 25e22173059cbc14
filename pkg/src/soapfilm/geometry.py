"""
Spherical and Euclidean primitives.

Great-circle arcs on the unit sphere, the cone types used throughout the
package (sector cones for 2-dimensional sets, ray cones for 1-dimensional
ones), point-to-cone distances, cone discretization with a covering-gap
guarantee, and the normalized local Hausdorff distance d_{x,r}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

# single numeric policy for on-sphere / on-cone membership
TOL = 1e-9


class GeometryError(ValueError):
    """Invalid geometric input (degenerate arc, bad window, ...)."""


def as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise GeometryError(f"expected a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise GeometryError("non-finite coordinates")
    return a


def unit(v) -> np.ndarray:
    """Normalize a vector (or rows of an array) to unit length."""
    a = np.asarray(v, dtype=float)
    n = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise GeometryError("cannot normalize a zero vector")
    out = a / n
    # second pass brings the norm within a couple of ulps of 1
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def orthonormal_complement(n) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``n`` to a right-handed orthonormal frame."""
    n = unit(n)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = unit(np.cross(n, helper))
    e2 = np.cross(n, e1)
    return e1, e2


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    return (R.shape == (3, 3)
            and np.allclose(R @ R.T, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) < tol)


@dataclass(frozen=True)
class GreatCircleArc:
    """Minor geodesic arc from ``a`` to ``b`` on the unit sphere.

    When ``full_circle`` is set, ``a`` holds the plane normal of the great
    circle and ``b`` is ignored. Half circles (antipodal endpoints) need
    ``normal`` to pick their great circle; the arc then leaves ``a`` in the
    direction ``normal x a``.
    """

    a: np.ndarray
    b: np.ndarray = field(default_factory=lambda: np.zeros(3))
    full_circle: bool = False
    normal_hint: np.ndarray | None = None

    def __post_init__(self):
        a = as_vec3(self.a)
        if abs(np.linalg.norm(a) - 1.0) > 1e-6:
            raise GeometryError("arc endpoint / normal must lie on the unit sphere")
        object.__setattr__(self, "a", unit(a))
        if self.full_circle:
            object.__setattr__(self, "b", np.zeros(3))
            object.__setattr__(self, "normal_hint", None)
            return
        b = as_vec3(self.b)
        if abs(np.linalg.norm(b) - 1.0) > 1e-6:
            raise GeometryError("arc endpoint must lie on the unit sphere")
        b = unit(b)
        object.__setattr__(self, "b", b)
        if np.linalg.norm(self.a - b) < TOL:
            raise GeometryError("degenerate arc: coincident endpoints")
        if np.linalg.norm(self.a + b) < 1e-6:
            if self.normal_hint is None:
                raise GeometryError("antipodal endpoints need a normal to fix the half circle")
            n = as_vec3(self.normal_hint)
            n = n - (n @ self.a) * self.a
            if np.linalg.norm(n) < 1e-6:
                raise GeometryError("half-circle normal must be orthogonal to the endpoints")
            object.__setattr__(self, "normal_hint", unit(n))
        else:
            object.__setattr__(self, "normal_hint", None)

    @property
    def half_circle(self) -> bool:
        return self.normal_hint is not None

    @property
    def angle(self) -> float:
        if self.full_circle:
            return 2.0 * np.pi
        if self.half_circle:
            return float(np.pi)
        # atan2 form is accurate near 0 and pi
        return float(np.arctan2(np.linalg.norm(np.cross(self.a, self.b)), self.a @ self.b))

    @property
    def normal(self) -> np.ndarray:
        if self.full_circle:
            return self.a
        if self.half_circle:
            return self.normal_hint
        return unit(np.cross(self.a, self.b))

    def frame(self) -> tuple[np.ndarray, np.ndarray, float]:
        """(start, in-plane tangent at start, angle) describing the arc."""
        if self.full_circle:
            e1, e2 = orthonormal_complement(self.a)
            return e1, e2, 2.0 * np.pi
        e1 = self.a
        e2 = unit(np.cross(self.normal, self.a))
        return e1, e2, self.angle

    def tangent_at(self, endpoint: int) -> np.ndarray:
        """Unit tangent leaving endpoint 0 (``a``) or 1 (``b``) into the arc."""
        if self.full_circle:
            raise GeometryError("full circles have no endpoints")
        e1, e2, ang = self.frame()
        if endpoint == 0:
            return e2
        # derivative of cos(s) e1 + sin(s) e2 at s = ang, reversed
        return unit(np.sin(ang) * e1 - np.cos(ang) * e2)

    def sample(self, spacing: float) -> np.ndarray:
        e1, e2, ang = self.frame()
        n = max(2, int(np.ceil(ang / spacing)) + 1)
        t = np.linspace(0.0, ang, n, endpoint=not self.full_circle)
        return np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2

    def distance(self, points) -> np.ndarray:
        """Euclidean distance in R^3 from points to the arc."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        e1, e2, ang = self.frame()
        u, v = p @ e1, p @ e2
        h = p @ np.cross(e1, e2)
        phi = np.mod(np.arctan2(v, u), 2 * np.pi)
        rho = np.hypot(u, v)
        inside = phi <= ang + 1e-15
        d_in = np.sqrt((rho - 1.0) ** 2 + h ** 2)
        if self.full_circle:
            return d_in
        d_end = np.minimum(np.linalg.norm(p - self.a, axis=1), np.linalg.norm(p - self.b, axis=1))
        return np.where(inside, d_in, d_end)

    def rotated(self, R) -> "GreatCircleArc":
        R = np.asarray(R, dtype=float)
        if self.full_circle:
            return GreatCircleArc(R @ self.a, full_circle=True)
        hint = None if self.normal_hint is None else R @ self.normal_hint
        return GreatCircleArc(R @ self.a, R @ self.b, normal_hint=hint)

    def to_json(self) -> dict:
        out = {"a": [float(c) for c in self.a],
               "b": [float(c) for c in self.b],
               "full_circle": bool(self.full_circle)}
        if self.half_circle:
            out["normal"] = [float(c) for c in self.normal_hint]
        return out


def arc_length(arc: GreatCircleArc) -> float:
    """H^1 of an arc of great circle: its angle on the unit sphere."""
    return arc.angle


def _cluster_points(points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Greedy clustering of nearby points; returns (representatives, labels)."""
    reps: list[np.ndarray] = []
    labels = np.empty(len(points), dtype=int)
    for i, p in enumerate(points):
        for j, q in enumerate(reps):
            if np.linalg.norm(p - q) <= tol:
                labels[i] = j
                break
        else:
            labels[i] = len(reps)
            reps.append(p)
    return np.array(reps).reshape(-1, 3), labels


@dataclass(frozen=True)
class SphericalGraph:
    """Finite union of great-circle arcs and circles on the unit sphere."""

    arcs: tuple
    eta0: float | None = None
    l0: float | None = None
    merge_tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple(self.arcs))
        for a in self.arcs:
            if not isinstance(a, GreatCircleArc):
                raise GeometryError("SphericalGraph expects GreatCircleArc items")
        for name in ("eta0", "l0"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise GeometryError(f"{name} must be positive")

    @property
    def total_length(self) -> float:
        return float(sum(a.angle for a in self.arcs))

    def endpoint_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Vertex positions H and, per proper arc, the (start, end) vertex ids.

        Full circles get ids (-1, -1).
        """
        ends = []
        for a in self.arcs:
            if not a.full_circle:
                ends.extend([a.a, a.b])
        if not ends:
            return np.zeros((0, 3)), np.full((len(self.arcs), 2), -1)
        verts, labels = _cluster_points(np.array(ends), self.merge_tol)
        ids = np.full((len(self.arcs), 2), -1)
        k = 0
        for i, a in enumerate(self.arcs):
            if not a.full_circle:
                ids[i] = labels[k:k + 2]
                k += 2
        return unit(verts), ids

    @property
    def vertices(self) -> np.ndarray:
        return self.endpoint_table()[0]

    def incidence(self) -> np.ndarray:
        verts, ids = self.endpoint_table()
        counts = np.zeros(len(verts), dtype=int)
        for row in ids:
            for v in row:
                if v >= 0:
                    counts[v] += 1
        return counts

    def rotated(self, R) -> "SphericalGraph":
        return SphericalGraph(tuple(a.rotated(R) for a in self.arcs),
                              eta0=self.eta0, l0=self.l0, merge_tol=self.merge_tol)

    def to_json(self) -> dict:
        return {"version": 1,
                "arcs": [a.to_json() for a in self.arcs],
                "eta0": self.eta0,
                "l0": self.l0}

    @classmethod
    def from_json(cls, data: dict) -> "SphericalGraph":
        try:
            version = data.get("version", 1)
            if version != 1:
                raise GeometryError(f"unsupported graph version {version}")
            arcs = []
            for item in data["arcs"]:
                full = bool(item.get("full_circle", False))
                if full:
                    arcs.append(GreatCircleArc(item["a"], full_circle=True))
                else:
                    arcs.append(GreatCircleArc(item["a"], item["b"],
                                               normal_hint=item.get("normal")))
            return cls(tuple(arcs), eta0=data.get("eta0"), l0=data.get("l0"))
        except (KeyError, TypeError) as exc:
            raise GeometryError(f"malformed graph JSON: {exc}") from exc


@dataclass(frozen=True)
class LocalWindow:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center))
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise GeometryError("window radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, points, pad: float = 0.0) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.linalg.norm(p - self.center, axis=1) <= self.radius + pad


# --------------------------------------------------------------------------
# planar helpers

def _disk_samples(center2: np.ndarray, rho: float, gap: float) -> np.ndarray:
    """Lattice + boundary samples of a closed disk, covering radius <= gap."""
    s = gap / 1.5
    m = int(np.ceil(rho / s))
    g = np.arange(-m, m + 1) * s
    U, V = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([U.ravel(), V.ravel()])
    pts = pts[np.einsum("ij,ij->i", pts, pts) <= rho * rho]
    nb = max(8, int(np.ceil(2 * np.pi * rho / s)))
    ang = np.linspace(0, 2 * np.pi, nb, endpoint=False)
    ring = rho * np.column_stack([np.cos(ang), np.sin(ang)])
    return np.vstack([pts, ring]) + center2


def _ray_disk_interval(center2: np.ndarray, rho: float, d: np.ndarray) -> tuple[float, float] | None:
    """Parameter range t >= 0 with |t d - center2| <= rho (d unit, 2D)."""
    b = d @ center2
    disc = b * b - (center2 @ center2 - rho * rho)
    if disc < 0:
        return None
    sq = np.sqrt(disc)
    lo, hi = max(b - sq, 0.0), b + sq
    if hi < lo:
        return None
    return lo, hi


@dataclass(frozen=True)
class Sector:
    """Planar sector {apex + t (cos s e1 + sin s e2): t >= 0, 0 <= s <= alpha}."""

    apex: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    alpha: float

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.e1, self.e2)

    @property
    def full(self) -> bool:
        return self.alpha >= 2 * np.pi - 1e-12

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.e1, np.cos(self.alpha) * self.e1 + np.sin(self.alpha) * self.e2

    def distance(self, points: np.ndarray) -> np.ndarray:
        q = points - self.apex
        u, v = q @ self.e1, q @ self.e2
        h = q @ self.normal
        if self.full:
            return np.abs(h)
        phi = np.mod(np.arctan2(v, u), 2 * np.pi)
        inside = phi <= self.alpha
        d = np.abs(h)
        out = ~inside
        if np.any(out):
            qo = q[out]
            best = None
            for r in self.rays():
                t = np.maximum(qo @ r, 0.0)
                dd = np.linalg.norm(qo - t[:, None] * r, axis=1)
                best = dd if best is None else np.minimum(best, dd)
            d = d.copy()
            d[out] = best
        return d

    def disk_section(self, center, radius) -> tuple[np.ndarray, float] | None:
        """In-plane (u, v) center and radius of the plane section of a ball."""
        q = np.asarray(center, dtype=float) - self.apex
        h = q @ self.normal
        if abs(h) > radius:
            return None
        return np.array([q @ self.e1, q @ self.e2]), float(np.sqrt(max(radius * radius - h * h, 0.0)))

    def contains_planar(self, uv: np.ndarray) -> np.ndarray:
        if self.full:
            return np.ones(len(uv), dtype=bool)
        phi = np.mod(np.arctan2(uv[:, 1], uv[:, 0]), 2 * np.pi)
        # points at the apex belong to every sector
        return (phi <= self.alpha + 1e-12) | (np.einsum("ij,ij->i", uv, uv) == 0)

    def sample_in_ball(self, center, radius, gap) -> np.ndarray:
        sec = self.disk_section(center, radius)
        if sec is None:
            return np.zeros((0, 3))
        c2, rho = sec
        if rho == 0.0:
            uv = c2[None, :]
            uv = uv[self.contains_planar(uv)]
        else:
            uv = _disk_samples(c2, rho, gap)
            uv = uv[self.contains_planar(uv)]
            if not self.full:
                extra = []
                for ang in (0.0, self.alpha):
                    d = np.array([np.cos(ang), np.sin(ang)])
                    iv = _ray_disk_interval(c2, rho, d)
                    if iv is not None:
                        n = max(2, int(np.ceil((iv[1] - iv[0]) / (gap / 1.5))) + 1)
                        extra.append(np.linspace(iv[0], iv[1], n)[:, None] * d)
                if extra:
                    uv = np.vstack([uv] + extra)
        return self.apex + uv[:, :1] * self.e1 + uv[:, 1:2] * self.e2


# --------------------------------------------------------------------------
# cones

class Cone:
    """Closed cone apex + {t k : t >= 0, k in K}. Subclasses supply the pieces."""

    apex: np.ndarray
    dim: int

    def distance(self, points) -> np.ndarray:
        raise NotImplementedError

    def sample_in_ball(self, center, radius, gap) -> np.ndarray:
        raise NotImplementedError

    def transformed(self, R, t) -> "Cone":
        """Image under x -> R x + t."""
        raise NotImplementedError

    def scaled(self, s, about) -> "Cone":
        raise NotImplementedError


class SectorCone(Cone):
    """2-dimensional cone given as a union of planar sectors sharing an apex."""

    dim = 2

    def __init__(self, apex, sectors):
        self.apex = as_vec3(apex)
        self.sectors = tuple(sectors)

    def distance(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.sectors:
            return np.full(len(p), np.inf)
        d = self.sectors[0].distance(p)
        for s in self.sectors[1:]:
            d = np.minimum(d, s.distance(p))
        return d

    def sample_in_ball(self, center, radius, gap) -> np.ndarray:
        if gap <= 0:
            raise GeometryError("sampling gap must be positive")
        parts = [s.sample_in_ball(center, radius, gap) for s in self.sectors]
        return np.vstack(parts) if parts else np.zeros((0, 3))


def _ray_ball_interval(apex, d, center, radius):
    q = apex - center
    b = q @ d
    disc = b * b - (q @ q - radius * radius)
    if disc < 0:
        return None
    sq = np.sqrt(disc)
    lo, hi = max(-b - sq, 0.0), -b + sq
    if hi < lo:
        return None
    return lo, hi


class RayCone(Cone):
    """1-dimensional cone: half-lines from a common apex (lines, propellers)."""

    dim = 1

    def __init__(self, apex, directions, kind: str = "custom"):
        self.apex = as_vec3(apex)
        self.directions = unit(np.atleast_2d(np.asarray(directions, dtype=float)))
        self.kind = kind

    def distance(self, points) -> np.ndarray:
        q = np.atleast_2d(np.asarray(points, dtype=float)) - self.apex
        best = None
        for d in self.directions:
            t = np.maximum(q @ d, 0.0)
            dd = np.linalg.norm(q - t[:, None] * d, axis=1)
            best = dd if best is None else np.minimum(best, dd)
        return best

    def sample_in_ball(self, center, radius, gap) -> np.ndarray:
        if gap <= 0:
            raise GeometryError("sampling gap must be positive")
        center = as_vec3(center)
        out = []
        for d in self.directions:
            iv = _ray_ball_interval(self.apex, d, center, radius)
            if iv is None:
                continue
            n = max(2, int(np.ceil((iv[1] - iv[0]) / gap)) + 1)
            t = np.linspace(iv[0], iv[1], n)
            out.append(self.apex + t[:, None] * d)
        return np.vstack(out) if out else np.zeros((0, 3))

    def transformed(self, R, t) -> "RayCone":
        R = np.asarray(R, dtype=float)
        return RayCone(R @ self.apex + t, self.directions @ R.T, self.kind)

    def scaled(self, s, about) -> "RayCone":
        about = as_vec3(about)
        return RayCone(about + s * (self.apex - about), self.directions, self.kind)

    def __repr__(self):
        return f"RayCone(kind={self.kind!r}, apex={self.apex.tolist()}, n_rays={len(self.directions)})"


def line_cone(point, direction) -> RayCone:
    d = unit(as_vec3(direction))
    return RayCone(point, np.vstack([d, -d]), kind="line")


def propeller_cone(center, normal, first_direction) -> RayCone:
    """Three coplanar half-lines at 120 degrees (a 1-dimensional Y-set)."""
    n = unit(as_vec3(normal))
    d0 = as_vec3(first_direction)
    d0 = unit(d0 - (d0 @ n) * n)
    d1 = np.cross(n, d0)
    dirs = [np.cos(a) * d0 + np.sin(a) * d1 for a in (0.0, 2 * np.pi / 3, 4 * np.pi / 3)]
    return RayCone(center, np.array(dirs), kind="propeller")


def dist_point_to_cone(p, cone: Cone) -> float:
    """Euclidean distance from ``p`` to the closed cone."""
    return float(cone.distance(as_vec3(p)[None, :])[0])


def local_hausdorff_distance(E, Z: Cone, w: LocalWindow, sampling_gap: float,
                             with_bound: bool = False):
    """Normalized bilateral distance d_{x,r}(E, Z) in the window ``w``.

    (1/r) sup{dist(y, Z): y in E, |y - x| <= r} + (1/r) sup{dist(z, E): z in Z, |z - x| <= r}.
    An empty side contributes 0. ``Z`` ∩ B is discretized with covering gap
    ``sampling_gap``; the returned value is accurate to
    (sampling_gap + E.gap) / r, which is returned as well when
    ``with_bound`` is set.
    """
    if not (sampling_gap > 0):
        raise GeometryError("sampling_gap must be positive")
    r = w.radius
    pts = E.points
    near = pts[w.contains(pts)]
    sup_e = float(Z.distance(near).max()) if len(near) else 0.0
    zs = Z.sample_in_ball(w.center, r, sampling_gap)
    zs = zs[w.contains(zs, pad=1e-12 * r)]
    if len(zs) and len(pts):
        sup_z = float(E.sup_distance(zs)) if hasattr(E, "sup_distance") else float(E.kdtree.query(zs)[0].max())
    else:
        sup_z = 0.0
    value = (sup_e + sup_z) / r
    if with_bound:
        return value, (sampling_gap + E.gap) / r
    return value
