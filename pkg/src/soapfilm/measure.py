"""
Hausdorff measure and density of sampled 2-sets.

A ``SampledSet`` is either a triangulated surface (areas are computed by
exact clipping of every triangle against the ball) or a cloud of weighted
points. Densities theta(x, r) = r^-2 H^2(E ∩ B(x, r)) are collected into a
``DensityProfile`` together with the gauge integral
A(r) = int_0^r h(2t) dt / t, so that the near-monotonicity of
theta(x, r) exp(lambda A(r)) can be audited.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .cones import triangles_disk_area
from .geometry import GeometryError, LocalWindow, as_vec3

UNRELIABLE_FACTOR = 3.0


@dataclass(frozen=True, eq=False)
class SampledSet:
    """Discretized set: triangles (M, 3, 3) or weighted points (N, 3).

    ``gap`` is the nominal sampling gap: every point of the underlying set
    is within ``gap`` of ``points``. ``dim`` is 2 for surfaces and 1 for
    curves (weights are then lengths).
    """

    points: np.ndarray
    weights: np.ndarray
    gap: float
    triangles: np.ndarray | None = None
    dim: int = 2

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(w) != len(pts):
            raise GeometryError("weights and points differ in length")
        if np.any(w < 0):
            raise GeometryError("weights must be nonnegative")
        if not self.gap > 0:
            raise GeometryError("sampling gap must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if self.triangles is not None:
            object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=float).reshape(-1, 3, 3))

    @property
    def mode(self) -> str:
        return "triangles" if self.triangles is not None else "points"

    @cached_property
    def kdtree(self) -> cKDTree:
        return cKDTree(self.points)

    @cached_property
    def _coarse_tree(self):
        """Voxel-thinned copy of the points (voxel 4 x gap) for fast far queries."""
        voxel = 4.0 * self.gap
        if len(self.points) == 0:
            return None, voxel
        return cKDTree(self.points[voxel_representatives(self.points, voxel)]), voxel

    def sup_distance(self, zs: np.ndarray) -> float:
        """max_z dist(z, points), exact.

        Queries of points far from a dense sample are slow, so distances are
        first bounded from above with a thinned copy; only the points that
        can still realize the maximum are resolved against the full tree.
        """
        zs = np.atleast_2d(zs)
        if len(zs) == 0 or len(self.points) == 0:
            return 0.0
        if len(zs) < 4096 or len(self.points) < 65536:
            return float(self.kdtree.query(zs)[0].max())
        tree, voxel = self._coarse_tree
        d_up = tree.query(zs)[0]
        lower = d_up.max() - np.sqrt(3.0) * voxel
        cand = np.flatnonzero(d_up >= lower)
        d = self.kdtree.query(zs[cand], distance_upper_bound=float(d_up[cand].max()) * (1 + 1e-12) + 1e-300)[0]
        d = np.where(np.isfinite(d), d, d_up[cand])
        return float(d.max())

    @cached_property
    def _triangle_frames(self):
        tri = self.triangles
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        area2 = np.linalg.norm(n, axis=1)
        keep = area2 > 0
        n = n[keep] / area2[keep, None]
        t = tri[keep]
        e1 = t[:, 1] - t[:, 0]
        e1 /= np.linalg.norm(e1, axis=1)[:, None]
        e2 = np.cross(n, e1)
        centroid = t.mean(axis=1)
        radius = np.max(np.linalg.norm(t - centroid[:, None], axis=2), axis=1)
        return t, n, e1, e2, centroid, radius, cKDTree(centroid), radius.max() if len(radius) else 0.0

    @property
    def total_measure(self) -> float:
        if self.mode == "triangles":
            t = self.triangles
            return float(0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1).sum())
        return float(self.weights.sum())

    @classmethod
    def from_triangles(cls, triangles, gap: float | None = None) -> "SampledSet":
        tri = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
        edges = np.linalg.norm(tri - np.roll(tri, 1, axis=1), axis=2)
        if gap is None:
            gap = float(edges.max()) if len(tri) else 1.0
        pts = densify_triangles(tri, gap)
        return cls(pts, np.zeros(len(pts)), gap, triangles=tri, dim=2)

    @classmethod
    def from_points(cls, points, weights=None, gap: float = 1.0, dim: int = 2) -> "SampledSet":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
        return cls(pts, w, gap, None, dim)

    def transformed(self, R, t) -> "SampledSet":
        R = np.asarray(R, dtype=float)
        t = np.asarray(t, dtype=float)
        tri = None if self.triangles is None else self.triangles @ R.T + t
        return SampledSet(self.points @ R.T + t, self.weights, self.gap, tri, self.dim)

    def scaled(self, s: float, about) -> "SampledSet":
        about = as_vec3(about)
        tri = None if self.triangles is None else about + s * (self.triangles - about)
        w = self.weights * s ** self.dim
        return SampledSet(about + s * (self.points - about), w, self.gap * s, tri, self.dim)

    def restricted(self, mask) -> "SampledSet":
        if self.mode == "triangles":
            raise GeometryError("restriction by point mask is for point samples")
        return SampledSet(self.points[mask], self.weights[mask], self.gap, None, self.dim)


def voxel_representatives(points: np.ndarray, voxel: float) -> np.ndarray:
    """Sorted indices of the first point in every occupied cubical voxel."""
    if len(points) == 0:
        return np.zeros(0, dtype=int)
    keys = np.floor(points / voxel).astype(np.int64)
    keys -= keys.min(axis=0)
    span = keys.max(axis=0) + 1
    flat = (keys[:, 0] * span[1] + keys[:, 1]) * span[2] + keys[:, 2]
    _, first = np.unique(flat, return_index=True)
    return np.sort(first)


def local_normals(points: np.ndarray, k: int = 12) -> np.ndarray:
    """Unit normal at every point: smallest principal axis of its k nearest neighbors."""
    k = min(k, len(points))
    if k < 3:
        raise GeometryError("need at least 3 points for a PCA normal")
    _, idx = cKDTree(points).query(points, k=k)
    nb = points[idx] - points[idx].mean(axis=1, keepdims=True)
    _, vecs = np.linalg.eigh(np.einsum("nki,nkj->nij", nb, nb))
    return vecs[:, :, 0]


def densify_triangles(tri: np.ndarray, gap: float) -> np.ndarray:
    """Barycentric lattice points of every triangle with spacing <= gap."""
    if len(tri) == 0:
        return np.zeros((0, 3))
    edges = np.linalg.norm(tri - np.roll(tri, 1, axis=1), axis=2).max(axis=1)
    out = []
    ks = np.maximum(1, np.ceil(edges / gap).astype(int))
    for k in np.unique(ks):
        sel = tri[ks == k]
        i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
        m = (i + j) <= k
        b1, b2 = i[m] / k, j[m] / k
        b0 = 1 - b1 - b2
        bary = np.column_stack([b0, b1, b2])
        out.append(np.einsum("bk,tkd->tbd", bary, sel).reshape(-1, 3))
    pts = np.vstack(out)
    return np.unique(np.round(pts, 12), axis=0)


def h2_in_ball(E: SampledSet, ball: LocalWindow) -> float:
    """H^2(E ∩ ball): exact triangle clipping, or in-ball weight sum for points."""
    c, r = ball.center, ball.radius
    if E.mode == "points":
        d = np.linalg.norm(E.points - c, axis=1)
        return float(E.weights[d <= r].sum())
    t, n, e1, e2, centroid, rad, tree, rmax = E._triangle_frames
    idx = np.asarray(tree.query_ball_point(c, r + rmax), dtype=int)
    if len(idx) == 0:
        return 0.0
    t, n, e1, e2 = t[idx], n[idx], e1[idx], e2[idx]
    h = np.einsum("ij,ij->i", c - t[:, 0], n)
    hit = np.abs(h) < r
    if not np.any(hit):
        return 0.0
    t, n, e1, e2, h = t[hit], n[hit], e1[hit], e2[hit], h[hit]
    rho = np.sqrt(r * r - h * h)
    cc = c - h[:, None] * n
    rel = t - cc[:, None, :]
    tri2 = np.stack([np.einsum("tkd,td->tk", rel, e1), np.einsum("tkd,td->tk", rel, e2)], axis=-1)
    return float(triangles_disk_area(tri2, rho).sum())


# --------------------------------------------------------------------------
# gauges and profiles


@dataclass(frozen=True)
class GaugeFunction:
    """Nondecreasing h >= 0: ``zero``, ``power`` (C t^alpha) or tabulated."""

    family: str = "zero"
    C: float = 0.0
    alpha: float = 1.0
    grid: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in ("zero", "power", "table"):
            raise GeometryError(f"unknown gauge family {self.family!r}")
        if self.family == "power" and (self.C < 0 or self.alpha <= 0):
            raise GeometryError("power gauge needs C >= 0 and alpha > 0 for integrability")
        if self.family == "table":
            g = np.asarray(self.grid, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if g.shape != v.shape or len(g) < 2 or np.any(np.diff(g) <= 0):
                raise GeometryError("tabulated gauge needs increasing grid and matching values")
            if np.any(np.diff(v) < 0) or np.any(v < 0):
                raise GeometryError("gauge must be nonnegative and nondecreasing")
            object.__setattr__(self, "grid", g)
            object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls) -> "GaugeFunction":
        return cls("zero")

    @classmethod
    def power(cls, C: float, alpha: float) -> "GaugeFunction":
        return cls("power", C=C, alpha=alpha)

    @classmethod
    def from_spec(cls, spec) -> "GaugeFunction":
        if spec is None or spec == "zero":
            return cls.zero()
        if isinstance(spec, dict):
            fam = spec.get("family", "zero")
            if fam == "power":
                return cls.power(float(spec["C"]), float(spec["alpha"]))
            if fam == "table":
                return cls("table", grid=spec["grid"], values=spec["values"])
            return cls.zero()
        raise GeometryError(f"cannot parse gauge spec {spec!r}")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.family == "zero":
            return np.zeros_like(t)
        if self.family == "power":
            return self.C * t ** self.alpha
        return np.interp(t, self.grid, self.values, left=self.values[0], right=self.values[-1])

    def A(self, r, n_nodes: int = 4000) -> np.ndarray:
        """int_0^r h(2t) dt / t for each r.

        Power gauges are integrated in closed form, C 2^a r^a / a. Tabulated
        gauges use the trapezoid rule in log t on a grid from r * 1e-8 to r,
        where the substitution dt / t = d(log t) removes the singular weight;
        the part below r * 1e-8 is bounded by h(2e-8 r) * 18.4 and ignored.
        """
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.family == "zero":
            return np.zeros_like(r)
        if self.family == "power":
            return self.C * (2.0 ** self.alpha) * r ** self.alpha / self.alpha
        out = np.empty_like(r)
        for i, ri in enumerate(r):
            s = np.linspace(np.log(ri * 1e-8), np.log(ri), n_nodes)
            out[i] = np.trapezoid(self(2 * np.exp(s)), s)
        return out

    def to_json(self) -> dict:
        if self.family == "table":
            return {"family": "table", "grid": self.grid.tolist(), "values": self.values.tolist()}
        if self.family == "power":
            return {"family": "power", "C": self.C, "alpha": self.alpha}
        return {"family": "zero"}


@dataclass
class DensityProfile:
    center: np.ndarray
    radii: np.ndarray
    theta: np.ndarray
    lam: float
    A: np.ndarray
    reliable: np.ndarray = field(default=None)
    mode: str = "triangles"

    def __post_init__(self):
        if self.reliable is None:
            self.reliable = np.ones(len(self.radii), dtype=bool)

    @property
    def corrected(self) -> np.ndarray:
        """theta(x, r) exp(lambda A(r)), nondecreasing for almost-minimal sets."""
        return self.theta * np.exp(self.lam * self.A)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "theta", "A"])
            for r, th, a in zip(self.radii, self.theta, self.A):
                w.writerow([repr(float(r)), repr(float(th)), repr(float(a))])

    def to_json(self) -> dict:
        return {"center": self.center.tolist(), "radii": self.radii.tolist(),
                "theta": self.theta.tolist(), "A": self.A.tolist(), "lambda": self.lam,
                "reliable": self.reliable.tolist(), "mode": self.mode}


def density_profile(E: SampledSet, x, radii, gauge: GaugeFunction | None = None,
                    lam: float = 1.0) -> DensityProfile:
    x = as_vec3(x)
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) == 0 or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise GeometryError("radii must be positive and strictly increasing")
    if not lam > 0:
        raise GeometryError("lambda must be positive")
    gauge = GaugeFunction.zero() if gauge is None else gauge
    theta = np.array([h2_in_ball(E, LocalWindow(x, r)) / r ** 2 for r in radii])
    reliable = radii >= UNRELIABLE_FACTOR * E.gap
    return DensityProfile(x, radii, theta, float(lam), gauge.A(radii), reliable, E.mode)


def monotonicity_audit(profile: DensityProfile, slack: float = 1e-3) -> list[dict]:
    """Consecutive radius pairs where theta e^{lambda A} drops by more than slack."""
    g = profile.corrected
    out = []
    for i in range(len(g) - 1):
        if g[i + 1] < g[i] - slack:
            out.append({"r0": float(profile.radii[i]), "r1": float(profile.radii[i + 1]),
                        "value0": float(g[i]), "value1": float(g[i + 1]),
                        "drop": float(g[i] - g[i + 1]),
                        "reliable": bool(profile.reliable[i] and profile.reliable[i + 1])})
    return out


def constant_density_detector(profile: DensityProfile, eps: float) -> list[dict]:
    """Maximal grid intervals of reliable radii where max theta - min theta <= eps.

    Greedy left-to-right sweep; intervals are reported only when they span at
    least two radii.
    """
    if not eps >= 0:
        raise GeometryError("eps must be nonnegative")
    idx = np.flatnonzero(profile.reliable)
    th = profile.theta
    out = []
    i = 0
    while i < len(idx):
        lo = hi = th[idx[i]]
        j = i
        while j + 1 < len(idx) and idx[j + 1] == idx[j] + 1:
            nlo, nhi = min(lo, th[idx[j + 1]]), max(hi, th[idx[j + 1]])
            if nhi - nlo > eps:
                break
            lo, hi = nlo, nhi
            j += 1
        if j > i:
            out.append({"a": float(profile.radii[idx[i]]), "b": float(profile.radii[idx[j]]),
                        "theta_min": float(lo), "theta_max": float(hi),
                        "note": "cone-like annulus expected (near-constant density)"})
        i = j + 1
    return out


# --------------------------------------------------------------------------
# ingestion


def read_obj(path, gap: float | None = None) -> SampledSet:
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(v) for v in parts[1:4]])
                elif parts[0] == "f":
                    idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                    idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
            except (ValueError, IndexError) as exc:
                raise GeometryError(f"{path}:{lineno}: malformed OBJ line") from exc
    if not faces:
        raise GeometryError(f"{path}: no faces")
    V = np.asarray(verts, dtype=float)
    F = np.asarray(faces, dtype=int)
    if F.max() >= len(V) or F.min() < 0:
        raise GeometryError(f"{path}: face index out of range")
    return SampledSet.from_triangles(V[F], gap)


def write_obj(E: SampledSet, path) -> None:
    if E.mode != "triangles":
        raise GeometryError("OBJ export needs a triangulated set")
    with open(path, "w") as fh:
        for tri in E.triangles:
            for v in tri:
                fh.write("v %r %r %r\n" % tuple(float(c) for c in v))
        for i in range(len(E.triangles)):
            fh.write(f"f {3 * i + 1} {3 * i + 2} {3 * i + 3}\n")


def read_points_csv(path, gap: float, dim: int = 2) -> SampledSet:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise GeometryError(f"{path}:{lineno}: non-numeric CSV row") from None
            if len(vals) not in (3, 4):
                raise GeometryError(f"{path}:{lineno}: expected x,y,z[,w]")
            rows.append(vals if len(vals) == 4 else vals + [1.0])
    if not rows:
        raise GeometryError(f"{path}: no points")
    a = np.asarray(rows)
    return SampledSet.from_points(a[:, :3], a[:, 3], gap=gap, dim=dim)


def write_points_csv(E: SampledSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "w"])
        for p, wt in zip(E.points, E.weights):
            w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), repr(float(wt))])
