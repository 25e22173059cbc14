"""
Federer-Fleming projection of a weighted point sample inside a dyadic cube
onto the 2-skeleton of its dyadic subcubes, with an area-inflation audit.

In R^3 with d = 2 a single stage suffices: every sample point in the open
interior of a subcube R is pushed radially, away from a center c_R chosen far
from the sample, onto the boundary of R. Points outside the cube and points
already on a face of the subcube lattice are left where they are.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import GeometryError, as_vec3
from .measure import SampledSet, local_normals

N_CENTER_SAMPLES = 64
SKELETON_TOL = 1e-12


@dataclass(frozen=True)
class DyadicCube:
    """Cube ``corner + [0, 2^k]^3`` split into ``2^(3j)`` subcubes of side ``2^(k-j)``."""

    corner: np.ndarray
    k: int
    j: int

    def __post_init__(self):
        c = as_vec3(self.corner)
        object.__setattr__(self, "corner", c)
        if self.j < 1:
            raise GeometryError("subdivision level j must be >= 1")
        q = c / self.side
        if np.abs(q - np.round(q)).max() > 1e-12:
            raise GeometryError(f"corner {c.tolist()} is not a multiple of the side {self.side}")

    @property
    def side(self) -> float:
        return 2.0 ** self.k

    @property
    def h(self) -> float:
        return 2.0 ** (self.k - self.j)

    @property
    def n(self) -> int:
        return 2 ** self.j

    def inside(self, points, closed: bool = True) -> np.ndarray:
        u = (np.asarray(points, dtype=float) - self.corner) / self.side
        if closed:
            return np.all((u >= 0.0) & (u <= 1.0), axis=1)
        return np.all((u > 0.0) & (u < 1.0), axis=1)

    def subcube_index(self, points) -> np.ndarray:
        """Integer index (N, 3) of the closed subcube containing each point (clipped into range)."""
        g = np.floor((np.asarray(points, dtype=float) - self.corner) / self.h).astype(np.int64)
        return np.clip(g, 0, self.n - 1)

    def flat(self, idx) -> np.ndarray:
        idx = np.asarray(idx).reshape(-1, 3)
        return (idx[:, 0] * self.n + idx[:, 1]) * self.n + idx[:, 2]

    def unflat(self, f: int) -> np.ndarray:
        return np.array([f // (self.n * self.n), (f // self.n) % self.n, f % self.n])

    def bounds(self, idx) -> tuple[np.ndarray, np.ndarray]:
        lo = self.corner + np.asarray(idx, dtype=float) * self.h
        return lo, lo + self.h

    def skeleton_distance(self, points) -> np.ndarray:
        """Distance to the nearest lattice plane x_i = corner_i + m h (the 2-skeleton inside Q)."""
        u = (np.asarray(points, dtype=float) - self.corner) / self.h
        return np.abs(u - np.round(u)).min(axis=1) * self.h

    def to_json(self) -> dict:
        return {"corner": self.corner.tolist(), "k": self.k, "j": self.j, "side": self.side}


def _radial_to_boundary(x, c, lo, hi):
    """Push x away from c onto the boundary of the box [lo, hi].

    Returns the images, the hit axis and the scale t = |x' - c| / |x - c|.
    The hit coordinate is set exactly to the face value and the others are
    clipped into the box, so containment holds in floating point.
    """
    v = x - c
    with np.errstate(divide="ignore", invalid="ignore"):
        tt = np.where(v > 0, (hi - c) / v, np.where(v < 0, (lo - c) / v, np.inf))
    axis = np.argmin(tt, axis=1)
    t = tt[np.arange(len(x)), axis]
    y = c + t[:, None] * v
    y = np.clip(y, lo, hi)
    rows = np.arange(len(x))
    face = np.where(v[rows, axis] > 0, np.broadcast_to(hi, x.shape)[rows, axis],
                    np.broadcast_to(lo, x.shape)[rows, axis])
    y[rows, axis] = face
    return y, axis, t


@dataclass
class ProjectionMap:
    """Piecewise radial map phi_Q: the chosen center of every subcube that received sample points.

    Subcubes without a recorded center use their midpoint; failed
    (saturated) subcubes act as the identity.
    """

    cube: DyadicCube
    centers: dict                       # flat index -> center (3,)
    clearance: dict                     # flat index -> distance from center to F
    failed: set = field(default_factory=set)
    seed: int = 0

    def center_of(self, f: int) -> np.ndarray:
        if f in self.centers:
            return self.centers[f]
        lo, hi = self.cube.bounds(self.cube.unflat(f))
        return (lo + hi) / 2

    def apply(self, points, return_details: bool = False):
        x = np.asarray(points, dtype=float).reshape(-1, 3)
        y = x.copy()
        moved = self.cube.inside(x, closed=False) & (self.cube.skeleton_distance(x) > 0.0)
        idx = self.cube.subcube_index(x)
        flat = self.cube.flat(idx)
        for f in np.unique(flat[moved]):
            if f in self.failed:
                continue
            sel = np.nonzero(moved & (flat == f))[0]
            c = self.center_of(int(f))
            ok = np.any(x[sel] != c, axis=1)
            sel = sel[ok]
            lo, hi = self.cube.bounds(self.cube.unflat(int(f)))
            y[sel], _, _ = _radial_to_boundary(x[sel], c, lo, hi)
        if return_details:
            return y, moved, flat
        return y

    __call__ = apply

    def to_json(self) -> dict:
        return {"cube": self.cube.to_json(), "seed": self.seed,
                "centers": {str(k): v.tolist() for k, v in sorted(self.centers.items())},
                "clearance": {str(k): float(v) for k, v in sorted(self.clearance.items())},
                "failed": sorted(int(f) for f in self.failed)}


def _choose_center(lo, hi, tree, rng, n_samples):
    cand = lo + (hi - lo) * rng.uniform(0.0, 1.0, size=(n_samples, 3))
    # keep candidates in the open cube
    cand = np.clip(cand, lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo))
    d, _ = tree.query(cand)
    i = int(np.argmax(d))
    return cand[i], float(d[i])


def skeleton_project(F: SampledSet, cube: DyadicCube, seed: int = 0,
                     n_samples: int = N_CENTER_SAMPLES, min_clearance: float | None = None):
    """Choose subcube centers and project F; returns (ProjectionMap, image SampledSet).

    Each subcube's center is the best of ``n_samples`` uniform samples,
    maximizing the distance to F, drawn from a generator seeded by
    (seed, subcube index) so results do not depend on processing order. A
    subcube whose best center is closer than ``min_clearance`` (default a
    quarter of the sampling gap) to F is flagged as failed and left fixed.
    Weights are carried over unchanged.
    """
    if F.mode == "triangles":
        raise GeometryError("skeleton_project expects a weighted point sample")
    x = F.points
    if min_clearance is None:
        min_clearance = 0.25 * F.gap if F.gap > 0 else 1e-9 * cube.h
    moved = cube.inside(x, closed=False) & (cube.skeleton_distance(x) > 0.0)
    flat = cube.flat(cube.subcube_index(x))
    tree = F.kdtree if len(x) else None
    centers, clearance, failed = {}, {}, set()
    for f in np.unique(flat[moved]):
        f = int(f)
        lo, hi = cube.bounds(cube.unflat(f))
        rng = np.random.default_rng([seed, f])
        c, d = _choose_center(lo, hi, tree, rng, n_samples)
        centers[f] = c
        clearance[f] = d
        if d < min_clearance:
            failed.add(f)
    pmap = ProjectionMap(cube, centers, clearance, failed, seed)
    y = pmap.apply(x)
    image = SampledSet(y, F.weights.copy(), F.gap, None, F.dim)
    return pmap, image


@dataclass
class ProjectionAudit:
    identity_outside: bool
    on_skeleton_max: float
    on_skeleton: bool
    in_subcube: bool
    max_inflation: float
    subcubes: list
    n_failed: int

    def to_json(self) -> dict:
        return {"identity_outside": self.identity_outside, "on_skeleton": self.on_skeleton,
                "on_skeleton_max_distance": self.on_skeleton_max, "in_subcube": self.in_subcube,
                "max_inflation": self.max_inflation, "n_failed": self.n_failed,
                "subcubes": self.subcubes}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


def point_inflation(pmap: ProjectionMap, F: SampledSet, image: SampledSet, k: int = 12) -> np.ndarray:
    """Area Jacobian of the radial projection at every sample point.

    For an element with unit normal nu at x, projected from c onto a face with
    normal e, the area scales by t^2 |nu . v| / |e . v| with v the unit ray
    direction and t = |x' - c| / |x - c|. Unmoved points have Jacobian 1.
    The normal nu is the local PCA normal of the sample.
    """
    x, y = F.points, image.points
    J = np.ones(len(x))
    moved = np.any(x != y, axis=1)
    if not np.any(moved):
        return J
    nu = local_normals(x, k)[moved]
    flat = pmap.cube.flat(pmap.cube.subcube_index(x[moved]))
    c = np.array([pmap.center_of(int(f)) for f in flat])
    v = x[moved] - c
    r0 = np.linalg.norm(v, axis=1)
    vh = v / r0[:, None]
    t = np.linalg.norm(y[moved] - c, axis=1) / r0
    lo = pmap.cube.corner + pmap.cube.subcube_index(x[moved]) * pmap.cube.h
    # hit face: the coordinate of y on a face of its subcube with the largest |v_i| share
    on = np.minimum(np.abs(y[moved] - lo), np.abs(y[moved] - lo - pmap.cube.h)) <= SKELETON_TOL * pmap.cube.h
    share = np.where(on, np.abs(vh), -1.0)
    e_dot = share.max(axis=1)
    J[moved] = t ** 2 * np.abs(np.sum(nu * vh, axis=1)) / np.maximum(e_dot, 1e-300)
    return J


def projection_audit(pmap: ProjectionMap, F: SampledSet, image: SampledSet) -> ProjectionAudit:
    """Containment checks and per-subcube weighted inflation.

    Checks: image equals F exactly outside the open cube; every image point
    inside the cube lies within 1e-12 (relative to the subcube side) of the
    2-skeleton; every image point stays in the closed subcube of its source.
    The inflation of a subcube is sum w J / sum w over its source points.
    """
    cube = pmap.cube
    x, y, w = F.points, image.points, F.weights
    interior = cube.inside(x, closed=False)
    identity_outside = bool(np.array_equal(x[~interior], y[~interior]))
    d_skel = cube.skeleton_distance(y[interior]) if np.any(interior) else np.zeros(0)
    # points of failed subcubes are allowed to stay put
    flat = cube.flat(cube.subcube_index(x))
    ok_fail = np.isin(flat[interior], list(pmap.failed))
    dmax = float(d_skel[~ok_fail].max()) if np.any(~ok_fail) else 0.0
    on_skel = dmax <= SKELETON_TOL * cube.h
    idx = cube.subcube_index(x)
    lo = cube.corner + idx * cube.h
    hi = lo + cube.h
    inside_src = np.all((y >= lo) & (y <= hi), axis=1) | ~interior
    J = point_inflation(pmap, F, image)
    subcubes = []
    for f in np.unique(flat[interior]):
        sel = interior & (flat == f)
        ws = w[sel]
        wsum = float(ws.sum())
        infl = float((ws * J[sel]).sum() / wsum) if wsum > 0 else float(J[sel].mean())
        subcubes.append({"index": cube.unflat(int(f)).tolist(), "n_points": int(sel.sum()),
                         "weight": wsum, "inflation": infl,
                         "max_point_jacobian": float(J[sel].max()),
                         "center": pmap.center_of(int(f)).tolist(),
                         "clearance": pmap.clearance.get(int(f)), "failed": int(f) in pmap.failed})
    max_infl = max([s["inflation"] for s in subcubes], default=1.0)
    return ProjectionAudit(identity_outside, dmax, bool(on_skel), bool(np.all(inside_src)),
                           float(max_infl), subcubes, len(pmap.failed))
