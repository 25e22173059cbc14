"""
Cone fitting: beta numbers against the families {line, propeller} (curves)
and {plane, Y, T} (surfaces), point classification by density, and the
finite-sample biHolder-ball check.

All optimization happens in window-normalized coordinates q = (p - x) / r,
so the fitted beta is scale invariant by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .cones import D_T_R3, PLANE, T, Y, MinimalCone, construct_reference_cone
from .geometry import (
    GeometryError,
    LocalWindow,
    RayCone,
    as_vec3,
    line_cone,
    local_hausdorff_distance,
    orthonormal_complement,
    propeller_cone,
    random_rotation,
    unit,
)
from .measure import GaugeFunction, SampledSet, density_profile, voxel_representatives

LINE, PROPELLER = "line", "propeller"
FAMILY_2D = (PLANE, Y, T)
FAMILY_1D = (LINE, PROPELLER)
# simpler kinds win ties
_Q_DIGITS = 9
_COMPLEXITY = {LINE: 0, PROPELLER: 1, PLANE: 0, Y: 1, T: 2}


class ClassificationUnavailable(GeometryError):
    """No radius of the grid is large enough compared to the sampling gap."""


@dataclass(frozen=True)
class FitBudget:
    """Optimizer configuration for ``beta_fit``.

    n_starts seeds per kind are screened by RMS residual and the best
    n_refine are refined by least squares; the winner is optionally polished
    by Nelder-Mead on the (coarsely sampled) sup objective. Fits whose coarse
    beta is above polish_below are far from every cone of the family and are
    not polished; their sup objective is also the slowest to evaluate.
    """

    n_starts: int = 8
    n_refine: int = 3
    n_sub: int = 2000
    max_nfev: int = 60
    polish: bool = True
    polish_maxfev: int = 400
    polish_below: float = 0.25
    coarse_gap: float = 0.04
    final_gap: float = 0.01
    seed: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BetaReport:
    window: LocalWindow
    beta: float
    best_cone: object
    family: tuple
    certified: bool
    seed: int
    per_kind: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)
    bound: float = 0.0

    @property
    def kind(self) -> str | None:
        return None if self.best_cone is None else self.best_cone.kind

    def to_json(self) -> dict:
        return {"window": {"center": self.window.center.tolist(), "radius": self.window.radius},
                "beta": self.beta, "sampling_bound": self.bound,
                "cone": cone_to_json(self.best_cone), "family": list(self.family),
                "certified": self.certified, "seed": self.seed,
                "per_kind": self.per_kind, "trace": self.trace}


def cone_to_json(cone) -> dict | None:
    if cone is None:
        return None
    if isinstance(cone, RayCone):
        return {"kind": cone.kind, "apex": cone.apex.tolist(), "directions": cone.directions.tolist()}
    return cone.to_json()


# --------------------------------------------------------------------------
# reference cones in local coordinates

_REF = {k: construct_reference_cone(k) for k in FAMILY_2D}
_PROP_DIRS = np.array([[np.cos(a), np.sin(a), 0.0] for a in (0.0, 2 * np.pi / 3, 4 * np.pi / 3)])


def _sector_arrays(cone):
    secs = cone.sectors
    return (np.array([s.e1 for s in secs]), np.array([s.e2 for s in secs]),
            np.array([s.normal for s in secs]), np.array([s.alpha for s in secs]),
            np.array([s.rays()[1] for s in secs]))


_SECTORS = {k: _sector_arrays(_REF[k]) for k in (Y, T)}


def _local_offset(kind: str, q: np.ndarray) -> np.ndarray:
    """q - (nearest point of the reference cone of ``kind``), for local points q."""
    if kind == PLANE:
        out = np.zeros_like(q)
        out[:, 2] = q[:, 2]
        return out
    if kind == LINE:
        out = q.copy()
        out[:, 0] = 0.0
        return out
    if kind == PROPELLER:
        rays = [(d,) for d in _PROP_DIRS]
    best, best_d = None, None
    if kind == PROPELLER:
        for (d,) in rays:
            diff = q - np.maximum(q @ d, 0.0)[:, None] * d
            dd = np.einsum("ij,ij->i", diff, diff)
            if best is None:
                best, best_d = diff, dd
            else:
                m = dd < best_d
                best[m], best_d[m] = diff[m], dd[m]
        return best
    E1, E2, N, A, R2 = _SECTORS[kind]
    for e1, e2, n, alpha, r2 in zip(E1, E2, N, A, R2):
        phi = np.mod(np.arctan2(q @ e2, q @ e1), 2 * np.pi)
        inside = phi <= alpha
        diff = (q @ n)[:, None] * n
        if not inside.all():
            qo = q[~inside]
            d_a = qo - np.maximum(qo @ e1, 0.0)[:, None] * e1
            d_b = qo - np.maximum(qo @ r2, 0.0)[:, None] * r2
            pick = np.einsum("ij,ij->i", d_a, d_a) <= np.einsum("ij,ij->i", d_b, d_b)
            diff[~inside] = np.where(pick[:, None], d_a, d_b)
        dd = np.einsum("ij,ij->i", diff, diff)
        if best is None:
            best, best_d = diff, dd
        else:
            m = dd < best_d
            best[m], best_d[m] = diff[m], dd[m]
    return best


def _local_distance(kind: str, q: np.ndarray) -> np.ndarray:
    return np.linalg.norm(_local_offset(kind, q), axis=1)


def _unpack(params: np.ndarray, R0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return params[:3], Rotation.from_rotvec(params[3:]).as_matrix() @ R0


def _skew(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def _left_jacobian(w):
    th = np.linalg.norm(w)
    K = _skew(w)
    if th < 1e-8:
        return np.eye(3) + 0.5 * K
    return np.eye(3) + (1 - np.cos(th)) / th ** 2 * K + (th - np.sin(th)) / th ** 3 * (K @ K)


def _residuals(params, R0, kind, q):
    c, R = _unpack(params, R0)
    return _local_distance(kind, (q - c) @ R)


def _jacobian(params, R0, kind, q):
    """Exact derivative of the distances wrt (center, rotation vector)."""
    c, R = _unpack(params, R0)
    v = q - c
    off = _local_offset(kind, v @ R)
    d = np.linalg.norm(off, axis=1)
    g = np.zeros_like(off)
    pos = d > 0
    g[pos] = off[pos] / d[pos, None]
    gw = g @ R.T
    J = np.empty((len(q), 6))
    J[:, :3] = -gw
    J[:, 3:] = np.cross(gw, v) @ _left_jacobian(params[3:])
    return J


def make_cone(kind: str, apex, frame):
    """World cone of a family kind from apex and rotation (local -> world)."""
    frame = np.asarray(frame, dtype=float)
    if kind == LINE:
        return line_cone(apex, frame[:, 0])
    if kind == PROPELLER:
        return propeller_cone(apex, frame[:, 2], frame[:, 0])
    return MinimalCone(apex, kind, None, frame)


# --------------------------------------------------------------------------
# seeding


def _frame(e1, e3) -> np.ndarray:
    e3 = unit(e3)
    e1 = unit(e1 - (e1 @ e3) * e3)
    return np.column_stack([e1, np.cross(e3, e1), e3])


def cone_frame(cone) -> np.ndarray:
    """Rotation R with make_cone(cone.kind, cone.apex, R) equal to ``cone``."""
    if isinstance(cone, RayCone):
        d = cone.directions
        if cone.kind == LINE:
            return _frame(d[0], orthonormal_complement(d[0])[0])
        return _frame(d[0], np.cross(d[0], d[1]))
    return cone.frame


def _local_axes(q: np.ndarray, k: int, which: str) -> np.ndarray:
    """Per-point normal (smallest PCA axis) or tangent (largest) from k neighbors."""
    k = min(k, len(q))
    _, idx = cKDTree(q).query(q, k=k)
    nb = q[idx] - q[idx].mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", nb, nb)
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, :, 0] if which == "normal" else vecs[:, :, -1]


def _principal(vs: np.ndarray, smallest: bool) -> np.ndarray:
    _, vecs = np.linalg.eigh(vs.T @ vs)
    return vecs[:, 0] if smallest else vecs[:, -1]


def _three_lines(q, m, axis, extra_plane=False):
    """Seed frames for a 120-degree triple of half-planes (or half-lines).

    ``m`` are per-point normals of the pieces, all roughly orthogonal to
    ``axis``; their angles modulo pi cluster at three values 60 degrees apart.
    """
    u, v = orthonormal_complement(axis)
    psi = np.mod(np.arctan2(m @ v, m @ u), np.pi)
    psi0 = np.angle(np.mean(np.exp(6j * psi))) / 6.0
    normals = [np.cos(psi0 + j * np.pi / 3) * u + np.sin(psi0 + j * np.pi / 3) * v for j in range(3)]
    normals = np.array(normals)
    align = np.abs(m @ normals.T)
    lab = np.argmax(align, axis=1)
    good = align[np.arange(len(m)), lab] > np.cos(np.radians(15))
    rows, rhs = [], []
    for i in np.flatnonzero(good):
        rows.append(normals[lab[i]])
        rhs.append(normals[lab[i]] @ q[i])
    if extra_plane:
        rows.extend([axis] * len(q))
        rhs.extend(q @ axis)
    if len(rows) < 2:
        c = q.mean(axis=0)
    else:
        c = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
    counts = np.bincount(lab[good], minlength=3)
    seeds = []
    for j in np.argsort(-counts):
        d = np.cross(axis, normals[j])
        sel = good & (lab == j)
        if sel.any() and np.median((q[sel] - c) @ d) < 0:
            d = -d
        seeds.append((c, _frame(d, axis)))
    c0, F0 = seeds[0]
    seeds.append((c0, _frame(-F0[:, 0], axis)))
    return seeds


def _tetra_seeds(q, m):
    """Match the six face-normal axes of a tetrahedral cone to clustered normals."""
    rng = np.random.default_rng(0)
    cand = m[rng.choice(len(m), size=min(300, len(m)), replace=False)]
    cosang = np.abs(cand @ m.T)
    counts = (cosang > np.cos(np.radians(8))).sum(axis=1)
    i1 = int(np.argmax(counts))
    a1 = _principal(m[np.abs(m @ cand[i1]) > np.cos(np.radians(8))], smallest=False)
    mid = np.abs(cand @ a1)
    ok = (mid > 0.34) & (mid < 0.64)
    if not ok.any():
        return []
    i2 = int(np.flatnonzero(ok)[np.argmax(counts[ok])])
    a2 = _principal(m[np.abs(m @ cand[i2]) > np.cos(np.radians(8))], smallest=False)
    if a1 @ a2 < 0:
        a2 = -a2
    d1 = np.array([0.0, 1.0, 1.0]) / np.sqrt(2)
    d2 = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)

    def basis(x, y):
        y = unit(y - (y @ x) * x)
        return np.column_stack([x, y, np.cross(x, y)])

    R = basis(a1, a2) @ basis(d1, d2).T
    Rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    face_n = unit(np.array([[0, 1, 1], [0, 1, -1], [1, 0, 1], [1, 0, -1], [1, 1, 0], [1, -1, 0]], float))
    seeds = []
    for Rs in (R, R @ Rz):
        wn = face_n @ Rs.T
        align = np.abs(m @ wn.T)
        lab = np.argmax(align, axis=1)
        good = align[np.arange(len(m)), lab] > np.cos(np.radians(10))
        if good.sum() >= 3:
            A = wn[lab[good]]
            c = np.linalg.lstsq(A, np.einsum("ij,ij->i", A, q[good]), rcond=None)[0]
        else:
            c = q.mean(axis=0)
        seeds.append((c, Rs))
    return seeds


def _seeds(kind: str, q: np.ndarray, rng: np.random.Generator, n_starts: int, hints=(), given=()):
    centroid = q.mean(axis=0)
    seeds = list(given)
    if kind == PLANE:
        n = _principal(q - centroid, smallest=True)
        seeds.append((centroid, _frame(orthonormal_complement(n)[0], n)))
    elif kind == LINE:
        d = _principal(q - centroid, smallest=False)
        seeds.append((centroid, _frame(orthonormal_complement(d)[0], d)[:, [2, 0, 1]]))
    elif len(q) >= 8:
        if kind == Y:
            m = _local_axes(q, 16, "normal")
            seeds.extend(_three_lines(q, m, _principal(m, smallest=True)))
        elif kind == T:
            seeds.extend(_tetra_seeds(q, _local_axes(q, 16, "normal")))
        elif kind == PROPELLER:
            t = _local_axes(q, 8, "tangent")
            axis = _principal(t, smallest=True)
            seeds.extend(_three_lines(q, np.cross(axis, t), axis, extra_plane=True))
    for h in hints:
        base = seeds[len(given)][1] if len(seeds) > len(given) else np.eye(3)
        seeds.append((as_vec3(h), base))
    while len(seeds) < n_starts:
        seeds.append((centroid, random_rotation(rng)))
    return seeds


# --------------------------------------------------------------------------
# fitting


def _sup_objective(kind, c, R, q_sub, tree, coarse_gap):
    """Coarse bilateral distance in normalized coordinates."""
    side_e = float(_local_distance(kind, (q_sub - c) @ R).max()) if len(q_sub) else 0.0
    cone = make_cone(kind, c, R)
    zs = cone.sample_in_ball(np.zeros(3), 1.0, coarse_gap)
    zs = zs[np.linalg.norm(zs, axis=1) <= 1.0 + 1e-12]
    side_z = tree.sup(zs) if len(zs) else 0.0
    return side_e + side_z


def _refine_kind(kind, q_sub, tree, budget, rng, hints, given=()):
    seeds = _seeds(kind, q_sub, rng, budget.n_starts, hints, given)
    rms = [np.sqrt(np.mean(_local_distance(kind, (q_sub - c) @ R) ** 2)) for c, R in seeds]
    order = np.argsort(rms)[:budget.n_refine]
    best = None
    nfev = 0
    for i in order:
        c0, R0 = seeds[i]
        x0 = np.concatenate([c0, np.zeros(3)])
        res = least_squares(_residuals, x0, jac=_jacobian, args=(R0, kind, q_sub), method="trf",
                            max_nfev=budget.max_nfev, xtol=1e-8, ftol=1e-8, gtol=1e-8)
        nfev += res.nfev
        c, R = _unpack(res.x, R0)
        obj = _sup_objective(kind, c, R, q_sub, tree, budget.coarse_gap)
        if best is None or obj < best[0]:
            best = (obj, c, R, res.status > 0)
    obj, c, R, converged = best
    return {"coarse": obj, "c": c, "R": R, "converged": bool(converged), "nfev": int(nfev),
            "polished": False, "n_seeds": len(seeds)}


def _polish(kind, fit, q_sub, tree, budget):
    """Nelder-Mead on the coarse sup objective, started at the least-squares fit."""
    R0 = fit["R"]

    def f(p):
        cc, RR = _unpack(p, R0)
        return _sup_objective(kind, cc, RR, q_sub, tree, budget.coarse_gap)

    x0 = np.concatenate([fit["c"], np.zeros(3)])
    res = minimize(f, x0, method="Nelder-Mead",
                   options={"maxfev": budget.polish_maxfev, "xatol": 1e-5, "fatol": 1e-6,
                            "initial_simplex": x0 + 0.02 * np.vstack([np.zeros(6), np.eye(6)])})
    fit["nfev"] += int(res.nfev)
    if res.fun < fit["coarse"]:
        fit["coarse"] = float(res.fun)
        fit["c"], fit["R"] = _unpack(res.x, R0)
        fit["polished"] = True
    return fit


def _normalized(E, x, r, pad=0.0):
    """Sorted indices and rounded normalized coordinates of E in B(x, r (1 + pad)).

    Rounding to 1e-9 makes the optimizer input identical for similar copies
    of E, so fitted betas are scale invariant to far better than 1e-6.
    """
    idx = np.sort(np.asarray(E.kdtree.query_ball_point(x, r * (1 + pad + 1e-6)), dtype=int))
    q = np.round((E.points[idx] - x) / r, _Q_DIGITS)
    keep = np.einsum("ij,ij->i", q, q) <= (1 + pad) ** 2
    return idx[keep], q[keep]


class _CoarseTree:
    """Voxel-thinned copy of E near the window, in normalized coordinates.

    Distances are overestimated by at most one voxel diagonal, which is
    below the coarse sampling gap of the objective. A second, 4x coarser
    copy bounds far queries first, which the kd-tree answers slowly.
    """

    def __init__(self, E, x, r, voxel):
        _, q = _normalized(E, x, r, 4 * voxel)
        q = q[voxel_representatives(q, voxel)]
        self.q = q
        self.voxel = voxel
        self.tree = cKDTree(q) if len(q) else None
        self.top = cKDTree(q[voxel_representatives(q, 4 * voxel)]) if len(q) else None

    def query(self, qs):
        return self.tree.query(qs)

    def sup(self, qs) -> float:
        """max over qs of the distance to the thinned copy."""
        d_up = self.top.query(qs)[0]
        cand = np.flatnonzero(d_up >= d_up.max() - np.sqrt(3.0) * 4 * self.voxel)
        d = self.tree.query(qs[cand], distance_upper_bound=float(d_up[cand].max()) * (1 + 1e-12) + 1e-300)[0]
        return float(np.where(np.isfinite(d), d, d_up[cand]).max())


def beta_fit(E: SampledSet, w: LocalWindow, family=FAMILY_2D, budget: FitBudget | None = None,
             seed: int | None = None, seed_centers=(), seed_cones=()) -> BetaReport:
    """Minimize d_{x,r}(E, Z) over cones Z of ``family`` in the window ``w``.

    ``family`` is a tuple of kinds drawn from (P, Y, T) or (line, propeller).
    ``seed_centers`` are optional world-coordinate guesses of the cone apex;
    ``seed_cones`` are whole cones used as extra starts for their kind.
    The returned beta is re-evaluated at full resolution; the report is
    ``certified`` when every refined least-squares run converged.
    """
    budget = FitBudget() if budget is None else budget
    seed = budget.seed if seed is None else seed
    family = tuple(family)
    for k in family:
        if k not in _COMPLEXITY:
            raise GeometryError(f"unknown cone kind {k!r}")
    if (set(family) & set(FAMILY_1D)) and (set(family) & set(FAMILY_2D)):
        raise GeometryError("a family mixes curve and surface cones")
    x, r = w.center, w.radius
    idx, q = _normalized(E, x, r)
    if len(idx) == 0:
        return BetaReport(w, 0.0, None, family, True, seed, trace={"empty": True})
    rng = np.random.default_rng(seed)
    sub = np.arange(len(idx)) if len(idx) <= budget.n_sub else np.sort(rng.choice(len(idx), budget.n_sub, replace=False))
    q_sub = q[sub]
    tree = _CoarseTree(E, x, r, budget.coarse_gap / 4)
    hints = [(as_vec3(h) - x) / r for h in seed_centers]
    given = {kind: [((c.apex - x) / r, cone_frame(c)) for c in seed_cones if c is not None and c.kind == kind]
             for kind in family}
    fits = {kind: _refine_kind(kind, q_sub, tree, budget, rng, hints, given[kind]) for kind in family}
    if budget.polish:
        best_coarse = min(f["coarse"] for f in fits.values())
        for kind, fit in fits.items():
            if (1.5 * budget.coarse_gap < fit["coarse"] <= min(best_coarse + 2 * budget.coarse_gap,
                                                                budget.polish_below)):
                _polish(kind, fit, q_sub, tree, budget)
    fine_gap = max(budget.final_gap * r, E.gap)
    per_kind, results = {}, {}
    best_coarse = min(f["coarse"] for f in fits.values())
    for kind, fit in fits.items():
        cone = make_cone(kind, x + r * fit["c"], fit["R"])
        # clearly worse kinds keep their coarse value, which can only be refined downwards
        # by a few coarse gaps; they cannot win the comparison below
        full = fit["coarse"] <= best_coarse + 3 * budget.coarse_gap
        beta = local_hausdorff_distance(E, cone, w, fine_gap) if full else fit["coarse"]
        results[kind] = (beta, cone)
        per_kind[kind] = {"beta": beta, "full_resolution": full, "coarse": fit["coarse"],
                          "converged": fit["converged"], "nfev": fit["nfev"], "polished": fit["polished"]}
    best_beta = min(v[0] for v in results.values())
    tie = E.gap / r
    kind = min((k for k in results if results[k][0] <= best_beta + tie), key=lambda k: _COMPLEXITY[k])
    beta, cone = results[kind]
    certified = fits[kind]["converged"]
    trace = {"starts_per_kind": budget.n_starts, "refined_per_kind": budget.n_refine,
             "n_subsample": int(len(sub)), "n_in_window": int(len(idx)),
             "final_sampling_gap": fine_gap}
    return BetaReport(w, float(beta), cone, family, certified, seed, per_kind, trace,
                      bound=(fine_gap + E.gap) / r)


def frozen_beta(E: SampledSet, w: LocalWindow, cone, sampling_gap: float | None = None) -> float:
    """d_{x,r}(E, cone) for a fixed, non-optimized cone."""
    gap = sampling_gap if sampling_gap is not None else max(E.gap, w.radius / 200)
    return local_hausdorff_distance(E, cone, w, gap)


def characteristic_directions(cone) -> np.ndarray:
    """Unit directions fixing the cone's orientation: normals, spines, rays."""
    if isinstance(cone, RayCone):
        dirs = cone.directions
        if cone.kind == PROPELLER:
            dirs = np.vstack([dirs, unit(np.cross(dirs[0], dirs[1]))])
        return dirs
    F = cone.frame
    if cone.kind == PLANE:
        return F[:, 2][None, :]
    if cone.kind == Y:
        faces = np.array([[np.cos(a), np.sin(a), 0.0] for a in (0.0, 2 * np.pi / 3, 4 * np.pi / 3)])
        return np.vstack([F[:, 2], faces @ F.T])
    return cone.spine_directions()


def frame_error_deg(a, b) -> float:
    """Largest angle between matched characteristic directions (lines, sign-free)."""
    da, db = characteristic_directions(a), characteristic_directions(b)
    if len(da) != len(db):
        raise GeometryError("cones of different kinds")
    cos = np.clip(np.abs(da @ db.T), 0.0, 1.0)
    ang = np.degrees(np.arccos(cos))
    return float(max(ang.min(axis=1).max(), ang.min(axis=0).max()))


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class Thresholds:
    """Density cut points: midpoints between pi, 3 pi / 2 and d_T."""

    d_T: float = D_T_R3

    @property
    def p_y(self) -> float:
        return (np.pi + 1.5 * np.pi) / 2

    @property
    def y_t(self) -> float:
        return (1.5 * np.pi + self.d_T) / 2

    def label(self, theta: float) -> str:
        if theta < self.p_y:
            return PLANE
        if theta < self.y_t:
            return Y
        return T


@dataclass
class PointLabel:
    label: str
    theta_estimate: float
    radius: float
    radii_used: list

    def to_json(self) -> dict:
        return {"label": self.label, "theta_estimate": self.theta_estimate,
                "radius": self.radius, "radii_used": self.radii_used}


def classify_point(E: SampledSet, x, gauge: GaugeFunction | None = None, lam: float = 1.0,
                   r_grid=None, thresholds: Thresholds | None = None,
                   check_on_set: bool = True) -> PointLabel:
    """Label x as a P, Y or T point from e^{lam A(r)} theta(x, r) at the smallest reliable r."""
    x = as_vec3(x)
    thresholds = Thresholds() if thresholds is None else thresholds
    if check_on_set:
        d = E.kdtree.query(x)[0]
        if d > E.gap * (1 + 1e-9):
            raise GeometryError(f"x is {d:.3g} from the sample, more than its gap {E.gap:.3g}")
    if r_grid is None:
        r_grid = E.gap * 3.0 * 2.0 ** np.arange(0, 4)
    prof = density_profile(E, x, np.asarray(r_grid, dtype=float), gauge, lam)
    ok = np.flatnonzero(prof.reliable)
    if len(ok) == 0:
        raise ClassificationUnavailable("no reliable radius: every radius is below 3 x gap")
    i = ok[0]
    theta = float(prof.corrected[i])
    return PointLabel(thresholds.label(theta), theta, float(prof.radii[i]),
                      [float(r) for r in prof.radii[ok]])


# --------------------------------------------------------------------------
# biHolder-ball check


def singular_offset(cone, x) -> float:
    """Distance from x to the singular set (plane: the plane itself)."""
    x = as_vec3(x)
    if isinstance(cone, RayCone):
        if cone.kind == LINE:
            return float(cone.distance(x[None])[0])
        return float(np.linalg.norm(x - cone.apex))
    if cone.kind == PLANE:
        return float(cone.distance(x[None])[0])
    if cone.kind == Y:
        s = cone.frame[:, 2]
        q = x - cone.apex
        return float(np.linalg.norm(q - (q @ s) * s))
    return float(np.linalg.norm(x - cone.apex))


@dataclass
class BiHolderReport:
    passed: bool
    ball_type: str | None
    certified: bool
    eps: float
    max_beta: float
    center_offset: float
    entries: list

    def to_json(self) -> dict:
        return {"passed": self.passed, "ball_type": self.ball_type, "certified": self.certified,
                "eps": self.eps, "max_beta": self.max_beta, "center_offset": self.center_offset,
                "entries": self.entries}


def biholder_certificate(E: SampledSet, x, r: float, eps: float, scale_grid=None,
                         probe_points: int = 6, budget: FitBudget | None = None,
                         seed: int = 0, family=FAMILY_2D) -> BiHolderReport:
    """Finite-sample check that beta(y, t) <= eps for probes y in E ∩ B(x, 3r), 0 < t <= 3r.

    Passing is evidence, not proof. The ball type is the kind of the best
    cone at the top scale, which must also pass within eps * 3r of x. The
    default scales halve from 3r down to max(3 gap, 2 gap / eps), where the
    sampling term of beta (about gap / t) is still small against eps.
    """
    if not eps > 0:
        raise GeometryError("eps must be positive")
    x = as_vec3(x)
    top = 3.0 * r
    if scale_grid is None:
        # below t = 2 gap / eps the sampling term alone would eat half of eps
        t_min = max(3.0 * E.gap, 2.0 * E.gap / eps)
        scale_grid = [top / 2 ** k for k in range(4) if top / 2 ** k >= t_min] or [top]
    scale_grid = sorted((float(t) for t in scale_grid), reverse=True)
    if not scale_grid or scale_grid[0] > top * (1 + 1e-12) or scale_grid[-1] <= 0:
        raise GeometryError("scales must lie in (0, 3r]")
    rng = np.random.default_rng(seed)
    idx = np.asarray(E.kdtree.query_ball_point(x, top), dtype=int)
    probes = [x]
    if len(idx) and probe_points > 0:
        pick = rng.choice(np.sort(idx), size=min(probe_points, len(idx)), replace=False)
        probes += [E.points[i] for i in pick]
    entries = []
    certified = True
    top_fit = beta_fit(E, LocalWindow(x, top), family, budget, seed)
    offset = singular_offset(top_fit.best_cone, x) / top if top_fit.best_cone is not None else 0.0
    for j, y in enumerate(probes):
        for t in scale_grid:
            if j == 0 and t == scale_grid[0] and t == top:
                rep = top_fit
            else:
                rep = beta_fit(E, LocalWindow(y, t), family, budget, seed, seed_cones=[top_fit.best_cone])
            certified &= rep.certified
            entries.append({"probe": [float(c) for c in y], "scale": t, "beta": rep.beta,
                            "kind": rep.kind, "certified": rep.certified})
    max_beta = max(e["beta"] for e in entries)
    passed = bool(max_beta <= eps and offset <= eps)
    return BiHolderReport(passed, top_fit.kind, bool(certified), float(eps), float(max_beta),
                          float(offset), entries)
