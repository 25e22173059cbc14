"""
Tracing one-dimensional sets that are close to lines or propellers at
every location and scale: epsilon tables, the center iteration, branch
marching through dyadic annuli and tangent certificates.

Lengths are relative to the window radius r. The annuli use the unit
u = r / 2, so that the window is B(x, 2u):

    A_0 = B(x, 5u/3) \\ B(z, 2^-6 u),   A_k = B(z, 2^(-k-3) u) \\ B(z, 2^(-k-6) u), k >= 1.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .fitting import FAMILY_1D, LINE, PROPELLER, FitBudget, beta_fit
from .geometry import GeometryError, LocalWindow, as_vec3, unit
from .measure import UNRELIABLE_FACTOR, SampledSet

CORE_FRACTION = 0.6


@dataclass
class EpsilonTable:
    scales: np.ndarray
    eps: np.ndarray
    truncated: bool
    probes: np.ndarray

    def to_json(self) -> dict:
        return {"scales": self.scales.tolist(), "eps": self.eps.tolist(),
                "truncated": self.truncated, "n_probes": int(len(self.probes))}


def _fit_budget(budget):
    return FitBudget(n_sub=800, polish_maxfev=300) if budget is None else budget


def measure_epsilons(E: SampledSet, window: LocalWindow, depth: int, n_probes: int = 8,
                     budget: FitBudget | None = None, seed: int = 0) -> EpsilonTable:
    """eps_k = max over probes y of beta(y, 2^-k r) for the family {line, propeller}.

    Probes are the window center and ``n_probes`` seeded sample points of
    E ∩ window. Scales below 3 x gap are dropped and the table is flagged
    as truncated.
    """
    if depth < 1:
        raise GeometryError("depth must be at least 1")
    budget = _fit_budget(budget)
    rng = np.random.default_rng(seed)
    idx = np.asarray(E.kdtree.query_ball_point(window.center, window.radius), dtype=int)
    probes = [window.center]
    if len(idx) and n_probes > 0:
        pick = rng.choice(np.sort(idx), size=min(n_probes, len(idx)), replace=False)
        probes += [E.points[i] for i in np.sort(pick)]
    probes = np.array(probes)
    scales, eps = [], []
    truncated = False
    for k in range(depth):
        t = window.radius * 2.0 ** (-k)
        if t < UNRELIABLE_FACTOR * E.gap:
            truncated = True
            break
        worst = 0.0
        for y in probes:
            worst = max(worst, beta_fit(E, LocalWindow(y, t), FAMILY_1D, budget, seed).beta)
        scales.append(t)
        eps.append(worst)
    return EpsilonTable(np.array(scales), np.array(eps), truncated, probes)


@dataclass
class CenterResult:
    center: np.ndarray | None
    iterates: list
    diagnostic: str

    def to_json(self) -> dict:
        return {"center": None if self.center is None else self.center.tolist(),
                "iterates": [z.tolist() for z in self.iterates], "diagnostic": self.diagnostic}


def detect_center(E: SampledSet, window: LocalWindow, budget: FitBudget | None = None,
                  seed: int = 0, min_scale_gaps: float = 8.0, return_info: bool = False):
    """Locate the junction of a propeller-like set, or None in the line regime.

    The best cone at the top scale must be a propeller centered in
    B(x, 0.6 r). The center is then refined by refitting propellers on
    B(z_k, 2^-k r) around the current estimate, down to ``min_scale_gaps``
    sampling gaps.
    """
    budget = _fit_budget(budget)
    x, r = window.center, window.radius
    top = beta_fit(E, window, FAMILY_1D, budget, seed)
    if top.best_cone is None or top.kind != PROPELLER:
        res = CenterResult(None, [], "line regime at the top scale")
        return res if return_info else res.center
    z = top.best_cone.apex
    if np.linalg.norm(z - x) > CORE_FRACTION * r:
        res = CenterResult(None, [z], "propeller center outside the core")
        return res if return_info else res.center
    iterates = [z]
    k = 1
    while r * 2.0 ** (-k) >= min_scale_gaps * E.gap:
        t = r * 2.0 ** (-k)
        rep = beta_fit(E, LocalWindow(z, t), (PROPELLER,), budget, seed, seed_centers=[z])
        if rep.best_cone is None:
            res = CenterResult(None, iterates, f"empty window at scale {t:.3g}")
            return res if return_info else res.center
        z_new = rep.best_cone.apex
        if np.linalg.norm(z_new - x) > r or np.linalg.norm(z_new - z) > t:
            res = CenterResult(None, iterates + [z_new], f"center iteration left the window at scale {t:.3g}")
            return res if return_info else res.center
        z = z_new
        iterates.append(z)
        k += 1
    res = CenterResult(z, iterates, "converged")
    return res if return_info else res.center


# --------------------------------------------------------------------------
# tracing


def annulus_index(rho: float, u: float) -> int:
    """Finest annulus A_k containing a point at distance rho from the center (0 for A_0)."""
    if rho <= 0:
        return 10 ** 6
    k = int(np.floor(np.log2(u / rho))) - 3
    return max(k, 0)


def annulus_width(k: int, u: float) -> float:
    if k == 0:
        return (5.0 / 3.0 - 2.0 ** -6) * u
    return (2.0 ** (-k - 3) - 2.0 ** (-k - 6)) * u


def local_direction(E: SampledSet, p, s: float) -> np.ndarray | None:
    """Principal direction of E ∩ B(p, s), or None with fewer than 3 points."""
    idx = E.kdtree.query_ball_point(p, s)
    if len(idx) < 3:
        return None
    q = E.points[idx] - E.points[idx].mean(axis=0)
    _, vecs = np.linalg.eigh(q.T @ q)
    return vecs[:, -1]


def _seg_seg_distance(p0, p1, q0, q1) -> float:
    """Distance between segments [p0, p1] and [q0, q1]."""
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    c, b = d1 @ r, d1 @ d2
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-300 else 0.0
    t = (b * s + f) / e if e > 0 else 0.0
    if t < 0:
        t, s = 0.0, np.clip(-c / a, 0.0, 1.0) if a > 0 else 0.0
    elif t > 1:
        t, s = 1.0, np.clip((b - c) / a, 0.0, 1.0) if a > 0 else 0.0
    return float(np.linalg.norm(p0 + s * d1 - (q0 + t * d2)))


def polylines_simple(branches, shared_start: bool, tol: float = 0.0) -> bool:
    """True when no two non-adjacent segments meet (branches may share their first vertex)."""
    segs = []
    for b, pl in enumerate(branches):
        for i in range(len(pl) - 1):
            segs.append((b, i, pl[i], pl[i + 1]))
    for a in range(len(segs)):
        ba, ia, p0, p1 = segs[a]
        for c in range(a + 1, len(segs)):
            bc, ic, q0, q1 = segs[c]
            if ba == bc and abs(ia - ic) <= 1:
                continue
            if ba != bc and shared_start and ia == 0 and ic == 0:
                continue
            if _seg_seg_distance(p0, p1, q0, q1) <= tol:
                return False
    return True


@dataclass
class TraceResult:
    structure: str
    center: np.ndarray | None
    branches: list
    tangents: list
    annuli: list
    epsilons: EpsilonTable | None
    window: LocalWindow
    flags: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.flags)

    def to_json(self) -> dict:
        return {"structure": self.structure,
                "center": None if self.center is None else self.center.tolist(),
                "window": {"center": self.window.center.tolist(), "radius": self.window.radius},
                "branches": [b.tolist() for b in self.branches],
                "epsilons": None if self.epsilons is None else self.epsilons.to_json(),
                "flags": self.flags}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    def write_tangent_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["branch", "index", "x", "y", "z", "tx", "ty", "tz", "annulus"])
            for j, (pl, tg, an) in enumerate(zip(self.branches, self.tangents, self.annuli)):
                for i, (p, t, k) in enumerate(zip(pl, tg, an)):
                    w.writerow([j, i, *map(repr, map(float, p)), *map(repr, map(float, t)), int(k)])


def _march(E, start, direction, window, step_of, others, gap, max_steps=100000):
    """Follow E from ``start`` along ``direction`` until leaving the window."""
    pts = [start]
    tangents = [direction]
    d = direction
    flags = []
    x, r = window.center, window.radius
    p = start
    for _ in range(max_steps):
        h = step_of(p)
        target = p + h * d
        if np.linalg.norm(target - x) > r:
            # last step: land on the window boundary
            q = p - x
            b = q @ d
            h = -b + np.sqrt(max(b * b - (q @ q - r * r), 0.0))
            if h <= gap:
                break
            target = p + h * d
        cand = E.kdtree.query_ball_point(target, max(h / 2, 2 * gap))
        if not cand:
            flags.append("step failure: no sample near the predicted point")
            break
        cand = np.asarray(cand)
        cp = E.points[cand]
        fwd = (cp - p) @ d > 0.5 * h
        if not fwd.any():
            flags.append("step failure: no sample ahead")
            break
        cp = cp[fwd]
        p_new = cp[np.argmin(np.linalg.norm(cp - target, axis=1))]
        for other in others:
            if len(other) > 1 and np.min(np.linalg.norm(other[1:] - p_new, axis=1)) < 0.25 * h:
                flags.append("branch collision")
                return np.array(pts), np.array(tangents), flags
        t_loc = local_direction(E, p_new, max(h, 4 * gap))
        if t_loc is None:
            t_loc = d
        if t_loc @ d < 0:
            t_loc = -t_loc
        d = unit(t_loc)
        pts.append(p_new)
        tangents.append(d)
        p = p_new
        if np.linalg.norm(p - x) >= r - gap:
            break
    return np.array(pts), np.array(tangents), flags


def trace_structure(E: SampledSet, window: LocalWindow, center=None,
                    epsilons: EpsilonTable | None = None, eps_threshold: float = 0.2,
                    budget: FitBudget | None = None, seed: int = 0) -> TraceResult:
    """Polylines through E: one branch (line regime) or three from ``center``.

    Steps are one eighth of the width of the finest annulus A_k that
    contains the current point (propeller regime) or r / 64 (line regime);
    each step is snapped to the nearest sample ahead and the direction is
    refit on a ball of the step size.
    """
    if epsilons is not None and len(epsilons.eps) and np.max(epsilons.eps) > eps_threshold:
        raise GeometryError(f"epsilon {np.max(epsilons.eps):.3g} above the tracing threshold {eps_threshold}")
    x, r = window.center, window.radius
    u = r / 2.0
    gap = E.gap
    flags = []
    if center is None:
        start = E.points[E.kdtree.query(x)[1]]
        d = local_direction(E, start, r / 8)
        if d is None:
            raise GeometryError("too few samples near the window center")
        h = r / 64
        halves = []
        for s in (1.0, -1.0):
            pl, tg, fl = _march(E, start, s * d, window, lambda p: h, [], gap)
            halves.append((pl, tg))
            flags += fl
        pl = np.vstack([halves[1][0][::-1], halves[0][0][1:]])
        tg = np.vstack([halves[1][1][::-1], halves[0][1][1:]])
        tg = tg * np.where((tg @ tg[-1]) < 0, -1.0, 1.0)[:, None]
        return TraceResult("line", None, [pl], [tg], [np.zeros(len(pl), dtype=int)], epsilons,
                           window, flags)
    z = as_vec3(center)
    z = E.points[E.kdtree.query(z)[1]]
    rep = beta_fit(E, LocalWindow(z, max(2.0 ** -4 * u, 16 * gap)), (PROPELLER,), _fit_budget(budget),
                   seed, seed_centers=[z])
    if rep.best_cone is None:
        raise GeometryError("no samples around the center")
    dirs = rep.best_cone.directions

    def step_of(p):
        rho = np.linalg.norm(p - z)
        k = annulus_index(rho, u)
        return max(annulus_width(min(k, 60), u) / 8.0, 2 * gap)

    branches, tangents, annuli = [], [], []
    for d in dirs:
        pl, tg, fl = _march(E, z, d, window, step_of, branches, gap)
        flags += fl
        branches.append(pl)
        tangents.append(tg)
        annuli.append(np.array([annulus_index(np.linalg.norm(p - z), u) for p in pl]))
    if not polylines_simple(branches, shared_start=True):
        flags.append("branches not simple")
    return TraceResult(PROPELLER, z, branches, tangents, annuli, epsilons, window, flags)


# --------------------------------------------------------------------------
# tangent certificate


def line_distance(a, b) -> float:
    """Distance between the lines spanned by unit vectors a and b."""
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def center_tangents(result: TraceResult, min_points: int = 4) -> np.ndarray:
    """Half-line directions of the branches at the center.

    Each branch is fitted by a half-line from the center on the vertices
    within rho_m = 2^-m u for m = 3, 4, ...; the smallest radius still
    holding ``min_points`` vertices wins.
    """
    z = result.center
    u = result.window.radius / 2.0
    out = []
    for pl in result.branches:
        q = pl[1:] - z
        rho = np.linalg.norm(q, axis=1)
        best = None
        m = 3
        while True:
            sel = rho <= 2.0 ** (-m) * u
            if sel.sum() < min_points:
                break
            best = q[sel]
            m += 1
        if best is None:
            best = q[: max(min_points, 1)]
        _, vecs = np.linalg.eigh(best.T @ best)
        t = vecs[:, -1]
        if t @ best.sum(axis=0) < 0:
            t = -t
        out.append(t)
    return np.array(out)


def tangent_certificate(result: TraceResult, max_pairs: int = 20000, seed: int = 0) -> dict:
    """Measured tangent oscillation against C sum_{s_k <= 16|x - y|} eps_k, plus center angles.

    The constant C is not known explicitly; the report gives the smallest
    C that makes every sampled pair satisfy the bound.
    """
    rng = np.random.default_rng(seed)
    eps = result.epsilons
    rep = {"structure": result.structure}
    worst_osc, worst_C = 0.0, 0.0
    n_pairs = 0
    for pl, tg in zip(result.branches, result.tangents):
        n = len(pl)
        if n < 2:
            continue
        ii = rng.integers(0, n, size=max_pairs // max(len(result.branches), 1))
        jj = rng.integers(0, n, size=len(ii))
        for i, j in zip(ii, jj):
            if i == j:
                continue
            osc = line_distance(tg[i], tg[j])
            worst_osc = max(worst_osc, osc)
            if eps is None or len(eps.eps) == 0:
                continue
            sep = np.linalg.norm(pl[i] - pl[j])
            bound = eps.eps[eps.scales <= 16 * sep].sum()
            if bound > 0:
                worst_C = max(worst_C, osc / bound)
                n_pairs += 1
    rep.update({"max_oscillation": worst_osc, "fitted_C": worst_C, "pairs_with_bound": n_pairs})
    if result.structure == PROPELLER:
        tau = center_tangents(result)
        ang = []
        for a in range(3):
            for b in range(a + 1, 3):
                ang.append(float(np.degrees(np.arccos(np.clip(tau[a] @ tau[b], -1, 1)))))
        _, vecs = np.linalg.eigh(tau.T @ tau)
        nrm = vecs[:, 0]
        rep.update({"center_tangents": tau.tolist(), "pairwise_angles_deg": ang,
                    "coplanarity_residual": float(np.max(np.abs(tau @ nrm)))})
    return rep
