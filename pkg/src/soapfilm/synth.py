"""
Synthetic fixtures: exact and perturbed samples of planes, Y and T cones,
lines and propellers.

Triangulated cone samples are exact inside the requested radius (the fan
polygon of every sector contains the sector ∩ ball), so densities computed
from them carry no discretization error there.
"""

from __future__ import annotations

import numpy as np

from .cones import MinimalCone
from .geometry import RayCone, Sector, as_vec3, unit
from .measure import SampledSet


def _sector_fan(sector: Sector, radius: float, max_edge: float) -> np.ndarray:
    n_ang = max(3, int(np.ceil(sector.alpha / (max_edge / radius))))
    if sector.full:
        n_ang = max(n_ang, 8)
    dphi = sector.alpha / n_ang
    r_out = radius / np.cos(dphi / 2)
    n_rad = max(1, int(np.ceil(r_out / max_edge)))
    phis = np.linspace(0.0, sector.alpha, n_ang + 1)
    dirs = np.cos(phis)[:, None] * sector.e1 + np.sin(phis)[:, None] * sector.e2
    rings = np.linspace(0.0, r_out, n_rad + 1)
    tris = []
    for k in range(n_rad):
        r0, r1 = rings[k], rings[k + 1]
        for i in range(n_ang):
            a0, a1 = dirs[i], dirs[i + 1]
            if k == 0:
                tris.append([sector.apex, sector.apex + r1 * a0, sector.apex + r1 * a1])
            else:
                p00, p01 = sector.apex + r0 * a0, sector.apex + r0 * a1
                p10, p11 = sector.apex + r1 * a0, sector.apex + r1 * a1
                tris.append([p00, p10, p11])
                tris.append([p00, p11, p01])
    return np.array(tris)


def cone_triangles(cone: MinimalCone, radius: float = 1.0, max_edge: float = 0.1,
                   gap: float | None = None) -> SampledSet:
    """Triangulated sample of ``cone`` that is exact inside B(apex, radius)."""
    tris = np.vstack([_sector_fan(s, radius, max_edge) for s in cone.sectors])
    return SampledSet.from_triangles(tris, gap if gap is not None else max_edge)


def cone_points(cone: MinimalCone, radius: float = 1.0, gap: float = 0.01,
                center=None) -> SampledSet:
    """Weighted lattice sample of cone ∩ B(center, radius); weights are cell areas."""
    center = cone.apex if center is None else as_vec3(center)
    s = gap / 1.5
    pts, wts = [], []
    for sec in cone.sectors:
        dsec = sec.disk_section(center, radius)
        if dsec is None:
            continue
        c2, rho = dsec
        m = int(np.ceil((np.linalg.norm(c2) + rho) / s))
        g = (np.arange(-m, m + 1) + 0.5) * s
        U, V = np.meshgrid(g, g, indexing="ij")
        uv = np.column_stack([U.ravel(), V.ravel()])
        keep = (np.sum((uv - c2) ** 2, axis=1) <= rho * rho) & sec.contains_planar(uv)
        uv = uv[keep]
        pts.append(sec.apex + uv[:, :1] * sec.e1 + uv[:, 1:2] * sec.e2)
        wts.append(np.full(len(uv), s * s))
        # zero-weight boundary samples keep the covering gap near the edges
        bd = sec.sample_in_ball(center, radius, gap)
        pts.append(bd)
        wts.append(np.zeros(len(bd)))
    return SampledSet.from_points(np.vstack(pts), np.concatenate(wts), gap=gap, dim=2)


def grid_plane_triangles(half_width: float, h: float, keep=None, R=None, t=None) -> SampledSet:
    """Square-grid triangulation of [-L, L]^2 x {0}; ``keep(centroids)`` filters triangles."""
    n = int(np.ceil(2 * half_width / h))
    g = np.linspace(-half_width, half_width, n + 1)
    X, Yg = np.meshgrid(g, g, indexing="ij")
    P = np.stack([X, Yg, np.zeros_like(X)], axis=-1)
    a, b = P[:-1, :-1].reshape(-1, 3), P[1:, :-1].reshape(-1, 3)
    c, d = P[1:, 1:].reshape(-1, 3), P[:-1, 1:].reshape(-1, 3)
    tris = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    if keep is not None:
        tris = tris[keep(tris.mean(axis=1))]
    if R is not None:
        tris = tris @ np.asarray(R, dtype=float).T
    if t is not None:
        tris = tris + np.asarray(t, dtype=float)
    return SampledSet.from_triangles(tris, h)


def annulus_hole_plane(r_in: float, r_out: float, radius: float = 3.0, max_edge: float = 0.05) -> SampledSet:
    """Plane z = 0 through the origin with the annulus r_in < |x| < r_out removed.

    Built from polar rings so that the removed region is bounded by the same
    polygons at every angle.
    """
    n_ang = max(16, int(np.ceil(2 * np.pi * radius / max_edge)))
    phis = np.linspace(0, 2 * np.pi, n_ang + 1)
    dirs = np.column_stack([np.cos(phis), np.sin(phis), np.zeros_like(phis)])
    r_edge = radius / np.cos(np.pi / n_ang)
    radii = np.unique(np.concatenate([np.arange(0, r_edge, max_edge), [r_in, r_out, r_edge]]))
    tris = []
    for k in range(len(radii) - 1):
        r0, r1 = radii[k], radii[k + 1]
        if r0 >= r_in and r1 <= r_out:
            continue
        for i in range(n_ang):
            a0, a1 = dirs[i], dirs[i + 1]
            if r0 == 0:
                tris.append([np.zeros(3), r1 * a0, r1 * a1])
            else:
                tris.append([r0 * a0, r1 * a0, r1 * a1])
                tris.append([r0 * a0, r1 * a1, r0 * a1])
    return SampledSet.from_triangles(np.array(tris), max_edge)


# --------------------------------------------------------------------------
# 1-dimensional fixtures


def line_points(point, direction, half_length: float, gap: float) -> SampledSet:
    d = unit(as_vec3(direction))
    n = int(np.ceil(2 * half_length / gap)) + 1
    t = np.linspace(-half_length, half_length, n)
    pts = as_vec3(point) + t[:, None] * d
    return SampledSet.from_points(pts, np.full(n, 2 * half_length / (n - 1)), gap=gap, dim=1)


def bend_profile(t, radius: float, C: float) -> np.ndarray:
    """Normal displacement g(t) = C sqrt(t / radius) t.

    g' is 1/2-Holder with g'(0) = 0, so the best line or propeller at scale
    2^-k radius misses the curve by about C 2^{-k/2} of the scale, the worst
    case being windows at the junction.
    """
    t = np.asarray(t, dtype=float)
    return C * np.sqrt(np.maximum(t, 0.0) / radius) * t


def propeller_points(center=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0), first=(1.0, 0.0, 0.0),
                     radius: float = 1.0, gap: float = 1e-3, bend_C: float = 0.0,
                     extend: float = 2.5) -> SampledSet:
    """Three branches leaving ``center`` at 120 degrees, optionally bent along ``normal``.

    Branches are sampled up to ``extend`` x radius, so that every window
    B(y, t) with y in B(center, radius) and t <= radius sees only sample
    points, never the ends of the branches.
    """
    from .geometry import propeller_cone

    cone = propeller_cone(center, normal, first)
    n = unit(as_vec3(normal))
    L = extend * radius
    m = int(np.ceil(L / gap)) + 1
    t = np.linspace(0.0, L, m)
    g = bend_profile(t, radius, bend_C)
    pts = [cone.apex + t[:, None] * d + g[:, None] * n for d in cone.directions]
    pts = np.vstack(pts)
    pts = np.unique(np.round(pts, 14), axis=0)
    return SampledSet.from_points(pts, np.full(len(pts), gap), gap=gap, dim=1)


def ray_cone_points(cone: RayCone, radius: float, gap: float) -> SampledSet:
    pts = cone.sample_in_ball(cone.apex, radius, gap)
    pts = np.unique(np.round(pts, 14), axis=0)
    return SampledSet.from_points(pts, np.full(len(pts), gap), gap=gap, dim=1)
