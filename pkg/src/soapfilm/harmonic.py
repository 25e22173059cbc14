"""
Sine expansion of a boundary curve on an arc of angle T < pi, Dirichlet
energies of its homogeneous and harmonic extensions to the sector
D_T = {rho e^{it}: 0 <= rho < 1, 0 < t < T}, graph-area comparison and the
great-circle verdict for a sampled spherical arc.

With beta_k the sine coefficients of f and nu = pi / T,

    F(rho e^{it}) = rho f(t)
    G(rho e^{it}) = sum_k beta_k rho^{nu k} sin(nu k t)

    int |grad F|^2 = sum_k (k^2 pi^2 + T^2) / (4T) |beta_k|^2
    int |grad G|^2 = (pi / 2) sum_k k |beta_k|^2

and termwise comparison gives int |grad G|^2 <= 2 lam / (1 + lam^2) int |grad F|^2
with lam = T / pi.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.fft import ifft
from scipy.interpolate import CubicSpline

from .geometry import GeometryError, unit

NODES_PER_PERIOD = 64
DEFAULT_K = 256


class InconsistencyError(ArithmeticError):
    """Energies contradict the bounds they must satisfy (bad coefficients or quadrature)."""


class PreconditionError(ValueError):
    pass


def _gauss_panels(a: float, b: float, n_panels: int, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(a, b, n_panels + 1)
    h = np.diff(edges) / 2.0
    mid = (edges[1:] + edges[:-1]) / 2.0
    return (mid[:, None] + h[:, None] * x).ravel(), (h[:, None] * w).ravel()


def _gauss_on_breaks(breaks, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    breaks = np.asarray(breaks, dtype=float)
    h = np.diff(breaks) / 2.0
    mid = (breaks[1:] + breaks[:-1]) / 2.0
    return (mid[:, None] + h[:, None] * x).ravel(), (h[:, None] * w).ravel()


@dataclass
class BoundaryCurve:
    """Lipschitz map f: [0, T] -> R^m with f(0) = f(T) = 0.

    ``f`` takes an array of angles (shape (N,)) and returns shape (N, m).
    ``df`` is the derivative; when omitted it is taken by central differences.
    ``lip_bound`` defaults to the sampled maximal slope.
    """

    T: float
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray] | None = None
    lip_bound: float | None = None
    m: int = field(init=False)

    def __post_init__(self):
        self.T = float(self.T)
        if not 0.0 < self.T < np.pi:
            raise PreconditionError(f"arc angle T={self.T} must lie in (0, pi)")
        ends = self.values(np.array([0.0, self.T]))
        self.m = ends.shape[1]
        scale = max(1.0, float(np.abs(self.values(np.linspace(0, self.T, 65))).max()))
        if np.abs(ends).max() > 1e-12 * scale:
            raise PreconditionError(f"endpoint values {ends.tolist()} are not zero")
        t = np.linspace(0.0, self.T, 4097)
        slope = float(np.linalg.norm(self.derivative(t), axis=1).max())
        if self.lip_bound is None:
            self.lip_bound = slope
        elif slope > self.lip_bound * (1 + 1e-6) + 1e-12:
            raise PreconditionError(f"sampled slope {slope:.6g} exceeds lip_bound {self.lip_bound:.6g}")

    def values(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.asarray(self.f(t), dtype=float).reshape(len(t), -1)

    def derivative(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.df is not None:
            return np.asarray(self.df(t), dtype=float).reshape(len(t), -1)
        h = 1e-6 * self.T
        return (self.values(t + h) - self.values(t - h)) / (2 * h)

    @classmethod
    def from_modes(cls, T: float, beta, lip_bound: float | None = None) -> "BoundaryCurve":
        """Finite sine series ``sum_k beta[k-1] sin(pi k t / T)``; ``beta`` has shape (K,) or (K, m)."""
        b = np.asarray(beta, dtype=float)
        b = b[:, None] if b.ndim == 1 else b
        k = np.arange(1, len(b) + 1)
        nu = np.pi / T

        def f(t):
            return np.sin(nu * np.outer(t, k)) @ b

        def df(t):
            return (nu * k * np.cos(nu * np.outer(t, k))) @ b

        return cls(T, f, df, lip_bound)

    @classmethod
    def from_samples(cls, t, values, lip_bound: float | None = None) -> "BoundaryCurve":
        """Cubic spline through tabulated values; ``t`` must increase from 0 to T."""
        t = np.asarray(t, dtype=float)
        v = np.asarray(values, dtype=float)
        v = v[:, None] if v.ndim == 1 else v
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise PreconditionError("sample angles must start at 0 and increase strictly")
        spline = CubicSpline(t, v, axis=0)
        d = spline.derivative()
        T = float(t[-1])
        return cls(T, lambda s: spline(np.clip(s, 0.0, T)), lambda s: d(np.clip(s, 0.0, T)), lip_bound)


@dataclass
class SineExpansion:
    T: float
    beta: np.ndarray            # (K, m)
    f_prime_l2_sq: float
    parseval_residual: float    # ||f'||^2 - (pi^2 / 2T) sum k^2 |beta_k|^2
    tail_bound: float           # bound on (pi^2 / 2T) sum_{k>K} k^2 |beta_k|^2

    @property
    def K(self) -> int:
        return len(self.beta)


def sine_coefficients(curve: BoundaryCurve, K: int = DEFAULT_K,
                      nodes_per_period: int = NODES_PER_PERIOD) -> SineExpansion:
    """beta_k = (2/T) int_0^T f(t) sin(pi k t / T) dt by composite Gauss-Legendre.

    One panel per half period of the highest mode, ``nodes_per_period / 2``
    nodes each. The Parseval residual measures the energy not captured by
    the K retained modes; together with a geometric extrapolation of the last
    coefficients it bounds the truncation tail.
    """
    if K < 1:
        raise PreconditionError("K must be >= 1")
    T = curve.T
    n = max(nodes_per_period // 2, 8)
    t, w = _gauss_panels(0.0, T, max(K, 1), n)
    fv = curve.values(t)
    dv = curve.derivative(t)
    if not (np.all(np.isfinite(fv)) and np.all(np.isfinite(dv))):
        raise ArithmeticError("non-finite curve values in quadrature")
    k = np.arange(1, K + 1)
    S = np.sin(np.pi / T * np.outer(k, t))
    beta = (2.0 / T) * (S * w) @ fv
    fp2 = float(w @ np.sum(dv ** 2, axis=1))
    series = (np.pi ** 2 / (2 * T)) * float(np.sum(k ** 2 * np.sum(beta ** 2, axis=1)))
    resid = fp2 - series
    tail = max(resid, 0.0)
    scale = max(fp2, 1e-300)
    if resid < -1e-8 * scale - 1e-14:
        raise ArithmeticError(
            f"quadrature failure: Parseval residual {resid:.3e} is negative (||f'||^2 = {fp2:.6e})")
    return SineExpansion(T, beta, fp2, resid, tail)


def energies(beta, T: float, f_prime_l2_sq: float | None = None, tail: float = 0.0,
             rtol: float = 1e-9) -> tuple[float, float]:
    """(energy of the homogeneous extension, energy of the harmonic extension).

    When ``f_prime_l2_sq`` is given the bounds
    ``||f'||^2 / 2 <= E_cone <= ||f'||^2`` and ``E_harm <= ||f'||^2`` are checked,
    with slack ``tail + rtol * ||f'||^2``.
    """
    b = np.asarray(beta, dtype=float)
    b = b[:, None] if b.ndim == 1 else b
    k = np.arange(1, len(b) + 1)
    b2 = np.sum(b ** 2, axis=1)
    e_cone = float(np.sum((k ** 2 * np.pi ** 2 + T ** 2) / (4 * T) * b2))
    e_harm = float(np.pi / 2 * np.sum(k * b2))
    if f_prime_l2_sq is not None:
        slack = tail + rtol * f_prime_l2_sq + 1e-300
        if e_cone < 0.5 * f_prime_l2_sq - slack or e_cone > f_prime_l2_sq + slack:
            raise InconsistencyError(
                f"cone energy {e_cone:.6e} outside [{0.5 * f_prime_l2_sq:.6e}, {f_prime_l2_sq:.6e}]")
        if e_harm > f_prime_l2_sq + slack:
            raise InconsistencyError(f"harmonic energy {e_harm:.6e} exceeds ||f'||^2 = {f_prime_l2_sq:.6e}")
    return e_cone, e_harm


def ratio_bound(T: float) -> float:
    lam = T / np.pi
    return 2 * lam / (1 + lam ** 2)


def _check_tau(curve: BoundaryCurve) -> None:
    tau = curve.lip_bound
    if 1.0 - (1.0 + curve.T) ** 2 * tau ** 2 / 2.0 <= 0.0:
        raise PreconditionError(
            f"Lipschitz bound tau={tau:.4g} too large: need 1 - (1+T)^2 tau^2 / 2 > 0 "
            f"(T={curve.T:.4g})")


def excess_cone(curve: BoundaryCurve, n_panels: int = 256, n: int = 16) -> float:
    """int_{D_T} (sqrt(1 + |grad F|^2) - 1); |grad F|^2 = |f|^2 + |f'|^2 does not depend on rho."""
    t, w = _gauss_panels(0.0, curve.T, n_panels, n)
    a = np.sum(curve.values(t) ** 2, axis=1) + np.sum(curve.derivative(t) ** 2, axis=1)
    return 0.5 * float(w @ (a / (np.sqrt(1.0 + a) + 1.0)))


def _s_breaks(K: int) -> np.ndarray:
    # geometric grading towards 0 (fractional powers of s) and towards 1
    # (mode k lives within ~1/k of the boundary)
    lo = 2.0 ** -np.arange(40, 0, -1)
    hi = 1.0 - 2.0 ** -np.arange(2, int(np.ceil(np.log2(max(K, 2)))) + 8)
    return np.unique(np.concatenate([[0.0], lo, [0.5], hi, [1.0]]))


def excess_harmonic(beta, T: float, n: int = 24, M: int | None = None) -> float:
    """int_{D_T} (sqrt(1 + |grad G|^2) - 1) with G given by its sine series.

    In w = s e^{i phi} = (rho e^{it})^nu each component of G is Im sum beta_k w^k,
    so |grad G|^2 = nu^2 s^{-2/nu} |Q|^2 with Q(w) = sum_k k beta_k w^k and
    dA = nu^{-2} s^{2/nu - 1} ds dphi over phi in (0, pi). The integrand is
    even in phi, so the phi integral is half the periodic one (trapezoid via FFT).
    """
    b = np.asarray(beta, dtype=float)
    b = b[:, None] if b.ndim == 1 else b
    nz = np.nonzero(np.any(b != 0.0, axis=1))[0]
    if len(nz) == 0:
        return 0.0
    K = int(nz[-1]) + 1
    b = b[:K]
    nu = np.pi / T
    if M is None:
        M = max(256, 1 << int(np.ceil(np.log2(8 * K))))
    s, ws = _gauss_on_breaks(_s_breaks(K), n)
    k = np.arange(1, K + 1)
    total = 0.0
    chunk = max(1, (1 << 21) // M)
    for i in range(0, len(s), chunk):
        sc = s[i:i + chunk]
        powk = np.exp(np.outer(np.log(sc), k))          # s^k
        q2 = np.zeros((len(sc), M))
        for c in range(b.shape[1]):
            coef = np.zeros((len(sc), M), dtype=complex)
            coef[:, 1:K + 1] = powk * (k * b[:, c])
            q2 += np.abs(ifft(coef, axis=1) * M) ** 2
        a = nu ** 2 * sc[:, None] ** (-2.0 / nu) * q2
        g = a / (np.sqrt(1.0 + a) + 1.0)
        inner = np.pi * g.mean(axis=1)                  # half of 2 pi * mean
        total += float(np.sum(ws[i:i + chunk] * inner * sc ** (2.0 / nu - 1.0)))
    return total / nu ** 2


@dataclass
class AreaComparison:
    area_excess_cone: float
    area_excess_harmonic: float
    eta: float
    quadrature_error: float
    truncation_error: float


def area_comparison(curve: BoundaryCurve, expansion: SineExpansion | None = None,
                    K: int = DEFAULT_K) -> AreaComparison:
    """Graph-area excesses of the two extensions and the verified factor eta.

    eta bounds excess_G / excess_F after adding the quadrature and truncation
    error estimates to the harmonic side and subtracting them from the cone side.
    """
    _check_tau(curve)
    if expansion is None:
        expansion = sine_coefficients(curve, K)
    T = curve.T
    ef = excess_cone(curve)
    ef_coarse = excess_cone(curve, n_panels=128, n=12)
    eg = excess_harmonic(expansion.beta, T)
    eg_coarse = excess_harmonic(expansion.beta, T, n=16)
    qerr = abs(ef - ef_coarse) + abs(eg - eg_coarse)
    # a missing tail with energy e changes the harmonic excess by at most e / 2
    terr = 0.5 * expansion.tail_bound
    if ef <= 0.0:
        eta = 0.0 if eg <= 0.0 else np.inf
    else:
        eta = (eg + qerr + terr) / max(ef - qerr, 1e-300)
    return AreaComparison(ef, eg, float(eta), float(qerr), float(terr))


@dataclass
class HarmonicTestReport:
    T: float
    beta: np.ndarray
    energy_cone: float
    energy_harmonic: float
    f_prime_l2_sq: float
    parseval_residual: float
    tail_bound: float
    area_excess_cone: float | None
    area_excess_harmonic: float | None
    eta: float | None
    verdict: str
    tol: float
    curve: BoundaryCurve | None = None
    extras: dict = field(default_factory=dict)

    @property
    def lam(self) -> float:
        return self.T / np.pi

    @property
    def ratio_bound(self) -> float:
        return ratio_bound(self.T)

    def to_json(self) -> dict:
        out = {
            "T": self.T, "lambda": self.lam, "ratio_bound": self.ratio_bound,
            "betas": self.beta.tolist(),
            "energies": {"cone": self.energy_cone, "harmonic": self.energy_harmonic,
                         "f_prime_l2_sq": self.f_prime_l2_sq,
                         "parseval_residual": self.parseval_residual, "tail_bound": self.tail_bound},
            "excesses": {"cone": self.area_excess_cone, "harmonic": self.area_excess_harmonic},
            "eta": self.eta, "verdict": self.verdict, "tol": self.tol,
        }
        out.update(self.extras)
        return out

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    def write_csv(self, path, n: int = 513) -> None:
        """Columns t, f_c and the K-mode reconstruction of every component."""
        t = np.linspace(0.0, self.T, n)
        k = np.arange(1, len(self.beta) + 1)
        rec = np.sin(np.pi / self.T * np.outer(t, k)) @ self.beta
        f = self.curve.values(t) if self.curve is not None else np.full_like(rec, np.nan)
        m = rec.shape[1]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t"] + [f"f{c}" for c in range(m)] + [f"recon{c}" for c in range(m)])
            for i in range(n):
                wr.writerow([repr(float(t[i]))] + [repr(float(x)) for x in f[i]]
                            + [repr(float(x)) for x in rec[i]])


def harmonic_test(curve: BoundaryCurve, K: int = DEFAULT_K, tol: float = 1e-9,
                  with_area: bool = True) -> HarmonicTestReport:
    """Run expansion, energies and (optionally) the area comparison.

    The verdict is "improvable" when the harmonic graph is smaller than the
    cone graph by more than ``tol`` (plus error estimates); otherwise
    "stationary-consistent".
    """
    exp = sine_coefficients(curve, K)
    ec, eh = energies(exp.beta, curve.T, exp.f_prime_l2_sq, exp.tail_bound)
    if with_area:
        ac = area_comparison(curve, exp)
        gain = ac.area_excess_cone - ac.area_excess_harmonic - ac.quadrature_error - ac.truncation_error
        improvable = gain > tol
        a_f, a_g, eta = ac.area_excess_cone, ac.area_excess_harmonic, ac.eta
    else:
        improvable = ec - eh > tol + exp.tail_bound
        a_f = a_g = eta = None
    return HarmonicTestReport(curve.T, exp.beta, ec, eh, exp.f_prime_l2_sq, exp.parseval_residual,
                              exp.tail_bound, a_f, a_g, eta,
                              "improvable" if improvable else "stationary-consistent", tol, curve)


@dataclass
class ArcFrame:
    """Reference great circle through the endpoints of a spherical arc sample."""

    a: np.ndarray       # first endpoint direction, t = 0
    e2: np.ndarray      # in-plane unit vector at t = pi/2
    n: np.ndarray       # plane normal
    T: float


def arc_graph(points) -> tuple[ArcFrame, np.ndarray, np.ndarray]:
    """Angles t and graph heights f of an ordered arc sample over its reference great circle.

    Points are radially projected to the unit sphere. The endpoints are the
    angularly farthest pair; for p = cos(t) a + sin(t) e2 + h n (up to scale),
    f = (p . n) / |p_h| with p_h the in-plane part, so the cone over the
    sample is the graph of rho f(t) over the planar sector.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3 or len(p) < 4:
        raise GeometryError("arc sample must be an (N, 3) array with N >= 4")
    p = p / np.linalg.norm(p, axis=1, keepdims=True)
    G = np.clip(p @ p.T, -1.0, 1.0)
    i, j = np.unravel_index(np.argmin(G), G.shape)
    i, j = min(i, j), max(i, j)
    a, b = p[i], p[j]
    n = np.cross(a, b)
    if np.linalg.norm(n) < 1e-9:
        raise GeometryError("arc endpoints are (anti)parallel; no reference great circle")
    n = unit(n)
    e2 = np.cross(n, a)
    x, y, z = p @ a, p @ e2, p @ n
    t = np.arctan2(y, x)
    ph = np.hypot(x, y)
    if np.any(ph < 1e-9):
        raise GeometryError("sample passes through the pole of the reference circle")
    f = z / ph
    T = float(t[j])
    if not 0.0 < T < np.pi:
        raise GeometryError(f"arc angle {T} not in (0, pi)")
    dt = np.diff(t)
    if not (np.all(dt > 0) or np.all(dt < 0)):
        raise GeometryError("sample does not project injectively (monotonically) onto the reference arc")
    if dt[0] < 0:
        t, f = t[::-1], f[::-1]
    if abs(t[0]) > 1e-9 or abs(t[-1] - T) > 1e-9:
        raise GeometryError("the farthest pair is not the first and last sample")
    t = t - t[0]
    t[-1] = T
    f = f.copy()
    f[0] = f[-1] = 0.0
    return ArcFrame(a, e2, n, T), t, f


def great_circle_verdict(arc_sample, tol: float = 1e-9, K: int = DEFAULT_K) -> HarmonicTestReport:
    """Harmonic-improvement verdict for the cone over a sampled spherical arc."""
    frame, t, f = arc_graph(arc_sample)
    curve = BoundaryCurve.from_samples(t, f)
    rep = harmonic_test(curve, K=K, tol=tol)
    rep.extras = {"reference_circle": {"a": frame.a.tolist(), "e2": frame.e2.tolist(),
                                       "normal": frame.n.tolist()},
                  "max_abs_f": float(np.abs(f).max())}
    return rep


def arc_sample(T: float, lift: Callable[[np.ndarray], np.ndarray] | None = None, n: int = 401,
               R: np.ndarray | None = None) -> np.ndarray:
    """Points cos(t) e1 + sin(t) e2 + lift(t / T) e3, normalised, t in [0, T]; rotated by R."""
    t = np.linspace(0.0, T, n)
    h = np.zeros_like(t) if lift is None else lift(t / T)
    p = np.column_stack([np.cos(t), np.sin(t), h])
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    return p if R is None else p @ np.asarray(R).T


def small_circle_sample(latitude: float, span: float, n: int = 401) -> np.ndarray:
    """Arc of the circle of constant latitude, longitudes in [0, span]."""
    lon = np.linspace(0.0, span, n)
    c, s = np.cos(latitude), np.sin(latitude)
    return np.column_stack([c * np.cos(lon), c * np.sin(lon), np.full_like(lon, s)])
