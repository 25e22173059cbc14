import json

import numpy as np
import pytest
from scipy.integrate import quad

from soapfilm.geometry import GeometryError, random_rotation
from soapfilm.harmonic import (BoundaryCurve, InconsistencyError, PreconditionError, area_comparison, arc_graph,
                               arc_sample, energies, excess_cone, excess_harmonic, great_circle_verdict,
                               harmonic_test, ratio_bound, sine_coefficients, small_circle_sample)


def random_curve(rng, tau=0.05, n_modes=12):
    T = rng.uniform(np.pi / 4, 0.95 * np.pi)
    m = int(rng.integers(1, 4))
    beta = rng.normal(size=(n_modes, m)) / np.arange(1, n_modes + 1)[:, None] ** 2
    curve = BoundaryCurve.from_modes(T, beta)
    return BoundaryCurve.from_modes(T, beta * tau / curve.lip_bound, lip_bound=tau * (1 + 1e-9))


class TestCurve:
    def test_rejects_open_endpoints(self):
        with pytest.raises(PreconditionError):
            BoundaryCurve(1.0, lambda t: t)

    def test_rejects_angle_pi(self):
        with pytest.raises(PreconditionError):
            BoundaryCurve(np.pi, lambda t: np.sin(t))

    def test_slope_above_bound(self):
        with pytest.raises(PreconditionError):
            BoundaryCurve(1.0, lambda t: 0.5 * np.sin(np.pi * t), lip_bound=0.1)


class TestCoefficients:
    def test_single_mode(self):
        T = 2.0
        e = sine_coefficients(BoundaryCurve(T, lambda t: np.sin(np.pi * t / T)), K=16)
        assert e.beta[0, 0] == pytest.approx(1.0, abs=1e-10)
        assert np.abs(e.beta[1:]).max() <= 1e-10

    def test_zero(self):
        e = sine_coefficients(BoundaryCurve(1.0, lambda t: 0 * t), K=8)
        assert np.all(e.beta == 0)

    def test_parabola_closed_form(self):
        # T = pi is outside the admissible range of curves, so the closed form is
        # checked at T = 3 with beta_k = 8 T^2 / (pi k)^3 for odd k
        T = 3.0
        e = sine_coefficients(BoundaryCurve(T, lambda t: t * (T - t)), K=64)
        k = np.arange(1, 65)
        exact = np.where(k % 2 == 1, 8 * T ** 2 / (np.pi * k) ** 3, 0.0)
        assert np.allclose(e.beta[:, 0], exact, atol=1e-8)
        # independent oracle for a few modes
        for kk in (1, 2, 5):
            ref = 2 / T * quad(lambda t: t * (T - t) * np.sin(np.pi * kk * t / T), 0, T)[0]
            assert e.beta[kk - 1, 0] == pytest.approx(ref, abs=1e-12)

    def test_parseval_kink(self):
        # |t - T/2| profile: Lipschitz but not smooth, slow coefficient decay
        T = 2.0
        curve = BoundaryCurve(T, lambda t: 0.05 * (T / 2 - np.abs(t - T / 2)),
                              lambda t: 0.05 * -np.sign(t - T / 2))
        e = sine_coefficients(curve, K=256)
        # beta_k = 8 h sin(k pi / 2) / (pi k)^2 with h = 0.05 T / 2, so the missing
        # energy is (32 h^2 / (T pi^2)) sum over odd k > 256 of 1 / k^2
        h = 0.05 * T / 2
        k = np.arange(257, 2_000_001, 2)
        tail = 32 * h ** 2 / (T * np.pi ** 2) * (np.sum(1.0 / k ** 2) + 1 / (2 * 2_000_001))
        assert e.parseval_residual == pytest.approx(tail, rel=1e-6)
        assert e.tail_bound >= e.parseval_residual

    def test_bad_K(self):
        with pytest.raises(PreconditionError):
            sine_coefficients(BoundaryCurve(1.0, lambda t: 0 * t), K=0)


class TestEnergies:
    def test_equality_at_pi(self):
        ec, eh = energies([0.7], np.pi)
        assert ec == pytest.approx(np.pi / 2 * 0.49, abs=1e-14)
        assert eh == pytest.approx(ec, abs=1e-14)

    def test_quarter_circle(self):
        ec, eh = energies([1.0], np.pi / 2)
        assert ec == pytest.approx(5 * np.pi / 8, abs=1e-14)
        assert eh == pytest.approx(np.pi / 2, abs=1e-14)
        assert eh / ec == pytest.approx(ratio_bound(np.pi / 2), abs=1e-14)

    def test_zero(self):
        assert energies(np.zeros(5), 1.0) == (0.0, 0.0)

    def test_sandwich_violation_raises(self):
        with pytest.raises(InconsistencyError):
            energies([1.0], 1.0, f_prime_l2_sq=0.01)

    def test_random_curves(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            c = random_curve(rng)
            e = sine_coefficients(c, K=64)
            ec, eh = energies(e.beta, c.T, e.f_prime_l2_sq, e.tail_bound)
            assert ratio_bound(c.T) < 1
            assert eh <= ratio_bound(c.T) * ec + 1e-9 + e.tail_bound
            assert abs(e.parseval_residual) <= 1e-6 * e.f_prime_l2_sq

    def test_sign_and_permutation_invariance(self):
        rng = np.random.default_rng(3)
        b = rng.normal(size=(6, 3))
        base = energies(b, 1.3)
        assert energies(-b, 1.3) == base
        assert np.allclose(energies(b[:, ::-1], 1.3), base, rtol=1e-15)
        assert excess_harmonic(-b * 0.01, 1.3) == pytest.approx(excess_harmonic(b[:, [2, 0, 1]] * 0.01, 1.3),
                                                               rel=1e-12)


class TestArea:
    def test_zero_curve(self):
        c = BoundaryCurve(1.0, lambda t: 0 * t)
        ac = area_comparison(c, K=8)
        assert ac.area_excess_cone == 0.0 and ac.area_excess_harmonic == 0.0

    def test_excess_is_half_energy_for_small_curves(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            c = random_curve(rng, tau=0.01)
            e = sine_coefficients(c, K=64)
            ec, eh = energies(e.beta, c.T)
            ac = area_comparison(c, e)
            assert abs(ac.area_excess_cone - ec / 2) <= 0.01 * ec
            assert abs(ac.area_excess_harmonic - eh / 2) <= 0.01 * eh
            assert ac.eta < 1

    def test_cone_excess_oracle(self):
        T = 1.2
        c = BoundaryCurve(T, lambda t: 0.03 * np.sin(np.pi * t / T) * (1 + t))
        # |grad F|^2 does not depend on rho, so the excess is (1/2) int_0^T (sqrt(1 + a(t)) - 1) dt
        a = lambda t: (np.sum(c.values(t) ** 2) + np.sum(c.derivative(t) ** 2))
        ref = 0.5 * quad(lambda t: np.sqrt(1 + a(t)) - 1, 0, T, epsabs=1e-15, epsrel=1e-13)[0]
        assert excess_cone(c) == pytest.approx(ref, rel=1e-10)

    def test_sin2t_ratio(self):
        c = BoundaryCurve(np.pi / 2, lambda t: 0.01 * np.sin(2 * t))
        ac = area_comparison(c, K=16)
        assert ac.area_excess_harmonic / ac.area_excess_cone <= 0.8 + 0.01

    def test_precondition(self):
        c = BoundaryCurve(2.0, lambda t: 0.8 * np.sin(np.pi * t / 2.0))
        with pytest.raises(PreconditionError):
            area_comparison(c, K=8)


class TestVerdict:
    def test_exact_great_circle(self):
        rep = great_circle_verdict(arc_sample(np.pi / 2, R=random_rotation(np.random.default_rng(4))))
        assert rep.verdict == "stationary-consistent"
        assert rep.extras["max_abs_f"] <= 1e-12

    def test_lifted_arc(self):
        rep = great_circle_verdict(arc_sample(np.pi / 2, lift=lambda s: 0.05 * np.sin(2 * np.pi * s)))
        assert rep.verdict == "improvable" and rep.eta <= 0.81

    def test_small_circle(self):
        rep = great_circle_verdict(small_circle_sample(np.radians(10), np.radians(100)))
        assert rep.verdict == "improvable"

    def test_non_graph_sample(self):
        t = np.linspace(0, 1.0, 50)
        p = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t)])
        p = np.vstack([p, p[::-1][1:] + [0, 0, 0.01]])   # runs back over itself
        with pytest.raises(GeometryError):
            arc_graph(p)

    def test_report_json(self, tmp_path):
        rep = harmonic_test(BoundaryCurve(1.0, lambda t: 0.02 * np.sin(np.pi * t)), K=16)
        rep.write_json(tmp_path / "h.json")
        rep.write_csv(tmp_path / "h.csv")
        d = json.loads((tmp_path / "h.json").read_text())
        assert d["verdict"] == "improvable"
        assert d["lambda"] == pytest.approx(1 / np.pi)
