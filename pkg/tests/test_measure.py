import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soapfilm.cones import D_T_R3, construct_reference_cone
from soapfilm.geometry import GeometryError, LocalWindow
from soapfilm.measure import (DensityProfile, GaugeFunction, SampledSet, constant_density_detector,
                              density_profile, h2_in_ball, monotonicity_audit, read_obj, read_points_csv,
                              write_obj, write_points_csv)
from soapfilm.synth import annulus_hole_plane, cone_points, cone_triangles, grid_plane_triangles


def unit_square():
    a, b, c, d = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    return SampledSet.from_triangles(np.array([[a, b, c], [a, c, d]]))


class TestH2:
    def test_square_inside(self):
        assert h2_in_ball(unit_square(), LocalWindow(np.array([0.5, 0.5, 0]), 10.0)) == pytest.approx(1.0)

    def test_disk_inside_triangulation(self):
        E = grid_plane_triangles(1.0, 0.1)
        assert h2_in_ball(E, LocalWindow(np.zeros(3), 0.6)) == pytest.approx(np.pi * 0.36, rel=1e-12)

    def test_half_cut_triangle_monte_carlo(self):
        tri = np.array([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]])
        E = SampledSet.from_triangles(tri)
        ball = LocalWindow(np.array([0.0, 0.0, 0.2]), 0.75)
        exact = h2_in_ball(E, ball)
        rng = np.random.default_rng(0)
        n = 10 ** 7
        u, v = rng.uniform(size=(2, n))
        flip = u + v > 1
        u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
        inside = u * u + v * v + 0.04 <= 0.75 ** 2
        mc = 0.5 * inside.mean()
        assert exact == pytest.approx(mc, rel=1e-3)

    def test_points_mode_sums_weights(self):
        E = SampledSet.from_points(np.array([[0, 0, 0], [0.5, 0, 0], [2, 0, 0]]), [1.0, 2.0, 4.0], gap=0.1)
        assert h2_in_ball(E, LocalWindow(np.zeros(3), 1.0)) == 3.0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_additive_and_monotone(self, seed):
        rng = np.random.default_rng(seed)
        tri = rng.normal(size=(20, 3, 3))
        E = SampledSet.from_triangles(tri)
        c = rng.normal(size=3) * 0.5
        r1, r2 = np.sort(rng.uniform(0.1, 2.0, size=2))
        full = h2_in_ball(E, LocalWindow(c, r1))
        parts = (h2_in_ball(SampledSet.from_triangles(tri[:7]), LocalWindow(c, r1))
                 + h2_in_ball(SampledSet.from_triangles(tri[7:]), LocalWindow(c, r1)))
        assert full == pytest.approx(parts, rel=1e-12, abs=1e-14)
        assert h2_in_ball(E, LocalWindow(c, r2)) >= full - 1e-14


class TestDensityProfile:
    radii = np.array([0.1, 0.2, 0.4, 0.8])

    def test_plane_is_pi(self):
        E = cone_triangles(construct_reference_cone("P"), 1.0, 0.05)
        prof = density_profile(E, np.zeros(3), self.radii)
        assert np.allclose(prof.theta, np.pi, atol=1e-12)

    def test_t_apex(self):
        E = cone_triangles(construct_reference_cone("T"), 1.0, 0.05)
        prof = density_profile(E, np.zeros(3), self.radii)
        assert np.allclose(prof.theta, D_T_R3, atol=1e-12)

    def test_off_plane_closed_form(self):
        E = cone_triangles(construct_reference_cone("P"), 3.0, 0.1)
        r = np.array([0.6, 0.8, 1.2, 2.0])
        prof = density_profile(E, np.array([0, 0, 0.5]), r)
        assert np.allclose(prof.theta, np.pi * (r ** 2 - 0.25) / r ** 2, rtol=1e-12)

    def test_unreliable_radii_flagged(self):
        E = cone_points(construct_reference_cone("P"), 1.0, 0.05)
        prof = density_profile(E, np.zeros(3), [0.1, 0.2, 0.5])
        assert prof.reliable.tolist() == [False, True, True]

    def test_point_sample_within_two_percent(self):
        E = cone_points(construct_reference_cone("Y"), 1.0, 0.005)
        prof = density_profile(E, np.zeros(3), [0.05, 0.1, 0.3, 0.9])
        assert np.allclose(prof.theta, 1.5 * np.pi, rtol=0.02)

    def test_bad_radii(self):
        E = unit_square()
        with pytest.raises(GeometryError):
            density_profile(E, np.zeros(3), [0.2, 0.1])
        with pytest.raises(GeometryError):
            density_profile(E, np.zeros(3), [0.1, 0.2], lam=0.0)

    def test_gauge_integral(self):
        g = GaugeFunction.power(0.01, 1.0)
        # int_0^r 0.01 * 2t dt / t = 0.02 r
        assert np.allclose(g.A([0.5, 1.0]), [0.01, 0.02])
        tab = GaugeFunction("table", grid=np.linspace(0, 4, 401), values=0.01 * np.linspace(0, 4, 401))
        assert np.allclose(tab.A([0.5, 1.0]), [0.01, 0.02], rtol=1e-5)

    def test_gauge_must_be_nondecreasing(self):
        with pytest.raises(GeometryError):
            GaugeFunction("table", grid=[0, 1, 2], values=[0, 1, 0.5])


class TestAudits:
    @pytest.mark.parametrize("kind", "PYT")
    def test_exact_cone_passes(self, kind):
        E = cone_triangles(construct_reference_cone(kind), 1.0, 0.05)
        prof = density_profile(E, np.zeros(3), np.geomspace(0.05, 0.9, 12))
        assert monotonicity_audit(prof, 1e-3) == []

    def test_y_with_gauge_passes(self):
        E = cone_triangles(construct_reference_cone("Y"), 1.0, 0.05)
        prof = density_profile(E, np.zeros(3), np.geomspace(0.05, 0.9, 12), GaugeFunction.power(0.01, 1.0), 2.0)
        assert monotonicity_audit(prof, 1e-3) == []
        assert np.all(np.diff(prof.corrected) >= 0)

    def test_annular_hole_fails_in_hole_range(self):
        E = annulus_hole_plane(1.0, 2.0, 3.0, 0.05)
        radii = np.linspace(0.5, 2.8, 24)
        viol = monotonicity_audit(density_profile(E, np.zeros(3), radii), 1e-3)
        assert viol
        for v in viol:
            assert v["r0"] >= 1.0 - 0.11 and v["r1"] <= 2.0 + 0.11

    def test_detector_exact_cone_single_interval(self):
        E = cone_triangles(construct_reference_cone("T"), 1.0, 0.05)
        radii = np.geomspace(0.2, 0.9, 8)
        iv = constant_density_detector(density_profile(E, np.zeros(3), radii), 1e-6)
        assert len(iv) == 1 and iv[0]["a"] == radii[0] and iv[0]["b"] == radii[-1]

    def test_detector_off_plane(self):
        r = np.linspace(0.6, 6.0, 28)
        th = np.pi * (r ** 2 - 0.25) / r ** 2
        prof = DensityProfile(np.zeros(3), r, th, 1.0, np.zeros_like(r))
        iv = constant_density_detector(prof, 0.02)
        assert iv and iv[-1]["b"] == r[-1]
        assert all(i["a"] > 1.5 for i in iv)

    def test_detector_jump(self):
        r = np.linspace(0.25, 2.0, 8)
        th = np.where(r < 1.0, np.pi, 1.5 * np.pi)
        prof = DensityProfile(np.zeros(3), r, th, 1.0, np.zeros_like(r))
        iv = constant_density_detector(prof, 1e-6)
        assert len(iv) == 2
        assert iv[0]["b"] < 1.0 <= iv[1]["a"]


class TestIO:
    def test_obj_round_trip(self, tmp_path):
        E = cone_triangles(construct_reference_cone("Y"), 1.0, 0.2)
        write_obj(E, tmp_path / "y.obj")
        F = read_obj(tmp_path / "y.obj")
        ball = LocalWindow(np.zeros(3), 0.7)
        assert h2_in_ball(F, ball) == pytest.approx(h2_in_ball(E, ball), rel=1e-12)

    def test_csv_round_trip(self, tmp_path):
        E = cone_points(construct_reference_cone("P"), 0.5, 0.05)
        write_points_csv(E, tmp_path / "p.csv")
        F = read_points_csv(tmp_path / "p.csv", gap=0.05)
        assert np.array_equal(E.points, F.points) and np.array_equal(E.weights, F.weights)

    def test_malformed_inputs(self, tmp_path):
        (tmp_path / "bad.obj").write_text("v 0 0 0\nv 1 0 0\nf 1 2 9\n")
        with pytest.raises(GeometryError):
            read_obj(tmp_path / "bad.obj")
        (tmp_path / "bad.csv").write_text("x,y,z\n1,2\n")
        with pytest.raises(GeometryError):
            read_points_csv(tmp_path / "bad.csv", gap=0.1)
