import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sector_mc_area
from soapfilm.cones import (D_T_R3, cone_density, cone_measure_in_ball, construct_reference_cone,
                            load_graph, save_graph, validate_cone_structure)
from soapfilm.geometry import GeometryError, GreatCircleArc, LocalWindow, SphericalGraph, random_rotation, unit


def y_graph_with_angle(deg):
    """Three half circles between the poles; the second leaves at ``deg`` from the first."""
    n, s = np.array([0.0, 0, 1]), np.array([0.0, 0, -1])
    phis = np.radians([0.0, deg, deg + (360 - deg) / 2])
    return SphericalGraph(tuple(GreatCircleArc(n, s, normal_hint=[-np.sin(p), np.cos(p), 0]) for p in phis))


class TestReferenceCones:
    def test_plane_graph(self):
        g = construct_reference_cone("P").graph
        assert len(g.arcs) == 1 and g.arcs[0].full_circle
        assert g.total_length == pytest.approx(2 * np.pi)

    def test_y_incidence(self):
        g = construct_reference_cone("Y").graph
        assert sorted(g.incidence().tolist()) == [3, 3]

    def test_t_structure(self):
        g = construct_reference_cone("T").graph
        assert len(g.arcs) == 6
        assert np.allclose([a.angle for a in g.arcs], np.arccos(-1 / 3), atol=1e-12)
        assert g.incidence().tolist() == [3, 3, 3, 3]

    def test_rejects_improper_frame(self):
        with pytest.raises(GeometryError):
            construct_reference_cone("Y", frame=np.diag([1.0, 1.0, -1.0]))


class TestDensity:
    def test_values(self):
        assert cone_density(construct_reference_cone("P")) == pytest.approx(np.pi, abs=1e-12)
        assert cone_density(construct_reference_cone("Y")) == pytest.approx(1.5 * np.pi, abs=1e-12)
        assert cone_density(construct_reference_cone("T")) == pytest.approx(5.731900, abs=1e-6)
        assert D_T_R3 / np.pi == pytest.approx(1.82, abs=5e-3)

    def test_gap_ordering(self):
        d = [cone_density(construct_reference_cone(k)) for k in "PYT"]
        assert d[2] > d[1] > d[0]

    @settings(max_examples=20, deadline=None)
    @given(st.sampled_from("PYT"), st.integers(0, 2 ** 32 - 1))
    def test_rigid_invariance(self, kind, seed):
        rng = np.random.default_rng(seed)
        c = construct_reference_cone(kind, apex=rng.normal(size=3), frame=random_rotation(rng))
        assert cone_density(c) == pytest.approx(cone_density(construct_reference_cone(kind)), abs=1e-12)


class TestMeasureInBall:
    def test_plane_centered(self):
        P = construct_reference_cone("P")
        assert cone_measure_in_ball(P, LocalWindow(np.zeros(3), 0.7)) == pytest.approx(np.pi * 0.49, rel=1e-12)

    def test_plane_off_center(self):
        P = construct_reference_cone("P")
        h, r = 0.3, 0.8
        assert cone_measure_in_ball(P, LocalWindow(np.array([0.1, -0.2, h]), r)) == pytest.approx(
            np.pi * (r * r - h * h), rel=1e-12)

    @pytest.mark.parametrize("kind", "PYT")
    def test_reproduces_density(self, kind):
        c = construct_reference_cone(kind)
        assert cone_measure_in_ball(c, LocalWindow(np.zeros(3), 1.0)) == pytest.approx(cone_density(c), abs=1e-12)

    def test_t_off_center_monte_carlo(self):
        rng = np.random.default_rng(7)
        T = construct_reference_cone("T")
        p = 0.7 * unit(rng.normal(size=3))
        exact = cone_measure_in_ball(T, LocalWindow(p, 0.4))
        mc, se = sector_mc_area(T, p, 0.4, 10 ** 7, rng)
        assert abs(exact - mc) <= max(1e-3 * exact, 4 * se)
        assert abs(exact - mc) / exact <= 1e-3

    @settings(max_examples=25, deadline=None)
    @given(st.sampled_from("PYT"), st.integers(0, 2 ** 32 - 1))
    def test_monotone_in_radius(self, kind, seed):
        rng = np.random.default_rng(seed)
        c = construct_reference_cone(kind, frame=random_rotation(rng))
        x = rng.normal(size=3) * 0.5
        r = np.sort(rng.uniform(0.05, 1.5, size=4))
        vals = [cone_measure_in_ball(c, LocalWindow(x, ri)) for ri in r]
        assert np.all(np.diff(vals) >= -1e-12)

    def test_additive_over_faces(self):
        rng = np.random.default_rng(3)
        T = construct_reference_cone("T", frame=random_rotation(rng))
        ball = LocalWindow(np.array([0.2, 0.1, -0.3]), 0.6)
        from soapfilm.cones import sector_disk_area
        parts = 0.0
        for s in T.sectors:
            sec = s.disk_section(ball.center, ball.radius)
            if sec is not None:
                parts += sector_disk_area(s.alpha, sec[0], sec[1])
        assert cone_measure_in_ball(T, ball) == pytest.approx(parts, rel=1e-12)


class TestValidator:
    def test_t_valid(self):
        assert validate_cone_structure(construct_reference_cone("T").graph).is_valid

    def test_y_and_plane_valid(self):
        assert validate_cone_structure(construct_reference_cone("Y").graph).is_valid
        assert validate_cone_structure(construct_reference_cone("P").graph).is_valid

    def test_bad_y_angle(self):
        rep = validate_cone_structure(y_graph_with_angle(100.0), eta0=0.1, l0=0.1)
        assert not rep.is_valid
        angles = [v for v in rep.violations if v["rule"] == "angle"]
        assert angles and any(abs(v["value"] - 100.0) < 1e-6 for v in angles)

    def test_short_arc(self):
        g = construct_reference_cone("T").graph
        rep = validate_cone_structure(g, l0=2.0)
        assert not rep.is_valid
        assert {v["rule"] for v in rep.violations} == {"length"}

    def test_crossing_circles(self):
        g = SphericalGraph((GreatCircleArc([0, 0, 1], full_circle=True),
                            GreatCircleArc([1, 0, 0], full_circle=True)))
        rep = validate_cone_structure(g, eta0=0.1, l0=0.1)
        assert not rep.is_valid
        assert any(v["rule"] == "separation" and v["value"] < 1e-6 for v in rep.violations)

    def test_json_round_trip(self, tmp_path):
        g = construct_reference_cone("T").graph
        save_graph(g, tmp_path / "t.json")
        g2 = load_graph(tmp_path / "t.json")
        assert validate_cone_structure(g2).is_valid
        data = json.loads((tmp_path / "t.json").read_text())
        assert len(data["arcs"]) == 6

    def test_malformed_graph_is_an_error(self, tmp_path):
        (tmp_path / "bad.json").write_text('{"arcs": [{"a": [2, 0, 0], "b": [0, 1, 0]}]}')
        with pytest.raises(GeometryError):
            load_graph(tmp_path / "bad.json")
