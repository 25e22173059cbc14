import numpy as np
import pytest

from soapfilm.geometry import GeometryError, LocalWindow, unit
from soapfilm.reifenberg import (EpsilonTable, annulus_index, annulus_width, center_tangents, detect_center,
                                 line_distance, measure_epsilons, polylines_simple, tangent_certificate,
                                 trace_structure)
from soapfilm.synth import line_points, propeller_points

GAP = 2e-3
NORMAL = unit(np.array([0.2, -0.3, 1.0]))
FIRST = unit(np.cross(NORMAL, [1.0, 0.0, 0.0]))
CENTER = np.array([0.1, 0.2, -0.1])


def propeller(C):
    E = propeller_points(CENTER, NORMAL, FIRST, 1.0, GAP, C)
    return E, LocalWindow(CENTER + 0.05 * FIRST, 1.0)


def true_directions():
    g = np.cross(NORMAL, FIRST)
    return np.array([np.cos(a) * FIRST + np.sin(a) * g for a in (0, 2 * np.pi / 3, 4 * np.pi / 3)])


class TestAnnuli:
    def test_index_and_width(self):
        u = 1.0
        assert annulus_index(0.9, u) == 0
        assert annulus_index(2.0 ** -5, u) == 2
        assert annulus_index(0.0, u) > 100
        assert annulus_width(0, u) == pytest.approx(5 / 3 - 2 ** -6)
        assert annulus_width(2, u) == pytest.approx(2 ** -5 - 2 ** -8)

    def test_line_distance_is_sign_free(self):
        a = unit(np.array([1.0, 2.0, 3.0]))
        assert line_distance(a, -a) == 0.0

    def test_simplicity(self):
        a = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float)
        b = np.array([[0, 0, 0], [0, 1, 0]], float)
        assert polylines_simple([a, b], shared_start=True)
        c = np.array([[1, -1, 0], [1, 1, 0]], float)
        assert not polylines_simple([a, c], shared_start=False)


class TestExact:
    def test_propeller(self):
        E, w = propeller(0.0)
        eps = measure_epsilons(E, w, 4, n_probes=3)
        assert np.all(eps.eps <= 4 * GAP / eps.scales)
        z = detect_center(E, w)
        assert np.linalg.norm(z - CENTER) <= 2 * GAP
        res = trace_structure(E, w, z, eps)
        assert res.structure == "propeller" and not res.partial and len(res.branches) == 3
        cert = tangent_certificate(res)
        assert np.allclose(cert["pairwise_angles_deg"], 120.0, atol=0.1)
        assert cert["coplanarity_residual"] <= 1e-6
        # each center tangent matches one of the true half-lines
        tau = center_tangents(res)
        assert np.max(np.min(np.degrees(np.arccos(np.clip(tau @ true_directions().T, -1, 1))), axis=1)) < 0.1

    def test_line_regime(self):
        d = unit(np.array([1.0, 1.0, 0.3]))
        E = line_points(np.zeros(3), d, 3.0, GAP)
        w = LocalWindow(np.zeros(3), 1.0)
        assert detect_center(E, w) is None
        res = trace_structure(E, w)
        assert res.structure == "line" and len(res.branches) == 1
        pl = res.branches[0]
        # the trace stays on the line and spans the window
        off = pl - np.outer(pl @ d, d)
        assert np.abs(off).max() <= GAP
        assert np.ptp(pl @ d) >= 1.9

    def test_threshold_refuses_to_trace(self):
        E, w = propeller(0.0)
        eps = EpsilonTable(np.array([1.0]), np.array([0.3]), False, np.zeros((1, 3)))
        with pytest.raises(GeometryError):
            trace_structure(E, w, CENTER, eps)

    def test_bad_depth(self):
        E, w = propeller(0.0)
        with pytest.raises(GeometryError):
            measure_epsilons(E, w, 0)


BEND = 0.05


@pytest.fixture(scope="module")
def traced():
    E, w = propeller(BEND)
    eps = measure_epsilons(E, w, 4, n_probes=3)
    z = detect_center(E, w)
    return eps, z, trace_structure(E, w, z, eps)


class TestBent:
    def test_epsilons_follow_injected_decay(self, traced):
        eps, _, _ = traced
        injected = BEND * 2.0 ** (-np.arange(len(eps.eps)) / 2)
        assert np.all(eps.eps <= 2 * injected)
        assert np.all(eps.eps >= injected / 2)

    def test_center_and_angles(self, traced):
        _, z, res = traced
        assert np.linalg.norm(z - CENTER) <= 0.1 * res.window.radius
        cert = tangent_certificate(res)
        assert np.allclose(cert["pairwise_angles_deg"], 120.0, atol=5.0)
        assert cert["coplanarity_residual"] <= 0.05
        assert np.isfinite(cert["fitted_C"])

    def test_branches_stay_on_the_set(self, traced):
        _, _, res = traced
        E, _ = propeller(BEND)
        for pl in res.branches:
            assert E.kdtree.query(pl)[0].max() <= GAP

    def test_json(self, traced, tmp_path):
        _, _, res = traced
        res.write_json(tmp_path / "t.json")
        res.write_tangent_csv(tmp_path / "t.csv")
        assert (tmp_path / "t.csv").read_text().startswith("branch,index")
