import json

import numpy as np
import pytest

from soapfilm.geometry import GeometryError, unit
from soapfilm.measure import SampledSet
from soapfilm.skeleton import DyadicCube, point_inflation, projection_audit, skeleton_project

CUBE = DyadicCube(np.zeros(3), 0, 2)


def plane_patch(gap=0.01, tilt=(0.1, -0.05), height=0.37):
    """Weighted lattice sample of a tilted plane over [-0.25, 1.25]^2."""
    s = np.arange(-0.25, 1.25 + gap / 2, gap)
    X, Y = np.meshgrid(s, s)
    Z = height + tilt[0] * X + tilt[1] * Y
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    w = np.full(len(pts), gap * gap * np.sqrt(1 + tilt[0] ** 2 + tilt[1] ** 2))
    return SampledSet.from_points(pts, w, gap=gap)


@pytest.fixture(scope="module")
def projected():
    F = plane_patch()
    pmap, img = skeleton_project(F, CUBE, seed=7)
    return F, pmap, img


class TestCube:
    def test_geometry(self):
        assert CUBE.side == 1.0 and CUBE.h == 0.25 and CUBE.n == 4
        assert CUBE.skeleton_distance([[0.3, 0.5, 0.6]])[0] == pytest.approx(0.0)
        assert CUBE.skeleton_distance([[0.3, 0.6, 0.62]])[0] == pytest.approx(0.05)

    def test_rejects_bad_corner_and_level(self):
        with pytest.raises(GeometryError):
            DyadicCube(np.array([0.5, 0, 0]), 0, 1)
        with pytest.raises(GeometryError):
            DyadicCube(np.zeros(3), 0, 0)

    def test_flat_round_trip(self):
        for f in range(64):
            assert CUBE.flat(CUBE.unflat(f))[0] == f


class TestProjection:
    def test_identity_outside(self, projected):
        F, _, img = projected
        out = ~CUBE.inside(F.points, closed=False)
        assert out.any() and np.array_equal(F.points[out], img.points[out])

    def test_audit(self, projected):
        F, pmap, img = projected
        a = projection_audit(pmap, F, img)
        assert a.identity_outside and a.on_skeleton and a.in_subcube
        assert a.on_skeleton_max <= 1e-12 * CUBE.h
        assert a.n_failed == 0 and np.isfinite(a.max_inflation)
        assert json.loads(json.dumps(a.to_json()))["n_failed"] == 0

    def test_single_point(self):
        F = SampledSet.from_points(np.array([[0.3, 0.6, 0.1]]), gap=0.01)
        pmap, img = skeleton_project(F, CUBE, seed=0)
        y = img.points[0]
        assert CUBE.skeleton_distance(y[None])[0] <= 1e-12 * CUBE.h
        lo, hi = CUBE.bounds([1, 2, 0])
        assert np.all(y >= lo) and np.all(y <= hi)

    def test_point_on_skeleton_is_fixed(self):
        pts = np.array([[0.25, 0.6, 0.1], [0.3, 0.6, 0.1], [0.31, 0.61, 0.12]])
        F = SampledSet.from_points(pts, gap=0.01)
        pmap, img = skeleton_project(F, CUBE, seed=0)
        assert np.array_equal(img.points[0], pts[0])
        J = point_inflation(pmap, F, img, k=3)
        assert J[0] == 1.0

    def test_deterministic(self, projected):
        F, pmap, img = projected
        pmap2, img2 = skeleton_project(F, CUBE, seed=7)
        assert np.array_equal(img.points, img2.points)
        assert pmap.to_json() == pmap2.to_json()

    def test_seed_changes_centers(self, projected):
        F, pmap, _ = projected
        other, _ = skeleton_project(F, CUBE, seed=8)
        assert any(not np.array_equal(pmap.centers[f], other.centers[f]) for f in pmap.centers)

    def test_jacobian_matches_triangle_areas(self, projected):
        F, pmap, img = projected
        J = point_inflation(pmap, F, img)
        rng = np.random.default_rng(0)
        nrm = unit(np.array([-0.1, 0.05, 1.0]))
        e1 = unit(np.cross(nrm, [0, 1.0, 0]))
        e2 = np.cross(nrm, e1)
        checked = 0
        for i in rng.permutation(len(F.points)):
            x = F.points[i]
            if CUBE.skeleton_distance(x[None])[0] < 0.02 or not CUBE.inside(x[None], closed=False)[0]:
                continue
            eps = 1e-5
            tri = np.array([x, x + eps * e1, x + eps * e2])
            y = pmap.apply(tri)
            # the image triangle must lie on one face, away from its edges
            spread = np.ptp(y, axis=0)
            if np.sum(spread < 1e-14) != 1:
                continue
            area = lambda t: 0.5 * np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0]))
            assert J[i] == pytest.approx(area(y) / area(tri), rel=1e-3)
            checked += 1
            if checked == 20:
                break
        assert checked == 20

    def test_triangles_rejected(self):
        tri = np.array([[[0.1, 0.1, 0.1], [0.2, 0.1, 0.1], [0.1, 0.2, 0.1]]])
        with pytest.raises(GeometryError):
            skeleton_project(SampledSet.from_triangles(tri), CUBE)
