import numpy as np
import pytest

from soapfilm.cones import construct_reference_cone
from soapfilm.synth import cone_points


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sector_mc_area(cone, center, radius, n, rng):
    """Monte-Carlo H^2(cone ∩ B(center, radius)), sampling each face's disk section.

    Independent of the library's clipping: the section of the ball by a
    face plane is recomputed here and sector membership is an angle test.
    Samples are jittered-stratified in (rho^2, angle), one per cell, which
    keeps them uniform on the disk while the error decays like m^(-3/4).
    Returns (estimate, standard error), the latter the plain binomial bound
    and so conservative.
    """
    center = np.asarray(center, dtype=float)
    secs = []
    for s in cone.sectors:
        nrm = np.cross(s.e1, s.e2)
        q = center - s.apex
        h = q @ nrm
        if abs(h) >= radius:
            continue
        rho = np.sqrt(radius ** 2 - h ** 2)
        secs.append((s, np.array([q @ s.e1, q @ s.e2]), rho))
    if not secs:
        return 0.0, 0.0
    areas = np.array([np.pi * rho ** 2 for _, _, rho in secs])
    counts = np.maximum(1, np.round(n * areas / areas.sum()).astype(int))
    total, var = 0.0, 0.0
    for (s, c2, rho), m, a in zip(secs, counts, areas):
        k = max(1, int(np.sqrt(m)))
        i, j = np.divmod(np.arange(k * k), k)
        rr = rho * np.sqrt((i + rng.uniform(size=k * k)) / k)
        th = 2 * np.pi * (j + rng.uniform(size=k * k)) / k
        u = c2[0] + rr * np.cos(th)
        v = c2[1] + rr * np.sin(th)
        ang = np.mod(np.arctan2(v, u), 2 * np.pi)
        p = np.mean(ang <= s.alpha) if s.alpha < 2 * np.pi - 1e-12 else 1.0
        total += a * p
        var += a ** 2 * p * (1 - p) / (k * k)
    return total, float(np.sqrt(var))


@pytest.fixture(scope="session")
def exact_cone_samples():
    """Weighted lattice samples of P, Y, T cut to B(0, 0.5) at gap 1e-3 (built once)."""
    return {k: cone_points(construct_reference_cone(k), 0.5, 1e-3) for k in ("P", "Y", "T")}


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
