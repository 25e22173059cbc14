"""Compare cone and harmonic energies of random boundary curves against 2 lambda / (1 + lambda^2).

Run with ``python3 demos/harmonic_ratio.py``.
"""

import numpy as np

from soapfilm.harmonic import BoundaryCurve, area_comparison, energies, ratio_bound, sine_coefficients

rng = np.random.default_rng(1)
print(f"{'T/pi':>6} {'E_G/E_F':>9} {'bound':>9} {'eta':>7}")
for T in np.linspace(0.3, 0.9, 7) * np.pi:
    beta = rng.normal(size=(10, 2)) / np.arange(1, 11)[:, None] ** 2
    c = BoundaryCurve.from_modes(T, beta)
    c = BoundaryCurve.from_modes(T, beta * 0.01 / c.lip_bound, lip_bound=0.01 * (1 + 1e-9))
    e = sine_coefficients(c)
    ec, eh = energies(e.beta, T)
    ac = area_comparison(c, e)
    print(f"{T / np.pi:6.2f} {eh / ec:9.4f} {ratio_bound(T):9.4f} {ac.eta:7.4f}")
