"""Fit the best minimal cone to rotated P, Y and T samples and label their apexes.

Run with ``python3 demos/fit_and_classify.py``.
"""

import numpy as np

from soapfilm.cones import construct_reference_cone
from soapfilm.fitting import beta_fit, classify_point, frame_error_deg
from soapfilm.geometry import LocalWindow, random_rotation
from soapfilm.synth import cone_points

rng = np.random.default_rng(0)
gap, r = 2e-3, 0.2

for kind in "PYT":
    cone = construct_reference_cone(kind, apex=rng.normal(size=3) * 0.1, frame=random_rotation(rng))
    E = cone_points(cone, r, gap, center=cone.apex)
    rep = beta_fit(E, LocalWindow(cone.apex, r))
    label = classify_point(E, cone.apex)
    print(f"{kind}: {len(E.points):6d} points  fitted {rep.kind}  beta {rep.beta:.2e}  "
          f"frame error {frame_error_deg(rep.best_cone, cone):.3f} deg  label {label.label} "
          f"(theta {label.theta_estimate:.3f})")
