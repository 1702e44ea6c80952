"""Flows, trajectories and the pullback of an observable."""
import numpy as np

import kooprep as kr
from kooprep import koopman as kp

# van der Pol oscillator from the catalog
vdp = kr.catalog("van_der_pol", mu=1.0)
traj = kr.simulate(vdp, [2.0, 0.0], horizon=10.0, dt=0.1)
print("samples:", len(traj), "final state:", traj.states[-1])

# flow forward then back
x1 = kr.flow(vdp, [2.0, 0.0], 1.5)
x0 = kr.flow_inverse(vdp, x1, 1.5)
print("round trip error:", np.abs(x0 - [2.0, 0.0]).max())

# the pullback K_t G = G o F_t is linear in G even though F_t is not
G = lambda x: x[..., 0] ** 2          # noqa: E731
H = lambda x: np.sin(x[..., 1])       # noqa: E731
pts = np.random.default_rng(0).uniform(-2, 2, (5, 2))
a = kp.pullback(vdp, lambda x: 3 * G(x) - H(x), pts, 0.7)
b = 3 * kp.pullback(vdp, G, pts, 0.7) - kp.pullback(vdp, H, pts, 0.7)
print("linearity residual:", np.abs(a - b).max())

# discrete maps iterate; the logistic map is chaotic at r=3.9
logi = kr.catalog("logistic", r=3.9)
print("logistic orbit:", kr.simulate(logi, 0.2, 8).states.ravel().round(4))
