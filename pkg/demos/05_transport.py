"""Densities pushed forward by flows, and the duality with the Koopman pullback."""
import math

import numpy as np

import kooprep as kr
from kooprep import transport as tr

# stretching by 2 halves the height of a uniform density
ind = kr.DensityGrid.from_function([[-1, 3]], (400,), tr.indicator_density(0, 1))
out = kr.pushforward_map(ind, tr.affine_map([[2.0]]))
print("mass:", out.total_mass, "plateau:", out.values[150])

# contraction x' = -x for ln 2 doubles the peak
decay = kr.dynamics.linear([[-1.0]])
phi = kr.DensityGrid.from_function([[-5, 5]], (512,), tr.gaussian_density(0.0, 0.5))
moved = kr.transport_flow(phi, decay, math.log(2))
print("peak ratio:", moved.values.max() / phi.values.max(), "mass:", moved.total_mass)

# <phi, K_t psi> = <T_t phi, psi>, second order in the grid spacing
for n in (256, 1024):
    g = kr.DensityGrid.from_function([[-8, 8]], (n,), tr.gaussian_density(0.5, 0.5))
    rep = kr.adjoint_check(decay, g, tr.gaussian_density(-0.3, 0.7), 0.5)
    print(f"{n} cells: lhs={rep.lhs:.10f} rhs={rep.rhs:.10f} rel={rep.rel_error:.2e}")

# rotation preserves the L2 norm
rot = kr.catalog("rotation")
g2 = kr.DensityGrid.from_function([[-6, 6], [-6, 6]], (256, 256), tr.gaussian_density([1.0, 0.0], 0.5))
print("unitarity ratio:", kr.unitarity_check(rot, g2, 1.0, dt=0.01).ratio)

# upwind finite volumes against the characteristics solution
adv = kr.catalog("constant_advection", c=1.0)
for n in (200, 400, 800):
    g = kr.DensityGrid.from_function([[-6, 6]], (n,), tr.gaussian_density(-1.0, 0.5))
    dt = 0.5 * g.spacing[0]
    pde = kr.transport_pde_step(g, adv, dt, round(1.0 / dt))
    sl = kr.transport_flow(g, adv, 1.0)
    print(f"{n} cells: L1 gap {np.abs(pde.values - sl.values).sum() * g.cell_volume:.3e}")
