"""Koopman matrices on a dictionary: exact projection, EDMD and generators."""
import numpy as np

import kooprep as kr

# x -> 0.5 x keeps the monomials 1, x, x^2 closed
half = kr.dynamics.linear([[0.5]], discrete=True)
d = kr.Monomials(1, 2)
K = kr.koopman_exact(half, d)
print("exact matrix:\n", K.matrix.round(12), "\nresidual:", K.residual)

# x -> x^2 is not closed: x^2 pulls back to x^4
square = kr.DynamicalSystem(kr.dynamics.Kind.DISCRETE, 1, lambda x: x**2, name="square")
print("unclosed residual:", kr.koopman_exact(square, d).residual)

# EDMD from trajectories of a 2-D linear map recovers eig(A) and 1
A = np.array([[0.9, 0.1], [0.0, 0.8]])
lin = kr.dynamics.linear(A, discrete=True)
rng = np.random.default_rng(1)
trajs = [kr.simulate(lin, rng.uniform(-1, 1, 2), 20) for _ in range(4)]
K = kr.edmd(trajs, kr.Linear(2))
spec = kr.spectrum(K)
print("EDMD eigenvalues:", spec.eigenvalues.real.round(10))
print(spec.to_csv())

# generator of x' = -x on monomials is diag(0, -1, -2)
gen = kr.generator_matrix(kr.dynamics.linear([[-1.0]]), d)
print("generator:\n", gen.matrix.round(10))

# constant advection on a Fourier dictionary gives a skew generator
adv = kr.generator_matrix(kr.catalog("constant_advection", c=1.0), kr.Fourier(1, 2))
print("skewness:", np.abs(adv.matrix + adv.matrix.T).max())
print("nonnormality:", kr.nonnormality(adv))

# the Koopman system reproduces the original outputs
G = kr.identity_observable(kr.Linear(2))
rep = kr.represent(lin, kr.Linear(2), G, [0.3, -0.7], 20)
print("representation discrepancy:", rep.discrepancy)
