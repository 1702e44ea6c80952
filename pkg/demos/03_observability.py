"""Which Koopman coordinates can a single initial condition see?"""
import numpy as np

import kooprep as kr
from kooprep import identification as ident

# decoupled modes 0.9 and 0.8, sampled at e1: the e2 mode is invisible
K = kr.KoopmanMatrix(kr.Linear(2, constant=False), np.diag([0.9, 0.8]))
S1 = kr.sampling_operator(K.dictionary, [1.0, 0.0])
rep = kr.unobservable_subspace(K, S1)
print("unobservable dimension:", rep.unobservable_dimension)
print("unobservable direction:", rep.unobservable_basis.ravel())

dec = kr.kalman_decompose(K, S1)
print("K_o =", dec.K_o.ravel(), "K_no =", dec.K_no.ravel())
idr = kr.identifiability_report(K, S1)
print("identifiable:", idr.identifiable_eigenvalues.real,
      "hidden:", idr.non_identifiable_eigenvalues.real,
      f"recoverable: {idr.recoverable_percent:.0f}%")

# a second experiment can only shrink the unobservable subspace
S2 = kr.sampling_operator(K.dictionary, [0.0, 1.0])
both = kr.stack_experiments([(K, S1), (K, S2)])
print("after stacking:", both.unobservable_dimension)

# a hidden block in a random orthogonal basis is found again
rng = np.random.default_rng(3)
Q = np.linalg.qr(rng.standard_normal((4, 4)))[0]
B = rng.standard_normal((4, 4))
B[:2, 2:] = 0
M = Q @ B @ Q.T
S = rng.standard_normal((1, 2)) @ Q[:, :2].T
dec = kr.kalman_decompose(M, S)
print("recovered hidden dimension:", dec.report.unobservable_dimension)
print("max principal angle:", ident.principal_angles(dec.report.unobservable_basis, Q[:, 2:]).max())
