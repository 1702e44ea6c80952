"""Output energy of linear systems and covariance-optimal outputs."""
import numpy as np

import kooprep as kr
from kooprep import linear_analysis as la

# scalar case: sum 0.25^t = 4/3 three ways
s = kr.LinearSystem([[0.5]], [[1.0]])
e = kr.energy_identity(s, [1.0])
print("direct:", e.lhs, "x'Wx:", e.via_W, "tr(C W_K C'):", e.via_W_K)

# a random stable system
rng = np.random.default_rng(4)
A = rng.standard_normal((4, 4))
A *= 0.8 / max(abs(np.linalg.eigvals(A)))
sys_ = kr.LinearSystem(A, rng.standard_normal((2, 4)))
x0 = rng.standard_normal(4)
e = kr.energy_identity(sys_, x0)
print("energy:", e.lhs, "discrepancy:", e.max_discrepancy)

# the output rows C_t = C A^t evolve linearly; their spectrum matches A
print("C_3 =\n", kr.koopman_recursion(sys_, 3)[-1].round(4))
print("dual spectrum mismatch:", kr.dual_spectrum_check(sys_).max_mismatch)

# best single output for isotropic initial conditions
c = kr.optimal_outputs(A, np.eye(4), q=1)
WK = kr.koopman_grammian(la.LinearSystem(A, np.eye(4)), R=np.eye(4))
rows = rng.standard_normal((10_000, 4))
rows /= np.linalg.norm(rows, axis=1, keepdims=True)
print("optimal energy:", (c @ WK @ c.T).item(),
      "best of 10^4 random rows:", np.einsum("ij,jk,ik->i", rows, WK, rows).max())

# strongly non-normal A: the Grammian ignores the dominant eigenvector
note = la.grammian_nonnormality_note(kr.LinearSystem([[0.5, 10.0], [0.0, 0.4]], np.eye(2)))
print("angle between top Grammian direction and dominant mode:", note.angle_W_A)
