"""Closed forms for discrete-time linear dynamics ``x_{t+1} = A x_t, y_t = C x_t``.

For linear output maps the Koopman state is the matrix ``C_t`` itself and the
evolution is right multiplication, ``C_{t+1} = C_t A``. The two Grammians
solve discrete Lyapunov equations::

    A^T W A - W + C^T C = 0          (observability Grammian)
    A W_K A^T - W_K + P = 0          (Koopman Grammian, P = x0 x0^T or R)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import subspace_angles

from .errors import DimensionError, DomainError

STABILITY_MARGIN = 1e-12
MAX_KRONECKER_N = 30
TAIL_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: np.ndarray
    C: np.ndarray
    stable: bool = field(init=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {C.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "stable", spectral_radius(A) < 1.0 - STABILITY_MARGIN)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.C.shape[0]


def spectral_radius(A):
    A = np.atleast_2d(A)
    return float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0


def _as_system(sys_or_A, C=None):
    if isinstance(sys_or_A, LinearSystem):
        return sys_or_A
    A = np.atleast_2d(np.asarray(sys_or_A, dtype=float))
    return LinearSystem(A, np.eye(A.shape[0]) if C is None else C)


def _require_stable(sys, what):
    if not sys.stable:
        raise DomainError(
            f"{what} needs a stable A (spectral radius {spectral_radius(sys.A):.6g} >= 1): "
            "the infinite Grammian series diverges"
        )


def koopman_recursion(sys: LinearSystem, steps: int):
    """``[C_0, C_1, ..., C_steps]`` with ``C_0 = C`` and ``C_{t+1} = C_t A``."""
    if steps < 0:
        raise DomainError("steps must be nonnegative")
    out = [sys.C.copy()]
    for _ in range(steps):
        out.append(out[-1] @ sys.A)
    return out


def right_multiplication_operator(A, m):
    """Matrix of ``C -> C A`` on ``m x n`` matrices, in row-major vec coordinates.

    Built column by column by applying the map to the standard basis.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    op = np.empty((m * n, m * n))
    for k in range(m * n):
        E = np.zeros(m * n)
        E[k] = 1.0
        op[:, k] = (E.reshape(m, n) @ A).ravel()
    return op


def _match_multiset(found, expected):
    """Greedy nearest matching of two equal-size complex multisets."""
    free = list(range(len(expected)))
    pairs = []
    for z in sorted(found, key=lambda v: (-abs(v), -v.real, -v.imag)):
        j = min(free, key=lambda k: abs(expected[k] - z))
        free.remove(j)
        pairs.append((complex(z), complex(expected[j])))
    return pairs


@dataclass(frozen=True, eq=False)
class DualSpectrumReport:
    operator_eigenvalues: np.ndarray
    expected_eigenvalues: np.ndarray
    pairs: list
    max_mismatch: float


def dual_spectrum_check(sys) -> DualSpectrumReport:
    """Compare the spectrum of ``C -> C A`` with that of ``A`` repeated ``m`` times."""
    sys = _as_system(sys)
    op = right_multiplication_operator(sys.A, sys.m)
    found = np.linalg.eigvals(op).astype(complex)
    expected = np.tile(np.linalg.eigvals(sys.A).astype(complex), sys.m)
    pairs = _match_multiset(found, expected)
    worst = max((abs(a - b) for a, b in pairs), default=0.0)
    return DualSpectrumReport(found, expected, pairs, float(worst))


def solve_discrete_lyapunov(F, Q):
    """Solve ``F X F^T - X + Q = 0`` by a dense Kronecker linear solve.

    Intended for small ``n`` (at most 30); the result is symmetrized.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = F.shape[0]
    if n > MAX_KRONECKER_N:
        raise DomainError(f"Kronecker Lyapunov solve limited to n <= {MAX_KRONECKER_N}, got {n}")
    # column-major vec: vec(F X F^T) = (F kron F) vec(X)
    lhs = np.eye(n * n) - np.kron(F, F)
    x = np.linalg.solve(lhs, Q.reshape(-1, order="F"))
    X = x.reshape(n, n, order="F")
    return 0.5 * (X + X.T)


def observability_grammian(sys) -> np.ndarray:
    """``W = sum_t (A^T)^t C^T C A^t``."""
    sys = _as_system(sys)
    _require_stable(sys, "observability Grammian")
    return solve_discrete_lyapunov(sys.A.T, sys.C.T @ sys.C)


def _source_matrix(n, x0=None, R=None):
    if (x0 is None) == (R is None):
        raise DomainError("give exactly one of x0 (point source) or R (covariance source)")
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.size != n:
            raise DimensionError(f"x0 has {x0.size} entries, expected {n}")
        return np.outer(x0, x0)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape != (n, n):
        raise DimensionError(f"R must be {n}x{n}")
    if np.max(np.abs(R - R.T)) > 1e-12 * max(1.0, np.max(np.abs(R))):
        raise DomainError("covariance R must be symmetric")
    if np.min(np.linalg.eigvalsh(R)) < -1e-10 * max(1.0, np.max(np.abs(R))):
        raise DomainError("covariance R must be positive semidefinite")
    return R


def koopman_grammian(sys, x0=None, R=None) -> np.ndarray:
    """``W_K = sum_t A^t P (A^T)^t`` with ``P = x0 x0^T`` or a covariance ``R``."""
    sys = _as_system(sys)
    P = _source_matrix(sys.n, x0, R)
    _require_stable(sys, "Koopman Grammian")
    return solve_discrete_lyapunov(sys.A, P)


@dataclass(frozen=True, eq=False)
class GrammianPair:
    W: np.ndarray
    W_K: np.ndarray
    source: str
    lyapunov_residuals: tuple


def grammians(sys, x0=None, R=None) -> GrammianPair:
    """Both Grammians with their Lyapunov residuals (relative to the Grammian norm)."""
    sys = _as_system(sys)
    W = observability_grammian(sys)
    P = _source_matrix(sys.n, x0, R)
    WK = solve_discrete_lyapunov(sys.A, P)
    A, C = sys.A, sys.C
    rW = np.linalg.norm(A.T @ W @ A - W + C.T @ C) / max(np.linalg.norm(W), np.finfo(float).tiny)
    rK = np.linalg.norm(A @ WK @ A.T - WK + P) / max(np.linalg.norm(WK), np.finfo(float).tiny)
    return GrammianPair(W, WK, "point" if x0 is not None else "covariance", (float(rW), float(rK)))


@dataclass(frozen=True, eq=False)
class EnergyReport:
    lhs: float
    via_W: float
    via_W_K: float
    max_discrepancy: float
    terms: int


def output_energy(sys, x0, horizon=None, max_terms=10**7):
    """Direct sum ``sum_t |C A^t x0|^2``.

    Truncated at ``horizon`` terms, or once the current state contributes
    less than ``1e-14`` of the running total (at most ``max_terms``).
    Returns ``(energy, terms)``.
    """
    sys = _as_system(sys)
    x = np.asarray(x0, dtype=float).reshape(-1)
    Cn = np.linalg.norm(sys.C, 2)
    total, t = 0.0, 0
    limit = max_terms if horizon is None else int(horizon)
    while t < limit:
        y = sys.C @ x
        total += float(y @ y)
        bound = (Cn * np.linalg.norm(x)) ** 2
        t += 1
        if horizon is None and bound <= TAIL_TOL * total * 1e-2 and t > sys.n:
            break
        if horizon is None and total == 0.0 and np.linalg.norm(x) == 0.0:
            break
        x = sys.A @ x
    return total, t


def energy_identity(sys, x0, horizon=None) -> EnergyReport:
    """Output energy three ways: direct sum, ``x0^T W x0``, ``trace(C W_K C^T)``.

    With ``horizon`` the Grammians are the finite sums over ``t < horizon``
    and stability is not required.
    """
    sys = _as_system(sys)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if horizon is None:
        _require_stable(sys, "infinite-horizon energy identity")
        W = observability_grammian(sys)
        WK = koopman_grammian(sys, x0=x0)
    else:
        W = np.zeros((sys.n, sys.n))
        WK = np.zeros((sys.n, sys.n))
        At = np.eye(sys.n)
        P = np.outer(x0, x0)
        for _ in range(int(horizon)):
            W += At.T @ sys.C.T @ sys.C @ At
            WK += At @ P @ At.T
            At = sys.A @ At
    lhs, terms = output_energy(sys, x0, horizon)
    vW = float(x0 @ W @ x0)
    vK = float(np.trace(sys.C @ WK @ sys.C.T))
    disc = max(abs(lhs - vW), abs(lhs - vK), abs(vW - vK))
    return EnergyReport(lhs, vW, vK, float(disc), terms)


def _canonical_eigenbasis(vals, vecs, rtol=1e-10):
    """Order eigenvectors by descending eigenvalue with a canonical basis per cluster.

    Inside a cluster of (numerically) equal eigenvalues the basis is rebuilt
    by Gram-Schmidt on the projections of ``e_1, e_2, ...``, which makes the
    choice independent of the eigensolver. Signs are fixed so that the first
    nonzero component is positive.
    """
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    scale = max(float(np.max(np.abs(vals))), np.finfo(float).tiny)
    out_vals, out_vecs = [], []
    i = 0
    while i < len(vals):
        j = i + 1
        while j < len(vals) and abs(vals[j] - vals[i]) <= rtol * scale:
            j += 1
        V = vecs[:, i:j]
        if j - i > 1:
            P = V @ V.T
            basis = []
            for e in np.eye(V.shape[0]):
                v = P @ e
                for b in basis:
                    v = v - (b @ v) * b
                if np.linalg.norm(v) > 1e-8:
                    basis.append(v / np.linalg.norm(v))
                if len(basis) == j - i:
                    break
            V = np.column_stack(basis)
        for k in range(V.shape[1]):
            v = V[:, k]
            first = np.flatnonzero(np.abs(v) > 1e-12)[0]
            out_vecs.append(v if v[first] > 0 else -v)
            out_vals.append(vals[i + k])
        i = j
    return np.array(out_vals), np.column_stack(out_vecs)


def optimal_outputs(sys_or_A, R=None, q=1) -> np.ndarray:
    """Rows of the ``q`` leading eigenvectors of ``W_K(R)``.

    These ``q`` outputs maximize the expected output energy
    ``trace(C W_K C^T)`` over orthonormal ``q``-row output maps.
    """
    if isinstance(sys_or_A, LinearSystem):
        A = sys_or_A.A
    else:
        A = np.atleast_2d(np.asarray(sys_or_A, dtype=float))
    n = A.shape[0]
    if R is None:
        R = np.eye(n)
    if not 1 <= q <= n:
        raise DomainError(f"q must lie in [1, {n}], got {q}")
    WK = koopman_grammian(LinearSystem(A, np.eye(n)), R=R)
    vals, vecs = np.linalg.eigh(WK)
    _, vecs = _canonical_eigenbasis(vals, vecs)
    return vecs[:, :q].T.copy()


def _dominant_subspace(A):
    vals, vecs = np.linalg.eig(A)
    k = int(np.argmax(np.abs(vals)))
    v = vecs[:, k]
    if abs(v.imag).max() > 1e-12 * abs(v).max():
        return np.column_stack([v.real, v.imag])
    return v.real[:, None]


@dataclass(frozen=True, eq=False)
class NonnormalityNote:
    angle_W_A: float
    angle_WK_A: float


def grammian_nonnormality_note(sys, x0=None, R=None) -> NonnormalityNote:
    """Angle between the top eigenvector of each Grammian and the dominant mode of ``A``.

    ``W_K`` uses ``R`` (identity by default) or a point ``x0``. Complex
    dominant modes contribute their real two-dimensional invariant subspace.
    """
    sys = _as_system(sys)
    _require_stable(sys, "Grammian diagnostics")
    if sys.n == 1:
        return NonnormalityNote(0.0, 0.0)
    if x0 is None and R is None:
        R = np.eye(sys.n)
    W = observability_grammian(sys)
    WK = koopman_grammian(sys, x0=x0, R=R)
    modeA = _dominant_subspace(sys.A)

    def top(S):
        vals, vecs = np.linalg.eigh(S)
        return vecs[:, [int(np.argmax(vals))]]

    aW = float(np.max(subspace_angles(top(W), modeA)))
    aK = float(np.max(subspace_angles(top(WK), modeA)))
    return NonnormalityNote(aW, aK)
