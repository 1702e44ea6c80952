"""Observability of Koopman representations from sampled initial conditions.

Sampling at ``x0`` is the row functional ``c -> psi(x0)^T c``; outputs of the
Koopman system are ``y_t = S M^t c``. The unobservable subspace is the null
space of the stacked matrix ``[S; S M; ...; S M^(D-1)]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import subspace_angles

from .errors import DimensionError, DomainError
from .koopman import KoopmanMatrix, as_matrix
from .observables import Dictionary

DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SamplingOperator:
    """Point evaluation at ``points`` expressed in dictionary coordinates (``N x D``)."""

    dictionary: Optional[Dictionary]
    points: np.ndarray
    matrix: np.ndarray

    @property
    def rows(self):
        return self.matrix.shape[0]


def sampling_operator(dictionary: Dictionary, points) -> SamplingOperator:
    P = np.asarray(points, dtype=float)
    if P.ndim == 0 or (P.ndim == 1 and dictionary.n == 1):
        P = P.reshape(-1, 1)
    elif P.ndim == 1:
        P = P[None, :]
    if len(P) == 0:
        raise DomainError("sampling operator needs at least one point")
    if P.shape[1] != dictionary.n:
        raise DimensionError(f"points have {P.shape[1]} coordinates, dictionary expects {dictionary.n}")
    return SamplingOperator(dictionary, P, dictionary.evaluate(P))


def _as_sampling_matrix(S):
    if isinstance(S, SamplingOperator):
        return S.matrix
    S = np.asarray(S, dtype=float)
    return S[None, :] if S.ndim == 1 else S


def _check_pair(K, S):
    M, Smat = as_matrix(K), _as_sampling_matrix(S)
    if Smat.shape[1] != M.shape[0]:
        raise DimensionError(f"sampling operator has {Smat.shape[1]} columns, matrix is {M.shape[0]}x{M.shape[0]}")
    if isinstance(K, KoopmanMatrix) and isinstance(S, SamplingOperator):
        if K.dictionary is not None and S.dictionary is not None and K.dictionary != S.dictionary:
            raise DimensionError("Koopman matrix and sampling operator use different dictionaries")
    return M, Smat


def observability_matrix(M, S, q=None):
    """Stack ``S M^k`` for ``k = 0 .. q-1`` (``q`` defaults to ``D``)."""
    M, S = np.asarray(M, dtype=float), _as_sampling_matrix(S)
    q = M.shape[0] if q is None else q
    blocks, B = [], S
    for _ in range(q):
        blocks.append(B)
        B = B @ M
    return np.vstack(blocks)


@dataclass(frozen=True, eq=False)
class ObservabilityReport:
    observability_matrix: np.ndarray
    singular_values: np.ndarray
    unobservable_dimension: int
    unobservable_basis: np.ndarray
    observable_basis: np.ndarray
    tol: float

    def to_dict(self):
        return {
            "singular_values": self.singular_values.tolist(),
            "unobservable_dimension": self.unobservable_dimension,
            "unobservable_basis": self.unobservable_basis.tolist(),
            "observable_basis": self.observable_basis.tolist(),
            "tol": self.tol,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _report(M, S, tol):
    O = observability_matrix(M, S)
    D = M.shape[0]
    _, s, Vt = np.linalg.svd(O, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.count_nonzero(s > tol * smax)) if smax > 0 else 0
    V = Vt.T
    return ObservabilityReport(O, s, D - rank, V[:, rank:], V[:, :rank], tol)


def unobservable_subspace(K, S, tol=DEFAULT_TOL) -> ObservabilityReport:
    """Observability analysis of the pair ``(S, M)``.

    The rank of the stacked matrix is counted with threshold ``tol * sigma_max``.
    Orthonormal bases of the null space and its orthogonal complement come
    from the right singular vectors.
    """
    M, Smat = _check_pair(K, S)
    return _report(M, Smat, tol)


@dataclass(frozen=True, eq=False)
class KalmanDecomposition:
    """Koopman matrix and sampling operator in observable/unobservable coordinates.

    With ``T = [V_o | V_no]`` the transformed matrix is ``T^T M T`` whose
    blocks are ``[[K_o, *], [K_no_o, K_no]]``; the upper right block must
    vanish and its norm is stored in ``upper_right_residual``.
    """

    transform: np.ndarray
    K_o: np.ndarray
    K_no: np.ndarray
    K_no_o: np.ndarray
    upper_right_residual: float
    C_o: np.ndarray
    C_no_residual: float
    observable_pair: bool
    report: ObservabilityReport

    @property
    def observable_dimension(self):
        return self.K_o.shape[0]


def kalman_decompose(K, S, tol=DEFAULT_TOL) -> KalmanDecomposition:
    M, Smat = _check_pair(K, S)
    rep = _report(M, Smat, tol)
    r = rep.observable_basis.shape[1]
    T = np.hstack([rep.observable_basis, rep.unobservable_basis])
    Mt = T.T @ M @ T
    K_o, upper = Mt[:r, :r], Mt[:r, r:]
    K_no_o, K_no = Mt[r:, :r], Mt[r:, r:]
    C_o = Smat @ rep.observable_basis
    C_no = Smat @ rep.unobservable_basis
    observable_pair = True
    if r:
        sub = _report(K_o, C_o, tol)
        observable_pair = sub.unobservable_dimension == 0
    return KalmanDecomposition(
        T, K_o, K_no, K_no_o,
        float(np.linalg.norm(upper, 2)) if upper.size else 0.0,
        C_o,
        float(np.linalg.norm(C_no, 2)) if C_no.size else 0.0,
        observable_pair, rep,
    )


def stack_sampling_operators(operators):
    """Concatenate sampling operators that live on the same dictionary."""
    operators = list(operators)
    if not operators:
        raise DomainError("nothing to stack")
    first = operators[0]
    for op in operators[1:]:
        if isinstance(op, SamplingOperator) and isinstance(first, SamplingOperator):
            if op.dictionary != first.dictionary:
                raise DimensionError("cannot stack sampling operators on different dictionaries")
    if all(isinstance(op, SamplingOperator) for op in operators):
        return SamplingOperator(
            first.dictionary,
            np.vstack([op.points for op in operators]),
            np.vstack([op.matrix for op in operators]),
        )
    return np.vstack([_as_sampling_matrix(op) for op in operators])


def stack_experiments(experiments, tol=DEFAULT_TOL) -> ObservabilityReport:
    """Observability of several experiments sharing one Koopman matrix.

    ``experiments`` is a list of ``(K, S)`` pairs. The stacked unobservable
    subspace is the intersection of the individual ones.
    """
    experiments = list(experiments)
    if not experiments:
        raise DomainError("no experiments to stack")
    M0 = as_matrix(experiments[0][0])
    for K, _ in experiments[1:]:
        if not np.array_equal(as_matrix(K), M0):
            raise DimensionError("stacked experiments must share the same Koopman matrix")
    S = stack_sampling_operators([S for _, S in experiments])
    return unobservable_subspace(experiments[0][0], S, tol)


def principal_angles(A, B):
    """Principal angles (radians, descending) between the column spans of ``A`` and ``B``."""
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    if A.shape[1] == 0 or B.shape[1] == 0:
        return np.zeros(0)
    return subspace_angles(A, B)


def _greedy_match(found, reference, tol):
    """Match each value in ``found`` to a distinct value of ``reference`` within ``tol``.

    ``found`` is processed in order of descending magnitude, then real part.
    Returns the matched reference indices and the unmatched ones.
    """
    order = sorted(range(len(found)), key=lambda i: (-abs(found[i]), -found[i].real, -found[i].imag))
    free = list(range(len(reference)))
    matched = []
    for i in order:
        if not free:
            break
        dist = [abs(found[i] - reference[j]) for j in free]
        k = int(np.argmin(dist))
        if dist[k] <= tol:
            matched.append(free.pop(k))
    return matched, free


@dataclass(frozen=True, eq=False)
class IdentifiabilityReport:
    observable_dimension: int
    unobservable_dimension: int
    identifiable_blocks: dict
    non_identifiable_blocks: dict
    identifiable_eigenvalues: np.ndarray
    non_identifiable_eigenvalues: np.ndarray
    recoverable_percent: float

    def to_dict(self):
        cplx = lambda v: [[float(z.real), float(z.imag)] for z in v]  # noqa: E731
        return {
            "observable_dimension": self.observable_dimension,
            "unobservable_dimension": self.unobservable_dimension,
            "identifiable_blocks": self.identifiable_blocks,
            "non_identifiable_blocks": self.non_identifiable_blocks,
            "identifiable_eigenvalues": cplx(self.identifiable_eigenvalues),
            "non_identifiable_eigenvalues": cplx(self.non_identifiable_eigenvalues),
            "recoverable_percent": self.recoverable_percent,
        }


def identifiability_report(K, S, tol=DEFAULT_TOL, match_tol=1e-6) -> IdentifiabilityReport:
    """Which parts of the Koopman matrix output data can pin down.

    Only ``(C_o, K_o)`` are identifiable. Eigenvalues of ``K_o`` are matched
    greedily against those of the full matrix; the matched share is the
    recoverable percentage of the spectrum.
    """
    dec = kalman_decompose(K, S, tol)
    M = as_matrix(K)
    full = np.linalg.eigvals(M).astype(complex)
    ident = np.linalg.eigvals(dec.K_o).astype(complex) if dec.K_o.size else np.zeros(0, complex)
    hidden = np.linalg.eigvals(dec.K_no).astype(complex) if dec.K_no.size else np.zeros(0, complex)
    matched, _ = _greedy_match(ident, full, match_tol)
    r, D = dec.K_o.shape[0], M.shape[0]
    percent = 100.0 * len(matched) / D if D else 100.0
    return IdentifiabilityReport(
        r, D - r,
        {"C_o": list(dec.C_o.shape), "K_o": [r, r]},
        {"K_no_o": [D - r, r], "K_no": [D - r, D - r]},
        ident, hidden, percent,
    )
