"""Finite-dimensional Koopman matrices on a dictionary.

Convention: a matrix ``M`` acts on coefficient vectors. For ``G = psi^T c``
the pulled-back observable is ``(K G)(x) = psi(x)^T (M c)``. Equivalently
``M`` is the least-squares solution of ``Psi_X M = Psi_{F(X)}`` where the
rows of ``Psi_X`` are ``psi(x_i)^T``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import qmc

from . import dynamics as dyn
from .errors import ConditioningError, DimensionError, DomainError, UnsupportedError
from .observables import Dictionary, Linear, ObservableVector, apply_observable, parse_dictionary

DEFAULT_RANK_TOL = 1e-10


class Provenance(str, enum.Enum):
    EXACT = "ExactPullback"
    EDMD = "EDMD"
    GENERATOR = "GeneratorProjection"
    TRANSPORT_GENERATOR = "TransportGeneratorProjection"
    CLOSED_FORM = "ClosedFormLinear"
    EXTERNAL = "External"


@dataclass(frozen=True, eq=False)
class KoopmanMatrix:
    """A ``D x D`` matrix acting on dictionary coefficients, with provenance.

    ``residual`` is the relative Frobenius residual of the projection or
    regression that produced the matrix (0 for closed-form constructions).
    ``info`` carries construction details such as the snapshot count.
    """

    dictionary: Optional[Dictionary]
    matrix: np.ndarray
    provenance: Provenance = Provenance.EXTERNAL
    residual: float = 0.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError(f"Koopman matrix must be square, got {M.shape}")
        if self.dictionary is not None and M.shape[0] != self.dictionary.size:
            raise DimensionError(
                f"matrix is {M.shape[0]}x{M.shape[0]} but dictionary has {self.dictionary.size} functions"
            )
        if self.residual < 0:
            raise DomainError("residual must be nonnegative")
        object.__setattr__(self, "matrix", M)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def size(self):
        return self.matrix.shape[0]

    def to_dict(self):
        return {
            "dict_spec": None if self.dictionary is None else self.dictionary.spec,
            "shape": list(self.matrix.shape),
            "matrix": self.matrix.tolist(),
            "provenance": self.provenance.value,
            "residual": self.residual,
            "info": self.info,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text + "\n")

    @classmethod
    def from_json(cls, source):
        if isinstance(source, dict):
            doc = source
        else:
            with open(source) as fh:
                doc = json.load(fh)
        d = parse_dictionary(doc["dict_spec"]) if doc.get("dict_spec") else None
        M = np.asarray(doc["matrix"], dtype=float)
        if "shape" in doc:
            M = M.reshape(doc["shape"])
        return cls(d, M, doc.get("provenance", "External"), float(doc.get("residual", 0.0)),
                   doc.get("info", {}))


def as_matrix(K):
    return K.matrix if isinstance(K, KoopmanMatrix) else np.asarray(K, dtype=float)


# -- sample sets -----------------------------------------------------------------


def default_box(n, radius=1.0):
    return np.array([[-radius, radius]] * n, dtype=float)


def sample_points(box, count, method="halton", seed=None):
    """Deterministic Halton points (or seeded uniform points) in an axis-aligned box."""
    box = np.asarray(box, dtype=float)
    n = box.shape[0]
    if method == "halton":
        unit = qmc.Halton(d=n, scramble=False).random(count)
    elif method == "random":
        unit = np.random.default_rng(seed).random((count, n))
    else:
        raise DomainError(f"unknown sampling method {method!r}; use 'halton' or 'random'")
    return box[:, 0] + unit * (box[:, 1] - box[:, 0])


def _samples(dictionary, samples, box, count):
    if samples is not None:
        X = np.asarray(samples, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return X
    if box is None:
        box = default_box(dictionary.n)
    return sample_points(box, count or 10 * dictionary.size)


def _solve(Psi, target, rank_tol, strict):
    """Least squares ``Psi M = target`` through a truncated SVD.

    Returns ``(M, rank)``. In strict mode a rank below ``Psi.shape[1]`` raises.
    """
    U, s, Vt = np.linalg.svd(Psi, full_matrices=False)
    smax = s[0] if s.size else 0.0
    keep = s > rank_tol * smax if smax > 0 else np.zeros_like(s, dtype=bool)
    rank = int(np.count_nonzero(keep))
    if strict and rank < Psi.shape[1]:
        raise ConditioningError(
            f"dictionary evaluation matrix has numerical rank {rank} < {Psi.shape[1]} "
            f"(tolerance {rank_tol:g} * sigma_max); add or spread out sample points",
            rank=rank,
            size=Psi.shape[1],
        )
    M = Vt[keep].T @ ((U[:, keep].T @ target) / s[keep][:, None])
    return M, rank


def _relative_residual(Psi, M, target):
    denom = np.linalg.norm(target)
    if denom == 0:
        return float(np.linalg.norm(Psi @ M))
    return float(np.linalg.norm(Psi @ M - target) / denom)


# -- constructions ---------------------------------------------------------------


def pullback(system, G, x, t, dt=dyn.DEFAULT_DT):
    """``(K_t G)(x) = G(F_t(x))`` for any callable observable ``G``."""
    return G(dyn.flow(system, x, t, dt))


def koopman_exact(system, dictionary, t=1, dt=dyn.DEFAULT_DT, samples=None, box=None,
                  count=None, rank_tol=DEFAULT_RANK_TOL) -> KoopmanMatrix:
    """Project the pullback ``psi o F_t`` onto the dictionary by least squares.

    Sample points default to ``10 D`` Halton points in ``box`` (``[-1, 1]^n``
    when not given). ``residual`` is ``|Psi_X M - Psi_F|_F / |Psi_F|_F`` and
    vanishes to round-off when the dictionary is closed under the pullback.
    """
    X = _samples(dictionary, samples, box, count)
    Psi = dictionary.evaluate(X)
    target = dictionary.evaluate(dyn.flow(system, X, t, dt))
    M, _ = _solve(Psi, target, rank_tol, strict=True)
    res = _relative_residual(Psi, M, target)
    return KoopmanMatrix(dictionary, M, Provenance.EXACT, res,
                         {"t": t, "samples": len(X), "system": system.name})


def snapshot_pairs(data):
    """Normalize snapshot input to a pair of arrays ``(X, X')``.

    ``data`` may be a tuple ``(X, X')``, a :class:`~kooprep.dynamics.Trajectory`,
    or a list of trajectories and/or ``(x, x')`` pairs.
    """
    if isinstance(data, dyn.Trajectory):
        return data.snapshot_pairs()
    if isinstance(data, tuple) and len(data) == 2 and not isinstance(data[0], dyn.Trajectory):
        X, Y = (np.asarray(a, dtype=float) for a in data)
        if X.ndim == 1:
            X, Y = X[:, None], Y[:, None]
        return X, Y
    xs, ys = [], []
    for item in data:
        if isinstance(item, dyn.Trajectory):
            a, b = item.snapshot_pairs()
        else:
            a, b = (np.atleast_2d(np.asarray(v, dtype=float)) for v in item)
        xs.append(a)
        ys.append(b)
    if not xs:
        return np.empty((0, 0)), np.empty((0, 0))
    return np.vstack(xs), np.vstack(ys)


def edmd(snapshots, dictionary, rank_tol=DEFAULT_RANK_TOL) -> KoopmanMatrix:
    """Extended DMD: ``M = pinv(Psi_X) Psi_X'`` with a truncated pseudoinverse.

    Singular values below ``rank_tol * sigma_max`` are discarded, so rank
    deficient data give the minimum-norm solution rather than an error.
    """
    X, Y = snapshot_pairs(snapshots)
    if X.size == 0:
        raise DomainError("empty snapshot set")
    if X.shape != Y.shape:
        raise DimensionError(f"snapshot arrays differ in shape: {X.shape} vs {Y.shape}")
    if len(X) > 1 and np.all(X == X[0]):
        raise ConditioningError(
            f"all {len(X)} snapshots share the same state; the data span a single point",
            rank=1, size=dictionary.size,
        )
    Psi, PsiY = dictionary.evaluate(X), dictionary.evaluate(Y)
    M, rank = _solve(Psi, PsiY, rank_tol, strict=False)
    res = _relative_residual(Psi, M, PsiY)
    return KoopmanMatrix(dictionary, M, Provenance.EDMD, res,
                         {"snapshots": len(X), "rank": rank, "rank_tol": rank_tol})


def _check_continuous(system):
    if not system.is_continuous:
        raise UnsupportedError(f"{system.name}: generators are defined for continuous-time systems")


def generator_matrix(system, dictionary, samples=None, box=None, count=None,
                     rank_tol=DEFAULT_RANK_TOL) -> KoopmanMatrix:
    """Project ``K psi_j = grad psi_j . f`` onto the dictionary."""
    _check_continuous(system)
    X = _samples(dictionary, samples, box, count)
    Psi = dictionary.evaluate(X)
    target = np.einsum("ijk,ik->ij", dictionary.gradient(X), system.f(X))
    M, _ = _solve(Psi, target, rank_tol, strict=True)
    res = _relative_residual(Psi, M, target)
    return KoopmanMatrix(dictionary, M, Provenance.GENERATOR, res,
                         {"samples": len(X), "system": system.name})


def closed_form_linear(A, dictionary, t=1, discrete=True) -> KoopmanMatrix:
    """Exact Koopman matrix of a linear system on a :class:`Linear` dictionary.

    For ``G(x) = c0 + c . x`` the pullback by ``x -> B x`` is
    ``c0 + (B^T c) . x``, with ``B = A^t`` (discrete) or ``expm(t A)``.
    """
    if not isinstance(dictionary, Linear):
        raise UnsupportedError("closed-form Koopman matrices are implemented for Linear dictionaries")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if discrete:
        B = np.linalg.matrix_power(A, int(t))
    else:
        from scipy.linalg import expm

        B = expm(t * A)
    M = np.zeros((dictionary.size, dictionary.size))
    off = int(dictionary.constant)
    if off:
        M[0, 0] = 1.0
    M[off:, off:] = B.T
    return KoopmanMatrix(dictionary, M, Provenance.CLOSED_FORM, 0.0, {"t": t})


# -- spectra ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Sorted eigenpairs of a Koopman matrix.

    Eigenvalues are sorted by descending magnitude, then descending real
    part, then descending imaginary part. Eigenvectors have unit 2-norm and
    their first nonzero component is real and positive. ``defective`` flags
    eigenpairs whose residual is large or whose eigenvector nearly coincides
    with another one (a numerically defective eigenvalue).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    defective: np.ndarray

    @property
    def is_defective(self):
        return bool(np.any(self.defective))

    def to_csv(self, path=None):
        lines = ["re,im,defective_flag"]
        for lam, flag in zip(self.eigenvalues, self.defective):
            lines.append(f"{format(lam.real, '.17g')},{format(lam.imag, '.17g')},{int(flag)}")
        text = "\n".join(lines) + "\n"
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text)


def _sort_key(scale):
    def key(lam):
        r = lambda v: round(v / scale, 10) + 0.0  # noqa: E731  (+0.0 folds -0.0)
        return (-r(abs(lam)), -r(lam.real), -r(lam.imag))

    return key


def spectrum(K, tol=1e-8) -> Spectrum:
    M = as_matrix(K)
    lam, V = np.linalg.eig(M)
    lam = lam.astype(complex)
    V = V.astype(complex)
    scale = max(float(np.max(np.abs(lam))) if lam.size else 0.0, 1.0)
    order = sorted(range(len(lam)), key=lambda i: _sort_key(scale)(lam[i]))
    lam, V = lam[order], V[:, order]
    for j in range(V.shape[1]):
        v = V[:, j] / np.linalg.norm(V[:, j])
        big = np.flatnonzero(np.abs(v) > 1e-12 * np.max(np.abs(v)))
        v = v * (np.conj(v[big[0]]) / abs(v[big[0]]))
        V[:, j] = v
    normM = np.linalg.norm(M, 2) if M.size else 0.0
    residuals = np.linalg.norm(M @ V - V * lam, axis=0)
    defective = residuals > tol * max(normM, np.finfo(float).tiny)
    G = np.abs(V.conj().T @ V)
    for i in range(len(lam)):
        for j in range(len(lam)):
            if i != j and abs(lam[i] - lam[j]) <= 1e-6 * scale and G[i, j] > 1 - 1e-6:
                defective[i] = True
    return Spectrum(lam, V, residuals, defective)


# -- evolution -------------------------------------------------------------------


def propagate_observable(K: KoopmanMatrix, G: ObservableVector, steps: int):
    """Koopman trajectory ``G_0 = G, G_{t+1} = M G_t`` (coefficients), length ``steps + 1``."""
    if steps < 0:
        raise DomainError("steps must be nonnegative")
    if K.dictionary is not None and K.dictionary != G.dictionary:
        raise DimensionError(
            f"dictionary mismatch: matrix on {K.dictionary.spec}, observable on {G.dictionary.spec}"
        )
    if K.size != G.dictionary.size:
        raise DimensionError("matrix size does not match the observable's dictionary")
    out = [G]
    C = G.coefficients
    for _ in range(steps):
        C = K.matrix @ C
        out.append(ObservableVector(G.dictionary, C))
    return out


@dataclass(frozen=True, eq=False)
class Representation:
    """Outputs of the original system and of its Koopman representation."""

    times: np.ndarray
    y_original: np.ndarray
    y_koopman: np.ndarray
    discrepancy: float
    koopman: KoopmanMatrix


def represent(system, dictionary, G: ObservableVector, x0, steps, dt=None, koopman=None,
              box=None, max_step=dyn.DEFAULT_DT) -> Representation:
    """Run the original system and its Koopman representation side by side.

    The original output is ``G(F_t(x0))``; the Koopman output samples the
    propagated observable at ``x0``. For continuous systems one Koopman step
    spans ``dt``. ``koopman`` may be supplied to skip the projection.
    """
    x0 = dyn.as_states(x0, system.dimension)
    if G.dictionary != dictionary:
        raise DimensionError("observable and dictionary differ")
    if system.is_continuous and (dt is None or dt <= 0):
        raise DomainError("continuous systems need a positive step dt")
    if koopman is None:
        if box is None:
            box = default_box(system.dimension, 1.0 + float(np.max(np.abs(x0))))
        t1, sub = (dt, min(dt, max_step)) if system.is_continuous else (1, dyn.DEFAULT_DT)
        koopman = koopman_exact(system, dictionary, t=t1, dt=sub, box=box)

    step = dt if system.is_continuous else 1
    if steps == 0:
        y_orig = np.atleast_2d(G(x0))
    else:
        traj = dyn.simulate(system, x0, steps * step, dt, output_map=G, max_step=max_step)
        y_orig = traj.outputs
    y_koop = np.array([apply_observable(Gt, x0) for Gt in propagate_observable(koopman, G, steps)])
    times = np.arange(steps + 1) * step
    disc = float(np.max(np.abs(y_orig - y_koop))) if y_orig.size else 0.0
    return Representation(times, y_orig, y_koop, disc, koopman)


def nonnormality(K) -> float:
    """``|M M^H - M^H M|_F / |M|_F^2``; zero exactly for normal matrices."""
    M = as_matrix(K)
    nrm = np.linalg.norm(M)
    if nrm == 0:
        return 0.0
    Mh = M.conj().T
    return float(np.linalg.norm(M @ Mh - Mh @ M) / nrm**2)
