"""Transport (Perron-Frobenius) evolution of densities on uniform grids.

The transport of a density by an invertible map ``T`` is::

    phi_2(x) = phi_1(T^{-1}(x)) |det d(T^{-1})/dx (x)|

and for a flow ``F_t`` the same formula with ``T = F_t``. Densities live on
cell-centred uniform grids in at most three dimensions. Evaluation between
grid points uses multilinear interpolation with zero fill outside the box.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.ndimage import map_coordinates

from . import dynamics as dyn
from .errors import (
    DimensionError,
    DomainError,
    SingularityError,
    SupportWarning,
    UnsupportedError,
)
from .koopman import KoopmanMatrix, Provenance, _relative_residual, _samples, _solve, DEFAULT_RANK_TOL
from .observables import ObservableVector

MAX_GRID_DIM = 3
SUPPORT_MARGIN = 5
BOUNDARY_TOL = 1e-12
SINGULAR_DET = 1e-14


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Scalar density sampled at the cell centres of a uniform grid.

    Parameters
    ----------
    lo, hi : array_like
        Box corners, one entry per axis.
    values : ndarray
        Samples with one array axis per space axis.
    warnings : tuple of str
        Diagnostics attached by the operation that produced the grid.
    """

    lo: np.ndarray
    hi: np.ndarray
    values: np.ndarray
    warnings: tuple = field(default=())

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        values = np.asarray(self.values, dtype=float)
        n = lo.size
        if n > MAX_GRID_DIM:
            raise DimensionError(
                f"grids are limited to {MAX_GRID_DIM} dimensions; a {n}-D grid with N points per "
                f"axis needs N^{n} cells and the cost grows exponentially with dimension"
            )
        if hi.size != n or values.ndim != n:
            raise DimensionError(f"box has {n} axes but values have {values.ndim}")
        if np.any(hi <= lo):
            raise DomainError("box must have hi > lo on every axis")
        if not np.all(np.isfinite(values)):
            raise DomainError("density values must be finite")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.lo.size

    @property
    def shape(self):
        return self.values.shape

    @property
    def spacing(self):
        return (self.hi - self.lo) / np.array(self.shape)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def axes(self):
        h = self.spacing
        return [self.lo[i] + (np.arange(self.shape[i]) + 0.5) * h[i] for i in range(self.n)]

    def points(self):
        """Cell centres with shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @property
    def total_mass(self):
        return float(np.sum(self.values) * self.cell_volume)

    def integrate(self, values=None):
        """Trapezoid rule over the cell-centre nodes."""
        out = self.values if values is None else values
        for i, ax in reversed(list(enumerate(self.axes))):
            out = trapezoid(out, ax, axis=i)
        return float(out)

    def l2_norm(self):
        return math.sqrt(max(self.integrate(self.values**2), 0.0))

    def with_values(self, values, warnings=()):
        return DensityGrid(self.lo, self.hi, values, tuple(warnings))

    def interpolate(self, points):
        """Multilinear interpolation at ``points`` (``(..., n)``); zero outside the box."""
        points = np.asarray(points, dtype=float)
        coords = (points - self.lo) / self.spacing - 0.5
        flat = coords.reshape(-1, self.n).T
        vals = map_coordinates(self.values, flat, order=1, mode="grid-constant", cval=0.0)
        return vals.reshape(points.shape[:-1])

    @classmethod
    def from_function(cls, box, shape, func):
        box = np.asarray(box, dtype=float).reshape(-1, 2)
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        if len(shape) == 1 and box.shape[0] > 1:
            shape = shape * box.shape[0]
        empty = cls(box[:, 0], box[:, 1], np.zeros(shape))
        return empty.with_values(np.asarray(func(empty.points()), dtype=float))

    def to_text(self, path=None):
        lines = [
            "# box " + " ".join(format(v, ".17g") for v in np.concatenate([self.lo, self.hi])),
            "# shape " + " ".join(str(s) for s in self.shape),
        ]
        lines += [format(v, ".17g") for v in self.values.ravel(order="C")]
        text = "\n".join(lines) + "\n"
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text)

    @classmethod
    def from_text(cls, source):
        if "\n" not in source:
            with open(source) as fh:
                source = fh.read()
        box = shape = None
        vals = []
        for line in source.splitlines():
            line = line.strip()
            if line.startswith("# box"):
                box = [float(v) for v in line[5:].split()]
            elif line.startswith("# shape"):
                shape = tuple(int(v) for v in line[7:].split())
            elif line and not line.startswith("#"):
                vals.append(float(line))
        if box is None or shape is None:
            raise DomainError("density file needs '# box' and '# shape' header lines")
        n = len(shape)
        return cls(box[:n], box[n:], np.array(vals).reshape(shape))


def gaussian_density(center, sigma):
    """Normalized isotropic Gaussian density as a callable on ``(..., n)`` points."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    n = c.size

    def phi(x):
        d2 = np.sum((np.asarray(x) - c) ** 2, axis=-1)
        return np.exp(-d2 / (2.0 * sigma**2)) / (2.0 * math.pi * sigma**2) ** (n / 2)

    return phi


def indicator_density(lo, hi):
    lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)

    def phi(x):
        x = np.asarray(x)
        return np.all((x >= lo) & (x <= hi), axis=-1).astype(float)

    return phi


def support_margin_ok(phi: DensityGrid, margin=SUPPORT_MARGIN, tol=BOUNDARY_TOL):
    """True when ``|phi| <= tol * max|phi|`` on the outer ``margin`` cells of every axis."""
    v = np.abs(phi.values)
    peak = v.max() if v.size else 0.0
    if peak == 0:
        return True
    for ax in range(phi.n):
        k = min(margin, phi.shape[ax])
        edge = np.concatenate(
            [np.take(v, range(k), axis=ax).ravel(), np.take(v, range(phi.shape[ax] - k, phi.shape[ax]), axis=ax).ravel()]
        )
        if edge.max() > tol * peak:
            return False
    return True


def _support_warnings(phi, what):
    if support_margin_ok(phi):
        return ()
    msg = (
        f"{what}: density is not negligible within {SUPPORT_MARGIN} cells of the box boundary; "
        "characteristics leaving the box see zero density and the result may lose mass"
    )
    warnings.warn(msg, SupportWarning, stacklevel=3)
    return (msg,)


# -- maps --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InvertibleMap:
    """An invertible map given through its inverse.

    ``inverse_jacobian`` returns ``(..., n, n)``; central differences of
    ``inverse`` are used when it is absent.
    """

    inverse: Callable[[np.ndarray], np.ndarray]
    inverse_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    forward: Optional[Callable[[np.ndarray], np.ndarray]] = None


def affine_map(A, b=None):
    """``T(y) = A y + b`` as an :class:`InvertibleMap`."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    b = np.zeros(n) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    Ainv = np.linalg.inv(A)
    return InvertibleMap(
        inverse=lambda x: (np.asarray(x) - b) @ Ainv.T,
        inverse_jacobian=lambda x: np.broadcast_to(Ainv, np.shape(x)[:-1] + (n, n)),
        forward=lambda y: np.asarray(y) @ A.T + b,
    )


def _fd_jacobian(func, x, step):
    n = x.shape[-1]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        cols.append((func(x + e) - func(x - e)) / (2.0 * step))
    return np.stack(cols, axis=-1)


def pushforward_map(phi: DensityGrid, mapping: InvertibleMap) -> DensityGrid:
    """Density after transport by ``mapping``, evaluated at every cell centre."""
    X = phi.points()
    Y = np.asarray(mapping.inverse(X), dtype=float)
    if mapping.inverse_jacobian is not None:
        Jac = np.asarray(mapping.inverse_jacobian(X), dtype=float)
    else:
        h = 1e-5 * float(np.linalg.norm(phi.hi - phi.lo))
        Jac = _fd_jacobian(lambda z: np.asarray(mapping.inverse(z), dtype=float), X, h)
    det = np.abs(np.linalg.det(Jac))
    bad = det < SINGULAR_DET
    if np.any(bad):
        loc = X[np.unravel_index(int(np.argmax(bad)), bad.shape)]
        raise SingularityError(f"inverse Jacobian is singular at x={loc.tolist()}", location=loc)
    w = _support_warnings(phi, "pushforward_map")
    return phi.with_values(phi.interpolate(Y) * det, w)


# -- flows -------------------------------------------------------------------------


def _require_grid_system(phi, system):
    if not system.is_continuous:
        raise UnsupportedError("transport_flow needs a continuous-time system; use pushforward_map for maps")
    if system.dimension != phi.n:
        raise DimensionError(f"system has dimension {system.dimension}, grid has {phi.n}")


def characteristics(system, points, t, dt=dyn.DEFAULT_DT):
    """Backward characteristics ``F_t^{-1}(x)`` and ``det dF_t^{-1}/dx``.

    The determinant obeys ``dJ/ds = -div f(y(s)) J`` along ``dy/ds = -f(y)``
    and is integrated with the same RK4 steps as the state.
    """
    X = np.asarray(points, dtype=float)
    n = system.dimension
    flat = X.reshape(-1, n)
    state = np.hstack([flat, np.ones((len(flat), 1))])

    def rhs(s):
        y, J = s[:, :n], s[:, n:]
        return np.hstack([-system.f(y), -system.divergence(y)[:, None] * J])

    def check(s, time):
        dyn._check_finite(s[:, :n], time)

    out = dyn.rk4(rhs, state, float(t), dt, check) if t > 0 else state
    return out[:, :n].reshape(X.shape), out[:, n].reshape(X.shape[:-1])


def transport_flow(phi: DensityGrid, system, t, dt=dyn.DEFAULT_DT) -> DensityGrid:
    """Semi-Lagrangian transport: ``phi(F_t^{-1}(x)) |det dF_t^{-1}/dx|`` at every cell centre."""
    _require_grid_system(phi, system)
    if t < 0:
        raise DomainError("negative time")
    if t == 0:
        return phi.with_values(phi.values.copy())
    w = _support_warnings(phi, "transport_flow")
    Y, J = characteristics(system, phi.points(), t, dt)
    return phi.with_values(phi.interpolate(Y) * np.abs(J), w)


def transport_generator_matrix(system, dictionary, samples=None, box=None, count=None,
                               rank_tol=DEFAULT_RANK_TOL) -> KoopmanMatrix:
    """Project ``T psi_j = -grad psi_j . f - (div f) psi_j`` onto the dictionary."""
    if not system.is_continuous:
        raise UnsupportedError(f"{system.name}: generators are defined for continuous-time systems")
    X = _samples(dictionary, samples, box, count)
    Psi = dictionary.evaluate(X)
    adv = np.einsum("ijk,ik->ij", dictionary.gradient(X), system.f(X))
    target = -adv - system.divergence(X)[:, None] * Psi
    M, _ = _solve(Psi, target, rank_tol, strict=True)
    res = _relative_residual(Psi, M, target)
    return KoopmanMatrix(dictionary, M, Provenance.TRANSPORT_GENERATOR, res,
                         {"samples": len(X), "system": system.name})


@dataclass(frozen=True, eq=False)
class InnerProductReport:
    lhs: float
    rhs: float
    abs_error: float
    rel_error: float
    quadrature: dict
    warnings: tuple = ()


def _as_field(obj, grid):
    """Turn a density/observable argument into a callable on points."""
    if isinstance(obj, DensityGrid):
        return obj.interpolate
    if isinstance(obj, ObservableVector):
        return lambda x: obj(x)[..., 0]
    if callable(obj):
        return obj
    raise DomainError(f"cannot evaluate {type(obj).__name__} as a function")


def adjoint_check(system, phi, psi, t, dt=dyn.DEFAULT_DT, box=None, shape=None) -> InnerProductReport:
    """Compare ``<phi, K_t psi>`` with ``<T_t phi, psi>`` by trapezoid quadrature.

    ``phi`` is a :class:`DensityGrid` or a callable sampled on the grid given
    by ``box`` and ``shape``. ``psi`` may be a callable, an
    :class:`ObservableVector` (first channel) or a grid.
    """
    if not isinstance(phi, DensityGrid):
        if box is None or shape is None:
            raise DomainError("a callable phi needs box and shape")
        phi = DensityGrid.from_function(box, shape, phi)
    _require_grid_system(phi, system)
    psi_f = _as_field(psi, phi)
    X = phi.points()
    lhs = phi.integrate(phi.values * psi_f(dyn.flow(system, X, t, dt)))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SupportWarning)
        moved = transport_flow(phi, system, t, dt)
    for w in caught:
        warnings.warn(w.message, w.category, stacklevel=2)
    rhs = moved.integrate(moved.values * psi_f(X))
    err = abs(lhs - rhs)
    denom = max(abs(lhs), abs(rhs))
    rel = err / denom if denom > 0 else 0.0
    quad = {"box": np.column_stack([phi.lo, phi.hi]).tolist(), "shape": list(phi.shape), "rule": "trapezoid"}
    return InnerProductReport(float(lhs), float(rhs), float(err), float(rel), quad, moved.warnings)


def _face_velocities(phi, system):
    h = phi.spacing
    out = []
    for i in range(phi.n):
        axes = list(phi.axes)
        axes[i] = phi.lo[i] + np.arange(phi.shape[i] + 1) * h[i]
        P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        out.append(system.f(P)[..., i])
    return out


def max_stable_dt(phi, system, courant=0.9):
    u = _face_velocities(phi, system)
    rate = sum(np.max(np.abs(ui)) / hi for ui, hi in zip(u, phi.spacing))
    return math.inf if rate == 0 else courant / rate


def transport_pde_step(phi: DensityGrid, system, dt, steps) -> DensityGrid:
    """First-order upwind finite-volume solution of ``phi_t + div(f phi) = 0``.

    Face velocities are the vector field at face centres. No mass enters
    through the box boundary; mass may leave. The explicit update requires
    ``sum_i max|f_i| dt / h_i <= 0.9``.
    """
    _require_grid_system(phi, system)
    if dt <= 0 or steps < 0:
        raise DomainError("dt must be positive and steps nonnegative")
    u = _face_velocities(phi, system)
    h = phi.spacing
    courant = sum(np.max(np.abs(ui)) * dt / hi for ui, hi in zip(u, h))
    if courant > 0.9:
        raise DomainError(
            f"CFL condition violated: Courant number {courant:.4g} > 0.9; "
            f"admissible dt <= {max_stable_dt(phi, system):.6g}"
        )
    up = [np.maximum(ui, 0.0) for ui in u]
    dn = [np.minimum(ui, 0.0) for ui in u]
    v = phi.values.copy()
    for _ in range(int(steps)):
        change = np.zeros_like(v)
        for i in range(phi.n):
            pad = [(0, 0)] * phi.n
            pad[i] = (1, 1)
            vp = np.pad(v, pad)
            left = np.take(vp, range(0, v.shape[i] + 1), axis=i)
            right = np.take(vp, range(1, v.shape[i] + 2), axis=i)
            flux = up[i] * left + dn[i] * right
            change -= (np.diff(flux, axis=i)) / h[i]
        v = v + dt * change
    return phi.with_values(v)


@dataclass(frozen=True, eq=False)
class UnitarityReport:
    ratio: float
    norm_before: float
    norm_after: float
    warnings: tuple = ()


def unitarity_check(system, phi: DensityGrid, t, dt=dyn.DEFAULT_DT) -> UnitarityReport:
    """Ratio ``|T_t phi|_2 / |phi|_2`` for a divergence-free system."""
    if not system.divergence_free:
        raise DomainError(f"{system.name} is not declared divergence free")
    before = phi.l2_norm()
    if t == 0:
        return UnitarityReport(1.0, before, before)
    moved = transport_flow(phi, system, t, dt)
    after = moved.l2_norm()
    return UnitarityReport(after / before if before > 0 else 1.0, before, after, moved.warnings)
