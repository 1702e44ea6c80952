"""Dynamical systems, flow maps and trajectories.

A system is either a continuous-time ODE ``dx/dt = f(x)`` or a discrete map
``x_{t+1} = f(x_t)``. All functions here accept a single state of shape
``(n,)`` or a batch of states of shape ``(N, n)``; vector fields, Jacobians and
flows act on the last axis.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .errors import (
    DimensionError,
    DivergenceError,
    DomainError,
    LookupFailure,
    UnsupportedError,
)

DEFAULT_DT = 1e-3
BLOWUP = 1e12


class Kind(str, enum.Enum):
    CONTINUOUS = "ContinuousODE"
    DISCRETE = "DiscreteMap"


@dataclass(frozen=True, eq=False)
class DynamicalSystem:
    """A vector field (or one-step map) together with optional metadata.

    Parameters
    ----------
    kind : Kind
        ``Kind.CONTINUOUS`` for ``dx/dt = f(x)``, ``Kind.DISCRETE`` for
        ``x_{t+1} = f(x_t)``.
    dimension : int
        State dimension ``n``.
    vector_field : callable
        ``f(x)`` acting on the last axis of ``x``.
    jacobian : callable, optional
        Analytic Jacobian returning ``(..., n, n)``. Central differences are
        used when absent.
    divergence_free : bool, optional
        Declares ``div f == 0``.
    analytic_flow : callable, optional
        ``F(x, t)`` for systems with a closed-form flow. Used by :func:`flow`
        in place of numerical integration.
    inverse : callable, optional
        Inverse of a discrete map.
    name : str
    params : dict
        Catalog parameters, kept for reporting.
    """

    kind: Kind
    dimension: int
    vector_field: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    divergence_free: Optional[bool] = None
    analytic_flow: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "system"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.dimension!r}")
        object.__setattr__(self, "kind", Kind(self.kind))

    @property
    def is_continuous(self) -> bool:
        return self.kind is Kind.CONTINUOUS

    def f(self, x):
        x = as_states(x, self.dimension)
        out = np.asarray(self.vector_field(x), dtype=float)
        if out.shape != x.shape:
            raise DimensionError(
                f"{self.name}: vector field returned shape {out.shape} for input {x.shape}"
            )
        return out

    def jac(self, x):
        """Jacobian ``df/dx`` with shape ``(..., n, n)``."""
        x = as_states(x, self.dimension)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float)
        return finite_difference_jacobian(self.f, x)

    def divergence(self, x):
        """Trace of the Jacobian, ``div f``."""
        return np.trace(self.jac(x), axis1=-2, axis2=-1)

    def __repr__(self):
        return f"DynamicalSystem(name={self.name!r}, kind={self.kind.value}, n={self.dimension})"


def as_states(x, n):
    """Coerce ``x`` to a float array whose last axis has length ``n``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if n != 1:
            raise DimensionError(f"scalar state given for a system of dimension {n}")
        arr = arr.reshape(1)
    if arr.shape[-1] != n:
        raise DimensionError(f"state has trailing dimension {arr.shape[-1]}, expected {n}")
    return arr


def finite_difference_jacobian(func, x):
    """Central-difference Jacobian of ``func`` at ``x`` (batched on leading axes).

    The step is ``1e-6 * (1 + max|x|)`` per point.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = 1e-6 * (1.0 + np.max(np.abs(x), axis=-1, keepdims=True))
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        step = h * e
        cols.append((np.asarray(func(x + step)) - np.asarray(func(x - step))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def _check_finite(x, time):
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > BLOWUP):
        raise DivergenceError(f"state diverged at t={time:.17g}", time=time)


def _step_sizes(t, dt):
    k = max(1, math.ceil(t / dt * (1.0 - 1e-12)))
    last = t - (k - 1) * dt
    return [dt] * (k - 1) + [last]


def rk4(rhs, state, t, dt, check=None):
    """Classical fixed-step RK4 from 0 to ``t``; the last step is shortened.

    ``check(state, time)`` is called after every step (defaults to a blow-up
    test on the whole state).
    """
    check = _check_finite if check is None else check
    y = np.array(state, dtype=float, copy=True)
    if t == 0:
        return y
    s = 0.0
    for h in _step_sizes(t, dt):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        s += h
        check(y, s)
    return y


def _integer_steps(t):
    if isinstance(t, (bool, np.bool_)) or float(t) != int(t):
        raise DomainError(f"discrete maps need a nonnegative integer number of steps, got {t!r}")
    return int(t)


def flow(system: DynamicalSystem, x, t, dt: float = DEFAULT_DT):
    """Flow map ``F_t(x)``.

    Continuous systems use the analytic flow when one is declared and RK4 with
    step ``dt`` otherwise. Discrete maps are iterated exactly ``t`` times.
    """
    x = as_states(x, system.dimension)
    if t < 0:
        raise DomainError("negative time; use flow_inverse for backward flow")
    if t == 0:
        return x.copy()
    if not system.is_continuous:
        y = x.copy()
        for k in range(_integer_steps(t)):
            y = system.f(y)
            _check_finite(y, k + 1)
        return y
    if system.analytic_flow is not None:
        y = np.asarray(system.analytic_flow(x, float(t)), dtype=float)
        _check_finite(y, float(t))
        return y
    if dt <= 0:
        raise DomainError("dt must be positive")
    return rk4(system.f, x, float(t), dt)


def flow_inverse(system: DynamicalSystem, x, t, dt: float = DEFAULT_DT):
    """Inverse flow map ``F_t^{-1}(x)``, obtained by integrating ``-f`` forward."""
    x = as_states(x, system.dimension)
    if t < 0:
        raise DomainError("negative time")
    if not system.is_continuous:
        if system.inverse is None:
            raise UnsupportedError(f"{system.name}: discrete map has no declared inverse")
        y = x.copy()
        for k in range(_integer_steps(t)):
            y = np.asarray(system.inverse(y), dtype=float)
            _check_finite(y, k + 1)
        return y
    if t == 0:
        return x.copy()
    if dt <= 0:
        raise DomainError("dt must be positive")
    return rk4(lambda y: -system.f(y), x, float(t), dt)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled states (and optional outputs) of one run."""

    times: np.ndarray
    states: np.ndarray
    initial_condition: np.ndarray
    outputs: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise DimensionError("times and states differ in length")
        if self.outputs is not None and len(self.outputs) != len(self.times):
            raise DimensionError("outputs and times differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise DomainError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def snapshot_pairs(self):
        """Consecutive state pairs ``(X, X')`` for regression."""
        return self.states[:-1], self.states[1:]

    def to_csv(self, path=None):
        """Write ``t,x1..xn[,y1..ym]`` with 17 significant digits.

        Returns the CSV text when ``path`` is None.
        """
        n = self.states.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)]
        cols = [self.times[:, None], self.states]
        if self.outputs is not None:
            header += [f"y{i + 1}" for i in range(self.outputs.shape[1])]
            cols.append(self.outputs)
        data = np.hstack(cols)
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for row in data:
            buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return None

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        data = np.array([[float(v) for v in r] for r in body if r], dtype=float).reshape(
            -1, len(header)
        )
        xcols = [i for i, h in enumerate(header) if h.startswith("x")]
        ycols = [i for i, h in enumerate(header) if h.startswith("y")]
        states = data[:, xcols]
        outputs = data[:, ycols] if ycols else None
        return cls(data[:, 0], states, states[0].copy(), outputs)


def simulate(system, x0, horizon, dt=None, output_map=None, max_step=DEFAULT_DT):
    """Sample a trajectory at multiples of ``dt`` (or integer steps) up to ``horizon``.

    For continuous systems each sampling interval is integrated with step
    ``min(dt, max_step)``. ``output_map`` is any callable ``G(x) -> y``; when
    given the outputs are stored alongside the states.

    On blow-up a :class:`DivergenceError` is raised with the partial
    trajectory in its ``partial`` attribute.
    """
    x0 = as_states(x0, system.dimension)
    if x0.ndim != 1:
        raise DimensionError("simulate takes a single initial condition")
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    if system.is_continuous:
        if dt is None or dt <= 0:
            raise DomainError("continuous systems need a positive sampling step dt")
        count = int(math.floor(horizon / dt + 1e-9))
        sub = min(dt, max_step)
        advance = lambda x: flow(system, x, dt, sub)  # noqa: E731
        times = [0.0]
        step = float(dt)
    else:
        count = _integer_steps(horizon)
        advance = lambda x: flow(system, x, 1)  # noqa: E731
        times = [0]
        step = 1

    states = [x0.copy()]
    try:
        for k in range(count):
            states.append(advance(states[-1]))
            times.append((k + 1) * step)
    except DivergenceError as exc:
        partial = _build_trajectory(times, states, x0, output_map)
        raise DivergenceError(
            f"{system.name}: state diverged after t={times[-1]}", time=times[-1], partial=partial
        ) from exc
    return _build_trajectory(times, states, x0, output_map)


def _build_trajectory(times, states, x0, output_map):
    states = np.array(states, dtype=float)
    outputs = None
    if output_map is not None:
        outputs = np.array([np.atleast_1d(np.asarray(output_map(s), dtype=float)) for s in states])
    return Trajectory(np.asarray(times, dtype=float), states, x0.copy(), outputs)


# -- catalog -----------------------------------------------------------------


def linear(A, discrete=False, name=None):
    """Linear system ``dx/dt = A x`` or ``x_{t+1} = A x_t`` with exact flow."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A must be square, got {A.shape}")
    jac = lambda x: np.broadcast_to(A, x.shape[:-1] + (n, n)).copy()  # noqa: E731
    field_ = lambda x: x @ A.T  # noqa: E731
    traceless = bool(abs(np.trace(A)) == 0.0)
    if discrete:
        def power_flow(x, t):
            return x @ np.linalg.matrix_power(A, _integer_steps(t)).T

        inverse = None
        if abs(np.linalg.det(A)) > 1e-14:
            Ainv = np.linalg.inv(A)
            inverse = lambda x: x @ Ainv.T  # noqa: E731
        return DynamicalSystem(
            Kind.DISCRETE, n, field_, jac, None, power_flow, inverse,
            name or "linear", {"A": A.tolist(), "discrete": True},
        )

    def exp_flow(x, t):
        return x @ expm(t * A).T

    return DynamicalSystem(
        Kind.CONTINUOUS, n, field_, jac, traceless, exp_flow, None,
        name or "linear", {"A": A.tolist(), "discrete": False},
    )


def logistic(r=3.5):
    def f(x):
        return r * x * (1.0 - x)

    def jac(x):
        return (r * (1.0 - 2.0 * x))[..., None]

    return DynamicalSystem(Kind.DISCRETE, 1, f, jac, None, None, None, "logistic", {"r": r})


def van_der_pol(mu=1.0):
    def f(x):
        p, q = x[..., 0], x[..., 1]
        return np.stack([q, mu * (1.0 - p**2) * q - p], axis=-1)

    def jac(x):
        p, q = x[..., 0], x[..., 1]
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -2.0 * mu * p * q - 1.0
        J[..., 1, 1] = mu * (1.0 - p**2)
        return J

    return DynamicalSystem(Kind.CONTINUOUS, 2, f, jac, None, None, None, "van_der_pol", {"mu": mu})


def pendulum(damping=0.0):
    def f(x):
        return np.stack([x[..., 1], -np.sin(x[..., 0]) - damping * x[..., 1]], axis=-1)

    def jac(x):
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -np.cos(x[..., 0])
        J[..., 1, 1] = -damping
        return J

    return DynamicalSystem(
        Kind.CONTINUOUS, 2, f, jac, damping == 0.0, None, None, "pendulum", {"damping": damping}
    )


def rotation(omega=1.0):
    """Rigid rotation ``f(x, y) = omega * (-y, x)``; divergence free."""
    R = np.array([[0.0, -omega], [omega, 0.0]])

    def exact(x, t):
        c, s = math.cos(omega * t), math.sin(omega * t)
        return x @ np.array([[c, -s], [s, c]]).T

    sys_ = linear(R, name="rotation")
    return DynamicalSystem(
        Kind.CONTINUOUS, 2, sys_.vector_field, sys_.jacobian, True, exact, None,
        "rotation", {"omega": omega},
    )


def constant_advection(c=1.0):
    """Uniform drift ``dx/dt = c`` in ``len(c)`` dimensions; divergence free."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    n = c.size

    def f(x):
        return np.broadcast_to(c, x.shape).copy()

    def jac(x):
        return np.zeros(x.shape[:-1] + (n, n))

    return DynamicalSystem(
        Kind.CONTINUOUS, n, f, jac, True, lambda x, t: x + t * c, None,
        "constant_advection", {"c": c.tolist()},
    )


def duffing(alpha=-1.0, beta=1.0, delta=0.0):
    """Unforced Duffing oscillator ``x'' + delta x' + alpha x + beta x^3 = 0``."""

    def f(x):
        p, q = x[..., 0], x[..., 1]
        return np.stack([q, -delta * q - alpha * p - beta * p**3], axis=-1)

    def jac(x):
        p = x[..., 0]
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -alpha - 3.0 * beta * p**2
        J[..., 1, 1] = -delta
        return J

    return DynamicalSystem(
        Kind.CONTINUOUS, 2, f, jac, delta == 0.0, None, None, "duffing",
        {"alpha": alpha, "beta": beta, "delta": delta},
    )


CATALOG = {
    "linear": linear,
    "logistic": logistic,
    "van_der_pol": van_der_pol,
    "pendulum": pendulum,
    "rotation": rotation,
    "constant_advection": constant_advection,
    "duffing": duffing,
}


def catalog(name, **params) -> DynamicalSystem:
    """Look up a canonical system by name and configure it with ``params``."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise LookupFailure(
            f"unknown system {name!r}; valid names: {', '.join(sorted(CATALOG))}"
        ) from None
    return factory(**params)
