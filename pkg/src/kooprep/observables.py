"""Finite dictionaries of scalar observables and vector-valued observables on them.

A dictionary is an ordered family ``psi_1 .. psi_D`` of functions on R^n. An
output map with ``m`` channels is stored as a ``D x m`` coefficient matrix
``C`` so that ``G(x) = C^T psi(x)``.
"""

from __future__ import annotations

import itertools
import json
import math
from math import comb

import numpy as np

from .errors import DimensionError, DomainError, UnsupportedError


def _fmt(v):
    return format(float(v), ".17g")


class Dictionary:
    """Base class. Subclasses define ``size``, ``_eval`` and ``_grad``."""

    kind = "abstract"

    def __init__(self, n):
        if int(n) != n or n < 1:
            raise DomainError(f"state dimension must be a positive integer, got {n!r}")
        self.n = int(n)

    @property
    def size(self) -> int:
        raise NotImplementedError

    def __len__(self):
        return self.size

    def _coerce(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 and self.n == 1:
            x = x.reshape(1)
        if x.ndim == 0 or x.shape[-1] != self.n:
            raise DimensionError(
                f"{self.kind} dictionary expects points with {self.n} coordinates, got shape {x.shape}"
            )
        return x

    def evaluate(self, x):
        """``psi(x)`` with shape ``(..., D)``."""
        return self._eval(self._coerce(x))

    def gradient(self, x):
        """Jacobian ``d psi_i / d x_j`` with shape ``(..., D, n)``."""
        return self._grad(self._coerce(x))

    __call__ = evaluate

    def labels(self):
        return [f"psi{i}" for i in range(self.size)]

    @property
    def spec(self) -> str:
        raise NotImplementedError

    def can_represent_identity(self):
        return False

    def coordinate_rows(self):
        """Rows holding ``x_1 .. x_n`` (for dictionaries that contain them)."""
        raise UnsupportedError(f"{self.kind} dictionary does not contain the coordinate functions")

    def __eq__(self, other):
        return isinstance(other, Dictionary) and self.spec == other.spec

    def __hash__(self):
        return hash(self.spec)

    def __repr__(self):
        return f"{type(self).__name__}({self.spec!r}, D={self.size})"


class Monomials(Dictionary):
    """All monomials of total degree at most ``d``, graded lexicographic order.

    Within one degree, exponent tuples are sorted in descending lexicographic
    order, so for ``n=2, d=2`` the basis is ``1, x1, x2, x1^2, x1 x2, x2^2``.
    """

    kind = "monomials"

    def __init__(self, n, d):
        super().__init__(n)
        if int(d) != d or d < 0:
            raise DomainError(f"degree must be a nonnegative integer, got {d!r}")
        self.d = int(d)
        exps = []
        for deg in range(self.d + 1):
            block = [e for e in itertools.product(range(deg + 1), repeat=self.n) if sum(e) == deg]
            exps.extend(sorted(block, reverse=True))
        self.exponents = np.array(exps, dtype=int).reshape(-1, self.n)
        assert len(self.exponents) == comb(self.n + self.d, self.d)

    @property
    def size(self):
        return len(self.exponents)

    def _eval(self, x):
        return np.prod(x[..., None, :] ** self.exponents, axis=-1)

    def _grad(self, x):
        E = self.exponents
        out = np.empty(x.shape[:-1] + (self.size, self.n))
        for j in range(self.n):
            lowered = E.copy()
            lowered[:, j] = np.maximum(E[:, j] - 1, 0)
            out[..., j] = E[:, j] * np.prod(x[..., None, :] ** lowered, axis=-1)
        return out

    def labels(self):
        names = []
        for e in self.exponents:
            parts = [f"x{j + 1}" + (f"^{p}" if p > 1 else "") for j, p in enumerate(e) if p]
            names.append("*".join(parts) or "1")
        return names

    @property
    def spec(self):
        return f"monomials:n={self.n},d={self.d}"

    def can_represent_identity(self):
        return self.d >= 1

    def coordinate_rows(self):
        if self.d < 1:
            return super().coordinate_rows()
        return list(range(1, self.n + 1))


class Fourier(Dictionary):
    """Real trigonometric tensor basis on a periodic box.

    Per axis the functions are ``1, cos(w u), sin(w u), cos(2 w u), ...`` up
    to wavenumber ``k`` with ``u = x - lo`` and ``w = 2 pi / (hi - lo)``. For
    ``n > 1`` the basis is every product of one per-axis function per axis,
    the first axis varying slowest. ``D = (2k + 1)^n``.
    """

    kind = "fourier"

    def __init__(self, n, k, box=None):
        super().__init__(n)
        if int(k) != k or k < 0:
            raise DomainError(f"wavenumber bound must be a nonnegative integer, got {k!r}")
        self.k = int(k)
        if box is None:
            box = [(0.0, 2.0 * math.pi)] * self.n
        box = np.asarray(box, dtype=float).reshape(self.n, 2)
        if np.any(box[:, 1] <= box[:, 0]):
            raise DomainError("box must have hi > lo on every axis")
        self.box = box
        self.omega = 2.0 * math.pi / (box[:, 1] - box[:, 0])
        self.index = np.array(list(itertools.product(range(2 * self.k + 1), repeat=self.n)), dtype=int)

    @property
    def size(self):
        return len(self.index)

    def _axis_tables(self, x):
        # values and derivatives of the 1-D functions on each axis: (..., n, 2k+1)
        u = (x - self.box[:, 0]) * self.omega
        vals = [np.ones_like(u)]
        ders = [np.zeros_like(u)]
        for m in range(1, self.k + 1):
            c, s = np.cos(m * u), np.sin(m * u)
            vals += [c, s]
            ders += [-m * self.omega * s, m * self.omega * c]
        return np.stack(vals, axis=-1), np.stack(ders, axis=-1)

    def _gather(self, table):
        # table (..., n, 2k+1) -> (..., D, n) factor per axis
        return np.stack([table[..., j, self.index[:, j]] for j in range(self.n)], axis=-1)

    def _eval(self, x):
        vals, _ = self._axis_tables(x)
        return np.prod(self._gather(vals), axis=-1)

    def _grad(self, x):
        vals, ders = self._axis_tables(x)
        V, Dv = self._gather(vals), self._gather(ders)
        out = np.empty_like(V)
        for j in range(self.n):
            others = np.delete(V, j, axis=-1)
            out[..., j] = Dv[..., j] * np.prod(others, axis=-1)
        return out

    def labels(self):
        def one(j, m):
            if m == 0:
                return ""
            w = (m + 1) // 2
            fn = "cos" if m % 2 else "sin"
            return f"{fn}({w}*u{j + 1})"

        return ["*".join(p for p in (one(j, m) for j, m in enumerate(r)) if p) or "1" for r in self.index]

    @property
    def spec(self):
        box = ";".join(f"{_fmt(lo)}:{_fmt(hi)}" for lo, hi in self.box)
        return f"fourier:n={self.n},k={self.k},box={box}"


class Gaussians(Dictionary):
    """Unnormalized radial Gaussians ``exp(-|x - c|^2 / (2 sigma^2))``."""

    kind = "gaussians"

    def __init__(self, centers, sigma):
        centers = np.asarray(centers, dtype=float)
        if centers.ndim == 1:
            centers = centers[:, None]
        super().__init__(centers.shape[1])
        if sigma <= 0:
            raise DomainError("sigma must be positive")
        self.centers = centers
        self.sigma = float(sigma)

    @property
    def size(self):
        return len(self.centers)

    def _eval(self, x):
        d2 = np.sum((x[..., None, :] - self.centers) ** 2, axis=-1)
        return np.exp(-d2 / (2.0 * self.sigma**2))

    def _grad(self, x):
        diff = x[..., None, :] - self.centers
        return -(diff / self.sigma**2) * self._eval(x)[..., None]

    @property
    def spec(self):
        cs = ";".join(" ".join(_fmt(v) for v in c) for c in self.centers)
        return f"gaussians:centers={cs},sigma={_fmt(self.sigma)}"


class Linear(Dictionary):
    """Coordinate functions ``x_1 .. x_n``, optionally preceded by the constant 1."""

    kind = "linear"

    def __init__(self, n, constant=True):
        super().__init__(n)
        self.constant = bool(constant)

    @property
    def size(self):
        return self.n + int(self.constant)

    def _eval(self, x):
        if not self.constant:
            return x.copy()
        return np.concatenate([np.ones(x.shape[:-1] + (1,)), x], axis=-1)

    def _grad(self, x):
        G = np.eye(self.n)
        if self.constant:
            G = np.vstack([np.zeros((1, self.n)), G])
        return np.broadcast_to(G, x.shape[:-1] + G.shape).copy()

    def labels(self):
        return (["1"] if self.constant else []) + [f"x{j + 1}" for j in range(self.n)]

    @property
    def spec(self):
        return f"linear:n={self.n},const={'true' if self.constant else 'false'}"

    def can_represent_identity(self):
        return True

    def coordinate_rows(self):
        off = int(self.constant)
        return list(range(off, off + self.n))


# -- spec strings --------------------------------------------------------------


def _split_params(body):
    params = {}
    if not body:
        return params
    for item in body.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise DomainError(f"malformed parameter {item!r} (expected key=value)")
        key, value = item.split("=", 1)
        params[key.strip()] = value.strip()
    return params


def _bool(text):
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise DomainError(f"not a boolean: {text!r}")


def _read_centers(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line[0].isalpha():
                continue
            rows.append([float(v) for v in line.replace(",", " ").split()])
    return np.array(rows, dtype=float)


def parse_dictionary(spec: str) -> Dictionary:
    """Build a dictionary from its spec string.

    Examples
    --------
    >>> parse_dictionary("monomials:n=2,d=3").size
    10
    >>> parse_dictionary("linear:n=3,const=true").labels()
    ['1', 'x1', 'x2', 'x3']
    """
    kind, _, body = spec.partition(":")
    p = _split_params(body)
    kind = kind.strip().lower()
    try:
        if kind == "monomials":
            return Monomials(int(p["n"]), int(p["d"]))
        if kind == "fourier":
            n = int(p.get("n", 1))
            box = None
            if "box" in p:
                box = [[float(v) for v in ax.split(":")] for ax in p["box"].split(";")]
                if len(box) == 1 and n > 1:
                    box = box * n
            return Fourier(n, int(p["k"]), box)
        if kind == "gaussians":
            if "file" in p:
                centers = _read_centers(p["file"])
            else:
                centers = np.array(
                    [[float(v) for v in c.split()] for c in p["centers"].split(";")], dtype=float
                )
            return Gaussians(centers, float(p["sigma"]))
        if kind == "linear":
            return Linear(int(p["n"]), _bool(p.get("const", "true")))
    except KeyError as exc:
        raise DomainError(f"dictionary spec {spec!r} is missing parameter {exc.args[0]!r}") from None
    except ValueError as exc:
        raise DomainError(f"dictionary spec {spec!r}: {exc}") from None
    raise DomainError(
        f"unknown dictionary kind {kind!r}; valid kinds: fourier, gaussians, linear, monomials"
    )


# -- observable vectors --------------------------------------------------------


class ObservableVector:
    """An ``m``-channel output map ``G(x) = C^T psi(x)`` on a dictionary."""

    def __init__(self, dictionary: Dictionary, coefficients):
        C = np.asarray(coefficients, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        if C.ndim != 2 or C.shape[0] != dictionary.size:
            raise DimensionError(
                f"coefficients must have {dictionary.size} rows, got shape {C.shape}"
            )
        self.dictionary = dictionary
        self.coefficients = C

    @property
    def channels(self):
        return self.coefficients.shape[1]

    def __call__(self, x):
        return apply_observable(self, x)

    def __add__(self, other):
        _same_dictionary(self, other)
        return ObservableVector(self.dictionary, self.coefficients + other.coefficients)

    def __mul__(self, alpha):
        return ObservableVector(self.dictionary, alpha * self.coefficients)

    __rmul__ = __mul__

    def to_json(self, path=None):
        doc = {
            "dict_spec": self.dictionary.spec,
            "shape": list(self.coefficients.shape),
            "coefficients": self.coefficients.tolist(),
        }
        text = json.dumps(doc, indent=2)
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text + "\n")

    @classmethod
    def from_json(cls, source):
        if isinstance(source, dict):
            doc = source
        elif isinstance(source, str) and source.lstrip().startswith("{"):
            doc = json.loads(source)
        else:
            with open(source) as fh:
                doc = json.load(fh)
        d = parse_dictionary(doc["dict_spec"])
        C = np.asarray(doc["coefficients"], dtype=float)
        if "shape" in doc:
            C = C.reshape(doc["shape"])
        return cls(d, C)

    def __repr__(self):
        return f"ObservableVector({self.dictionary.spec!r}, m={self.channels})"


def _same_dictionary(a, b):
    if a.dictionary != b.dictionary:
        raise DimensionError(f"dictionary mismatch: {a.dictionary.spec} vs {b.dictionary.spec}")


def apply_observable(obs: ObservableVector, x):
    """Evaluate ``C^T psi(x)``; returns shape ``(m,)`` or ``(..., m)``."""
    return obs.dictionary.evaluate(x) @ obs.coefficients


def identity_observable(dictionary: Dictionary) -> ObservableVector:
    """Coefficients that pick out the state coordinates as ``n`` output channels."""
    if not dictionary.can_represent_identity():
        raise UnsupportedError(
            f"{dictionary.kind} dictionary cannot represent the identity map"
        )
    C = np.zeros((dictionary.size, dictionary.n))
    for j, row in enumerate(dictionary.coordinate_rows()):
        C[row, j] = 1.0
    return ObservableVector(dictionary, C)


def fit_observable(dictionary: Dictionary, func, samples):
    """Least-squares coefficients of ``func`` on ``dictionary`` over ``samples``.

    Returns the observable and the relative residual of the fit.
    """
    samples = np.asarray(samples, dtype=float)
    Psi = dictionary.evaluate(samples)
    Y = np.asarray(func(samples), dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    C, *_ = np.linalg.lstsq(Psi, Y, rcond=None)
    denom = np.linalg.norm(Y)
    res = np.linalg.norm(Psi @ C - Y) / denom if denom > 0 else 0.0
    return ObservableVector(dictionary, C), float(res)
