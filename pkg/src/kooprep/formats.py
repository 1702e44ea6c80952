"""Text formats and spec strings used by the command line.

* matrix CSV: a ``# rows,cols`` header, then comma-separated rows
* system spec: ``name:key=value,...`` e.g. ``logistic:r=3.5``,
  ``linear:A=0.9 0.1;0 0.8,discrete=true``
* density spec: ``gauss:c=0,0;s=0.5``, ``indicator:lo=0;hi=1``, ``file=phi.txt``
* grid ``256x256`` and box ``-4:4,-4:4``
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import dynamics as dyn
from . import transport as tr
from .errors import DomainError


def fmt(v):
    return format(float(v), ".17g")


def write_matrix_csv(M, path=None):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [f"# {M.shape[0]},{M.shape[1]}"]
    lines += [",".join(fmt(v) for v in row) for row in M]
    text = "\n".join(lines) + "\n"
    if path is None:
        return text
    with open(path, "w") as fh:
        fh.write(text)


def read_matrix_csv(path):
    rows, shape = [], None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "," in body and shape is None:
                    try:
                        shape = tuple(int(v) for v in body.split(","))
                    except ValueError:
                        pass
                continue
            if line[0].isalpha():
                continue
            rows.append([float(v) for v in line.replace(",", " ").split()])
    M = np.array(rows, dtype=float)
    if shape is not None:
        M = M.reshape(shape)
    return M


def parse_matrix(text):
    """A matrix from a CSV path or an inline literal ``a b;c d`` (commas allowed in rows)."""
    if os.path.exists(text):
        return read_matrix_csv(text)
    try:
        return np.array(
            [[float(v) for v in row.replace(",", " ").split()] for row in text.split(";")],
            dtype=float,
        )
    except ValueError:
        raise DomainError(f"not a matrix file or literal: {text!r}") from None


def parse_vector(text):
    """A vector from a CSV path or an inline literal ``1,0`` / ``1 0``."""
    if os.path.exists(text):
        return read_matrix_csv(text).ravel()
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()], dtype=float)
    except ValueError:
        raise DomainError(f"not a vector file or literal: {text!r}") from None


def read_points(path):
    """One point per row (used by ``--x0-list``)."""
    return np.atleast_2d(read_matrix_csv(path))


def _value(text):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if any(ch in text for ch in " ;") or os.path.exists(text):
        M = parse_matrix(text)
        return M.ravel() if M.shape[0] == 1 else M
    try:
        return float(text)
    except ValueError:
        return text


def parse_system(spec):
    """Catalog system from ``name:key=value,...``."""
    name, _, body = spec.partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in body.split(","))):
        if "=" not in item:
            raise DomainError(f"malformed system parameter {item!r} in {spec!r}")
        k, v = item.split("=", 1)
        params[k.strip()] = _value(v.strip())
    try:
        return dyn.catalog(name.strip(), **params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for system {name!r}: {exc}") from None


def parse_grid(text):
    try:
        return tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise DomainError(f"grid must look like 256x256, got {text!r}") from None


def parse_box(text):
    try:
        return np.array([[float(v) for v in ax.split(":")] for ax in text.split(",")], dtype=float)
    except ValueError:
        raise DomainError(f"box must look like -4:4,-4:4, got {text!r}") from None


def density_function(spec):
    """Callable density (or a loaded grid) from a density spec string."""
    if spec.startswith("file="):
        return tr.DensityGrid.from_text(spec[5:])
    kind, _, body = spec.partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in body.split(";"))):
        k, _, v = item.partition("=")
        params[k.strip()] = v.strip()
    try:
        if kind == "gauss":
            return tr.gaussian_density(parse_vector(params["c"]), float(params["s"]))
        if kind == "indicator":
            return tr.indicator_density(parse_vector(params["lo"]), parse_vector(params["hi"]))
    except KeyError as exc:
        raise DomainError(f"density spec {spec!r} is missing {exc.args[0]!r}") from None
    raise DomainError(f"unknown density kind {kind!r}; use gauss, indicator or file=")


def density_grid(spec, box, shape):
    f = density_function(spec)
    if isinstance(f, tr.DensityGrid):
        return f
    return tr.DensityGrid.from_function(box, shape, f)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(doc, path):
    # json writes floats with repr, which round-trips doubles exactly
    text = json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
