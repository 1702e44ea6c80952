"""Command line experiment runner.

Every subcommand is a thin wrapper over library calls: it parses inputs,
calls the library, writes the declared outputs and prints a one-line
summary. Errors go to standard error as a JSON object; the exit status is 1
for domain or validation errors and 2 for numerical failures.

Relative output paths are resolved against ``$KOOPREP_OUTPUT_DIR`` when set.
"""

from __future__ import annotations

import argparse
import graphlib
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import __version__
from . import dynamics as dyn
from . import formats as fm
from . import identification as ident
from . import koopman as kp
from . import linear_analysis as la
from . import transport as tr
from .errors import KoopRepError, NumericalError
from .observables import ObservableVector, identity_observable, parse_dictionary

OUTPUT_DIR_ENV = "KOOPREP_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def output_path(path):
    if path is None or os.path.isabs(path):
        return path
    base = os.environ.get(OUTPUT_DIR_ENV)
    return os.path.join(base, path) if base else path


def _summary(name, **values):
    parts = []
    for k, v in values.items():
        if isinstance(v, float):
            v = fm.fmt(v)
        parts.append(f"{k}={v}")
    print(f"{name}: " + " ".join(parts))


def _observable(text, dictionary):
    if text is None or text == "identity":
        return identity_observable(dictionary)
    obs = ObservableVector.from_json(text)
    if obs.dictionary != dictionary:
        raise UsageError(f"observable is on {obs.dictionary.spec}, expected {dictionary.spec}")
    return obs


# -- subcommands -------------------------------------------------------------------


def cmd_simulate(a):
    system = fm.parse_system(a.system)
    x0 = fm.parse_vector(a.x0)
    if system.is_continuous:
        if a.dt is None:
            raise UsageError("continuous systems need --dt")
        horizon = a.horizon if a.horizon is not None else (a.steps or 0) * a.dt
    else:
        horizon = a.steps if a.steps is not None else a.horizon
    if not horizon:
        raise UsageError("give --steps or --horizon")
    G = None
    if a.observable:
        G = ObservableVector.from_json(a.observable)
    traj = dyn.simulate(system, x0, horizon, a.dt, output_map=G, max_step=a.max_step)
    if a.out:
        traj.to_csv(output_path(a.out))
    _summary("simulate", samples=len(traj), final=" ".join(fm.fmt(v) for v in traj.states[-1]))


def _trajectories_from_args(a, system):
    trajs = [dyn.Trajectory.from_csv(p) for p in (a.data or [])]
    starts = []
    if a.x0_list:
        starts.extend(fm.read_points(a.x0_list))
    for s in a.x0 or []:
        starts.append(fm.parse_vector(s))
    if starts:
        if system is None:
            raise UsageError("simulating initial conditions needs --system")
        if a.steps is None:
            raise UsageError("simulating initial conditions needs --steps")
        for x0 in starts:
            if system.is_continuous:
                trajs.append(dyn.simulate(system, x0, a.steps * a.t, a.t, max_step=a.dt))
            else:
                trajs.append(dyn.simulate(system, x0, a.steps))
    return trajs


def cmd_koopman(a):
    dictionary = parse_dictionary(a.dict)
    system = fm.parse_system(a.system) if a.system else None
    box = fm.parse_box(a.box) if a.box else None
    samples = None
    if a.method != "edmd":
        if system is None:
            raise UsageError(f"--method {a.method} needs --system")
        if box is None:
            box = kp.default_box(dictionary.n)
        samples = kp.sample_points(box, a.samples or 10 * dictionary.size, a.sampling, a.seed)
    if a.method == "exact":
        t = a.t if system.is_continuous else int(a.t)
        K = kp.koopman_exact(system, dictionary, t=t, dt=a.dt, samples=samples, rank_tol=a.rank_tol)
    elif a.method == "generator":
        K = kp.generator_matrix(system, dictionary, samples=samples, rank_tol=a.rank_tol)
    else:
        trajs = _trajectories_from_args(a, system)
        if not trajs:
            raise UsageError("edmd needs --data files or initial conditions to simulate")
        K = kp.edmd(trajs, dictionary, rank_tol=a.rank_tol)
    if a.out:
        fm.write_json(K.to_dict(), output_path(a.out))
    _summary("koopman", method=a.method, size=K.size, residual=K.residual)


def cmd_spectrum(a):
    K = kp.KoopmanMatrix.from_json(a.matrix)
    spec = kp.spectrum(K)
    if a.out:
        spec.to_csv(output_path(a.out))
    lead = spec.eigenvalues[0] if spec.eigenvalues.size else 0j
    _summary("spectrum", count=len(spec.eigenvalues), leading_re=lead.real, leading_im=lead.imag,
             defective=int(spec.is_defective), nonnormality=kp.nonnormality(K))


def cmd_represent(a):
    system = fm.parse_system(a.system)
    dictionary = parse_dictionary(a.dict)
    G = _observable(a.observable, dictionary)
    x0 = fm.parse_vector(a.x0)
    box = fm.parse_box(a.box) if a.box else None
    rep = kp.represent(system, dictionary, G, x0, a.steps, dt=a.dt, box=box, max_step=a.max_step)
    if a.out:
        m = rep.y_original.shape[1]
        header = ["t"] + [f"y{i + 1}" for i in range(m)] + [f"k{i + 1}" for i in range(m)]
        rows = np.column_stack([rep.times, rep.y_original, rep.y_koopman])
        with open(output_path(a.out), "w") as fh:
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(fm.fmt(v) for v in r) + "\n")
    _summary("represent", steps=a.steps, discrepancy=rep.discrepancy)


def _sampling_from_args(a, K):
    points = []
    if a.x0_list:
        points.extend(fm.read_points(a.x0_list))
    for s in a.x0 or []:
        points.append(fm.parse_vector(s))
    if not points:
        raise UsageError("give at least one --x0 or an --x0-list file")
    if K.dictionary is None:
        raise UsageError("the matrix file has no dict_spec; sampling operators need a dictionary")
    return ident.sampling_operator(K.dictionary, np.array(points))


def cmd_observability(a):
    K = kp.KoopmanMatrix.from_json(a.matrix)
    S = _sampling_from_args(a, K)
    rep = ident.unobservable_subspace(K, S, a.tol)
    if a.out:
        doc = rep.to_dict()
        doc["points"] = S.points
        fm.write_json(doc, output_path(a.out))
    _summary("observability", points=S.rows, unobservable_dimension=rep.unobservable_dimension)


def cmd_kalman(a):
    K = kp.KoopmanMatrix.from_json(a.matrix)
    S = _sampling_from_args(a, K)
    dec = ident.kalman_decompose(K, S, a.tol)
    idr = ident.identifiability_report(K, S, a.tol)
    if a.out:
        fm.write_json({
            "transform": dec.transform, "K_o": dec.K_o, "K_no": dec.K_no, "K_no_o": dec.K_no_o,
            "C_o": dec.C_o, "upper_right_residual": dec.upper_right_residual,
            "C_no_residual": dec.C_no_residual, "observable_pair": dec.observable_pair,
            "identifiability": idr.to_dict(), "tol": a.tol,
        }, output_path(a.out))
    _summary("kalman", observable_dimension=dec.observable_dimension,
             upper_right_residual=dec.upper_right_residual, recoverable_percent=idr.recoverable_percent)


def cmd_gramian(a):
    A = fm.parse_matrix(a.A)
    C = fm.parse_matrix(a.C) if a.C else np.eye(A.shape[0])
    sys_ = la.LinearSystem(A, C)
    x0 = fm.parse_vector(a.x0) if a.x0 else None
    R = fm.parse_matrix(a.R) if a.R else None
    if (x0 is None) == (R is None):
        raise UsageError("give exactly one of --x0 or --R")
    pair = la.grammians(sys_, x0=x0, R=R)
    doc = {"W": pair.W, "W_K": pair.W_K, "source": pair.source,
           "lyapunov_residuals": list(pair.lyapunov_residuals)}
    summary = {"source": pair.source, "trace_W": float(np.trace(pair.W)),
               "trace_W_K": float(np.trace(pair.W_K))}
    if x0 is not None:
        e = la.energy_identity(sys_, x0)
        doc["energy"] = {"direct": e.lhs, "via_W": e.via_W, "via_W_K": e.via_W_K,
                         "max_discrepancy": e.max_discrepancy}
        summary["energy"] = e.lhs
    if a.q:
        doc["optimal_outputs"] = la.optimal_outputs(A, R if R is not None else np.eye(A.shape[0]), a.q)
    if a.out:
        fm.write_json(doc, output_path(a.out))
    _summary("gramian", **summary)


def cmd_optimal_outputs(a):
    A = fm.parse_matrix(a.A)
    R = fm.parse_matrix(a.R) if a.R else np.eye(A.shape[0])
    C = la.optimal_outputs(A, R, a.q)
    if a.out:
        fm.write_matrix_csv(C, output_path(a.out))
    WK = la.koopman_grammian(la.LinearSystem(A, np.eye(A.shape[0])), R=R)
    _summary("optimal-outputs", q=a.q, captured_energy=float(np.trace(C @ WK @ C.T)))


def _grid_args(a):
    box = fm.parse_box(a.box)
    shape = fm.parse_grid(a.grid)
    if len(shape) == 1 and box.shape[0] > 1:
        shape = shape * box.shape[0]
    return box, shape


def cmd_transport(a):
    system = fm.parse_system(a.system)
    box, shape = _grid_args(a)
    phi = fm.density_grid(a.density, box, shape)
    if a.method == "sl":
        out = tr.transport_flow(phi, system, a.t, a.dt or dyn.DEFAULT_DT)
    else:
        dt = a.dt if a.dt is not None else 0.5 * tr.max_stable_dt(phi, system, 0.9)
        steps = max(1, math.ceil(a.t / dt - 1e-9)) if a.t > 0 else 0
        out = tr.transport_pde_step(phi, system, a.t / steps if steps else dt, steps)
    if a.out:
        out.to_text(output_path(a.out))
    _summary("transport", method=a.method, mass_before=phi.total_mass, mass_after=out.total_mass)


def cmd_adjoint_check(a):
    system = fm.parse_system(a.system)
    box, shape = _grid_args(a)
    phi = fm.density_grid(a.phi, box, shape)
    psi = fm.density_function(a.psi)
    rep = tr.adjoint_check(system, phi, psi, a.t, a.dt)
    if a.out:
        fm.write_json({"lhs": rep.lhs, "rhs": rep.rhs, "abs_error": rep.abs_error,
                       "rel_error": rep.rel_error, "quadrature": rep.quadrature,
                       "warnings": list(rep.warnings)}, output_path(a.out))
    _summary("adjoint-check", lhs=rep.lhs, rhs=rep.rhs, rel_error=rep.rel_error)


def cmd_unitarity(a):
    system = fm.parse_system(a.system)
    box, shape = _grid_args(a)
    phi = fm.density_grid(a.density, box, shape)
    rep = tr.unitarity_check(system, phi, a.t, a.dt)
    if a.out:
        fm.write_json({"ratio": rep.ratio, "norm_before": rep.norm_before,
                       "norm_after": rep.norm_after, "warnings": list(rep.warnings)},
                      output_path(a.out))
    _summary("unitarity", ratio=rep.ratio)


def cmd_pipeline(a):
    with open(a.config) as fh:
        doc = yaml.safe_load(fh) or {}
    manifest = run_pipeline(doc)
    path = output_path(a.manifest or doc.get("manifest", "manifest.json"))
    fm.write_json(manifest, path)
    failed = [s["name"] for s in manifest["steps"] if s["exit_code"] != 0]
    _summary("pipeline", steps=len(manifest["steps"]), failed=",".join(failed) or "none")
    if failed:
        return max(s["exit_code"] for s in manifest["steps"])


# -- parser ------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="kooprep", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"kooprep {__version__}")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--seed", type=int, default=0, help="seed for every random choice")
        sp.add_argument("--out", help="output file (relative to $%s)" % OUTPUT_DIR_ENV)
        return sp

    sp = add("simulate", cmd_simulate, "simulate a catalog system and write a trajectory CSV")
    sp.add_argument("--system", required=True, help="e.g. logistic:r=3.5")
    sp.add_argument("--x0", required=True, help="initial condition, e.g. 1,0")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--dt", type=float, help="sampling step for continuous systems")
    sp.add_argument("--max-step", type=float, default=dyn.DEFAULT_DT, help="RK4 step bound")
    sp.add_argument("--observable", help="observable JSON file")

    sp = add("koopman", cmd_koopman, "build a Koopman matrix (exact, edmd or generator)")
    sp.add_argument("--method", choices=["exact", "edmd", "generator"], default="exact")
    sp.add_argument("--system")
    sp.add_argument("--dict", required=True, help="e.g. monomials:n=2,d=3")
    sp.add_argument("--t", type=float, default=1.0, help="flow time (discrete: steps)")
    sp.add_argument("--dt", type=float, default=dyn.DEFAULT_DT, help="RK4 step")
    sp.add_argument("--box", help="sample box, e.g. -1:1,-1:1")
    sp.add_argument("--samples", type=int, help="number of sample points (default 10 D)")
    sp.add_argument("--sampling", choices=["halton", "random"], default="halton")
    sp.add_argument("--rank-tol", type=float, default=kp.DEFAULT_RANK_TOL)
    sp.add_argument("--data", nargs="+", action="extend", help="trajectory CSV files (edmd)")
    sp.add_argument("--x0", action="append", help="initial condition to simulate (edmd)")
    sp.add_argument("--x0-list", help="CSV of initial conditions to simulate (edmd)")
    sp.add_argument("--steps", type=int, help="trajectory length when simulating (edmd)")

    sp = add("spectrum", cmd_spectrum, "eigenvalues of a Koopman matrix as re,im,defective_flag CSV")
    sp.add_argument("--matrix", required=True)

    sp = add("represent", cmd_represent, "compare original and Koopman outputs")
    sp.add_argument("--system", required=True)
    sp.add_argument("--dict", required=True)
    sp.add_argument("--observable", default="identity", help="observable JSON or 'identity'")
    sp.add_argument("--x0", required=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--box")
    sp.add_argument("--max-step", type=float, default=dyn.DEFAULT_DT)

    for name, func, help_ in (
        ("observability", cmd_observability, "unobservable subspace for sampled initial conditions"),
        ("kalman", cmd_kalman, "Kalman observable decomposition and identifiability"),
    ):
        sp = add(name, func, help_)
        sp.add_argument("--matrix", required=True)
        sp.add_argument("--x0", action="append", help="sampling point (repeatable; stacks experiments)")
        sp.add_argument("--x0-list", help="CSV file, one initial condition per row")
        sp.add_argument("--tol", type=float, default=ident.DEFAULT_TOL)

    sp = add("gramian", cmd_gramian, "observability and Koopman Grammians of a linear system")
    sp.add_argument("--A", required=True)
    sp.add_argument("--C")
    sp.add_argument("--x0")
    sp.add_argument("--R")
    sp.add_argument("--q", type=int)

    sp = add("optimal-outputs", cmd_optimal_outputs, "covariance-optimal output rows")
    sp.add_argument("--A", required=True)
    sp.add_argument("--R")
    sp.add_argument("--q", type=int, required=True)

    for name, func, help_, dens in (
        ("transport", cmd_transport, "propagate a density on a grid", "--density"),
        ("unitarity", cmd_unitarity, "L2 norm ratio under a divergence-free flow", "--density"),
        ("adjoint-check", cmd_adjoint_check, "compare <phi, K_t psi> with <T_t phi, psi>", "--phi"),
    ):
        sp = add(name, func, help_)
        sp.add_argument("--system", required=True)
        sp.add_argument(dens, required=True, help="e.g. gauss:c=0,0;s=0.5")
        sp.add_argument("--grid", required=True, help="e.g. 256x256")
        sp.add_argument("--box", required=True, help="e.g. -4:4,-4:4")
        sp.add_argument("--t", type=float, required=True)
        if name == "transport":
            sp.add_argument("--method", choices=["sl", "pde"], default="sl")
            sp.add_argument("--dt", type=float)
        else:
            sp.add_argument("--dt", type=float, default=dyn.DEFAULT_DT)
        if name == "adjoint-check":
            sp.add_argument("--psi", required=True)

    sp = add("pipeline", cmd_pipeline, "run a YAML pipeline of subcommands")
    sp.add_argument("--config", required=True)
    sp.add_argument("--manifest")
    return p


SUBCOMMANDS = (
    "simulate", "koopman", "spectrum", "represent", "observability", "kalman", "gramian",
    "optimal-outputs", "transport", "adjoint-check", "unitarity", "pipeline",
)


def _error(exc, code, **extra):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    doc.update(extra)
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def _join_negative_values(argv):
    # "--box -4:4" would otherwise read -4:4 as an option
    out = []
    for tok in argv:
        if (out and out[-1].startswith("--") and "=" not in out[-1]
                and len(tok) > 1 and tok[0] == "-" and (tok[1].isdigit() or tok[1] == ".")):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None):
    """Parse ``argv`` and run one subcommand. Returns the exit status."""
    parser = build_parser()
    argv = _join_negative_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        if getattr(args, "dt", None) is not None and args.dt <= 0:
            raise UsageError("--dt must be positive")
        for name in ("tol", "rank_tol"):
            if getattr(args, name, None) is not None and getattr(args, name) <= 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        return args.func(args) or 0
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        return _error(exc, 1, valid_subcommands=list(SUBCOMMANDS))
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _error(exc, 2)
    except (KoopRepError, ValueError, KeyError, OSError, TypeError) as exc:
        return _error(exc, 1)


def console():
    sys.exit(main())


# -- pipelines -----------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """One CLI invocation as data: keys map one-to-one onto flags."""

    subcommand: str
    options: dict = field(default_factory=dict)
    seed: int = 0

    def to_argv(self):
        argv = [self.subcommand, "--seed", str(self.seed)]
        for key, value in self.options.items():
            flag = "--" + key.replace("_", "-")
            values = value if isinstance(value, list) else [value]
            for v in values:
                argv.append(f"{flag}={_flag_value(v)}")
        return argv


def _flag_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fm.fmt(v)
    return str(v)


def run(config: ExperimentConfig) -> int:
    return main(config.to_argv())


class PipelineError(UsageError):
    pass


def _references(value):
    values = value if isinstance(value, list) else [value]
    return [v[1:] for v in values if isinstance(v, str) and v.startswith("@")]


def validate_pipeline(doc):
    """Check names, references and ordering; return the list of steps."""
    steps = doc.get("steps") or []
    if not isinstance(steps, list):
        raise PipelineError("'steps' must be a list")
    names = []
    for i, st in enumerate(steps):
        if not isinstance(st, dict) or "name" not in st or "command" not in st:
            raise PipelineError(f"step {i + 1}: every step needs 'name' and 'command'")
        if st["command"] not in SUBCOMMANDS or st["command"] == "pipeline":
            raise PipelineError(f"step {st['name']!r}: unknown command {st['command']!r}")
        if st["name"] in names:
            raise PipelineError(f"duplicate step name {st['name']!r}")
        names.append(st["name"])
    deps = {}
    for st in steps:
        refs = []
        for key, value in st.items():
            if key in ("name", "command"):
                continue
            for ref in _references(value):
                if ref not in names:
                    raise PipelineError(f"step {st['name']!r}: {key} refers to unknown step {ref!r}")
                refs.append(ref)
        deps[st["name"]] = refs
    try:
        graphlib.TopologicalSorter(deps).prepare()
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise PipelineError("cyclic dependency: " + " -> ".join(cycle)) from None
    position = {n: i for i, n in enumerate(names)}
    for name, refs in deps.items():
        for ref in refs:
            if position[ref] > position[name]:
                raise PipelineError(f"step {name!r} depends on later step {ref!r}")
    for st in steps:
        for ref in deps[st["name"]]:
            if "out" not in next(s for s in steps if s["name"] == ref):
                raise PipelineError(f"step {st['name']!r} uses {ref!r}, which declares no 'out'")
    return steps


def run_pipeline(doc):
    """Validate then execute the steps in order; returns the manifest dict."""
    steps = validate_pipeline(doc)
    seed = int(doc.get("seed", 0))
    produced = {}
    manifest = {"version": __version__, "seed": seed, "steps": []}
    for st in steps:
        opts, shown, inputs = {}, {}, []
        for key, value in st.items():
            if key in ("name", "command", "seed"):
                continue
            values = value if isinstance(value, list) else [value]
            resolved, declared = [], []
            for v in values:
                if isinstance(v, str) and v.startswith("@"):
                    inputs.append(str(produced[v[1:]]))
                    declared.append(str(produced[v[1:]]))
                    resolved.append(output_path(str(produced[v[1:]])))
                else:
                    declared.append(v)
                    resolved.append(v)
            opts[key] = resolved if isinstance(value, list) else resolved[0]
            shown[key] = declared if isinstance(value, list) else declared[0]
        step_seed = int(st.get("seed", seed))
        code = run(ExperimentConfig(st["command"], opts, step_seed))
        if "out" in st:
            produced[st["name"]] = st["out"]
        # paths in the manifest are relative to the output directory
        manifest["steps"].append({
            "name": st["name"],
            "command": st["command"],
            "argv": ExperimentConfig(st["command"], shown, step_seed).to_argv(),
            "inputs": inputs,
            "outputs": [str(st["out"])] if "out" in st else [],
            "seed": step_seed,
            "exit_code": code,
        })
        if code != 0:
            break
    return manifest


if __name__ == "__main__":
    console()
