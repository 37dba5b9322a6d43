"""Experiment driver.

A run is described by a flat ``key = value`` file with dotted section
prefixes::

    command = convergence
    problem.case = M1
    discretisation.levels = 4, 8, 16, 32
    output.path = m1
    output.format = csv

``gdm run.cfg`` writes the report and exits 0 on success, 1 on a usage
or configuration error and 2 when a solver fails to converge.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .analysis import (compute_errors, convergence_study, coercivity_constants, flux_probe,
                       self_convergence, verify_error_bounds)
from .discretisation import Kind, build_gd, compute_indicators
from .linalg import ConvergenceError
from .mesh import build_unit_square
from .problem import (BCKind, BoundaryCondition, ProblemSpec, constant_boundary,
                      constant_scalar, constant_tensor, get_case, manufactured_catalog,
                      zero_vector)
from .scheme import DivergenceError, SolverConfig, nonlinear_residual, solve_scheme

COMMANDS = ("solve", "indicators", "convergence", "verify-bounds", "selftest")
FORMATS = ("csv", "json")
DEFAULT_LEVELS = (4, 8, 16, 32)

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2


class ConfigError(ValueError):
    """Invalid configuration; names the offending key and its line (0 if absent)."""

    def __init__(self, key: str, line: int, msg: str):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{key}: {msg}")
        self.key = key
        self.line = line


class NotConverged(RuntimeError):
    pass


# ----------------------------------------------------------------------
# named data fields

PI = np.pi
SCALAR_FIELDS: dict[str, Callable] = {
    "zero": lambda x, y: np.zeros(np.shape(x)),
    "one": lambda x, y: np.ones(np.shape(x)),
    "x": lambda x, y: np.asarray(x, dtype=float) + 0.0,
    "y": lambda x, y: np.asarray(y, dtype=float) + 0.0,
    "sin_sin": lambda x, y: np.sin(PI * x) * np.sin(PI * y),
    "cos_cos": lambda x, y: np.cos(PI * x) * np.cos(PI * y),
}
VECTOR_FIELDS: dict[str, Callable] = {
    "zero": zero_vector,
    "xy_x": lambda x, y: np.stack([x * y, np.zeros(np.shape(x))], axis=-1),
    "sin_y": lambda x, y: np.stack([np.sin(PI * y), np.zeros(np.shape(y))], axis=-1),
}


def _number(text: str) -> Optional[float]:
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def scalar_field(name: str) -> Callable:
    v = _number(name)
    return constant_scalar(v) if v is not None else SCALAR_FIELDS[name]


def vector_field(name: str) -> Callable:
    if name in VECTOR_FIELDS:
        return VECTOR_FIELDS[name]
    a, b = (float(t) for t in name.split(","))
    return lambda x, y: np.broadcast_to(np.array([a, b]), np.shape(x) + (2,)).copy()


def boundary_field(name: str) -> Callable:
    v = _number(name)
    if v is not None:
        return constant_boundary(v)
    f = SCALAR_FIELDS[name]
    return lambda x, y, nx, ny: f(x, y)


# ----------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ProblemConfig:
    bc: str = "dirichlet"
    p: float = 2.0
    lam: Optional[tuple] = (1.0,)
    case: Optional[str] = None
    r: Optional[str] = "one"
    F: Optional[str] = "zero"
    g: Optional[str] = "zero"
    b: Optional[float] = 1.0
    regularization: float = 1e-8


@dataclass(frozen=True)
class DiscretisationConfig:
    kind: str = "p1"
    n: int = 8
    levels: Optional[tuple] = None


@dataclass(frozen=True)
class SolverSection:
    tol: float = 1e-12
    max_iter: Optional[int] = None
    nonlinear_tol: float = 1e-11
    nonlinear_max_iter: int = 200
    theta: Optional[float] = None


@dataclass(frozen=True)
class OutputConfig:
    path: str = "-"
    format: str = "json"
    precision: int = 17


@dataclass(frozen=True)
class RunConfig:
    command: str = "solve"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    discretisation: DiscretisationConfig = field(default_factory=DiscretisationConfig)
    solver: SolverSection = field(default_factory=SolverSection)
    output: OutputConfig = field(default_factory=OutputConfig)
    threads: int = 1
    seed: int = 0

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(tol=s.tol, max_iter=s.max_iter, nonlinear_tol=s.nonlinear_tol,
                            nonlinear_max_iter=s.nonlinear_max_iter, theta=s.theta)

    def items(self) -> list[tuple[str, object]]:
        """Resolved ``(dotted key, value)`` pairs; unused keys are omitted."""
        out = [("command", self.command)]
        for key, (section, attr, _, fmt) in KEYS.items():
            if section is None:
                continue
            v = getattr(getattr(self, section), attr)
            if v is not None or fmt is _fmt_auto:
                out.append((key, fmt(v)))
        out += [("threads", self.threads), ("seed", self.seed)]
        return out

    def to_dict(self) -> dict:
        return dict(self.items())

    def to_text(self) -> str:
        return "".join(f"{k} = {_text(v)}\n" for k, v in self.items())


def _text(v) -> str:
    if isinstance(v, list):
        return ", ".join(_text(t) for t in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fmt_plain(v):
    return v


def _fmt_list(v):
    return list(v)


def _fmt_auto(v):
    return "auto" if v is None else v


# value parsers: raise ValueError with a short message

def _p_float(s):
    v = _number(s)
    if v is None:
        raise ValueError(f"expected a finite number, got {s!r}")
    return v


def _p_positive(s):
    v = _p_float(s)
    if v <= 0:
        raise ValueError("must be positive")
    return v


def _p_int(s, lo=1):
    try:
        v = int(s)
    except ValueError:
        raise ValueError(f"expected an integer, got {s!r}") from None
    if v < lo:
        raise ValueError(f"must be >= {lo}")
    return v


def _p_choice(options):
    def parse(s):
        s = s.lower()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


def _p_p(s):
    v = _p_float(s)
    if not v > 1:
        raise ValueError("exponent p must lie in (1, inf)")
    return v


def _lambda_value(vals):
    if len(vals) == 1:
        return vals[0]
    return np.reshape(vals, (2, 2)) if len(vals) == 4 else np.asarray(vals)


def _p_lambda(s):
    vals = tuple(_p_float(t) for t in s.replace(";", ",").split(","))
    if len(vals) not in (1, 2, 4):
        raise ValueError("expected a scalar, a diagonal pair or four 2x2 entries")
    m = constant_tensor(_lambda_value(vals)).constant
    if not np.allclose(m, m.T, rtol=0, atol=1e-14 * np.abs(m).max()):
        raise ValueError("tensor must be symmetric")
    if np.linalg.eigvalsh(m)[0] <= 0:
        raise ValueError("tensor must be positive definite")
    return vals


def _p_scalar_field(s):
    if _number(s) is not None:
        return repr(float(s))
    if s not in SCALAR_FIELDS:
        raise ValueError(f"unknown field {s!r}; use a number or one of {', '.join(SCALAR_FIELDS)}")
    return s


def _p_vector_field(s):
    if s in VECTOR_FIELDS:
        return s
    parts = s.split(",")
    if len(parts) == 2 and all(_number(t) is not None for t in parts):
        return ",".join(repr(float(t)) for t in parts)
    raise ValueError(f"unknown vector field {s!r}; use 'a, b' or one of {', '.join(VECTOR_FIELDS)}")


def _p_case(s):
    names = [c.name for c in manufactured_catalog()]
    if s.upper() not in names:
        raise ValueError(f"unknown case {s!r}; available: {', '.join(names)}")
    return s.upper()


def _p_levels(s):
    vals = tuple(_p_int(t) for t in s.split(","))
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValueError("levels must be strictly increasing")
    return vals


def _p_auto(inner):
    def parse(s):
        return None if s.lower() == "auto" else inner(s)
    return parse


def _p_theta(s):
    v = _p_float(s)
    if not 0 < v <= 1:
        raise ValueError("damping must lie in (0, 1]")
    return v


def _p_nonneg(s):
    v = _p_float(s)
    if v < 0:
        raise ValueError("must be nonnegative")
    return v


#: dotted key -> (section, attribute, parser, echo formatter)
KEYS = {
    "command": (None, "command", _p_choice(COMMANDS), _fmt_plain),
    "problem.bc": ("problem", "bc", _p_choice([k.value for k in BCKind]), _fmt_plain),
    "problem.p": ("problem", "p", _p_p, _fmt_plain),
    "problem.lambda": ("problem", "lam", _p_lambda, _fmt_list),
    "problem.case": ("problem", "case", _p_case, _fmt_plain),
    "problem.r": ("problem", "r", _p_scalar_field, _fmt_plain),
    "problem.F": ("problem", "F", _p_vector_field, _fmt_plain),
    "problem.g": ("problem", "g", _p_scalar_field, _fmt_plain),
    "problem.b": ("problem", "b", _p_positive, _fmt_plain),
    "problem.regularization": ("problem", "regularization", _p_nonneg, _fmt_plain),
    "discretisation.kind": ("discretisation", "kind", _p_choice([k.value for k in Kind]), _fmt_plain),
    "discretisation.n": ("discretisation", "n", _p_int, _fmt_plain),
    "discretisation.levels": ("discretisation", "levels", _p_levels, _fmt_list),
    "solver.tol": ("solver", "tol", _p_positive, _fmt_plain),
    "solver.max_iter": ("solver", "max_iter", _p_auto(_p_int), _fmt_auto),
    "solver.nonlinear_tol": ("solver", "nonlinear_tol", _p_positive, _fmt_plain),
    "solver.nonlinear_max_iter": ("solver", "nonlinear_max_iter", _p_int, _fmt_plain),
    "solver.theta": ("solver", "theta", _p_auto(_p_theta), _fmt_auto),
    "output.path": ("output", "path", str, _fmt_plain),
    "output.format": ("output", "format", _p_choice(FORMATS), _fmt_plain),
    "output.precision": ("output", "precision", _p_int, _fmt_plain),
    "threads": (None, "threads", _p_int, _fmt_plain),
    "seed": (None, "seed", lambda s: _p_int(s, lo=0), _fmt_plain),
}
_CASE_EXCLUSIVE = ("problem.lambda", "problem.r", "problem.F", "problem.g", "problem.b")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration.

    Lines are ``key = value``; blank lines and ``#`` comments are ignored.
    Unknown or repeated keys, malformed values and inconsistent
    combinations raise :class:`ConfigError` naming the key and line.
    """
    raw: dict[str, tuple[object, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line.split()[0], lineno, "expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(key, lineno, "unknown key")
        if key in raw:
            raise ConfigError(key, lineno, f"repeated key (first set on line {raw[key][1]})")
        try:
            raw[key] = (KEYS[key][2](value), lineno)
        except ValueError as exc:
            raise ConfigError(key, lineno, str(exc)) from None
    return _resolve(raw)


def _resolve(raw: dict) -> RunConfig:
    def line(key):
        return raw[key][1] if key in raw else 0

    def section(name, cls, extra=None):
        kw = {a: raw[k][0] for k, (sec, a, _, _) in KEYS.items() if sec == name and k in raw}
        kw.update(extra or {})
        return cls(**kw)

    if "command" not in raw:
        raise ConfigError("command", 0, "missing required key")
    command = raw["command"][0]
    extra = {}
    if "problem.case" in raw:
        case = get_case(raw["problem.case"][0])
        for k in _CASE_EXCLUSIVE:
            if k in raw:
                raise ConfigError(k, line(k), "cannot be combined with problem.case")
        if "problem.bc" in raw and raw["problem.bc"][0] != case.bc_kind.value:
            raise ConfigError("problem.bc", line("problem.bc"),
                              f"case {case.name} uses {case.bc_kind.value} conditions")
        if case.has_exact and "problem.p" in raw and raw["problem.p"][0] != case.p:
            raise ConfigError("problem.p", line("problem.p"),
                              f"case {case.name} has an exact solution only for p = {case.p:g}")
        extra = dict(bc=case.bc_kind.value, p=raw.get("problem.p", (case.p,))[0],
                     lam=None, r=None, F=None, g=None, b=None)
    problem = section("problem", ProblemConfig, extra)
    if problem.case is None:
        uses_g = problem.bc in ("neumann_nonhomogeneous", "fourier")
        for key, used in (("problem.g", uses_g), ("problem.b", problem.bc == "fourier")):
            if key in raw and not used:
                raise ConfigError(key, line(key), f"not used with {problem.bc} conditions")
        problem = replace(problem, g=problem.g if uses_g else None,
                          b=problem.b if problem.bc == "fourier" else None)
    disc = section("discretisation", DiscretisationConfig)
    if disc.kind == "cr" and problem.bc != "dirichlet":
        key = "discretisation.kind"
        raise ConfigError(key, line(key), f"crouzeix-raviart is unsupported with {problem.bc} conditions")

    case = get_case(problem.case) if problem.case else None
    if command in ("convergence", "verify-bounds") and case is None:
        raise ConfigError("problem.case", 0, f"required by command {command}")
    if command in ("indicators", "verify-bounds") and problem.p != 2:
        raise ConfigError("problem.p", line("problem.p"), f"command {command} needs p = 2")
    if command == "verify-bounds" and not case.has_exact:
        raise ConfigError("problem.case", line("problem.case"),
                          f"case {case.name} has no exact solution")
    if command == "convergence":
        if disc.levels is None:
            disc = replace(disc, levels=DEFAULT_LEVELS)
        if len(disc.levels) < 3:
            raise ConfigError("discretisation.levels", line("discretisation.levels"),
                              "at least 3 levels are needed to fit rates")
        if not case.has_exact and any(b != 2 * a for a, b in zip(disc.levels, disc.levels[1:])):
            raise ConfigError("discretisation.levels", line("discretisation.levels"),
                              "self-convergence needs levels that double")
    kw = {k: raw[k][0] for k in ("threads", "seed") if k in raw}
    return RunConfig(command=command, problem=problem, discretisation=disc,
                     solver=section("solver", SolverSection),
                     output=section("output", OutputConfig), **kw)


def default_config() -> RunConfig:
    return parse_config("command = solve\n")


def default_config_text() -> str:
    return default_config().to_text()


# ----------------------------------------------------------------------
# building the problem

def build_problem(cfg: RunConfig):
    """``(ProblemSpec, ManufacturedCase or None)`` described by the config."""
    pc = cfg.problem
    if pc.case:
        case = get_case(pc.case)
        return case.problem(p=pc.p, regularization_eps=pc.regularization), case
    kind = BCKind(pc.bc)
    if kind is BCKind.DIRICHLET:
        bc = BoundaryCondition.dirichlet()
    elif kind is BCKind.NEUMANN:
        bc = BoundaryCondition(BCKind.NEUMANN)
    elif kind is BCKind.NEUMANN_NONHOMOGENEOUS:
        bc = BoundaryCondition(kind, g=boundary_field(pc.g))
    else:
        bc = BoundaryCondition.fourier(pc.b, g=boundary_field(pc.g))
    spec = ProblemSpec(bc, p=pc.p, lam=constant_tensor(_lambda_value(pc.lam)), r=scalar_field(pc.r),
                       F=vector_field(pc.F), regularization_eps=pc.regularization)
    return spec, None


def _mesh_gd(cfg: RunConfig, spec: ProblemSpec, n: int):
    return build_gd(build_unit_square(n), spec.bc, cfg.discretisation.kind)


def _dof_points(gd) -> np.ndarray:
    m = gd.mesh
    src = m.vertices if gd.kind is Kind.P1 else m.edge_midpoints
    return src[gd.dof_entities]


# ----------------------------------------------------------------------
# commands; each returns (results dict, csv rows or None)

def cmd_solve(cfg: RunConfig):
    spec, case = build_problem(cfg)
    gd = _mesh_gd(cfg, spec, cfg.discretisation.n)
    res = solve_scheme(gd, spec, cfg.solver_config())
    out = {"n": cfg.discretisation.n, "h_max": gd.mesh.h_max, "n_dofs": gd.n_dofs,
           "converged": res.converged, "linear_iterations": int(sum(res.iterations)),
           "nonlinear_iterations": res.nonlinear_iterations,
           "theta": res.theta, "nonlinear_residual": nonlinear_residual(gd, spec, res.u),
           "integral": res.u.integral()}
    if case is not None and case.has_exact:
        rec = compute_errors(gd, spec, res.u, case, indicators=False)
        out["err_fun"], out["err_grad"] = rec.err_fun, rec.err_grad
    pts = _dof_points(gd)
    rows = [("x", "y", "value")] + [(x, y, v) for (x, y), v in zip(pts, res.u.coeffs)]
    if not res.converged:
        raise NotConverged("solver did not converge", out)
    return out, rows


def cmd_indicators(cfg: RunConfig):
    spec, case = build_problem(cfg)
    if case is not None and case.has_exact:
        sd = {"exact": (case.exact_u, case.exact_grad)}
    else:
        sd = {"sin_sin": (SCALAR_FIELDS["sin_sin"],
                          lambda x, y: PI * np.stack([np.cos(PI * x) * np.sin(PI * y),
                                                      np.sin(PI * x) * np.cos(PI * y)], -1))}
    levels = cfg.discretisation.levels or (cfg.discretisation.n,)
    reports = []
    for n in levels:
        gd = _mesh_gd(cfg, spec, n)
        wd = {"sin_y": (VECTOR_FIELDS["sin_y"], lambda x, y: np.zeros(np.shape(x)))}
        if case is not None and case.has_exact:
            wd = {"flux": flux_probe(spec, case, gd.mesh)}
        rep = compute_indicators(gd, spec, sd, wd).to_dict()
        rep["n"] = n
        reports.append(rep)
    s_names, w_names = list(reports[0]["s_d"]), list(reports[0]["w_d"])
    rows = [("n", "h", "n_dofs", "c_d") + tuple(f"s_d:{k}" for k in s_names) +
            tuple(f"w_d:{k}" for k in w_names)]
    for r in reports:
        rows.append((r["n"], r["h_max"], r["n_dofs"], r["c_d"]) +
                    tuple(r["s_d"][k] for k in s_names) + tuple(r["w_d"][k] for k in w_names))
    return {"levels": reports}, rows


def cmd_convergence(cfg: RunConfig):
    spec, case = build_problem(cfg)
    levels = cfg.discretisation.levels
    kind = cfg.discretisation.kind
    if case.has_exact:
        rep = convergence_study(case, kind, levels, cfg.solver_config(), spec=spec)
    else:
        rep = self_convergence(spec, kind, levels, cfg.solver_config())
    out = rep.to_dict()
    if rep.failed_level is not None:
        raise NotConverged(f"solver did not converge at n = {rep.failed_level}", out)
    return out, rep


def cmd_verify_bounds(cfg: RunConfig):
    spec, case = build_problem(cfg)
    gd = _mesh_gd(cfg, spec, cfg.discretisation.n)
    res = solve_scheme(gd, spec, cfg.solver_config())
    if not res.converged:
        raise NotConverged("solver did not converge", {})
    rec = compute_errors(gd, spec, res.u, case)
    alo, ahi = coercivity_constants(spec, gd.mesh)
    checks = verify_error_bounds(rec, alo, ahi)
    out = {"record": rec.to_dict(), "alpha_lo": alo, "alpha_hi": ahi,
           "checks": [c.to_dict() for c in checks],
           "all_satisfied": all(c.satisfied for c in checks)}
    rows = [("name", "lhs", "rhs", "satisfied", "slack")] + [
        (c.name, c.lhs, c.rhs, int(c.satisfied), c.slack) for c in checks]
    return out, rows


def cmd_selftest(cfg: RunConfig):
    from .selftest import run_selftest

    checks = run_selftest(seed=cfg.seed)
    out = {"checks": checks, "passed": all(c["passed"] for c in checks)}
    rows = [("name", "passed", "detail")] + [(c["name"], int(c["passed"]), c["detail"])
                                             for c in checks]
    if not out["passed"]:
        failed = ", ".join(c["name"] for c in checks if not c["passed"])
        raise SelftestFailure(f"self-test failed: {failed}", out)
    return out, rows


class SelftestFailure(RuntimeError):
    pass


COMMAND_FUNCS = {"solve": cmd_solve, "indicators": cmd_indicators,
                 "convergence": cmd_convergence, "verify-bounds": cmd_verify_bounds,
                 "selftest": cmd_selftest}


# ----------------------------------------------------------------------
# output

def _round(obj, precision: int):
    """Round floats to ``precision`` significant digits; non-finite as strings."""
    if isinstance(obj, dict):
        return {k: _round(v, precision) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v, precision) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return str(v)
        return float(f"{v:.{precision}g}")
    return obj


def _csv_text(rows, precision: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([f"{float(v):.{precision}g}" if isinstance(v, (float, np.floating)) else v
                    for v in row])
    return buf.getvalue()


def _document(cfg: Optional[RunConfig], results, error=None) -> dict:
    doc = {"config": cfg.to_dict() if cfg is not None else None,
           "results": results, "version": __version__}
    if error is not None:
        doc["error"] = error
    return doc


def _emit(cfg: RunConfig, doc: dict, table: Optional[str]) -> list[str]:
    prec = cfg.output.precision
    text = json.dumps(_round(doc, prec), indent=2, sort_keys=False) + "\n"
    path = cfg.output.path
    written = []
    if path == "-":
        sys.stdout.write(table if (cfg.output.format == "csv" and table) else text)
        return written
    target = Path(path)
    if cfg.output.format == "csv":
        if table is not None:
            csv_path = target if target.suffix == ".csv" else target.with_suffix(".csv")
            csv_path.write_text(table)
            written.append(str(csv_path))
        json_path = target.with_suffix(".json")
    else:
        json_path = target if target.suffix == ".json" else target.with_suffix(".json")
    json_path.write_text(text)
    written.append(str(json_path))
    return written


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration and write its outputs; return the exit code."""
    status, error, results, table = EXIT_OK, None, None, None
    try:
        results, table_src = COMMAND_FUNCS[cfg.command](cfg)
        if hasattr(table_src, "to_csv"):
            table = table_src.to_csv(cfg.output.precision)
        elif table_src is not None:
            table = _csv_text(table_src, cfg.output.precision)
    except (NotConverged, SelftestFailure) as exc:
        status = EXIT_NONCONVERGED if isinstance(exc, NotConverged) else EXIT_USAGE
        msg, results = exc.args
        error = {"type": type(exc).__name__, "message": msg}
    except (DivergenceError, ConvergenceError) as exc:
        status = EXIT_NONCONVERGED
        error = {"type": type(exc).__name__, "message": str(exc)}
    except (ValueError, KeyError) as exc:
        status = EXIT_USAGE
        error = {"type": type(exc).__name__, "message": str(exc)}
    try:
        _emit(cfg, _document(cfg, results, error), table if error is None else None)
    except OSError as exc:
        sys.stderr.write(f"gdm: cannot write output: {exc}\n")
        return EXIT_USAGE
    if error is not None:
        sys.stderr.write(f"gdm: {error['message']}\n")
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="gdm", description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", help="run configuration file")
    ap.add_argument("--print-defaults", action="store_true",
                    help="print the default configuration and exit")
    args = ap.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(default_config_text())
        return EXIT_OK
    if args.config is None:
        ap.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, ConfigError) as exc:
        err = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            err.update(key=exc.key, line=exc.line)
        sys.stdout.write(json.dumps(_document(None, None, err), indent=2) + "\n")
        sys.stderr.write(f"gdm: {exc}\n")
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
