"""Error measurement, a-priori bound verification and convergence studies.

For the linear problem (p = 2) the error of the scheme solution is
controlled from above and below by the consistency defect ``S_D`` of the
exact solution and the conformity defect ``W_D`` of the exact flux:

    ||G u - G_D u_D|| <= (W + (abar (1 + C_D) + alo) S) / alo
    ||u - P_D u_D||   <= (C_D W + (C_D (1 + C_D) abar + alo) S) / alo
    W <= abar ||G u - G_D u_D||
    S <= ||u - P_D u_D|| + ||G u - G_D u_D||

``alo``/``abar`` are the coercivity and continuity constants of the flux
and zero-order operators together. ``S_D`` is only known up to the
bracket ``s_quad <= S_D <= s_sum <= sqrt(2) s_quad`` (see
:class:`gdm.discretisation.ConsistencyResult`); upper bounds use
``s_sum`` and lower bounds ``s_quad`` so every check stays valid.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .discretisation import (DiscreteField, GradientDiscretisation, Kind, build_gd,
                             compute_CD, compute_SD, compute_WD)
from .mesh import Mesh, MeshError, build_unit_square, refine_uniform
from .problem import BCKind, ManufacturedCase, ProblemSpec, flux_operator
from .quadrature import triangle_rule
from .scheme import ContractError, SolverConfig, solve_scheme

ERROR_DEGREE = 4
ERROR_LINE_POINTS = 4
SQRT2 = math.sqrt(2.0)

#: stable CSV column order
CSV_COLUMNS = ("h", "n_dofs", "err_fun", "err_grad", "s_d", "w_d", "c_d",
               "bound_rhs_grad", "bound_rhs_fun", "sandwich_lo", "sandwich_hi", "bounds_ok")


@dataclass
class ErrorRecord:
    h_max: float
    n_dofs: int
    err_grad: float
    err_fun: float
    s_d: Optional[float] = None  # sum-of-norms value at the surrogate minimiser
    s_d_quad: Optional[float] = None
    w_d: Optional[float] = None
    c_d: Optional[float] = None
    alpha_lo: Optional[float] = None
    alpha_hi: Optional[float] = None
    bound_rhs_grad: Optional[float] = None
    bound_rhs_fun: Optional[float] = None
    sandwich_lo: Optional[float] = None
    sandwich_hi: Optional[float] = None

    @property
    def has_indicators(self) -> bool:
        return self.s_d is not None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    slack: float
    value: Optional[float] = None  # middle term of two-sided checks

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.value is None:
            d.pop("value")
        return d


@dataclass
class RateFit:
    slope: float
    intercept: float
    max_residual: float
    n_points: int
    exact: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConvergenceReport:
    records: list
    fitted_rates: dict = field(default_factory=dict)
    bound_checks: list = field(default_factory=list)  # one list of BoundCheck per level
    solver: list = field(default_factory=list)  # per-level solver summary
    failed_level: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        key = "h_max" if name == "h" else name
        return np.array([getattr(r, key) for r in self.records], dtype=float)

    def to_csv(self, precision: int = 17) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i, rec in enumerate(self.records):
            ok = ""
            if i < len(self.bound_checks) and self.bound_checks[i]:
                ok = str(int(all(c.satisfied for c in self.bound_checks[i])))
            row = [rec.h_max, rec.n_dofs, rec.err_fun, rec.err_grad, rec.s_d, rec.w_d,
                   rec.c_d, rec.bound_rhs_grad, rec.bound_rhs_fun, rec.sandwich_lo,
                   rec.sandwich_hi]
            w.writerow([_fmt(v, precision) for v in row] + [ok])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "records": [r.to_dict() for r in self.records],
            "fitted_rates": {k: v.to_dict() for k, v in self.fitted_rates.items()},
            "bound_checks": [[c.to_dict() for c in lvl] for lvl in self.bound_checks],
            "solver": self.solver,
            "failed_level": self.failed_level,
        }


def _fmt(v, precision):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.{precision}g}"


# ----------------------------------------------------------------------
# constants

def coercivity_constants(spec: ProblemSpec, mesh: Mesh) -> tuple[float, float]:
    """Lower/upper constants of flux and zero-order operators (p = 2).

    Flux part: extreme eigenvalues of Lambda. Zero-order part: ``|Omega|``
    for the Neumann mean term, ``[b_min, max b]`` for the Fourier term.
    """
    vq = mesh.volume_quadrature(triangle_rule(ERROR_DEGREE))
    lo, hi = spec.lambda_range(vq.points)
    if spec.bc.is_neumann:
        lo, hi = min(lo, mesh.area), max(hi, mesh.area)
    elif spec.bc.kind is BCKind.FOURIER:
        bq = mesh.boundary_quadrature(ERROR_LINE_POINTS)
        b = spec.bc.b(bq.x, bq.y, bq.nx, bq.ny)
        lo, hi = min(lo, spec.bc.b_min), max(hi, float(b.max()))
    return lo, hi


def equivalence_constants(alpha_lo: float, alpha_hi: float) -> tuple[float, float]:
    """Admissible constants of the two-sided error equivalence.

    With ``E = err_fun + err_grad``:

    * lower: ``W <= abar (err_grad + C_D err_fun) <= abar (1 + C_D) E`` and
      ``S <= E`` give ``S + W <= (1 + abar)(1 + C_D) E``, so
      ``c_lo = 1 / (1 + abar)``;
    * upper: summing the two upper bounds gives
      ``E <= ((1 + C_D) W + (abar (1 + C_D)^2 + 2 alo) S) / alo``
      ``<= (1 + C_D)^2 max(1, abar + 2 alo) / alo (S + W)``.
    """
    return 1.0 / (1.0 + alpha_hi), max(1.0, alpha_hi + 2.0 * alpha_lo) / alpha_lo


def _bound_values(rec: ErrorRecord, alo: float, ahi: float) -> dict:
    S, Sq, W, C = rec.s_d, rec.s_d_quad, rec.w_d, rec.c_d
    c_lo, c_hi = equivalence_constants(alo, ahi)
    return {
        "bound_rhs_grad": (W + (ahi * (1 + C) + alo) * S) / alo,
        "bound_rhs_fun": (C * W + (C * (1 + C) * ahi + alo) * S) / alo,
        "sandwich_lo": c_lo / (1 + C) * (Sq + W),
        "sandwich_hi": c_hi * (1 + C) ** 2 * (S + W),
    }


def verify_error_bounds(rec: ErrorRecord, alpha_lo: float, alpha_hi: float) -> list[BoundCheck]:
    """Evaluate the five a-priori inequalities on one record."""
    if not rec.has_indicators:
        raise ContractError("record carries no indicators (reference-mode errors)")
    b = _bound_values(rec, alpha_lo, alpha_hi)
    E = rec.err_fun + rec.err_grad

    def check(name, lhs, rhs):
        return BoundCheck(name, float(lhs), float(rhs), bool(lhs <= rhs), float(rhs - lhs))

    lo, hi = b["sandwich_lo"], b["sandwich_hi"]
    return [
        check("grad_error_upper", rec.err_grad, b["bound_rhs_grad"]),
        check("fun_error_upper", rec.err_fun, b["bound_rhs_fun"]),
        check("conformity_lower", rec.w_d, alpha_hi * rec.err_grad),
        check("consistency_lower", rec.s_d, SQRT2 * E + 1e-10),
        BoundCheck("error_equivalence", float(lo), float(hi), bool(lo <= E <= hi),
                   float(min(E - lo, hi - E)), value=float(E)),
    ]


# ----------------------------------------------------------------------
# errors

def flux_probe(spec: ProblemSpec, case: ManufacturedCase, mesh: Mesh):
    """``psi = a(G u) + F`` of the exact solution and its volume divergence.

    From the strong form, ``div psi = a(u) - r`` in the volume; the normal
    trace is taken from ``psi`` itself.
    """
    shift = 0.0
    if spec.bc.is_neumann:
        vq = mesh.volume_quadrature(triangle_rule(12))
        shift = float(np.dot(vq.w, case.exact_u(vq.x, vq.y)))

    def psi(x, y):
        pts = np.stack([x, y], axis=-1)
        return flux_operator(spec, pts, case.exact_grad(x, y)) + spec.F(x, y)

    def div_psi(x, y):
        return shift - spec.r(x, y)

    return psi, div_psi


def _transfer(coarse: DiscreteField, fine: Mesh, elements, points):
    """Values of a coarse field at points of nested fine elements."""
    cm = coarse.gd.mesh
    anc = fine.ancestor(cm)[elements]
    grads = cm.barycentric_gradients()[anc]
    centroid = cm.vertices[cm.triangles[anc]].mean(axis=1)
    bary = 1.0 / 3.0 + np.einsum("pkd,pd->pk", grads, points - centroid)
    phi = coarse.gd.basis_values(bary)
    return np.einsum("pk,pk->p", phi, coarse.element_coeffs()[anc])


def compute_errors(gd: GradientDiscretisation, spec: ProblemSpec, u: DiscreteField, exact,
                   indicators: bool = True) -> ErrorRecord:
    """Errors of ``u`` against a manufactured solution or a finer reference.

    Parameters
    ----------
    exact : ManufacturedCase or DiscreteField
        A reference field must live on a uniform refinement of ``gd.mesh``.
    indicators : bool
        In manufactured mode with p = 2, also compute ``S_D``, ``W_D``,
        ``C_D`` and the bound right-hand sides.
    """
    if isinstance(exact, DiscreteField):
        return _reference_errors(gd, u, exact)
    if not exact.has_exact:
        raise ContractError(f"case {exact.name} has no closed-form solution")
    vq = gd.volume_quadrature(ERROR_DEGREE)
    du = exact.exact_u(vq.x, vq.y) - u.values(ERROR_DEGREE)
    fun2 = float(np.dot(vq.w, du * du))
    if gd.bc.product_space:
        bq = gd.boundary_quadrature(ERROR_LINE_POINTS)
        dt = exact.exact_u(bq.x, bq.y) - u.trace(ERROR_LINE_POINTS)
        fun2 += float(np.dot(bq.w, dt * dt))
    nq = vq.rule.npoints
    dg = exact.exact_grad(vq.x, vq.y) - np.repeat(u.gradients(), nq, axis=0)
    grad2 = float(np.dot(vq.w, np.einsum("qd,qd->q", dg, dg)))
    rec = ErrorRecord(gd.mesh.h_max, gd.n_dofs, math.sqrt(grad2), math.sqrt(fun2))
    if indicators and spec.p == 2:
        sd = compute_SD(gd, spec, exact.exact_u, exact.exact_grad)
        psi, div_psi = flux_probe(spec, exact, gd.mesh)
        rec.s_d, rec.s_d_quad = sd.s_sum, sd.s_quad
        rec.w_d = compute_WD(gd, spec, psi, div_psi)
        rec.c_d = compute_CD(gd, spec)
        rec.alpha_lo, rec.alpha_hi = coercivity_constants(spec, gd.mesh)
        for k, v in _bound_values(rec, rec.alpha_lo, rec.alpha_hi).items():
            setattr(rec, k, v)
    return rec


def _reference_errors(gd, u: DiscreteField, ref: DiscreteField) -> ErrorRecord:
    fine = ref.gd.mesh
    try:
        fine.ancestor(gd.mesh)
    except MeshError as exc:
        raise ContractError("reference mesh is not a uniform refinement of the mesh") from exc
    if ref.gd.bc.kind is not gd.bc.kind:
        raise ContractError("reference uses a different boundary condition")
    vq = ref.gd.volume_quadrature(ERROR_DEGREE)
    cu = _transfer(u, fine, vq.element, vq.points)
    du = ref.values(ERROR_DEGREE) - cu
    fun2 = float(np.dot(vq.w, du * du))
    if gd.bc.product_space:
        bq = ref.gd.boundary_quadrature(ERROR_LINE_POINTS)
        belem = fine.boundary_triangles[bq.edge]
        ct = _transfer(u, fine, belem, np.column_stack([bq.x, bq.y]))
        dt = ref.trace(ERROR_LINE_POINTS) - ct
        fun2 += float(np.dot(bq.w, dt * dt))
    anc = fine.ancestor(gd.mesh)
    dg = ref.gradients() - u.gradients()[anc]
    grad2 = float(np.dot(fine.areas, np.einsum("td,td->t", dg, dg)))
    return ErrorRecord(gd.mesh.h_max, gd.n_dofs, math.sqrt(grad2), math.sqrt(fun2))


# ----------------------------------------------------------------------
# rates

def fit_rate(h: Sequence[float], err: Sequence[float]) -> RateFit:
    """Least-squares slope of ``log err`` against ``log h``.

    Zero errors are dropped; an all-zero column is reported as exact.
    """
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    keep = err > 0
    if not np.any(keep):
        return RateFit(math.inf, -math.inf, 0.0, 0, exact=True)
    lh, le = np.log(h[keep]), np.log(err[keep])
    if len(lh) < 2:
        return RateFit(math.nan, float(le[0]), 0.0, 1)
    slope, intercept = np.polyfit(lh, le, 1)
    resid = le - (slope * lh + intercept)
    return RateFit(float(slope), float(intercept), float(np.abs(resid).max()), len(lh))


def fit_rates(report: ConvergenceReport, columns=("err_fun", "err_grad"),
              last: Optional[int] = 3) -> dict:
    """Fit every requested column on the last ``last`` records (all if None)."""
    n = len(report.records)
    if n < 3:
        raise ValueError("at least 3 levels are needed to fit a rate")
    sl = slice(None) if last is None else slice(max(0, n - last), None)
    h = report.column("h")[sl]
    out = {}
    for name in columns:
        vals = [getattr(r, name) for r in report.records[sl]]
        if any(v is None for v in vals):
            continue
        out[name] = fit_rate(h, vals)
    report.fitted_rates = out
    return out


# ----------------------------------------------------------------------
# studies

def _check_nested(levels: Sequence[int]):
    if len(levels) < 1 or any(b != 2 * a for a, b in zip(levels, levels[1:])):
        raise ContractError("levels must double from one to the next")


def convergence_study(case: ManufacturedCase, kind=Kind.P1, levels: Sequence[int] = (4, 8, 16, 32),
                      cfg: Optional[SolverConfig] = None, spec: Optional[ProblemSpec] = None,
                      indicators: bool = True, last: Optional[int] = None) -> ConvergenceReport:
    """Solve a manufactured case on a mesh sequence and compare with the exact solution."""
    spec = spec or case.problem()
    report = ConvergenceReport([], meta={"case": case.name, "kind": Kind(kind).value,
                                         "bc": spec.bc.kind.value, "p": spec.p,
                                         "levels": list(levels), "mode": "exact"})
    for n in levels:
        gd = build_gd(build_unit_square(n), spec.bc, kind)
        res = solve_scheme(gd, spec, cfg)
        report.solver.append({"n": n, "converged": res.converged,
                              "iterations": int(sum(res.iterations)),
                              "nonlinear_iterations": res.nonlinear_iterations})
        if not res.converged:
            report.failed_level = n
            return report
        rec = compute_errors(gd, spec, res.u, case, indicators=indicators)
        report.records.append(rec)
        if rec.has_indicators:
            report.bound_checks.append(verify_error_bounds(rec, rec.alpha_lo, rec.alpha_hi))
    if len(report.records) >= 3:
        cols = ("err_fun", "err_grad", "s_d", "w_d") if indicators and spec.p == 2 \
            else ("err_fun", "err_grad")
        fit_rates(report, cols, last=last)
    return report


def self_convergence(spec: ProblemSpec, kind=Kind.P1, levels: Sequence[int] = (4, 8, 16),
                     cfg: Optional[SolverConfig] = None) -> ConvergenceReport:
    """Convergence against the solution on one extra uniform refinement.

    Rates are fitted on all compared levels except the finest when that
    leaves at least three (the finest is closest to the reference and the
    most polluted); otherwise on all compared levels.
    """
    _check_nested(levels)
    from .scheme import nonlinear_residual

    report = ConvergenceReport([], meta={"kind": Kind(kind).value, "bc": spec.bc.kind.value,
                                         "p": spec.p, "levels": list(levels),
                                         "reference": 2 * levels[-1], "mode": "self"})
    meshes = [build_unit_square(levels[0])]
    for _ in range(len(levels)):
        meshes.append(refine_uniform(meshes[-1]))
    sols = []
    for n, mesh in zip(list(levels) + [2 * levels[-1]], meshes):
        gd = build_gd(mesh, spec.bc, kind)
        res = solve_scheme(gd, spec, cfg)
        report.solver.append({"n": n, "converged": res.converged,
                              "iterations": int(sum(res.iterations)),
                              "nonlinear_iterations": res.nonlinear_iterations,
                              "residual": nonlinear_residual(gd, spec, res.u)})
        if not res.converged:
            report.failed_level = n
            return report
        sols.append((gd, res.u))
    ref = sols[-1][1]
    for gd, u in sols[:-1]:
        report.records.append(compute_errors(gd, spec, u, ref))
    n = len(report.records)
    use = n - 1 if n - 1 >= 3 else n
    if use >= 3:
        sub = ConvergenceReport(report.records[:use])
        report.fitted_rates = fit_rates(sub, last=None)
    return report
