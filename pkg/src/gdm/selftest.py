"""Quick invariant checks run by the ``selftest`` command.

Each check is small (coarse meshes, a few hundred random samples) so the
whole suite runs in about a second.
"""
from __future__ import annotations

import math

import numpy as np

from .analysis import coercivity_constants, compute_errors, verify_error_bounds
from .discretisation import Kind, build_gd, compute_CD
from .mesh import build_unit_square, integrate
from .problem import (BoundaryCondition, ProblemSpec, constant_scalar, flux_operator,
                      get_case)
from .quadrature import triangle_rule
from .scheme import solve_leray_lions, solve_scheme


def _quadrature_exactness(rng):
    worst = 0.0
    for degree in (1, 2, 4, 5):
        rule = triangle_rule(degree)
        for i in range(degree + 1):
            for j in range(degree + 1 - i):
                # int_T x^i y^j over the reference triangle = i! j! / (i+j+2)!
                exact = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
                x, y = rule.points[:, 1], rule.points[:, 2]
                approx = 0.5 * np.dot(rule.weights, x ** i * y ** j)
                worst = max(worst, abs(approx - exact))
    return worst < 1e-14, f"max monomial error {worst:.2e}"


def _single_dof_cd(rng):
    spec = ProblemSpec(BoundaryCondition.dirichlet())
    c = compute_CD(build_gd(build_unit_square(2), spec.bc), spec)
    ref = math.sqrt(1 / 8) / 2  # ||phi|| / |grad phi| for the hat function at (1/2, 1/2)
    return abs(c - ref) < 1e-10, f"C_D = {c:.12f} (expected {ref:.12f})"


def _duality_identity(rng):
    worst = 0.0
    for _ in range(200):
        p = rng.uniform(1.1, 6.0)
        spec = ProblemSpec(BoundaryCondition.dirichlet(), p=p, regularization_eps=0.0)
        v = rng.normal(size=2)
        a = flux_operator(spec, np.zeros(2), v)
        nv = np.linalg.norm(v)
        worst = max(worst, abs(np.dot(a, v) - nv ** p) / nv ** p,
                    abs(np.linalg.norm(a) - nv ** (p - 1)) / nv ** (p - 1))
    return worst < 1e-12, f"max relative defect {worst:.2e}"


def _zero_data(rng):
    spec = ProblemSpec(BoundaryCondition.fourier(1.0))
    u = solve_scheme(build_gd(build_unit_square(4), spec.bc), spec).u
    m = float(np.abs(u.coeffs).max())
    return m == 0.0, f"max |U| = {m:.2e}"


def _neumann_zero_mean(rng):
    case = get_case("M2")
    spec = case.problem()
    u = solve_scheme(build_gd(build_unit_square(8), spec.bc), spec).u
    mean = abs(u.integral())
    return mean <= 1e-10, f"|int P_D u| = {mean:.2e}"


def _picard_linear(rng):
    spec = get_case("M1").problem()
    res = solve_leray_lions(build_gd(build_unit_square(4), spec.bc), spec)
    return res.converged and res.nonlinear_iterations == 1, \
        f"{res.nonlinear_iterations} iteration(s)"


def _conforming_wd_and_bounds(rng):
    case = get_case("M1")
    spec = case.problem()
    gd = build_gd(build_unit_square(4), spec.bc, Kind.P1)
    rec = compute_errors(gd, spec, solve_scheme(gd, spec).u, case)
    checks = verify_error_bounds(rec, *coercivity_constants(spec, gd.mesh))
    ok = rec.w_d <= 1e-8 and all(c.satisfied for c in checks)
    return ok, f"W_D = {rec.w_d:.1e}, {sum(c.satisfied for c in checks)}/5 bounds hold"


def _mesh_integral(rng):
    val = integrate(build_unit_square(8), 4, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    return abs(val - 4 / np.pi ** 2) < 5e-3, f"int sin sin = {val:.6f}"


CHECKS = [
    ("quadrature_exactness", _quadrature_exactness),
    ("mesh_integral", _mesh_integral),
    ("single_dof_cd", _single_dof_cd),
    ("duality_identity", _duality_identity),
    ("zero_data_zero_solution", _zero_data),
    ("neumann_zero_mean", _neumann_zero_mean),
    ("picard_linear_single_step", _picard_linear),
    ("conforming_wd_and_bounds", _conforming_wd_and_bounds),
]


def run_selftest(seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append({"name": name, "passed": bool(ok), "detail": detail})
    return out
