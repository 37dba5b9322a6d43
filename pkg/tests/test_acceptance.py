"""Acceptance criteria; each test prints one ``criterion N: PASS|FAIL`` line."""
import math
import time

import numpy as np
import pytest

from gdm.analysis import convergence_study, self_convergence
from gdm.discretisation import Kind, build_gd, compute_CD, compute_WD
from gdm.mesh import build_unit_square
from gdm.problem import BoundaryCondition, ProblemSpec, constant_scalar, flux_operator, get_case
from gdm.scheme import nonlinear_residual, solve_leray_lions, solve_scheme


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return emit


def test_criterion_1_error_bounds_m1(report):
    t0 = time.perf_counter()
    rep = convergence_study(get_case("M1"), Kind.P1, levels=(4, 8, 16, 32))
    elapsed = time.perf_counter() - t0
    checks = [c for lvl in rep.bound_checks for c in lvl]
    failed = [(r.n_dofs, c.name) for r, lvl in zip(rep.records, rep.bound_checks)
              for c in lvl if not (c.satisfied and c.slack >= 0)]
    ok = len(checks) == 20 and not failed and elapsed < 30
    report(1, ok, f"{len(checks) - len(failed)}/20 inequality checks hold, "
                  f"min slack {min(c.slack for c in checks):.3e}, {elapsed:.2f} s")


def test_criterion_2_conformity_defect(report):
    worst = 0.0
    for name in ("M1", "M2", "M3", "M5", "M6"):
        rep = convergence_study(get_case(name), Kind.P1, levels=(4, 8, 16, 32))
        worst = max(worst, rep.column("w_d").max())
    spec = ProblemSpec(BoundaryCondition.dirichlet())
    psi = lambda x, y: np.stack([np.sin(np.pi * y), np.zeros(np.shape(x))], -1)
    div = lambda x, y: np.zeros(np.shape(x))
    w = [compute_WD(build_gd(build_unit_square(n), spec.bc, Kind.CR), spec, psi, div)
         for n in (4, 8, 16, 32)]
    factor = w[0] / w[-1]
    ok = worst <= 1e-8 and factor >= 4
    report(2, ok, f"max conforming W_D {worst:.2e}; CR W_D {w[0]:.3e} -> {w[-1]:.3e} "
                  f"(factor {factor:.2f})")


def test_criterion_3_rates(report):
    lines, ok = [], True
    for name in ("M1", "M2", "M3"):
        rep = convergence_study(get_case(name), Kind.P1, levels=(8, 16, 32, 64),
                                indicators=False, last=None)
        g, f = rep.fitted_rates["err_grad"].slope, rep.fitted_rates["err_fun"].slope
        ok &= 0.9 <= g <= 1.1 and f >= 0.9
        lines.append(f"{name} grad {g:.3f} fun {f:.3f}")
    report(3, ok, "; ".join(lines))


def test_criterion_4_cd_limit(report):
    spec = ProblemSpec(BoundaryCondition.dirichlet())
    cds = [compute_CD(build_gd(build_unit_square(n), spec.bc), spec) for n in (4, 8, 16, 32, 64)]
    target = 1 / (math.pi * math.sqrt(2))
    rel = abs(cds[-1] - target) / target
    ok = rel <= 0.02 and all(b >= a for a, b in zip(cds, cds[1:]))
    report(4, ok, "C_D " + ", ".join(f"{c:.5f}" for c in cds) +
           f" (target {target:.5f}, rel. gap {rel:.2%})")


def test_criterion_5_nonlinear(report):
    worst_res, worst_it, ok = 0.0, 0, True
    for p in (4.0, 1.5):
        spec = ProblemSpec(BoundaryCondition.dirichlet(), p=p, r=constant_scalar(1.0))
        for n in (4, 8, 16, 32):
            gd = build_gd(build_unit_square(n), spec.bc)
            res = solve_scheme(gd, spec)
            r = nonlinear_residual(gd, spec, res.u)
            ok &= res.converged and r <= 1e-8 and res.nonlinear_iterations <= 200
            worst_res, worst_it = max(worst_res, r), max(worst_it, res.nonlinear_iterations)
        sc = self_convergence(spec, levels=(4, 8, 16))
        ok &= sc.failed_level is None and bool(np.all(np.diff(sc.column("err_grad")) < 0))
    lin = get_case("M1").problem()
    its = solve_leray_lions(build_gd(build_unit_square(8), lin.bc), lin).nonlinear_iterations
    ok &= its == 1
    report(5, ok, f"max residual {worst_res:.2e}, max Picard iterations {worst_it}, "
                  f"p = 2 iterations {its}")


def test_criterion_6_operator_properties(report):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(1000):
        p = rng.uniform(1.05, 8.0)
        spec = ProblemSpec(BoundaryCondition.dirichlet(), p=p, regularization_eps=0.0)
        u, v = rng.normal(size=(2, 2)) * rng.uniform(0.01, 10, size=(2, 1))
        x = np.zeros(2)
        au, av = flux_operator(spec, x, u), flux_operator(spec, x, v)
        nv = np.linalg.norm(v)
        worst = max(worst, abs(av @ v - nv ** p) / nv ** p,
                    abs(np.linalg.norm(av) - nv ** (p - 1)) / nv ** (p - 1))
        mono = (au - av) @ (u - v)
        scale = (np.linalg.norm(au) + np.linalg.norm(av)) * np.linalg.norm(u - v)
        worst = max(worst, max(0.0, -mono) / scale)
    case = get_case("M2")
    spec = case.problem()
    means = [abs(solve_scheme(build_gd(build_unit_square(n), spec.bc), spec).u.integral())
             for n in (4, 8, 16, 32)]
    ok = worst <= 1e-12 and max(means) <= 1e-10
    report(6, ok, f"max relative defect {worst:.2e} over 1000 samples; "
                  f"max |int P_D u| {max(means):.2e}")


def test_criterion_7_uniqueness_linearity(report):
    rng = np.random.default_rng(7)
    bcs = [BoundaryCondition.dirichlet(), BoundaryCondition.neumann(),
           BoundaryCondition.fourier(1.0)]
    zero_max, add_worst = 0.0, 0.0
    r = lambda a: (lambda x, y: a[0] + a[1] * x * y + a[2] * np.cos(2 * x))
    F = lambda c: (lambda x, y: np.stack([c[0] + c[1] * y, c[2] * x * y], -1))
    for bc in bcs:
        for kind in ((Kind.P1, Kind.CR) if bc.kind.value == "dirichlet" else (Kind.P1,)):
            gd = build_gd(build_unit_square(8), bc, kind)
            zero_max = max(zero_max, np.abs(solve_scheme(gd, ProblemSpec(bc)).u.coeffs).max())
            for _ in range(3):
                a1, a2, c1, c2 = rng.normal(size=(4, 3))
                sol = lambda rr, FF: solve_scheme(gd, ProblemSpec(bc, r=rr, F=FF)).u.coeffs
                u1, u2, u12 = sol(r(a1), F(c1)), sol(r(a2), F(c2)), sol(r(a1 + a2), F(c1 + c2))
                add_worst = max(add_worst, np.abs(u12 - u1 - u2).max())
    ok = zero_max == 0.0 and add_worst <= 1e-10
    report(7, ok, f"zero data max |U| {zero_max:.1e}; additivity defect {add_worst:.2e}")
