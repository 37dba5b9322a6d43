import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gdm.analysis import (CSV_COLUMNS, ConvergenceReport, ErrorRecord, coercivity_constants,
                          compute_errors, convergence_study, equivalence_constants, fit_rate,
                          fit_rates, self_convergence, verify_error_bounds)
from gdm.discretisation import Kind, build_gd
from gdm.mesh import build_unit_square, refine_uniform
from gdm.problem import BCKind, BoundaryCondition, ManufacturedCase, ProblemSpec, get_case
from gdm.scheme import ContractError, SolverConfig, solve_scheme


def _affine_case(bc_kind):
    return ManufacturedCase(
        "affine", bc_kind, 2.0, lambda x, y: 1 + x - 2 * y,
        lambda x, y: np.stack(np.broadcast_arrays(np.ones_like(x), -2.0 * np.ones_like(x)), -1),
        r=lambda x, y: 1 + x - 2 * y, b=1.0)


def _p1_mass(mesh):
    # [DERIVED] element mass matrix |T| / 12 (1 + delta_ij)
    n = mesh.n_vertices
    M = np.zeros((n, n))
    local = (np.ones((3, 3)) + np.eye(3)) / 12
    for t, a in zip(mesh.triangles, mesh.areas):
        M[np.ix_(t, t)] += a * local
    return M


# ---------------------------------------------------------------- rate fits

def test_fit_rate_examples():
    h = np.array([1 / 4, 1 / 8, 1 / 16])
    assert fit_rate(h, 3 * h).slope == pytest.approx(1.0, abs=1e-12)
    assert fit_rate(h, 0.5 * h ** 2).slope == pytest.approx(2.0, abs=1e-12)
    fit = fit_rate(h, 3 * h)
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)
    assert fit.max_residual < 1e-12 and fit.n_points == 3


@given(st.floats(0.2, 4.0), st.floats(-5, 5), st.floats(0.1, 10))
def test_fit_rate_recovers_power_law(rate, logc, scale):
    h = np.array([0.5, 0.25, 0.125, 0.0625])
    err = np.exp(logc) * h ** rate
    fit = fit_rate(h, err)
    assert fit.slope == pytest.approx(rate, abs=1e-10)
    # rescaling h shifts the intercept only
    assert fit_rate(scale * h, err).slope == pytest.approx(rate, abs=1e-10)


def test_fit_rate_zero_errors():
    h = [0.5, 0.25, 0.125]
    assert fit_rate(h, [0.0, 0.0, 0.0]).exact
    fit = fit_rate([0.5, 0.25, 0.125, 0.0625], [0.25, 0.0, 0.25 / 16, 0.25 / 64])
    assert fit.n_points == 3 and fit.slope == pytest.approx(2.0, abs=1e-12)


def test_fit_rates_needs_three_levels():
    recs = [ErrorRecord(h, 1, h, h * h) for h in (0.5, 0.25)]
    with pytest.raises(ValueError):
        fit_rates(ConvergenceReport(recs))
    recs.append(ErrorRecord(0.125, 1, 0.125, 0.125 ** 2))
    rates = fit_rates(ConvergenceReport(recs))
    assert rates["err_grad"].slope == pytest.approx(1.0)
    assert rates["err_fun"].slope == pytest.approx(2.0)


# ---------------------------------------------------------------- errors

@pytest.mark.parametrize("bc_kind", [BCKind.NEUMANN, BCKind.FOURIER])
def test_errors_vanish_on_affine_solution(bc_kind):
    case = _affine_case(bc_kind)
    gd = build_gd(build_unit_square(4), case.boundary_condition())
    rec = compute_errors(gd, case.problem(), gd.interpolate(case.exact_u), case,
                         indicators=False)
    assert rec.err_grad < 1e-12 and rec.err_fun < 1e-12
    assert not rec.has_indicators


def test_errors_against_zero_solution(rng):
    mesh = build_unit_square(5)
    spec = ProblemSpec(BoundaryCondition.dirichlet())
    gd = build_gd(mesh, spec.bc)
    zero = ManufacturedCase("zero", BCKind.DIRICHLET, 2.0, lambda x, y: 0 * x,
                            lambda x, y: np.zeros(np.shape(x) + (2,)), r=lambda x, y: 0 * x)
    u = gd.field(rng.normal(size=gd.n_dofs))
    rec = compute_errors(gd, spec, u, zero, indicators=False)
    full = np.zeros(mesh.n_vertices)
    full[gd.dof_entities] = u.coeffs
    assert rec.err_fun == pytest.approx(np.sqrt(full @ _p1_mass(mesh) @ full), rel=1e-12)
    K = gd.stiffness().toarray()
    assert rec.err_grad == pytest.approx(np.sqrt(u.coeffs @ K @ u.coeffs), rel=1e-12)


def test_error_reduction_one_refinement():
    case = get_case("M1")
    spec = case.problem()
    recs = []
    for n in (8, 16):
        gd = build_gd(build_unit_square(n), spec.bc)
        recs.append(compute_errors(gd, spec, solve_scheme(gd, spec).u, case))
    assert 1.8 <= recs[0].err_grad / recs[1].err_grad <= 2.2
    assert 3.0 <= recs[0].err_fun / recs[1].err_fun <= 5.0


def test_reference_prolongation_is_exact():
    spec = ProblemSpec(BoundaryCondition.fourier(1.0))
    coarse = build_gd(build_unit_square(4), spec.bc)
    u = coarse.interpolate(lambda x, y: np.sin(3 * x) * np.exp(y))
    fine = build_gd(refine_uniform(refine_uniform(coarse.mesh)), spec.bc)
    # [DERIVED] the fine nodal interpolant of a coarse P1 field is the same function
    ref = fine.interpolate(lambda x, y: u(np.column_stack([x, y])))
    rec = compute_errors(coarse, spec, u, ref)
    assert rec.err_fun < 1e-13 and rec.err_grad < 1e-12


def test_reference_must_be_nested():
    spec = ProblemSpec(BoundaryCondition.dirichlet())
    gd = build_gd(build_unit_square(8), spec.bc)
    other = build_gd(build_unit_square(12), spec.bc)
    with pytest.raises(ContractError):
        compute_errors(gd, spec, gd.field(), other.field())
    neu = build_gd(refine_uniform(gd.mesh), BoundaryCondition.neumann())
    with pytest.raises(ContractError):
        compute_errors(gd, spec, gd.field(), neu.field())


def test_case_without_solution_rejected():
    case = get_case("M4")
    spec = case.problem()
    gd = build_gd(build_unit_square(4), spec.bc)
    with pytest.raises(ContractError):
        compute_errors(gd, spec, gd.field(), case)


# ---------------------------------------------------------------- bounds

def test_coercivity_constants():
    mesh = build_unit_square(4)
    lam = [[2.0, 0.0], [0.0, 0.5]]
    assert coercivity_constants(ProblemSpec(BoundaryCondition.dirichlet(), lam=lam),
                                mesh) == pytest.approx((0.5, 2.0))
    assert coercivity_constants(ProblemSpec(BoundaryCondition.neumann(), lam=3.0),
                                mesh) == pytest.approx((1.0, 3.0))
    assert coercivity_constants(ProblemSpec(BoundaryCondition.fourier(0.25), lam=lam),
                                mesh) == pytest.approx((0.25, 2.0))


@given(st.floats(0.05, 20), st.floats(1.0, 20), st.floats(0, 3), st.floats(0, 2),
       st.floats(0, 2))
def test_equivalence_constants_derivation(alo_frac, ahi, cd, s, w):
    # the sandwich constants must dominate the sums of the individual bounds
    alo = alo_frac * ahi / 20
    c_lo, c_hi = equivalence_constants(alo, ahi)
    upper = ((1 + cd) * w + (ahi * (1 + cd) ** 2 + 2 * alo) * s) / alo
    assert upper <= c_hi * (1 + cd) ** 2 * (s + w) * (1 + 1e-12) + 1e-300
    assert c_lo * (1 + ahi) * (1 + cd) == pytest.approx(1 + cd)


def test_verify_bounds_example():
    # [DERIVED] alo = abar = 1, C_D = 0.5, S = 0.1, W = 0.05:
    # grad rhs = (0.05 + 2.5 * 0.1) / 1 = 0.3; fun rhs = 0.025 + 1.75 * 0.1 = 0.2
    rec = ErrorRecord(0.1, 10, err_grad=0.2, err_fun=0.1, s_d=0.1, s_d_quad=0.08,
                      w_d=0.05, c_d=0.5)
    checks = {c.name: c for c in verify_error_bounds(rec, 1.0, 1.0)}
    assert checks["grad_error_upper"].rhs == pytest.approx(0.3)
    assert checks["fun_error_upper"].rhs == pytest.approx(0.2)
    assert checks["conformity_lower"].rhs == pytest.approx(0.2)
    eq = checks["error_equivalence"]
    assert eq.value == pytest.approx(0.3)
    assert eq.lhs == pytest.approx(0.5 / 1.5 * 0.13)
    assert eq.rhs == pytest.approx(3.0 * 2.25 * 0.15)
    assert all(c.satisfied for c in checks.values())
    bad = ErrorRecord(0.1, 10, err_grad=0.5, err_fun=0.1, s_d=0.1, s_d_quad=0.08,
                      w_d=0.05, c_d=0.5)
    names = [c.name for c in verify_error_bounds(bad, 1.0, 1.0) if not c.satisfied]
    assert names == ["grad_error_upper"]


def test_verify_bounds_needs_indicators():
    with pytest.raises(ContractError):
        verify_error_bounds(ErrorRecord(0.1, 1, 0.1, 0.1), 1.0, 1.0)


@pytest.mark.parametrize("name,kind", [("M1", "p1"), ("M2", "p1"), ("M3", "p1"), ("M5", "p1"),
                                       ("M6", "p1"), ("M1", "cr")])
def test_bounds_hold_along_refinement(name, kind):
    rep = convergence_study(get_case(name), kind, levels=(4, 8, 16))
    assert rep.failed_level is None and len(rep.bound_checks) == 3
    for lvl in rep.bound_checks:
        assert all(c.satisfied for c in lvl), [c.to_dict() for c in lvl if not c.satisfied]
    w = rep.column("w_d")
    if kind == "p1":
        assert w.max() <= 1e-8
    else:
        assert w[0] > 1e-6 and w[-1] < w[0] / 3


def test_conforming_conformity_check_has_full_slack():
    rep = convergence_study(get_case("M1"), levels=(4, 8, 16))
    for rec, lvl in zip(rep.records, rep.bound_checks):
        c = next(c for c in lvl if c.name == "conformity_lower")
        assert c.slack == pytest.approx(rec.alpha_hi * rec.err_grad, rel=1e-10)


def test_m1_gradient_rate_up_to_64():
    rep = convergence_study(get_case("M1"), levels=(4, 8, 16, 32, 64), indicators=False,
                            last=None)
    assert 0.9 <= rep.fitted_rates["err_grad"].slope <= 1.1


def test_failed_level_stops_study():
    rep = convergence_study(get_case("M1"), levels=(4, 8, 16), cfg=SolverConfig(max_iter=1))
    assert rep.failed_level == 4 and rep.records == [] and rep.fitted_rates == {}
    spec = ProblemSpec(BoundaryCondition.dirichlet(), p=4.0, r=lambda x, y: 1 + 0 * x)
    rep = self_convergence(spec, levels=(4, 8, 16), cfg=SolverConfig(theta=0.7))
    assert rep.failed_level == 4 and rep.fitted_rates == {}


def test_convergence_report_csv():
    rep = convergence_study(get_case("M1"), levels=(4, 8, 16))
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 4 and all(r[-1] == "1" for r in rows[1:])
    assert float(rows[2][0]) == pytest.approx(math.sqrt(2) / 8)
    assert set(rep.fitted_rates) == {"err_fun", "err_grad", "s_d", "w_d"}
    d = rep.to_dict()
    assert d["meta"]["case"] == "M1" and len(d["records"]) == 3


# ---------------------------------------------------------------- self-convergence

def test_self_convergence_linear_matches_exact_rate():
    spec = get_case("M1").problem()
    rep = self_convergence(spec, levels=(4, 8, 16, 32))
    assert rep.meta["reference"] == 64 and len(rep.records) == 4
    g = rep.column("err_grad")
    assert np.all(np.diff(g) < 0)
    assert rep.fitted_rates["err_grad"].slope == pytest.approx(1.0, abs=0.1)


@pytest.mark.parametrize("p", [1.5, 4.0])
def test_self_convergence_nonlinear(p):
    spec = ProblemSpec(BoundaryCondition.dirichlet(), p=p, r=lambda x, y: 1 + 0 * x)
    rep = self_convergence(spec, levels=(4, 8, 16))
    assert rep.failed_level is None
    assert all(s["converged"] and s["residual"] <= 1e-8 for s in rep.solver)
    assert np.all(np.diff(rep.column("err_grad")) < 0)
    assert rep.fitted_rates["err_grad"].slope > 0.5


def test_self_convergence_levels_must_double():
    with pytest.raises(ContractError):
        self_convergence(get_case("M1").problem(), levels=(4, 8, 12))
