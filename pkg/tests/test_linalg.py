import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, strategies as st

from gdm.linalg import (ConvergenceError, SymOperator, dual_norm, generalized_power_iteration,
                        pcg, solve_spd)


def random_spd(n, rng, density=0.3):
    a = sp.random(n, n, density=density, random_state=rng.integers(1 << 30))
    return sp.csr_matrix(a @ a.T + n * sp.eye(n))


@given(st.integers(2, 40), st.integers(0, 10_000))
def test_pcg_matches_direct_solve(n, seed):
    rng = np.random.default_rng(seed)
    A = random_spd(n, rng)
    b = rng.normal(size=n)
    out = pcg(SymOperator(A), b, tol=1e-12)
    assert out.converged
    x = np.linalg.solve(A.toarray(), b)
    assert np.allclose(out.x, x, rtol=1e-9, atol=1e-11)
    assert np.linalg.norm(A @ out.x - b) <= 1e-12 * np.linalg.norm(b) * 1.0001


def test_rank_one_operator_is_matrix_free(rng):
    A = random_spd(10, rng)
    v = rng.normal(size=10)
    op = SymOperator(A, [(2.5, v)])
    dense = A.toarray() + 2.5 * np.outer(v, v)
    x = rng.normal(size=10)
    assert np.allclose(op @ x, dense @ x)
    assert np.allclose(op.diagonal(), np.diag(dense))
    assert np.allclose(op.toarray(), dense)
    assert op.sparse.nnz == A.nnz
    assert np.allclose(op.scaled(2.0).toarray(), 2 * dense)
    assert op.quad(x) == pytest.approx(x @ dense @ x)


def test_zero_rhs_returns_zero_without_iterations(rng):
    out = pcg(SymOperator(random_spd(5, rng)), np.zeros(5), x0=np.ones(5))
    assert out.iterations == 0 and out.converged and not np.any(out.x)


def test_one_by_one():
    assert pcg(SymOperator(sp.csr_matrix([[4.0]])), [0.25]).x[0] == pytest.approx(0.0625)


def test_non_convergence_reported(rng):
    A = random_spd(50, rng, density=0.5)
    out = pcg(SymOperator(A), rng.normal(size=50), tol=1e-14, maxiter=2)
    assert not out.converged and out.iterations == 2
    with pytest.raises(ConvergenceError):
        solve_spd(SymOperator(A), rng.normal(size=50), tol=1e-14, maxiter=2)


def test_indefinite_detected():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises((ConvergenceError, ValueError)):
        pcg(SymOperator(A), np.array([1.0, -1.0]))


def test_generalized_power_iteration_matches_eigh(rng):
    N = random_spd(30, rng)
    B = rng.normal(size=(30, 5))
    M = sp.csr_matrix(B @ B.T)
    res = generalized_power_iteration(SymOperator(M), SymOperator(N), tol=1e-13, maxiter=5000)
    ref = sla.eigh(M.toarray(), N.toarray(), eigvals_only=True)[-1]
    assert res.converged
    assert res.value == pytest.approx(ref, rel=1e-8)


def test_dual_norm(rng):
    N = random_spd(12, rng)
    r = rng.normal(size=12)
    ref = np.sqrt(r @ np.linalg.solve(N.toarray(), r))
    assert dual_norm(SymOperator(N), r) == pytest.approx(ref, rel=1e-10)
    assert dual_norm(SymOperator(N), np.zeros(12)) == 0.0
