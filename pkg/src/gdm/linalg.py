"""Symmetric positive definite operators, Jacobi-preconditioned CG and
power iteration for generalized eigenproblems."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class ConvergenceError(RuntimeError):
    pass


class SymOperator:
    """Sparse symmetric matrix plus a sum of implicit rank-one terms.

    ``A = S + sum_k c_k v_k v_k^T``. The rank-one terms are never densified.
    """

    def __init__(self, sparse, rank_one=()):
        self.sparse = sp.csr_matrix(sparse)
        self.rank_one = [(float(c), np.asarray(v, dtype=float)) for c, v in rank_one]

    @property
    def shape(self):
        return self.sparse.shape

    def __matmul__(self, x):
        y = self.sparse @ x
        for c, v in self.rank_one:
            y = y + c * np.dot(v, x) * v
        return y

    def __add__(self, other: "SymOperator") -> "SymOperator":
        return SymOperator(self.sparse + other.sparse, self.rank_one + other.rank_one)

    def scaled(self, s: float) -> "SymOperator":
        return SymOperator(s * self.sparse, [(s * c, v) for c, v in self.rank_one])

    def diagonal(self) -> np.ndarray:
        d = self.sparse.diagonal().copy()
        for c, v in self.rank_one:
            d += c * v * v
        return d

    def toarray(self) -> np.ndarray:
        a = self.sparse.toarray()
        for c, v in self.rank_one:
            a += c * np.outer(v, v)
        return a

    def quad(self, x, y=None) -> float:
        """Bilinear form ``y^T A x`` (``x^T A x`` by default)."""
        y = x if y is None else y
        return float(np.dot(y, self @ x))


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)  # relative residual history
    stagnated: bool = False  # stopped at the round-off floor above tol


def pcg(A, b, x0=None, tol: float = 1e-12, maxiter: int | None = None) -> CGResult:
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``||b - A x|| <= tol * ||b||``. A zero right-hand side returns
    zero after no iterations.
    """
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side is not finite")
    n = len(b)
    maxiter = 10 * n + 100 if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, True, [0.0])
    diag = A.diagonal() if hasattr(A, "diagonal") else np.ones(n)
    if np.any(diag <= 0):
        raise ValueError("operator diagonal must be positive for Jacobi preconditioning")
    inv_d = 1.0 / diag

    r = b - A @ x
    res = [np.linalg.norm(r) / bnorm]
    if res[-1] <= tol:
        return CGResult(x, 0, True, res)
    z = inv_d * r
    d = z.copy()
    rz = np.dot(r, z)
    restarts = 0
    for k in range(1, maxiter + 1):
        Ad = A @ d
        dAd = np.dot(d, Ad)
        if dAd <= 0:
            raise ConvergenceError("operator is not positive definite")
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        res.append(np.linalg.norm(r) / bnorm)
        if res[-1] <= tol:
            # guard against drift of the recursive residual
            true_res = np.linalg.norm(b - A @ x) / bnorm
            if true_res <= tol:
                res[-1] = true_res
                return CGResult(x, k, True, res)
            restarts += 1
            if restarts > 5:
                # round-off floor reached above tol
                res[-1] = true_res
                return CGResult(x, k, False, res, stagnated=True)
            r = b - A @ x
        z = inv_d * r
        rz_new = np.dot(r, z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    return CGResult(x, maxiter, False, res)


def solve_spd(A, b, tol: float = 1e-12, maxiter: int | None = None,
              floor: float = 1e-8) -> np.ndarray:
    """Solve ``A x = b``; raise unless CG converged.

    A solve that stagnates at the round-off floor is accepted when its
    relative residual is below ``floor``: this happens when ``b`` is tiny
    compared with ``A x`` (e.g. the Neumann mean mode on fine meshes).
    """
    out = pcg(A, b, tol=tol, maxiter=maxiter)
    if not out.converged and not (out.stagnated and out.residuals[-1] <= floor):
        raise ConvergenceError(
            f"CG did not reach tol={tol:g} in {out.iterations} iterations "
            f"(last residual {out.residuals[-1]:.3e})")
    return out.x


def dual_norm(N, r, tol: float = 1e-12) -> float:
    """``sqrt(r^T N^{-1} r)``: norm of the functional ``r`` w.r.t. the ``N``-norm."""
    r = np.asarray(r, dtype=float)
    if not np.any(r):
        return 0.0
    y = solve_spd(N, r, tol=tol)
    return float(np.sqrt(max(np.dot(r, y), 0.0)))


@dataclass
class EigResult:
    value: float
    vector: np.ndarray
    iterations: int
    converged: bool


def generalized_power_iteration(M, N, tol: float = 1e-10, maxiter: int = 500,
                                seed: int = 0) -> EigResult:
    """Largest ``mu`` with ``M z = mu N z`` (M symmetric semidefinite, N SPD).

    Iterates ``z <- N^{-1} M z`` and tracks the Rayleigh quotient until its
    relative change drops below ``tol``.
    """
    n = N.shape[0]
    rng = np.random.default_rng(seed)
    z = rng.random(n) + 0.5
    mu_old = None
    for k in range(1, maxiter + 1):
        Mz = M @ z
        if not np.any(Mz):
            return EigResult(0.0, z, k, True)
        # the Rayleigh quotient is insensitive to inner error, and a near-constant
        # iterate hits the round-off floor of the Neumann operator around 1e-10
        y = solve_spd(N, Mz, tol=1e-10)
        # Rayleigh quotient of the new iterate
        mu = np.dot(y, M @ y) / np.dot(y, N @ y)
        z = y / np.sqrt(np.dot(y, N @ y))
        if mu_old is not None and abs(mu - mu_old) <= tol * abs(mu):
            return EigResult(float(mu), z, k, True)
        mu_old = mu
    return EigResult(float(mu), z, maxiter, False)
