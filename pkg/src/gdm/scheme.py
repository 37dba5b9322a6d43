"""Assembly and solution of the gradient scheme.

The linear case (p = 2) is a symmetric positive definite system solved by
Jacobi-preconditioned CG; the Neumann zero-order term is a rank-one update
kept matrix-free. For p != 2 the scheme is solved by a damped Picard
iteration that freezes ``|G_D u|^{p-2}`` and repeats the linear solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .discretisation import DiscreteField, GradientDiscretisation, discrete_norm
from .linalg import ConvergenceError, SymOperator, dual_norm, pcg
from .problem import BCKind, ProblemSpec, flux_operator, power_map

#: volume quadrature for loads and frozen coefficients; high enough that the
#: discrete mean of a zero-mean smooth load vanishes to round-off for n >= 4
ASSEMBLY_DEGREE = 8
#: Gauss points per boundary edge for boundary terms
BOUNDARY_POINTS = 4


class ContractError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, msg: str = ""):
        super().__init__(f"Picard iteration diverged at iteration {iteration}" +
                         (f": {msg}" if msg else ""))
        self.iteration = iteration


def default_damping(p: float) -> float:
    """Damping for the Picard iteration.

    Linearising the frozen-coefficient map at the solution gives error
    multipliers in ``[1 - theta (p - 1), 1 - theta]``; ``theta = 2/p``
    minimises the spectral radius (capped at 1).
    """
    return min(1.0, 2.0 / p)


@dataclass
class SolverConfig:
    tol: float = 1e-12
    max_iter: Optional[int] = None
    nonlinear_tol: float = 1e-11
    nonlinear_max_iter: int = 200
    theta: Optional[float] = None
    regularization: Optional[float] = None

    def __post_init__(self):
        if self.tol <= 0 or self.nonlinear_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.theta is not None and not 0 < self.theta <= 1:
            raise ValueError("damping theta must lie in (0, 1]")
        if self.regularization is not None and self.regularization < 0:
            raise ValueError("regularization must be nonnegative")


@dataclass
class SparseSystem:
    gd: GradientDiscretisation
    A: SymOperator
    B: np.ndarray
    symmetric: bool = True

    def residual(self, U) -> float:
        """Relative residual ``||A U - B|| / ||B||`` (absolute if B = 0)."""
        r = np.linalg.norm(self.A @ U - self.B)
        bn = np.linalg.norm(self.B)
        return float(r / bn) if bn > 0 else float(r)


@dataclass
class SolveResult:
    u: DiscreteField
    iterations: list  # linear iterations per solve
    nonlinear_iterations: int
    residuals: list  # relative residuals (linear) or update norms (nonlinear)
    converged: bool
    theta: Optional[float] = None
    history: list = field(default_factory=list)


@dataclass
class FrozenCoefficients:
    """Multipliers frozen from a previous iterate.

    ``flux`` scales Lambda at every volume quadrature point, ``volume``
    scales the Neumann rank-one term and ``boundary`` scales ``b`` at the
    boundary quadrature points.
    """

    flux: Optional[np.ndarray] = None
    volume: float = 1.0
    boundary: Optional[np.ndarray] = None


def _element_integrals(vq, values) -> np.ndarray:
    nq = vq.rule.npoints
    return (values * vq.w.reshape(vq.w.shape + (1,) * (values.ndim - 1))).reshape(
        (-1, nq) + values.shape[1:]).sum(axis=1)


def load_vector(gd: GradientDiscretisation, spec: ProblemSpec,
                degree: int = ASSEMBLY_DEGREE, npoints: int = BOUNDARY_POINTS) -> np.ndarray:
    """``B_i = <f, P_D chi_i> - <F, G_D chi_i>`` with ``f = r`` or ``(r, g)``."""
    vq = gd.volume_quadrature(degree)
    B = gd.value_matrix(degree).T @ (vq.w * spec.r(vq.x, vq.y))
    Fbar = _element_integrals(vq, spec.F(vq.x, vq.y))
    gx, gy = gd.gradient_matrices
    B = B - gx.T @ Fbar[:, 0] - gy.T @ Fbar[:, 1]
    if gd.bc.product_space:
        bq = gd.boundary_quadrature(npoints)
        B = B + gd.trace_matrix(npoints).T @ (bq.w * gd.bc.g(bq.x, bq.y, bq.nx, bq.ny))
    return np.asarray(B, dtype=float)


def assemble_linear(gd: GradientDiscretisation, spec: ProblemSpec,
                    frozen: Optional[FrozenCoefficients] = None,
                    degree: int = ASSEMBLY_DEGREE,
                    npoints: int = BOUNDARY_POINTS) -> SparseSystem:
    """Matrix and right-hand side of the linear gradient scheme.

    Without ``frozen`` this requires ``p = 2``; the Picard loop passes the
    frozen nonlinear multipliers.
    """
    if spec.bc.kind is not gd.bc.kind:
        raise ContractError("problem and discretisation use different boundary conditions")
    if frozen is None:
        if spec.p != 2:
            raise ContractError("linear assembly needs p = 2 or frozen coefficients")
        frozen = FrozenCoefficients()
    vq = gd.volume_quadrature(degree)
    lam = spec.lam(vq.x, vq.y)
    if frozen.flux is not None:
        lam = lam * frozen.flux[:, None, None]
    A = gd.stiffness(_element_integrals(vq, lam))
    rank_one = []
    if gd.bc.is_neumann:
        rank_one.append((frozen.volume, gd.integral_vector))
    elif gd.bc.kind is BCKind.FOURIER:
        bq = gd.boundary_quadrature(npoints)
        b = gd.bc.b(bq.x, bq.y, bq.nx, bq.ny)
        if frozen.boundary is not None:
            b = b * frozen.boundary
        A = A + gd.boundary_mass(npoints, weight=b)
    return SparseSystem(gd, SymOperator(A, rank_one), load_vector(gd, spec, degree, npoints))


def solve_linear(sys: SparseSystem, cfg: Optional[SolverConfig] = None, x0=None) -> SolveResult:
    """Solve ``A U = B`` by Jacobi-preconditioned CG."""
    cfg = cfg or SolverConfig()
    out = pcg(sys.A, sys.B, x0=x0, tol=cfg.tol, maxiter=cfg.max_iter)
    return SolveResult(sys.gd.field(out.x), [out.iterations], 0, out.residuals, out.converged)


def solve_scheme(gd: GradientDiscretisation, spec: ProblemSpec,
                 cfg: Optional[SolverConfig] = None) -> SolveResult:
    """Linear solve for p = 2, Picard iteration otherwise."""
    if spec.p == 2:
        return solve_linear(assemble_linear(gd, spec), cfg)
    return solve_leray_lions(gd, spec, cfg)


def _frozen_from(u: DiscreteField, spec: ProblemSpec, eps: float, degree: int,
                 npoints: int) -> FrozenCoefficients:
    gd = u.gd
    p = spec.p
    nq = gd.volume_quadrature(degree).rule.npoints
    g = u.gradients()
    flux = np.repeat((eps * eps + np.einsum("td,td->t", g, g)) ** ((p - 2) / 2), nq)
    frozen = FrozenCoefficients(flux=flux)
    if gd.bc.is_neumann:
        frozen.volume = float((eps * eps + u.integral() ** 2) ** ((p - 2) / 2))
    elif gd.bc.kind is BCKind.FOURIER:
        t = u.trace(npoints)
        frozen.boundary = (eps * eps + t * t) ** ((p - 2) / 2)
    return frozen


def solve_leray_lions(gd: GradientDiscretisation, spec: ProblemSpec,
                      cfg: Optional[SolverConfig] = None,
                      degree: int = ASSEMBLY_DEGREE,
                      npoints: int = BOUNDARY_POINTS) -> SolveResult:
    """Damped Picard iteration for the nonlinear gradient scheme.

    ``U <- (1 - theta) U + theta U~`` where ``U~`` solves the linear scheme
    with ``Lambda (eps^2 + |G_D U|^2)^{(p-2)/2}``. Starts from the p = 2
    solution and stops when ``||U_new - U||_D <= tol (1 + ||U_new||_D)``.

    Raises
    ------
    DivergenceError
        If an iterate becomes non-finite.
    """
    cfg = cfg or SolverConfig()
    theta = cfg.theta if cfg.theta is not None else default_damping(spec.p)
    eps = spec.regularization_eps if cfg.regularization is None else cfg.regularization
    start = solve_linear(assemble_linear(gd, spec.replace(p=2.0), degree=degree,
                                         npoints=npoints), cfg)
    u = start.u
    lin_its = list(start.iterations)
    history = []
    converged = False
    k = 0
    for k in range(1, cfg.nonlinear_max_iter + 1):
        sys = assemble_linear(gd, spec, _frozen_from(u, spec, eps, degree, npoints),
                              degree=degree, npoints=npoints)
        lin = solve_linear(sys, cfg, x0=u.coeffs)
        lin_its.extend(lin.iterations)
        new = (1.0 - theta) * u + theta * lin.u
        if not np.all(np.isfinite(new.coeffs)):
            raise DivergenceError(k, "non-finite iterate")
        step = discrete_norm(new - u, spec)
        size = discrete_norm(new, spec)
        if not math.isfinite(step):
            raise DivergenceError(k, "non-finite update norm")
        history.append(step)
        u = new
        if step <= cfg.nonlinear_tol * (1.0 + size):
            converged = True
            break
    return SolveResult(u, lin_its, k, history, converged, theta=theta, history=history)


def defect_vector(gd: GradientDiscretisation, spec: ProblemSpec, u: DiscreteField,
                  degree: int = ASSEMBLY_DEGREE, npoints: int = BOUNDARY_POINTS) -> np.ndarray:
    """``LHS(chi_i) - RHS(chi_i)`` of the nonlinear scheme for every basis function."""
    vq = gd.volume_quadrature(degree)
    nq = vq.rule.npoints
    g = np.repeat(u.gradients(), nq, axis=0)
    flux = flux_operator(spec, vq.points, g)
    fbar = _element_integrals(vq, flux)
    gx, gy = gd.gradient_matrices
    d = gx.T @ fbar[:, 0] + gy.T @ fbar[:, 1]
    eps = spec.regularization_eps
    if gd.bc.is_neumann:
        d = d + float(power_map(u.integral(), spec.p, eps)) * gd.integral_vector
    elif gd.bc.kind is BCKind.FOURIER:
        bq = gd.boundary_quadrature(npoints)
        b = gd.bc.b(bq.x, bq.y, bq.nx, bq.ny)
        T = gd.trace_matrix(npoints)
        d = d + T.T @ (bq.w * b * power_map(T @ u.coeffs, spec.p, eps))
    return d - load_vector(gd, spec, degree, npoints)


def basis_norms(gd: GradientDiscretisation, spec: ProblemSpec,
                npoints: int = BOUNDARY_POINTS) -> np.ndarray:
    """Discrete norm of every basis function, for exponent ``spec.p``."""
    p = spec.p
    gx, gy = gd.gradient_matrices
    mag = np.sqrt(gx.multiply(gx) + gy.multiply(gy))  # |G chi_i| per element
    total = mag.power(p).T @ gd.mesh.areas
    if gd.bc.is_neumann:
        total = total + np.abs(gd.integral_vector) ** p / gd.mesh.area ** (p - 1)
    elif gd.bc.kind is BCKind.FOURIER:
        bq = gd.boundary_quadrature(npoints)
        total = total + sp.csr_matrix(gd.trace_matrix(npoints)).power(p).T @ bq.w
    return np.asarray(total, dtype=float) ** (1.0 / p)


def nonlinear_residual(gd: GradientDiscretisation, spec: ProblemSpec, u: DiscreteField) -> float:
    """Size of the scheme defect.

    For p = 2 this is the dual norm of the defect with respect to the
    discrete norm. For p != 2 the dual norm has no closed form and the
    Euclidean norm of the defect entries divided by the discrete norms of
    the matching basis functions is reported instead.
    """
    d = defect_vector(gd, spec, u)
    if spec.p == 2:
        return dual_norm(gd.d_gram, d)
    return float(np.linalg.norm(d / basis_norms(gd, spec)))
