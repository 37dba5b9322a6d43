"""Concrete gradient discretisations and their quality indicators.

A gradient discretisation is a triple (unknowns, function reconstruction,
gradient reconstruction). Two are shipped:

* ``P1``: conforming piecewise linears, unknowns at vertices. For the
  product-space boundary conditions (non-homogeneous Neumann, Fourier) the
  trace reconstruction is the boundary restriction of the P1 function.
* ``CR``: Crouzeix-Raviart, piecewise linears continuous at edge midpoints,
  unknowns at edges. Homogeneous Dirichlet only.

Both reconstructions are affine on every triangle, so all operators are
stored as sparse evaluation matrices at quadrature points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
import json
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .linalg import SymOperator, dual_norm, generalized_power_iteration, solve_spd
from .mesh import Mesh, line_rule
from .problem import BCKind, BoundaryCondition, ProblemSpec, seminorm_LV
from .quadrature import triangle_rule


class Kind(str, Enum):
    P1 = "p1"
    CR = "cr"


class UnsupportedError(ValueError):
    """Raised for combinations of options the implementation does not cover."""


#: quadrature used for the Gram matrices (exact for products of linears)
GRAM_DEGREE = 2
#: quadrature used for S_D and W_D probes built from smooth fields
INDICATOR_DEGREE = 12
INDICATOR_LINE_POINTS = 8


class GradientDiscretisation:
    """Unknowns, reconstructions and Gram matrices of one discretisation.

    Parameters
    ----------
    mesh : Mesh
    bc : BoundaryCondition
    kind : Kind or str
    """

    def __init__(self, mesh: Mesh, bc: BoundaryCondition, kind=Kind.P1):
        self.mesh = mesh
        self.bc = bc
        self.kind = Kind(kind)
        if self.kind is Kind.CR and bc.kind is not BCKind.DIRICHLET:
            raise UnsupportedError(
                "Crouzeix-Raviart is only supported with homogeneous Dirichlet conditions")

        if self.kind is Kind.P1:
            n_ent = mesh.n_vertices
            local = mesh.triangles
            eliminated = mesh.boundary_vertices if bc.kind is BCKind.DIRICHLET else []
        else:
            n_ent = mesh.n_edges
            local = mesh.element_edges
            eliminated = mesh.boundary_edge_ids
        keep = np.ones(n_ent, dtype=bool)
        keep[np.asarray(eliminated, dtype=np.intp)] = False
        dof_of = -np.ones(n_ent, dtype=np.intp)
        dof_of[keep] = np.arange(keep.sum())
        #: global dof number of each vertex (P1) or edge (CR), -1 if eliminated
        self.dof_map = dof_of
        self.dof_entities = np.flatnonzero(keep)
        self.n_dofs = int(keep.sum())
        self.elem_dofs = dof_of[local]

        lam_grads = mesh.barycentric_gradients()
        # CR basis on a triangle: 1 - 2 lambda_k for the edge opposite vertex k
        self.local_gradients = lam_grads if self.kind is Kind.P1 else -2.0 * lam_grads

    # ------------------------------------------------------------------
    # reconstruction operators
    def basis_values(self, bary: np.ndarray) -> np.ndarray:
        """Local basis values at barycentric points, shape (nq, 3)."""
        bary = np.atleast_2d(bary)
        return bary.copy() if self.kind is Kind.P1 else 1.0 - 2.0 * bary

    def _scatter(self, vals: np.ndarray, rows: np.ndarray, nrows: int) -> sp.csr_matrix:
        """Sparse matrix with ``vals[e, q, k]`` placed at ``(rows[e, q], dof[e, k])``."""
        nt, nq, _ = vals.shape
        cols = np.broadcast_to(self.elem_dofs[:, None, :], vals.shape)
        r = np.broadcast_to(rows[:, :, None], vals.shape)
        mask = cols >= 0
        return sp.csr_matrix((vals[mask], (r[mask], cols[mask])), shape=(nrows, self.n_dofs))

    def value_matrix(self, degree: int) -> sp.csr_matrix:
        """Evaluation of the function reconstruction at the volume quadrature
        points of the given degree (rows ordered as in ``volume_quadrature``)."""
        cache = self.__dict__.setdefault("_value_cache", {})
        if degree not in cache:
            rule = triangle_rule(degree)
            nt, nq = self.mesh.n_triangles, rule.npoints
            phi = self.basis_values(rule.points)
            vals = np.broadcast_to(phi[None], (nt, nq, 3))
            rows = np.arange(nt * nq).reshape(nt, nq)
            cache[degree] = self._scatter(vals, rows, nt * nq)
        return cache[degree]

    @cached_property
    def gradient_matrices(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Element-constant gradient reconstruction, two (nt, n_dofs) matrices."""
        nt = self.mesh.n_triangles
        rows = np.arange(nt)[:, None]
        gx = self._scatter(self.local_gradients[:, None, :, 0], rows, nt)
        gy = self._scatter(self.local_gradients[:, None, :, 1], rows, nt)
        return gx, gy

    def trace_matrix(self, npoints: int = 2) -> sp.csr_matrix:
        """Trace reconstruction at the boundary Gauss points (P1 only)."""
        if self.kind is not Kind.P1:
            raise UnsupportedError("trace reconstruction is only defined for P1")
        cache = self.__dict__.setdefault("_trace_cache", {})
        if npoints not in cache:
            s, _ = line_rule(npoints)
            be = self.mesh.boundary_edges
            nb = len(be)
            vals = np.stack([np.broadcast_to(1.0 - s, (nb, npoints)),
                             np.broadcast_to(s, (nb, npoints))], axis=-1)
            cols = np.broadcast_to(self.dof_map[be][:, None, :], vals.shape)
            rows = np.broadcast_to(np.arange(nb * npoints).reshape(nb, npoints)[:, :, None],
                                   vals.shape)
            mask = cols >= 0
            cache[npoints] = sp.csr_matrix((vals[mask], (rows[mask], cols[mask])),
                                           shape=(nb * npoints, self.n_dofs))
        return cache[npoints]

    def volume_quadrature(self, degree: int):
        cache = self.__dict__.setdefault("_vq_cache", {})
        if degree not in cache:
            cache[degree] = self.mesh.volume_quadrature(triangle_rule(degree))
        return cache[degree]

    def boundary_quadrature(self, npoints: int = 2):
        cache = self.__dict__.setdefault("_bq_cache", {})
        if npoints not in cache:
            cache[npoints] = self.mesh.boundary_quadrature(npoints)
        return cache[npoints]

    @cached_property
    def integral_vector(self) -> np.ndarray:
        """``m_i = int_Omega P_D chi_i`` for every basis function."""
        vq = self.volume_quadrature(1)
        return self.value_matrix(1).T @ vq.w

    # ------------------------------------------------------------------
    # Gram matrices (Hilbert case)
    def stiffness(self, lam_bar: Optional[np.ndarray] = None) -> sp.csr_matrix:
        """``int Lambda G_D chi_j . G_D chi_i``.

        ``lam_bar`` holds the element integrals of the coefficient, shape
        (nt, 2, 2); the identity is used by default.
        """
        gx, gy = self.gradient_matrices
        if lam_bar is None:
            a = self.mesh.areas
            return (gx.T @ sp.diags(a) @ gx + gy.T @ sp.diags(a) @ gy).tocsr()
        G = (gx, gy)
        K = None
        for i in range(2):
            for j in range(2):
                term = G[i].T @ sp.diags(lam_bar[:, i, j]) @ G[j]
                K = term if K is None else K + term
        return K.tocsr()

    def mass(self, degree: int = GRAM_DEGREE, weight=None) -> sp.csr_matrix:
        P = self.value_matrix(degree)
        w = self.volume_quadrature(degree).w
        if weight is not None:
            w = w * weight
        return (P.T @ sp.diags(w) @ P).tocsr()

    def boundary_mass(self, npoints: int = 2, weight=None) -> sp.csr_matrix:
        T = self.trace_matrix(npoints)
        w = self.boundary_quadrature(npoints).w
        if weight is not None:
            w = w * weight
        return (T.T @ sp.diags(w) @ T).tocsr()

    @cached_property
    def l_gram(self) -> SymOperator:
        """Gram matrix of the ``L`` norm of the reconstruction (trace included
        for the product-space conditions)."""
        M = self.mass()
        if self.bc.product_space:
            M = M + self.boundary_mass()
        return SymOperator(M)

    @cached_property
    def d_gram(self) -> SymOperator:
        """Gram matrix of the discrete norm for p = 2."""
        K = self.stiffness()
        kind = self.bc.kind
        if self.bc.is_neumann:
            return SymOperator(K, [(1.0 / self.mesh.area, self.integral_vector)])
        if kind is BCKind.FOURIER:
            return SymOperator(K + self.boundary_mass())
        return SymOperator(K)

    # ------------------------------------------------------------------
    def field(self, coeffs=None) -> "DiscreteField":
        if coeffs is None:
            coeffs = np.zeros(self.n_dofs)
        return DiscreteField(self, np.asarray(coeffs, dtype=float))

    def interpolate(self, f: Callable) -> "DiscreteField":
        """Nodal (P1) or edge-average (CR) interpolant of ``f(x, y)``."""
        m = self.mesh
        if self.kind is Kind.P1:
            xy = m.vertices[self.dof_entities]
            return self.field(f(xy[:, 0], xy[:, 1]))
        s, w = line_rule(3)
        e = m.edges[self.dof_entities]
        a, b = m.vertices[e[:, 0]], m.vertices[e[:, 1]]
        pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        return self.field(f(pts[..., 0], pts[..., 1]) @ w)

    def __repr__(self):
        return (f"GradientDiscretisation(kind={self.kind.value}, bc={self.bc.kind.value}, "
                f"n_dofs={self.n_dofs}, h_max={self.mesh.h_max:.4g})")


def build_gd(mesh: Mesh, bc: BoundaryCondition, kind=Kind.P1) -> GradientDiscretisation:
    return GradientDiscretisation(mesh, bc, kind)


@dataclass
class DiscreteField:
    """Element of the discrete space with its reconstructions."""

    gd: GradientDiscretisation
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.gd.n_dofs,):
            raise ValueError(f"expected {self.gd.n_dofs} coefficients, got {self.coeffs.shape}")

    def __add__(self, other):
        return DiscreteField(self.gd, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return DiscreteField(self.gd, self.coeffs - other.coeffs)

    def __mul__(self, s):
        return DiscreteField(self.gd, s * self.coeffs)

    __rmul__ = __mul__

    def element_coeffs(self) -> np.ndarray:
        """Local coefficients (nt, 3) with zeros at eliminated dofs."""
        ed = self.gd.elem_dofs
        return np.where(ed >= 0, self.coeffs[np.maximum(ed, 0)], 0.0)

    def values(self, degree: int) -> np.ndarray:
        return self.gd.value_matrix(degree) @ self.coeffs

    def gradients(self) -> np.ndarray:
        gx, gy = self.gd.gradient_matrices
        return np.column_stack([gx @ self.coeffs, gy @ self.coeffs])

    def trace(self, npoints: int = 2) -> np.ndarray:
        return self.gd.trace_matrix(npoints) @ self.coeffs

    def integral(self) -> float:
        return float(np.dot(self.gd.integral_vector, self.coeffs))

    def evaluate_in(self, elements, bary) -> np.ndarray:
        """Values at points given by element index and barycentric coordinates."""
        phi = self.gd.basis_values(bary)  # (npts, 3)
        return np.einsum("pk,pk->p", phi, self.element_coeffs()[elements])

    def __call__(self, points) -> np.ndarray:
        elems, bary = self.gd.mesh.locate(points)
        return self.evaluate_in(elems, bary)


def reconstruct(u: DiscreteField, x) -> float:
    """Function reconstruction at a point of the domain."""
    return float(u(np.asarray(x, dtype=float)[None, :])[0])


def reconstruct_gradient(u: DiscreteField, element: int) -> np.ndarray:
    if not 0 <= element < u.gd.mesh.n_triangles:
        raise IndexError("element index out of range")
    return u.gradients()[element]


def discrete_norm(u: DiscreteField, spec: ProblemSpec, npoints: int = 4) -> float:
    """``(|P_D u|_{L,V}^p + ||G_D u||_{L^p}^p)^{1/p}``."""
    p = spec.p
    gd = u.gd
    g = u.gradients()
    grad_p = float(np.dot(gd.mesh.areas, np.hypot(g[:, 0], g[:, 1]) ** p))
    kind = gd.bc.kind
    if kind is BCKind.DIRICHLET:
        semi = 0.0
    elif gd.bc.is_neumann:
        semi = seminorm_LV(spec, integral=u.integral(), area=gd.mesh.area)
    else:
        semi = seminorm_LV(spec, trace=u.trace(npoints), bq=gd.boundary_quadrature(npoints))
    return (semi ** p + grad_p) ** (1.0 / p)


def _require_hilbert(spec: ProblemSpec, what: str):
    if spec.p != 2:
        raise UnsupportedError(f"{what} is only computed for p = 2")


def compute_CD(gd: GradientDiscretisation, spec: ProblemSpec, tol: float = 1e-10) -> float:
    """Norm of the function reconstruction relative to the discrete norm.

    ``C_D^2`` is the largest generalized eigenvalue of ``M z = mu N z`` with
    ``M`` the L-norm Gram matrix and ``N`` the discrete-norm Gram matrix.
    """
    _require_hilbert(spec, "C_D")
    res = generalized_power_iteration(gd.l_gram, gd.d_gram, tol=tol)
    return float(np.sqrt(res.value))


@dataclass(frozen=True)
class ConsistencyResult:
    """Best approximation of a function and its gradient.

    ``s_quad`` is the minimum of ``sqrt(||P v - phi||^2 + ||G v - grad phi||^2)``
    and ``s_sum = ||P v* - phi|| + ||G v* - grad phi||`` at that minimiser.
    Then ``s_quad <= S_D <= s_sum <= sqrt(2) s_quad``.
    """

    s_quad: float
    s_sum: float
    fun_err: float
    grad_err: float
    coeffs: np.ndarray = field(repr=False)


def compute_SD(gd: GradientDiscretisation, spec: ProblemSpec, phi: Callable,
               grad: Callable, degree: int = INDICATOR_DEGREE,
               npoints: int = INDICATOR_LINE_POINTS) -> ConsistencyResult:
    """Consistency defect of ``phi`` (values and gradient supplied)."""
    _require_hilbert(spec, "S_D")
    vq = gd.volume_quadrature(degree)
    P = gd.value_matrix(degree)
    fv = phi(vq.x, vq.y)
    gv = grad(vq.x, vq.y)
    gx, gy = gd.gradient_matrices
    a = gd.mesh.areas
    # element integrals of the exact gradient
    nq = vq.rule.npoints
    gbar = (gv * vq.w[:, None]).reshape(-1, nq, 2).sum(axis=1)

    A = gd.mass(degree) + gd.stiffness()
    rhs = P.T @ (vq.w * fv) + gx.T @ gbar[:, 0] + gy.T @ gbar[:, 1]
    if gd.bc.product_space:
        bq = gd.boundary_quadrature(npoints)
        T = gd.trace_matrix(npoints)
        A = A + gd.boundary_mass(npoints)
        rhs = rhs + T.T @ (bq.w * phi(bq.x, bq.y))
    v = solve_spd(SymOperator(A), rhs, tol=1e-12) if np.any(rhs) else np.zeros(gd.n_dofs)

    fun2 = float(np.dot(vq.w, (P @ v - fv) ** 2))
    if gd.bc.product_space:
        fun2 += float(np.dot(bq.w, (T @ v - phi(bq.x, bq.y)) ** 2))
    dg = np.column_stack([gx @ v, gy @ v])
    g2 = np.einsum("qd,qd->q", gv, gv)
    # |G v - grad phi|^2 integrated exactly in the piecewise-constant part
    grad2 = float(np.dot(a, np.einsum("td,td->t", dg, dg))
                  - 2.0 * np.einsum("td,td->", dg, gbar) + np.dot(vq.w, g2))
    fun_err = np.sqrt(max(fun2, 0.0))
    grad_err = np.sqrt(max(grad2, 0.0))
    return ConsistencyResult(float(np.hypot(fun_err, grad_err)), float(fun_err + grad_err),
                             float(fun_err), float(grad_err), v)


def conformity_residual(gd: GradientDiscretisation, psi: Callable, div_psi: Callable,
                        degree: int = INDICATOR_DEGREE,
                        npoints: int = INDICATOR_LINE_POINTS) -> np.ndarray:
    """``r_i = <psi, G_D chi_i> + <D psi, P_D chi_i>`` for every basis function.

    ``D psi`` is ``div psi`` in the volume and, for the product-space
    conditions, ``-psi . n`` on the boundary.
    """
    vq = gd.volume_quadrature(degree)
    nq = vq.rule.npoints
    pv = psi(vq.x, vq.y)
    pbar = (pv * vq.w[:, None]).reshape(-1, nq, 2).sum(axis=1)
    gx, gy = gd.gradient_matrices
    r = gx.T @ pbar[:, 0] + gy.T @ pbar[:, 1]
    r = r + gd.value_matrix(degree).T @ (vq.w * div_psi(vq.x, vq.y))
    if gd.bc.product_space:
        bq = gd.boundary_quadrature(npoints)
        pb = psi(bq.x, bq.y)
        normal = pb[:, 0] * bq.nx + pb[:, 1] * bq.ny
        r = r - gd.trace_matrix(npoints).T @ (bq.w * normal)
    return r


def compute_WD(gd: GradientDiscretisation, spec: ProblemSpec, psi: Callable,
               div_psi: Callable, degree: int = INDICATOR_DEGREE,
               npoints: int = INDICATOR_LINE_POINTS) -> float:
    """Conformity defect: dual norm of :func:`conformity_residual`."""
    _require_hilbert(spec, "W_D")
    r = conformity_residual(gd, psi, div_psi, degree, npoints)
    return dual_norm(gd.d_gram, r, tol=1e-12)


@dataclass
class IndicatorReport:
    kind: str
    bc: str
    h_max: float
    n_dofs: int
    c_d: float
    s_d: dict = field(default_factory=dict)
    w_d: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "bc": self.bc, "h_max": self.h_max, "n_dofs": self.n_dofs,
                "c_d": self.c_d, "s_d": dict(self.s_d), "w_d": dict(self.w_d)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def compute_indicators(gd: GradientDiscretisation, spec: ProblemSpec,
                       sd_probes: Optional[dict] = None,
                       wd_probes: Optional[dict] = None) -> IndicatorReport:
    """``C_D`` plus ``S_D``/``W_D`` for named probes.

    ``sd_probes`` maps a name to ``(phi, grad_phi)``; ``wd_probes`` maps a
    name to ``(psi, div_psi)``. ``S_D`` entries report the sum-of-norms value.
    """
    rep = IndicatorReport(gd.kind.value, gd.bc.kind.value, gd.mesh.h_max, gd.n_dofs,
                          compute_CD(gd, spec))
    for name, (phi, grad) in (sd_probes or {}).items():
        rep.s_d[name] = compute_SD(gd, spec, phi, grad).s_sum
    for name, (psi, div) in (wd_probes or {}).items():
        rep.w_d[name] = compute_WD(gd, spec, psi, div)
    return rep
