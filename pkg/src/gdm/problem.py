"""Continuous elliptic problems under the four boundary-condition families.

A problem is ``-div(Lambda |grad u|^{p-2} grad u + F) = r`` in the unit
square, closed by one of: homogeneous Dirichlet, homogeneous Neumann,
non-homogeneous Neumann (flux ``g``) or Fourier (``flux + b|u|^{p-2}u = g``).

Field conventions (all vectorised over numpy arrays):

* scalar fields ``f(x, y) -> array``
* vector fields ``F(x, y) -> array[..., 2]``
* tensor fields ``Lambda(x, y) -> array[..., 2, 2]``
* boundary fields ``g(x, y, nx, ny) -> array``
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .mesh import Mesh, boundary_integrate, integrate


class BCKind(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    NEUMANN_NONHOMOGENEOUS = "neumann_nonhomogeneous"
    FOURIER = "fourier"


def zero_scalar(x, y):
    return np.zeros(np.shape(x))


def zero_vector(x, y):
    return np.zeros(np.shape(x) + (2,))


def zero_boundary(x, y, nx, ny):
    return np.zeros(np.shape(x))


def constant_scalar(c: float) -> Callable:
    def f(x, y):
        return np.full(np.shape(x), float(c))
    return f


def constant_boundary(c: float) -> Callable:
    def g(x, y, nx, ny):
        return np.full(np.shape(x), float(c))
    return g


def constant_tensor(mat) -> Callable:
    """Tensor field equal to ``mat`` everywhere (scalar, diagonal pair or 2x2)."""
    m = np.asarray(mat, dtype=float)
    if m.ndim == 0:
        m = m * np.eye(2)
    elif m.shape == (2,):
        m = np.diag(m)
    if m.shape != (2, 2):
        raise ValueError("tensor must be a scalar, a diagonal pair or a 2x2 matrix")

    def lam(x, y):
        return np.broadcast_to(m, np.shape(x) + (2, 2)).copy()
    lam.constant = m
    return lam


@dataclass(frozen=True)
class BoundaryCondition:
    kind: BCKind
    g: Optional[Callable] = None
    b: Optional[Callable] = None
    b_min: Optional[float] = None

    def __post_init__(self):
        kind = BCKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is BCKind.FOURIER:
            if self.b is None:
                raise ValueError("Fourier condition needs a coefficient b")
            if self.b_min is None or self.b_min <= 0:
                raise ValueError("Fourier condition needs b_min > 0")
        if kind in (BCKind.NEUMANN_NONHOMOGENEOUS, BCKind.FOURIER) and self.g is None:
            object.__setattr__(self, "g", zero_boundary)

    @property
    def product_space(self) -> bool:
        """True when the unknown carries a separate boundary trace."""
        return self.kind in (BCKind.NEUMANN_NONHOMOGENEOUS, BCKind.FOURIER)

    @property
    def is_neumann(self) -> bool:
        return self.kind in (BCKind.NEUMANN, BCKind.NEUMANN_NONHOMOGENEOUS)

    def check_b(self, bq) -> None:
        """Raise if ``b`` drops below ``b_min`` at the given boundary points."""
        if self.kind is not BCKind.FOURIER:
            return
        vals = self.b(bq.x, bq.y, bq.nx, bq.ny)
        if np.any(vals < self.b_min * (1 - 1e-12)):
            raise ValueError("Fourier coefficient b falls below b_min")

    @classmethod
    def dirichlet(cls):
        return cls(BCKind.DIRICHLET)

    @classmethod
    def neumann(cls, g: Optional[Callable] = None):
        if g is None:
            return cls(BCKind.NEUMANN)
        return cls(BCKind.NEUMANN_NONHOMOGENEOUS, g=g)

    @classmethod
    def fourier(cls, b=1.0, g: Optional[Callable] = None, b_min: Optional[float] = None):
        if not callable(b):
            b_min = float(b) if b_min is None else b_min
            b = constant_boundary(b)
        return cls(BCKind.FOURIER, g=g, b=b, b_min=b_min)


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients and data of one elliptic problem."""

    bc: BoundaryCondition
    p: float = 2.0
    lam: Callable = field(default_factory=lambda: constant_tensor(1.0))
    r: Callable = zero_scalar
    F: Callable = zero_vector
    regularization_eps: float = 1e-8

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must lie in (1, inf)")
        if self.regularization_eps < 0:
            raise ValueError("regularization_eps must be nonnegative")
        if not callable(self.lam):
            object.__setattr__(self, "lam", constant_tensor(self.lam))

    @property
    def p_conjugate(self) -> float:
        return self.p / (self.p - 1.0)

    def lambda_range(self, points) -> tuple[float, float]:
        """Extreme eigenvalues of Lambda over the sample points (must be SPD)."""
        pts = np.atleast_2d(points)
        mats = self.lam(pts[:, 0], pts[:, 1])
        if not np.allclose(mats, np.swapaxes(mats, -1, -2), rtol=0, atol=1e-14):
            raise ValueError("Lambda must be symmetric")
        ev = np.linalg.eigvalsh(mats)
        lo, hi = float(ev.min()), float(ev.max())
        if lo <= 0:
            raise ValueError("Lambda must be uniformly positive definite")
        return lo, hi

    def replace(self, **kw) -> "ProblemSpec":
        from dataclasses import replace
        return replace(self, **kw)


# ----------------------------------------------------------------------
# operators

def _eff_norm(v, p, eps):
    n2 = np.einsum("...i,...i->...", v, v)
    if eps > 0 and p < 2:
        n2 = n2 + eps * eps
    return np.sqrt(n2)


def flux_operator(spec: ProblemSpec, x, v) -> np.ndarray:
    """Leray-Lions flux ``Lambda(x) |v|^{p-2} v``.

    For ``p < 2`` and a positive ``regularization_eps`` the modulus is
    replaced by ``sqrt(eps^2 + |v|^2)``.

    Parameters
    ----------
    x : array_like, shape (..., 2)
    v : array_like, shape (..., 2)
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    lam = spec.lam(x[..., 0], x[..., 1])
    p = spec.p
    if p == 2:
        scale = np.ones(v.shape[:-1])
    else:
        nv = _eff_norm(v, p, spec.regularization_eps)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(nv > 0, nv ** (p - 2), 0.0)
    return np.einsum("...ij,...j->...i", lam, v) * scale[..., None]


def power_map(s, p: float, eps: float = 0.0):
    """Scalar duality map ``|s|^{p-2} s`` (regularised like the flux for p < 2)."""
    s = np.asarray(s, dtype=float)
    if p == 2:
        return s.copy()
    mod = np.sqrt(s * s + eps * eps) if (eps > 0 and p < 2) else np.abs(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(mod > 0, mod ** (p - 2) * s, 0.0)


@dataclass(frozen=True)
class ZeroOrderTerm:
    """Value of the zero-order operator: a volume multiple of the indicator of
    the domain plus a boundary density (either may vanish)."""

    volume_coeff: float
    boundary_field: Optional[np.ndarray]

    @property
    def is_zero(self) -> bool:
        return self.volume_coeff == 0 and (
            self.boundary_field is None or not np.any(self.boundary_field))


def zero_order_operator(spec: ProblemSpec, integral: Optional[float] = None,
                        trace=None, bq=None) -> ZeroOrderTerm:
    """Evaluate the zero-order operator of the boundary-condition family.

    Parameters
    ----------
    integral : float
        ``int_Omega u`` (Neumann variants).
    trace : array_like
        Boundary values of ``u`` at the points of ``bq`` (Fourier).
    bq : BoundaryQuadrature
        Points at which ``trace`` is sampled; needed to evaluate ``b``.
    """
    kind = spec.bc.kind
    if kind is BCKind.DIRICHLET:
        return ZeroOrderTerm(0.0, None)
    if spec.bc.is_neumann:
        if integral is None:
            raise ValueError("Neumann zero-order operator needs the integral of u")
        return ZeroOrderTerm(float(power_map(integral, spec.p, spec.regularization_eps)), None)
    if trace is None or bq is None:
        raise ValueError("Fourier zero-order operator needs the trace and its points")
    b = spec.bc.b(bq.x, bq.y, bq.nx, bq.ny)
    return ZeroOrderTerm(0.0, b * power_map(trace, spec.p, spec.regularization_eps))


def seminorm_LV(spec: ProblemSpec, integral: Optional[float] = None, trace=None,
                bq=None, area: float = 1.0) -> float:
    """Seminorm ``|u|_{L,V}`` selected by the boundary condition.

    Dirichlet gives 0, the Neumann variants ``|int u| / |Omega|^{1/p'}`` and
    Fourier the ``L^p`` norm of the boundary trace. These closed forms are
    exact dual norms for ``p = 2`` and are used as the definition otherwise.
    """
    kind = spec.bc.kind
    if kind is BCKind.DIRICHLET:
        return 0.0
    if spec.bc.is_neumann:
        return abs(float(integral)) / area ** (1.0 / spec.p_conjugate)
    trace = np.asarray(trace, dtype=float)
    return float(np.dot(bq.w, np.abs(trace) ** spec.p) ** (1.0 / spec.p))


@dataclass(frozen=True)
class Compatibility:
    applicable: bool
    compatible: bool
    defect: float


def check_compatibility(spec: ProblemSpec, mesh: Mesh, degree: int = 6,
                        npoints: int = 4) -> Compatibility:
    """Check ``int r + int g = 0`` for the Neumann families.

    The scheme with the zero-order operator is well posed either way; this
    is a diagnostic.
    """
    if not spec.bc.is_neumann:
        return Compatibility(False, True, 0.0)
    g = spec.bc.g if spec.bc.kind is BCKind.NEUMANN_NONHOMOGENEOUS else zero_boundary
    ir = integrate(mesh, degree, spec.r)
    ig = boundary_integrate(mesh, g, npoints)
    l1 = (integrate(mesh, degree, lambda x, y: np.abs(spec.r(x, y)))
          + boundary_integrate(mesh, lambda *a: np.abs(g(*a)), npoints))
    defect = ir + ig
    return Compatibility(True, abs(defect) <= 1e-10 * (l1 + 1.0), defect)


# ----------------------------------------------------------------------
# manufactured solutions

@dataclass(frozen=True)
class ManufacturedCase:
    """Known solution together with data consistent with it.

    ``exact_u``/``exact_grad`` are None for cases that only support
    self-convergence studies.
    """

    name: str
    bc_kind: BCKind
    p: float
    exact_u: Optional[Callable]
    exact_grad: Optional[Callable]
    r: Callable
    F: Callable = zero_vector
    g: Optional[Callable] = None
    b: Optional[float] = None
    lam: object = 1.0
    description: str = ""

    @property
    def has_exact(self) -> bool:
        return self.exact_u is not None

    def boundary_condition(self) -> BoundaryCondition:
        if self.bc_kind is BCKind.DIRICHLET:
            return BoundaryCondition.dirichlet()
        if self.bc_kind is BCKind.NEUMANN:
            return BoundaryCondition(BCKind.NEUMANN)
        if self.bc_kind is BCKind.NEUMANN_NONHOMOGENEOUS:
            return BoundaryCondition(BCKind.NEUMANN_NONHOMOGENEOUS, g=self.g)
        return BoundaryCondition.fourier(self.b, g=self.g)

    def problem(self, p: Optional[float] = None, **kw) -> ProblemSpec:
        return ProblemSpec(bc=self.boundary_condition(), p=self.p if p is None else p,
                           lam=constant_tensor(self.lam), r=self.r, F=self.F, **kw)


PI = np.pi


def _sin_sin(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def _sin_sin_grad(x, y):
    return np.stack([PI * np.cos(PI * x) * np.sin(PI * y),
                     PI * np.sin(PI * x) * np.cos(PI * y)], axis=-1)


def _cos_cos(x, y):
    return np.cos(PI * x) * np.cos(PI * y)


def _cos_cos_grad(x, y):
    return np.stack([-PI * np.sin(PI * x) * np.cos(PI * y),
                     -PI * np.cos(PI * x) * np.sin(PI * y)], axis=-1)


def _normal_derivative(grad):
    def dn(x, y, nx, ny):
        gr = grad(x, y)
        return gr[..., 0] * nx + gr[..., 1] * ny
    return dn


def _m3_g(x, y, nx, ny):
    return _normal_derivative(_cos_cos_grad)(x, y, nx, ny) + _cos_cos(x, y)


def _m5_u(x, y):
    return _cos_cos(x, y) + x - 0.5


def _m5_grad(x, y):
    g = _cos_cos_grad(x, y)
    g[..., 0] += 1.0
    return g


def _m6_F(x, y):
    return np.stack([x * y, np.zeros(np.shape(x))], axis=-1)


def manufactured_catalog() -> list[ManufacturedCase]:
    """Shipped manufactured cases, addressed by name ``M1`` ... ``M6``."""
    two_pi2 = 2 * PI ** 2
    return [
        ManufacturedCase(
            "M1", BCKind.DIRICHLET, 2.0, _sin_sin, _sin_sin_grad,
            r=lambda x, y: two_pi2 * _sin_sin(x, y),
            description="Dirichlet, p=2, u = sin(pi x) sin(pi y)"),
        ManufacturedCase(
            "M2", BCKind.NEUMANN, 2.0, _cos_cos, _cos_cos_grad,
            r=lambda x, y: two_pi2 * _cos_cos(x, y),
            description="homogeneous Neumann, p=2, u = cos(pi x) cos(pi y)"),
        ManufacturedCase(
            "M3", BCKind.FOURIER, 2.0, _cos_cos, _cos_cos_grad,
            r=lambda x, y: two_pi2 * _cos_cos(x, y), g=_m3_g, b=1.0,
            description="Fourier b=1, p=2, u = cos(pi x) cos(pi y)"),
        ManufacturedCase(
            "M4", BCKind.DIRICHLET, 4.0, None, None, r=constant_scalar(1.0),
            description="Dirichlet, p in {1.5, 4}, r = 1; self-convergence only"),
        ManufacturedCase(
            "M5", BCKind.NEUMANN_NONHOMOGENEOUS, 2.0, _m5_u, _m5_grad,
            r=lambda x, y: two_pi2 * _cos_cos(x, y), g=_normal_derivative(_m5_grad),
            description="non-homogeneous Neumann, p=2, u = cos(pi x) cos(pi y) + x - 1/2"),
        ManufacturedCase(
            "M6", BCKind.DIRICHLET, 2.0, _sin_sin, _sin_sin_grad,
            r=lambda x, y: two_pi2 * _sin_sin(x, y) - y, F=_m6_F,
            description="Dirichlet, p=2, u = sin(pi x) sin(pi y), F = (xy, 0)"),
    ]


def get_case(name: str) -> ManufacturedCase:
    for case in manufactured_catalog():
        if case.name == name.upper():
            return case
    raise KeyError(f"unknown manufactured case {name!r}")
