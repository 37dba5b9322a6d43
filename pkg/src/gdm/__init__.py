"""Gradient discretisation solvers for linear and p-Laplace elliptic problems.

Modules
-------
mesh
    Triangulations of the unit square, refinement and quadrature helpers.
problem
    Boundary conditions, coefficients, Leray-Lions operators and manufactured cases.
discretisation
    P1 and Crouzeix-Raviart gradient discretisations and the C_D, S_D, W_D indicators.
scheme
    Assembly and linear / damped Picard solvers.
analysis
    Error measurement, a-priori bound checks and convergence studies.
cli
    Configuration-driven experiment runner.
"""
__version__ = "0.1.0"
