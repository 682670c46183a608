"""Numerical engine for Chernoff, Lie-Trotter and Trotter-Kato product formulas.

The package models a desk-scale locally convex space (finite coordinate
vectors with a family of seminorms), linear operators on it, Chernoff
functions F with F(0)=I, and the product-formula machinery that checks
convergence of F(t/n)^n against trusted semigroup references.
"""

from .lcs_core import (
    StateVector,
    SeminormFamily,
    LatticeSpec,
    eval_seminorm,
    derived_seminorm,
    iterated_derived_seminorm,
)
from .operators import (
    LinOp,
    SemigroupEvaluator,
    apply,
    adjoint,
    is_dissipative,
    expm_reference,
    resolvent_apply,
)
from .chernoff import (
    ChernoffFn,
    ApproximatingFamily,
    ConvergenceReport,
    product_apply,
    product_path,
    derivative_path,
    effective_derivative_probe,
    small_step_consistency,
    step_difference_consistency,
    lie_trotter,
    implicit_euler,
    chernoff_converge,
    stability_estimate,
    uniqueness_cross_check,
    regularity_check,
)

__version__ = "0.1.0"
