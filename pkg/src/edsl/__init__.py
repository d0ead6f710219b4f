"""Spectral computations for energy-dependent Sturm-Liouville problems.

Solves -y'' + q y + 2*lam*p*y = lam**2 * y on (0,1) with complex p in L2
and distributional q = r' (r in L2), under Dirichlet and mixed boundary
conditions: eigenvalues with labeling and multiplicities, eigenfunctions,
norming constants, characteristic functions, transformation-operator
diagnostics, and principal-value product factorizations.
"""

from .errors import (
    AssumptionShiftError, ChainOrderError, ContourError, EdslError,
    MissingIndexError, NoAdmissibleThetaError, NumericalError,
    PoleProximityError, RefinementError, SingularPointError,
    StripMismatchError, ToleranceError, UnsupportedTermError, ValidationError,
)
from .potentials import (
    GridTerm, LogTerm, PolyTerm, Potential, Problem, StepTerm,
    evaluate, grid, integral_p, logterm, poly, shift_parameter, step, zero,
)

__all__ = [
    "Potential", "Problem", "PolyTerm", "GridTerm", "StepTerm", "LogTerm",
    "poly", "grid", "step", "logterm", "zero",
    "evaluate", "integral_p", "shift_parameter",
    "EdslError", "ValidationError", "NumericalError", "SingularPointError",
    "UnsupportedTermError", "MissingIndexError", "ToleranceError",
    "PoleProximityError", "NoAdmissibleThetaError", "ContourError",
    "RefinementError", "StripMismatchError", "ChainOrderError",
    "AssumptionShiftError",
]

__version__ = "0.1.0"
