"""Potentials for the spectral problem -y'' + q y + 2*lam*p*y = lam**2 * y.

Here p is a complex function in L2(0,1) and q = r' is understood
distributionally through an L2 antiderivative r.  Both p and r are sums
of closed-form terms:

* ``PolyTerm``    -- polynomial with complex coefficients,
* ``GridTerm``    -- values on a node grid, linear interpolation,
* ``StepTerm``    -- jump of size kappa at an interior point x0; placed
                     in r it encodes the delta kappa*delta(x - x0) in q,
* ``LogTerm``     -- c*log|x - x0|; placed in r it encodes the
                     Coulomb-like singularity c/(x - x0) in q.

Every term has an exact antiderivative, which the integrators rely on.
Step terms are right-continuous: the jump is included for x >= x0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import SingularPointError, UnsupportedTermError, ValidationError

__all__ = [
    "PolyTerm", "GridTerm", "StepTerm", "LogTerm",
    "Potential", "Problem",
    "poly", "grid", "step", "logterm", "zero",
    "evaluate", "integral_p", "shift_parameter",
]


def _as_array(x):
    """Promote to float ndarray, remembering whether input was scalar."""
    a = np.asarray(x, dtype=float)
    return a, a.ndim == 0


def _ret(values, scalar):
    return complex(values) if scalar else values


# ---------------------------------------------------------------------------
# terms

@dataclass(frozen=True)
class PolyTerm:
    """Polynomial sum_k coeffs[k] * x**k."""

    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(complex(c) for c in self.coeffs))
        if not self.coeffs:
            raise ValidationError("polynomial needs at least one coefficient")

    def value(self, x):
        x, scalar = _as_array(x)
        c = np.array(self.coeffs, dtype=complex)
        return _ret(np.polynomial.polynomial.polyval(x, c), scalar)

    def antiderivative(self, x):
        """A(x) = int_0^x of the term (A(0) = 0)."""
        x, scalar = _as_array(x)
        c = np.array(self.coeffs, dtype=complex)
        ac = np.concatenate([[0.0 + 0.0j], c / (1.0 + np.arange(len(c)))])
        return _ret(np.polynomial.polynomial.polyval(x, ac), scalar)

    def derivative(self, x):
        x, scalar = _as_array(x)
        c = np.array(self.coeffs, dtype=complex)
        dc = c[1:] * np.arange(1, len(c)) if len(c) > 1 else np.array([0j])
        return _ret(np.polynomial.polynomial.polyval(x, dc), scalar)

    def breakpoints(self):
        return ()

    def singular_points(self):
        return ()


@dataclass(frozen=True)
class GridTerm:
    """Piecewise-linear interpolant of complex values on nodes in [0,1]."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if nodes.ndim != 1 or values.shape != nodes.shape:
            raise ValidationError("grid nodes/values must be 1-d arrays of equal length")
        if len(nodes) < 2:
            raise ValidationError("grid needs at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValidationError("grid nodes must be strictly increasing")
        if abs(nodes[0]) > 1e-12 or abs(nodes[-1] - 1.0) > 1e-12:
            raise ValidationError("grid must cover [0,1] endpoint to endpoint")
        nodes = nodes.copy()
        nodes[0], nodes[-1] = 0.0, 1.0
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        # cumulative exact integrals of the interpolant at the nodes
        seg = 0.5 * (values[1:] + values[:-1]) * np.diff(nodes)
        cum = np.concatenate([[0j], np.cumsum(seg)])
        object.__setattr__(self, "_cum", cum)

    def _locate(self, x):
        idx = np.searchsorted(self.nodes, x, side="right") - 1
        return np.clip(idx, 0, len(self.nodes) - 2)

    def value(self, x):
        x, scalar = _as_array(x)
        i = self._locate(x)
        x0, x1 = self.nodes[i], self.nodes[i + 1]
        w = (x - x0) / (x1 - x0)
        return _ret(self.values[i] * (1 - w) + self.values[i + 1] * w, scalar)

    def antiderivative(self, x):
        x, scalar = _as_array(x)
        i = self._locate(x)
        x0, x1 = self.nodes[i], self.nodes[i + 1]
        v0, v1 = self.values[i], self.values[i + 1]
        t = x - x0
        slope = (v1 - v0) / (x1 - x0)
        return _ret(self._cum[i] + v0 * t + 0.5 * slope * t * t, scalar)

    def derivative(self, x):
        x, scalar = _as_array(x)
        i = self._locate(x)
        slope = (self.values[i + 1] - self.values[i]) / (self.nodes[i + 1] - self.nodes[i])
        return _ret(slope, scalar)

    def breakpoints(self):
        return tuple(self.nodes[1:-1])

    def singular_points(self):
        return ()


@dataclass(frozen=True)
class StepTerm:
    """0 for x < x0 and ``jump`` for x >= x0, with x0 strictly interior."""

    x0: float
    jump: complex

    def __post_init__(self):
        object.__setattr__(self, "x0", float(self.x0))
        object.__setattr__(self, "jump", complex(self.jump))
        if not 0.0 < self.x0 < 1.0:
            raise ValidationError("step abscissa must lie strictly inside (0,1)", field="x0")

    def value(self, x):
        x, scalar = _as_array(x)
        return _ret(self.jump * (x >= self.x0), scalar)

    def antiderivative(self, x):
        x, scalar = _as_array(x)
        return _ret(self.jump * np.clip(x - self.x0, 0.0, None), scalar)

    def derivative(self, x):
        # the distributional part (a delta) is handled by the callers
        x, scalar = _as_array(x)
        return _ret(np.zeros_like(x, dtype=complex), scalar)

    def breakpoints(self):
        return (self.x0,)

    def singular_points(self):
        return ()


@dataclass(frozen=True)
class LogTerm:
    """c * log|x - x0|; square integrable for any center in [0,1]."""

    x0: float
    strength: complex

    def __post_init__(self):
        object.__setattr__(self, "x0", float(self.x0))
        object.__setattr__(self, "strength", complex(self.strength))
        if not 0.0 <= self.x0 <= 1.0:
            raise ValidationError("log center must lie in [0,1]", field="x0")

    def value(self, x):
        x, scalar = _as_array(x)
        t = np.abs(x - self.x0)
        with np.errstate(divide="ignore"):
            out = self.strength * np.log(t)
        return _ret(out, scalar)

    def antiderivative(self, x):
        # primitive of log|t| is t*log|t| - t, continuous through t = 0
        x, scalar = _as_array(x)

        def g(t):
            a = np.abs(t)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(a > 0, t * np.log(a) - t, 0.0)
            return out

        return _ret(self.strength * (g(x - self.x0) - g(-self.x0)), scalar)

    def derivative(self, x):
        x, scalar = _as_array(x)
        return _ret(self.strength / (x - self.x0), scalar)

    def breakpoints(self):
        return (self.x0,) if 0.0 < self.x0 < 1.0 else ()

    def singular_points(self):
        return (self.x0,)


# ---------------------------------------------------------------------------
# potential = sum of terms

@dataclass(frozen=True)
class Potential:
    """Sum of potential terms; immutable and safe to share."""

    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def value(self, x):
        """Pointwise value; infinite at log centers (callers must avoid them)."""
        x_arr, scalar = _as_array(x)
        out = np.zeros_like(x_arr, dtype=complex)
        for t in self.terms:
            out = out + t.value(x_arr)
        return _ret(out, scalar)

    def antiderivative(self, x):
        """Exact int_0^x, term by term."""
        x_arr, scalar = _as_array(x)
        out = np.zeros_like(x_arr, dtype=complex)
        for t in self.terms:
            out = out + t.antiderivative(x_arr)
        return _ret(out, scalar)

    def integral(self, a, b):
        """Exact int_a^b; broadcasts over arrays."""
        return self.antiderivative(b) - self.antiderivative(a)

    def derivative_value(self, x):
        """Classical derivative of the smooth part (steps contribute 0)."""
        x_arr, scalar = _as_array(x)
        out = np.zeros_like(x_arr, dtype=complex)
        for t in self.terms:
            out = out + t.derivative(x_arr)
        return _ret(out, scalar)

    def step_terms(self):
        return tuple(t for t in self.terms if isinstance(t, StepTerm))

    def log_terms(self):
        return tuple(t for t in self.terms if isinstance(t, LogTerm))

    def breakpoints(self):
        """Interior points where the potential is non-smooth."""
        pts = []
        for t in self.terms:
            pts.extend(t.breakpoints())
        return tuple(sorted(set(pts)))

    def singular_points(self):
        pts = []
        for t in self.terms:
            pts.extend(t.singular_points())
        return tuple(sorted(set(pts)))

    def l2_norm(self, tol=1e-10):
        """L2(0,1) norm by panel quadrature with singularity grading."""
        from .quadrature import adaptive_panel_quad, graded_breakpoints

        breaks = graded_breakpoints(
            0.0, 1.0,
            interior=self.breakpoints(),
            centers=self.singular_points(),
        )
        val = adaptive_panel_quad(lambda x: np.abs(self.value(x)) ** 2, breaks, tol=tol)
        return math.sqrt(max(val.real, 0.0))

    def antiderivative_potential(self, grid_split=8, log_points=48):
        """int_0^x of this potential, re-expressed as a Potential.

        Polynomials and steps are exact (steps become piecewise-linear grid
        terms); grid terms are resampled on a ``grid_split``-times finer grid
        (the true antiderivative is piecewise quadratic); log terms are
        sampled on a grid graded toward the center.
        """
        out = []
        for t in self.terms:
            if isinstance(t, PolyTerm):
                c = np.array(t.coeffs, dtype=complex)
                out.append(PolyTerm(tuple(np.concatenate([[0j], c / (1 + np.arange(len(c)))]))))
            elif isinstance(t, StepTerm):
                nodes = np.array([0.0, t.x0, 1.0])
                vals = np.array([0.0, 0.0, t.jump * (1.0 - t.x0)], dtype=complex)
                out.append(GridTerm(nodes, vals))
            elif isinstance(t, GridTerm):
                fine = []
                for i in range(len(t.nodes) - 1):
                    fine.append(np.linspace(t.nodes[i], t.nodes[i + 1], grid_split, endpoint=False))
                nodes = np.concatenate(fine + [[1.0]])
                out.append(GridTerm(nodes, t.antiderivative(nodes)))
            elif isinstance(t, LogTerm):
                left = t.x0 - np.geomspace(1e-9, max(t.x0, 1e-9), log_points // 2) if t.x0 > 0 else np.array([])
                right = t.x0 + np.geomspace(1e-9, max(1 - t.x0, 1e-9), log_points // 2) if t.x0 < 1 else np.array([])
                nodes = np.unique(np.clip(np.concatenate([
                    np.linspace(0.0, 1.0, 65), left, right, [0.0, 1.0, t.x0]]), 0.0, 1.0))
                out.append(GridTerm(nodes, t.antiderivative(nodes)))
            else:  # pragma: no cover
                raise UnsupportedTermError(f"cannot integrate term {t!r}")
        return Potential(tuple(out))

    def __add__(self, other):
        if isinstance(other, Potential):
            return Potential(self.terms + other.terms)
        return NotImplemented

    def scaled(self, factor):
        factor = complex(factor)
        out = []
        for t in self.terms:
            if isinstance(t, PolyTerm):
                out.append(PolyTerm(tuple(factor * c for c in t.coeffs)))
            elif isinstance(t, GridTerm):
                out.append(GridTerm(t.nodes, factor * t.values))
            elif isinstance(t, StepTerm):
                out.append(StepTerm(t.x0, factor * t.jump))
            elif isinstance(t, LogTerm):
                out.append(LogTerm(t.x0, factor * t.strength))
        return Potential(tuple(out))


# term constructors ---------------------------------------------------------

def poly(*coeffs):
    """Potential c0 + c1*x + c2*x**2 + ..."""
    return Potential((PolyTerm(tuple(coeffs)),))


def grid(nodes, values):
    return Potential((GridTerm(np.asarray(nodes, float), np.asarray(values, complex)),))


def step(x0, jump):
    return Potential((StepTerm(x0, jump),))


def logterm(x0, strength):
    return Potential((LogTerm(x0, strength),))


def zero():
    return Potential(())


# ---------------------------------------------------------------------------
# problem

_BCS = ("dirichlet", "mixed")


@dataclass(frozen=True)
class Problem:
    """Spectral problem data: potentials, boundary condition, applied shift.

    ``shift`` records the cumulative spectral-parameter shift that produced
    this problem from its pristine original: eigenvalues of this problem
    equal eigenvalues of the original plus ``shift``.
    """

    p: Potential
    r: Potential
    bc: str = "dirichlet"
    h: complex = 0j
    shift: complex = 0j

    def __post_init__(self):
        if self.bc not in _BCS:
            raise ValidationError(f"bc must be one of {_BCS}", field="bc")
        object.__setattr__(self, "h", complex(self.h))
        object.__setattr__(self, "shift", complex(self.shift))
        if self.bc == "mixed" and not np.isfinite([self.h.real, self.h.imag]).all():
            raise ValidationError("mixed boundary condition requires finite h", field="h")

    @cached_property
    def p0(self):
        """int_0^1 p."""
        return complex(self.p.integral(0.0, 1.0))

    def phase(self, x):
        """int_0^x p (the lam-free part of the phase a(x))."""
        return self.p.antiderivative(x)


def evaluate(f: Potential, x: float) -> complex:
    """Pointwise evaluation with an explicit singular-point check."""
    for t in f.log_terms():
        if x == t.x0:
            raise SingularPointError(f"potential is singular at x = {x}")
    return complex(f.value(float(x)))


def integral_p(problem: Problem, x) -> complex:
    """int_0^x p; integral_p(problem, 1) is the mean value p0."""
    out = problem.p.antiderivative(x)
    return complex(out) if np.ndim(x) == 0 else out


def shift_parameter(problem: Problem, lam0) -> Problem:
    """Shift the spectral parameter: p -> p + lam0, q -> q - 2*lam0*p - lam0**2.

    The shifted problem's eigenvalues are the original's plus ``lam0``;
    ``shift`` accumulates so results can be mapped back.
    """
    lam0 = complex(lam0)
    if lam0 == 0:
        return problem
    p_new = problem.p + poly(lam0)
    r_extra = problem.p.antiderivative_potential().scaled(-2.0 * lam0) + poly(0.0, -lam0 * lam0)
    return replace(problem, p=p_new, r=problem.r + r_extra, shift=problem.shift + lam0)
