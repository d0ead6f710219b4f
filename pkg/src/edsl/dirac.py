"""Fundamental solution of the first-order reduction and characteristic
functions.

The second-order problem is equivalent to J u' + P u = lam u with

    J = [[0, 1], [-1, 0]],   P = [[0, -v], [-v, 2p]],

where q = v' + v**2 (v from the ``miura`` module).  The fundamental
matrix U(x, lam), U(0) = I, yields the Dirichlet characteristic function
phi(lam) = u2(1, lam)/lam and the mixed one
psi(mu) = u1(1, mu) + (h1 + h) u2(1, mu)/mu, with u = U(., lam) (1,0)^t.
Near lam = 0 both have removable singularities; there the quasi-derivative
system for y (y(0) = 0, y^[1](0) = 1) is integrated instead, for which

    phi(lam) = y(1, lam),    psi(mu) = y^[1](1, mu) + h y(1, mu)

hold identically (u2 = lam*y and u1 = y^[1] - w*y, w = v - r, so the two
branches agree exactly where both are defined).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .miura import MiuraPotential, choose_theta0, miura_v
from .potentials import Potential, Problem
from .transfer import (DiracSystem, QuasiDerivativeSystem, J_MATRIX,
                       solve_system, system_breakpoints)

__all__ = [
    "DiracPotential", "FundamentalSolution", "LAMBDA_SWITCH",
    "build_dirac_potential", "solve_U", "char_dirichlet", "char_mixed",
    "eigenfunction_trace", "CharFunction",
]

LAMBDA_SWITCH = 0.5

_E1 = np.array([1.0, 0.0], dtype=complex)


@dataclass(frozen=True)
class DiracPotential:
    """Matrix potential data P = [[0, -v], [-v, 2p]] with v = r + w."""

    p: Potential
    miura: MiuraPotential

    @property
    def r(self):
        return self.miura.r

    def v(self, x):
        return self.miura.v(x)

    def v_integral(self, a, b):
        return self.miura.v_integral(a, b)

    def P_matrix(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (2, 2), dtype=complex)
        vv = self.v(x)
        out[..., 0, 1] = -vv
        out[..., 1, 0] = -vv
        out[..., 1, 1] = 2.0 * np.asarray(self.p.value(x), dtype=complex)
        return out

    def Q_matrix(self, x):
        """Q = [[-p, -v], [-v, p]]; anti-commutes with J exactly."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (2, 2), dtype=complex)
        pv = np.asarray(self.p.value(x), dtype=complex)
        vv = self.v(x)
        out[..., 0, 0] = -pv
        out[..., 0, 1] = -vv
        out[..., 1, 0] = -vv
        out[..., 1, 1] = pv
        return out

    def base_breaks(self, extra=()):
        return system_breakpoints(self.p, self.r, extra=tuple(extra) + tuple(self.miura.nodes[[0, -1]]))

    def system(self):
        return DiracSystem(self.p, self.miura)


def build_dirac_potential(problem: Problem, tol=1e-10, theta0=None) -> DiracPotential:
    """Choose an admissible angle seed (or use the given one) and assemble v."""
    from .miura import solve_pruefer
    if theta0 is None:
        ps = choose_theta0(problem.r, tol=tol)
    else:
        ps = solve_pruefer(problem.r, theta0, tol=tol)
    return DiracPotential(p=problem.p, miura=miura_v(ps, problem.r))


@dataclass
class FundamentalSolution:
    """U(x, lam) on a dense grid, with optional dU/dlam."""

    lam: complex
    xs: np.ndarray
    U: np.ndarray                 # (N+1, 2, 2)
    dU: np.ndarray | None
    det_drift: float
    err_est: float
    _prop: object = field(default=None, repr=False)

    def end(self, order=0):
        return self._prop.end[order][0]

    def at(self, x):
        i = np.searchsorted(self.xs, x)
        if i < len(self.xs) and np.isclose(self.xs[i], x, atol=1e-14):
            return self.U[i]
        raise ValueError(f"{x} is not a stored node; pass it via dense_grid")

    def column(self, init=(1.0, 0.0)):
        """u(x) = U(x) @ init for all stored nodes, shape (N+1, 2)."""
        vec = np.asarray(init, dtype=complex)
        return np.einsum("nij,j->ni", self.U, vec)


def solve_U(dp: DiracPotential, lam, tol=1e-10, want_dlam=False,
            dense_grid=(), fixed_breaks=None) -> FundamentalSolution:
    """Integrate J U' + P U = lam U, U(0) = I, to local tolerance tol.

    Cells are split at step abscissae and graded toward log centers; the
    dense output contains all requested ``dense_grid`` points.
    """
    order = 1 if want_dlam else 0
    sol = solve_system(dp.system(), np.array([complex(lam)]), tol=tol, order=order,
                       dense="raw", base_breaks=dp.base_breaks(extra=dense_grid),
                       fixed_breaks=fixed_breaks)
    return FundamentalSolution(
        lam=complex(lam), xs=sol.breaks, U=sol.dense[0][:, 0],
        dU=sol.dense[1][:, 0] if want_dlam else None,
        det_drift=sol.det_drift, err_est=sol.err_est, _prop=sol)


def _dirac_char_values(problem, dp, lams, tol, want_dlam, kind):
    order = 1 if want_dlam else 0
    sol = solve_system(dp.system(), lams, tol=tol, order=order,
                       base_breaks=dp.base_breaks())
    u = np.einsum("lij,j->li", sol.end[0], _E1)
    du = np.einsum("lij,j->li", sol.end[1], _E1) if want_dlam else None
    if kind == "dirichlet":
        val = u[:, 1] / lams
        dval = du[:, 1] / lams - u[:, 1] / lams ** 2 if want_dlam else None
    else:
        hh = dp.miura.h1 + problem.h
        val = u[:, 0] + hh * u[:, 1] / lams
        dval = (du[:, 0] + hh * (du[:, 1] / lams - u[:, 1] / lams ** 2)) if want_dlam else None
    return val, dval


def _quasi_char_values(problem, lams, tol, want_dlam, kind):
    order = 1 if want_dlam else 0
    system = QuasiDerivativeSystem(problem.r, problem.p)
    sol = solve_system(system, lams, tol=tol, order=order,
                       base_breaks=system_breakpoints(problem.r, problem.p))
    init = np.array([0.0, 1.0], dtype=complex)
    y = np.einsum("lij,j->li", sol.end[0], init)
    dy = np.einsum("lij,j->li", sol.end[1], init) if want_dlam else None
    if kind == "dirichlet":
        val = y[:, 0]
        dval = dy[:, 0] if want_dlam else None
    else:
        val = y[:, 1] + problem.h * y[:, 0]
        dval = (dy[:, 1] + problem.h * dy[:, 0]) if want_dlam else None
    return val, dval


class CharFunction:
    """Batched characteristic function with optional lam-derivative.

    Routes |lam| >= switch through the first-order reduction and small
    |lam| through the quasi-derivative system (removable singularity at
    lam = 0 avoided).  A partition cache makes repeated evaluations at
    a fixed tolerance cheap: the adaptive cell layout is established once
    per (branch, |lam| scale) and reused.
    """

    def __init__(self, problem: Problem, dp: DiracPotential | None = None,
                 tol=1e-10, switch=LAMBDA_SWITCH, use_cache=True):
        self.problem = problem
        self.kind = problem.bc
        self.tol = tol
        self.switch = switch
        self.use_cache = use_cache
        self._dp = dp
        self._parts = {}

    @property
    def dp(self):
        if self._dp is None:
            self._dp = build_dirac_potential(self.problem, tol=self.tol / 10)
        return self._dp

    def _cached_breaks(self, branch, scale, system, base):
        key_scale = float(2 ** np.ceil(np.log2(max(scale, 1.0))))
        key = (branch, key_scale)
        if key not in self._parts:
            probe = np.array([key_scale * np.exp(0.37j), 0.9 * key_scale + 0.1j,
                              max(0.6 * key_scale, self.switch)], dtype=complex)
            sol = solve_system(system, probe, tol=self.tol, base_breaks=base)
            self._parts[key] = sol.breaks
        return self._parts[key]

    def __call__(self, lams, want_dlam=False):
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        val = np.empty(lams.shape, dtype=complex)
        dval = np.empty(lams.shape, dtype=complex) if want_dlam else None
        order = 1 if want_dlam else 0
        small = np.abs(lams) < self.switch
        for branch, mask in (("quasi", small), ("dirac", ~small)):
            if not np.any(mask):
                continue
            sub = lams[mask]
            if branch == "quasi":
                system = QuasiDerivativeSystem(self.problem.r, self.problem.p)
                base = system_breakpoints(self.problem.r, self.problem.p)
            else:
                system = self.dp.system()
                base = self.dp.base_breaks()
            if self.use_cache:
                breaks = self._cached_breaks(branch, float(np.max(np.abs(sub))), system, base)
                sol = solve_system(system, sub, tol=self.tol, order=order,
                                   fixed_breaks=breaks)
            else:
                sol = solve_system(system, sub, tol=self.tol, order=order,
                                   base_breaks=base)
            if branch == "quasi":
                init = np.array([0.0, 1.0], dtype=complex)
                y = np.einsum("lij,j->li", sol.end[0], init)
                dy = np.einsum("lij,j->li", sol.end[1], init) if want_dlam else None
                if self.kind == "dirichlet":
                    v, dv = y[:, 0], (dy[:, 0] if want_dlam else None)
                else:
                    v = y[:, 1] + self.problem.h * y[:, 0]
                    dv = (dy[:, 1] + self.problem.h * dy[:, 0]) if want_dlam else None
            else:
                u = np.einsum("lij,j->li", sol.end[0], _E1)
                du = np.einsum("lij,j->li", sol.end[1], _E1) if want_dlam else None
                if self.kind == "dirichlet":
                    v = u[:, 1] / sub
                    dv = (du[:, 1] / sub - u[:, 1] / sub ** 2) if want_dlam else None
                else:
                    hh = self.dp.miura.h1 + self.problem.h
                    v = u[:, 0] + hh * u[:, 1] / sub
                    dv = (du[:, 0] + hh * (du[:, 1] / sub - u[:, 1] / sub ** 2)) \
                        if want_dlam else None
            val[mask] = v
            if want_dlam:
                dval[mask] = dv
        return (val, dval) if want_dlam else val

    def u2_end(self, lams):
        """u2(1, lam) = lam * phi(lam) (Dirichlet data)."""
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        return lams * self.__call__(lams)


def char_dirichlet(problem: Problem, dp: DiracPotential, lam, tol=1e-10,
                   switch=LAMBDA_SWITCH):
    """phi(lam): zeros are exactly the Dirichlet eigenvalues."""
    lams = np.atleast_1d(np.asarray(lam, dtype=complex))
    scalar = np.ndim(lam) == 0
    out = np.empty(lams.shape, dtype=complex)
    small = np.abs(lams) < switch
    if np.any(small):
        out[small] = _quasi_char_values(problem, lams[small], tol, False, "dirichlet")[0]
    if np.any(~small):
        out[~small] = _dirac_char_values(problem, dp, lams[~small], tol, False, "dirichlet")[0]
    return complex(out[0]) if scalar else out


def char_mixed(problem: Problem, dp: DiracPotential, mu, h=None, tol=1e-10,
               switch=LAMBDA_SWITCH):
    """psi(mu): zeros are the eigenvalues under y(0) = y^[1](1) + h y(1) = 0."""
    if h is not None and complex(h) != problem.h:
        from dataclasses import replace
        problem = replace(problem, bc="mixed", h=complex(h))
    mus = np.atleast_1d(np.asarray(mu, dtype=complex))
    scalar = np.ndim(mu) == 0
    out = np.empty(mus.shape, dtype=complex)
    small = np.abs(mus) < switch
    if np.any(small):
        out[small] = _quasi_char_values(problem, mus[small], tol, False, "mixed")[0]
    if np.any(~small):
        out[~small] = _dirac_char_values(problem, dp, mus[~small], tol, False, "mixed")[0]
    return complex(out[0]) if scalar else out


def eigenfunction_trace(dp: DiracPotential, lam_n, grid, tol=1e-10, problem=None):
    """Eigenvector components on a grid plus boundary residuals.

    Returns dict with u1, u2, y = u2, and y^[1] = lam*u1 + w*u2 on the
    requested grid; residuals report |y(0)| and either |y(1)| (Dirichlet)
    or |y^[1](1) + h y(1)| (mixed, if ``problem`` with bc='mixed' given).
    """
    grid = np.asarray(grid, dtype=float)
    fs = solve_U(dp, lam_n, tol=tol, dense_grid=grid)
    idx = np.searchsorted(fs.xs, grid)
    idx = np.clip(idx, 0, len(fs.xs) - 1)
    u = fs.column()
    u1 = u[idx, 0]
    u2 = u[idx, 1]
    w = dp.miura.w(grid)
    y = u2
    y_quasi = complex(lam_n) * u1 + w * u2
    u_end = u[-1]
    res = {"y0": abs(u[0, 1])}
    if problem is not None and problem.bc == "mixed":
        w1 = dp.miura.h1
        y1q = complex(lam_n) * u_end[0] + w1 * u_end[1]
        res["bc"] = abs(y1q + problem.h * u_end[1])
    else:
        res["bc"] = abs(u_end[1])
    return {"x": grid, "u1": u1, "u2": u2, "y": y, "y_quasi": y_quasi,
            "residuals": res, "solution": fs}
