"""Non-vanishing solution of -y'' + q y = 0 and the Miura potential v.

A complex Prufer angle theta with y0 = rho*sin(theta),
y0^[1] = rho*cos(theta) satisfies the Caratheodory equation

    theta'(x) = (cos(theta) + r(x) sin(theta))**2 .

Rather than integrating this stiff angular form directly, we integrate
the equivalent linear quasi-derivative system for (y0, y0^[1]) at
spectral parameter 0 (which never blows up even when the seed is bad)
and recover

    w(x) = v(x) - r(x) = cot(theta(x)) = y0^[1](x) / y0(x),

so that v = r + w satisfies q = v' + v**2 distributionally and
-y'' + q y factorizes as -(d/dx + v)(d/dx - v) y.  The angle itself is
reproduced on demand by continuous branch tracking of cot.

Admissible seeds are searched on the ray theta0 = pi/2 + i*tau: large
tau pushes cot(theta) toward -i uniformly, which keeps |sin(theta)|
bounded away from zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoAdmissibleThetaError, PoleProximityError
from .potentials import Potential, zero
from .quadrature import gauss_rule
from .transfer import QuasiDerivativeSystem, solve_system, system_breakpoints

__all__ = ["PrueferSolution", "MiuraPotential", "solve_pruefer", "choose_theta0",
           "miura_v", "verify_y0", "MARGIN_ACCEPT", "POLE_FLOOR"]

MARGIN_ACCEPT = 0.1
POLE_FLOOR = 10.0 * math.sqrt(np.finfo(float).eps)
_TAUS = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)


@dataclass(frozen=True)
class PrueferSolution:
    """Dense solution of the angle equation.

    ``nodes`` carry y0 and y0^[1]; ``margin`` is min |sin(theta)| over the
    dense grid, the success criterion for the seed ``theta0``.
    """

    theta0: complex
    nodes: np.ndarray       # (N+1,)
    y0: np.ndarray          # (N+1,) values of the non-vanishing solution
    y0_quasi: np.ndarray    # (N+1,) its quasi-derivative
    margin: float
    tol: float

    @property
    def w_nodes(self):
        """cot(theta) = y0^[1]/y0 at the dense nodes."""
        return self.y0_quasi / self.y0

    def theta(self, x):
        """Continuous angle with theta(0) = theta0.

        cot(theta) = w determines exp(2i theta) = (w+i)/(w-i); the branch
        of the logarithm is tracked along the dense grid and the value at
        an off-grid point uses the nearest node's branch.
        """
        w = self.w_nodes
        zeta = (w + 1j) / (w - 1j)
        ang = np.angle(zeta)
        unwrapped = np.unwrap(ang)
        logz = np.log(np.abs(zeta)) + 1j * unwrapped
        theta_nodes = self.theta0 + (logz - logz[0]) / 2j
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        i = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(self.nodes) - 2)
        t = (x - self.nodes[i]) / (self.nodes[i + 1] - self.nodes[i])
        vals = theta_nodes[i] * (1 - t) + theta_nodes[i + 1] * t
        return complex(vals[0]) if scalar else vals

    def sin_theta_abs(self):
        """|sin(theta)| = |y0| / |y0^2 + (y0^[1])^2|^(1/2) on the grid."""
        rho2 = self.y0 ** 2 + self.y0_quasi ** 2
        return np.abs(self.y0) / np.sqrt(np.abs(rho2))


@dataclass(frozen=True)
class MiuraPotential:
    """v = r + w with w = cot(theta) continuous on [0,1].

    ``w_cumulative`` holds int_0^x w at the nodes, computed from the
    continuous branch of log y0 (exact up to solver error), so that cell
    moments of v used downstream do not suffer interpolation loss.
    """

    r: Potential
    nodes: np.ndarray
    w_nodes: np.ndarray
    w_cumulative: np.ndarray

    @property
    def c(self):
        """w(0) = (v - r)(0)."""
        return complex(self.w_nodes[0])

    @property
    def h1(self):
        """w(1) = (v - r)(1)."""
        return complex(self.w_nodes[-1])

    def _hermite(self, x, want_derivative=False):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        i = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(self.nodes) - 2)
        h = self.nodes[i + 1] - self.nodes[i]
        t = (x - self.nodes[i]) / h
        W0, W1 = self.w_cumulative[i], self.w_cumulative[i + 1]
        m0, m1 = self.w_nodes[i] * h, self.w_nodes[i + 1] * h
        # cubic Hermite for W(x) = int_0^x w, with derivative data w
        h00 = 2 * t**3 - 3 * t**2 + 1
        h10 = t**3 - 2 * t**2 + t
        h01 = -2 * t**3 + 3 * t**2
        h11 = t**3 - t**2
        if not want_derivative:
            vals = h00 * W0 + h10 * m0 + h01 * W1 + h11 * m1
        else:
            d00 = (6 * t**2 - 6 * t) / h
            d10 = (3 * t**2 - 4 * t + 1) / h
            d01 = (-6 * t**2 + 6 * t) / h
            d11 = (3 * t**2 - 2 * t) / h
            vals = d00 * W0 + d10 * m0 + d01 * W1 + d11 * m1
        return complex(vals[0]) if scalar else vals

    def w_integral(self, a, b):
        """int_a^b w, exact to solver precision at nodes."""
        return self._hermite(b) - self._hermite(a)

    def w(self, x):
        return self._hermite(x, want_derivative=True)

    def v(self, x):
        """v(x) = r(x) + w(x)."""
        return self.r.value(x) + self.w(x)

    def v_integral(self, a, b):
        """int_a^b v = int r + int w (both exact)."""
        return self.r.integral(a, b) + self.w_integral(a, b)

    @classmethod
    def constant_w(cls, w_value, r=None):
        """Synthetic Miura data with w identically constant (testing aid)."""
        nodes = np.array([0.0, 1.0])
        w = complex(w_value)
        return cls(r=r if r is not None else zero(), nodes=nodes,
                   w_nodes=np.array([w, w]),
                   w_cumulative=np.array([0.0, w], dtype=complex))


def _pruefer_cells(tol):
    """Dense cell count: interpolation of the cumulative integral must not
    limit downstream accuracy (Hermite error ~ h^4 * |w'''|)."""
    n = int(np.ceil((0.1 / max(tol, 1e-14)) ** 0.25 * 8))
    return int(min(max(2048, 2 ** int(np.ceil(np.log2(n)))), 1 << 15))


def solve_pruefer(r: Potential, theta0, tol=1e-10, n_min=None) -> PrueferSolution:
    """Solve the angle equation with theta(0) = theta0 to local error tol.

    Integrates the equivalent linear system y' = y^[1] + r y,
    (y^[1])' = -r y^[1] - r^2 y with y(0) = sin-normalization absorbed:
    y0(0) = 1, y0^[1](0) = cot(theta0).  Raises PoleProximityError if
    |sin(theta)| falls below the hard floor 10*sqrt(eps).
    """
    theta0 = complex(theta0)
    st = np.sin(theta0)
    if abs(st) < POLE_FLOOR:
        raise PoleProximityError("sin(theta0) is below the pole floor")
    w0 = np.cos(theta0) / st
    system = QuasiDerivativeSystem(r, zero())
    base = system_breakpoints(r)
    sol = solve_system(system, np.array([0.0]), tol=tol, dense="extrapolated",
                       base_breaks=base, n0=n_min or _pruefer_cells(tol))
    U = sol.dense[0][:, 0]                       # (N+1, 2, 2)
    init = np.array([1.0, w0], dtype=complex)
    y0 = U[:, 0, 0] * init[0] + U[:, 0, 1] * init[1]
    y0q = U[:, 1, 0] * init[0] + U[:, 1, 1] * init[1]
    rho2 = y0 ** 2 + y0q ** 2
    sin_abs = np.abs(y0) / np.sqrt(np.abs(rho2))
    margin = float(np.min(sin_abs))
    if margin < POLE_FLOOR:
        raise PoleProximityError(
            f"|sin(theta)| reached {margin:.2e}; seed theta0 = {theta0} is unusable")
    return PrueferSolution(theta0=theta0, nodes=sol.breaks, y0=y0, y0_quasi=y0q,
                           margin=margin, tol=tol)


def choose_theta0(r: Potential, tol=1e-10, margin_accept=MARGIN_ACCEPT,
                  taus=_TAUS) -> PrueferSolution:
    """First seed on the ray pi/2 + i*tau whose margin clears the threshold.

    Escalates tau through ``taus``; a non-vanishing solution exists for all
    seeds off finitely many compact exceptional sets, so the escalation
    terminates for reasonable data.
    """
    last_exc = None
    for tau in taus:
        try:
            ps = solve_pruefer(r, np.pi / 2 + 1j * tau, tol=tol)
        except PoleProximityError as exc:
            last_exc = exc
            continue
        if ps.margin >= margin_accept:
            return ps
    raise NoAdmissibleThetaError(
        f"no admissible theta0 found on pi/2 + i*tau, tau <= {taus[-1]}"
        + (f" (last failure: {last_exc})" if last_exc else ""))


def miura_v(ps: PrueferSolution, r: Potential) -> MiuraPotential:
    """Assemble v = r + cot(theta) from an admissible angle solution.

    The cumulative integral of w = cot(theta) is obtained from the
    continuous branch of log y0 minus int r, which is exact to solver
    precision (no quadrature of w is involved):
    int_0^x w = log y0(x) - log y0(0) - int_0^x r.
    """
    if ps.margin <= 0:
        raise PoleProximityError("angle solution has nonpositive margin")
    w_nodes = ps.y0_quasi / ps.y0
    ang = np.unwrap(np.angle(ps.y0))
    log_y0 = np.log(np.abs(ps.y0)) + 1j * ang
    w_cum = (log_y0 - log_y0[0]) - np.asarray(r.antiderivative(ps.nodes), dtype=complex)
    return MiuraPotential(r=r, nodes=ps.nodes, w_nodes=w_nodes, w_cumulative=w_cum)


def verify_y0(mp: MiuraPotential, r: Potential, n_check=33, m_gauss=8) -> float:
    """Sup over a test grid of the integrated residual of the y0 system.

    Reconstructs y0 = exp(int_0^x v) and y0^[1] = (v - r) y0 and checks
    the first-order system y0' = y0^[1] + r y0,
    (y0^[1])' = -r y0^[1] - r^2 y0 in integrated (weak) form, which is
    meaningful even when q = r' is distributional.
    """
    nodes = mp.nodes
    x, wq = gauss_rule(m_gauss)
    a, b = nodes[:-1], nodes[1:]
    half = 0.5 * (b - a)
    pts = (a[:, None] + half[:, None] * (x[None, :] + 1.0))
    wts = (half[:, None] * wq[None, :])

    def y0_at(t):
        expo = np.asarray(r.antiderivative(t), dtype=complex) + mp.w_integral(0.0, t)
        return np.exp(expo)

    t_flat = pts.ravel()
    y0 = y0_at(t_flat)
    wv = mp.w(t_flat)
    rv = np.asarray(r.value(t_flat), dtype=complex)
    y0q = wv * y0
    f1 = (y0q + rv * y0).reshape(pts.shape)
    f2 = (-rv * y0q - rv ** 2 * y0).reshape(pts.shape)
    cum1 = np.concatenate([[0j], np.cumsum(np.sum(f1 * wts, axis=1))])
    cum2 = np.concatenate([[0j], np.cumsum(np.sum(f2 * wts, axis=1))])

    idx = np.linspace(0, len(nodes) - 1, n_check).astype(int)
    xk = nodes[idx]
    y0_k = y0_at(xk)
    y0q_k = mp.w(xk) * y0_k
    res1 = y0_k - y0_k[0] - cum1[idx]
    res2 = y0q_k - y0q_k[0] - cum2[idx]
    return float(max(np.max(np.abs(res1)), np.max(np.abs(res2))))
