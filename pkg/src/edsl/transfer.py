"""Cell-exponential propagation of traceless 2x2 linear systems.

All first-order systems in this package have the form U' = A(x,lam) U
with tr A = 0 and coefficients that are merely square integrable.  On a
cell the exact integral B = int_cell A is exponentiated in closed form,

    exp(B) = c(det B) I + s(det B) B,   c(D) = cos(sqrt(D)),
                                        s(D) = sin(sqrt(D))/sqrt(D),

which is exact whenever the coefficient matrix commutes with itself
across the cell (constant potentials; the dominant rotation
exp(-lam*x*J) always) and keeps det U = 1 to round-off because
det(c I + s B) = c^2 + D s^2 = 1 identically.  Cells are split at
potential discontinuities and graded toward logarithmic centers, and a
step-halving Richardson loop controls the global error.

lam-derivatives of U (up to third order, needed for Newton refinement
and root-order detection) are propagated through the discrete scheme
exactly: exp(B) depends on lam only through the polynomials B(lam) and
D(lam) = det B(lam).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ToleranceError
from .quadrature import gauss_rule, graded_breakpoints, refine_breaks

__all__ = [
    "J_MATRIX", "rotation_J", "cs_jet", "cell_exponential_jets",
    "DiracSystem", "QuasiDerivativeSystem", "PropagatorSolution",
    "solve_system", "system_breakpoints", "gauss_point_values",
]

J_MATRIX = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
_I2 = np.eye(2, dtype=complex)

_SERIES_CUTOFF = 0.25
_SERIES_TERMS = 12


def rotation_J(a):
    """exp(a*J) = cos(a) I + sin(a) J for scalar or array a."""
    a = np.asarray(a, dtype=complex)
    out = np.zeros(a.shape + (2, 2), dtype=complex)
    ca, sa = np.cos(a), np.sin(a)
    out[..., 0, 0] = ca
    out[..., 1, 1] = ca
    out[..., 0, 1] = sa
    out[..., 1, 0] = -sa
    return out


def _series_coeffs(order):
    """Taylor coefficients in D of c, s and their D-derivatives."""
    ks = np.arange(_SERIES_TERMS + order + 1)
    c_base = np.array([(-1.0) ** k / math.factorial(2 * k) for k in ks])
    s_base = np.array([(-1.0) ** k / math.factorial(2 * k + 1) for k in ks])
    out = []
    for j in range(order + 1):
        shift = np.arange(j, len(ks))
        fac = np.array([math.factorial(k) / math.factorial(k - j) for k in shift])
        out.append((c_base[shift] * fac, s_base[shift] * fac))
    return out


_SERIES = {n: _series_coeffs(n) for n in range(4)}


def cs_jet(D, order=0):
    """[c, s, c', s', ...] as functions of D, vectorized and complex-safe.

    c(D) = cos(sqrt(D)), s(D) = sinc(sqrt(D)); primes are d/dD.  Both are
    entire and even in sqrt(D), so the branch of the root is immaterial.
    A Taylor patch avoids cancellation near D = 0.
    """
    D = np.asarray(D, dtype=complex)
    small = np.abs(D) < _SERIES_CUTOFF
    safeD = np.where(small, 1.0, D)
    w = np.sqrt(safeD)
    cs = [(np.cos(w), np.sin(w) / w)]
    if order >= 1:
        c1 = -0.5 * cs[0][1]
        s1 = (cs[0][0] - cs[0][1]) / (2.0 * safeD)
        cs.append((c1, s1))
    if order >= 2:
        c2 = -0.5 * cs[1][1]
        s2 = (cs[1][0] - cs[1][1]) / (2.0 * safeD) - cs[1][1] / safeD
        cs.append((c2, s2))
    if order >= 3:
        c3 = -0.5 * cs[2][1]
        s3 = ((cs[2][0] - cs[2][1]) / (2.0 * safeD)
              - (cs[1][0] - cs[1][1]) / (2.0 * safeD ** 2)
              - cs[2][1] / safeD + cs[1][1] / safeD ** 2)
        cs.append((c3, s3))
    coeffs = _SERIES[order]
    Ds = np.where(small, D, 0.0)
    polyval = np.polynomial.polynomial.polyval
    out = []
    for j in range(order + 1):
        ck, sk = coeffs[j]
        cser = polyval(Ds, ck[:_SERIES_TERMS])
        sser = polyval(Ds, sk[:_SERIES_TERMS])
        cj, sj = cs[j]
        out.append(np.where(small, cser, cj))
        out.append(np.where(small, sser, sj))
    return out


def _det_jets(Bj, order):
    """lam-derivatives of det B from the lam-jets of B (Leibniz rule)."""
    def comp(i, j, k):
        if k < len(Bj) and Bj[k] is not None:
            return Bj[k][..., i, j]
        return None

    Dj = []
    for n in range(order + 1):
        tot = None
        for k in range(n + 1):
            c = math.comb(n, k)
            for (i1, j1, i2, j2, sgn) in ((0, 0, 1, 1, 1.0), (0, 1, 1, 0, -1.0)):
                u = comp(i1, j1, k)
                v = comp(i2, j2, n - k)
                if u is None or v is None:
                    continue
                term = sgn * c * u * v
                tot = term if tot is None else tot + term
        if tot is None:
            tot = np.zeros(Bj[0].shape[:-2], dtype=complex)
        Dj.append(np.asarray(tot, dtype=complex))
    return Dj


def cell_exponential_jets(Bj, order=0):
    """exp(B) and its lam-derivatives up to ``order``.

    ``Bj`` = [B, dB/dlam, d2B/dlam2, d3B/dlam3], entries (..., 2, 2);
    higher jets may be ``None`` when identically zero.
    """
    B = Bj[0]
    Dj = _det_jets(Bj, order)
    jets = cs_jet(Dj[0], order)
    c = jets[0::2]
    s = jets[1::2]

    def tI(scalar):
        return scalar[..., None, None] * _I2

    def tB(scalar, M):
        return scalar[..., None, None] * M

    def bjet(k):
        return Bj[k] if k < len(Bj) and Bj[k] is not None else None

    E = [tI(c[0]) + tB(s[0], B)]
    if order >= 1:
        e = tI(c[1] * Dj[1]) + tB(s[1] * Dj[1], B)
        if bjet(1) is not None:
            e = e + tB(s[0], bjet(1))
        E.append(e)
    if order >= 2:
        e = tI(c[2] * Dj[1] ** 2 + c[1] * Dj[2]) + tB(s[2] * Dj[1] ** 2 + s[1] * Dj[2], B)
        if bjet(1) is not None:
            e = e + 2.0 * tB(s[1] * Dj[1], bjet(1))
        if bjet(2) is not None:
            e = e + tB(s[0], bjet(2))
        E.append(e)
    if order >= 3:
        e = (tI(c[3] * Dj[1] ** 3 + 3.0 * c[2] * Dj[1] * Dj[2] + c[1] * Dj[3])
             + tB(s[3] * Dj[1] ** 3 + 3.0 * s[2] * Dj[1] * Dj[2] + s[1] * Dj[3], B))
        if bjet(1) is not None:
            e = e + 3.0 * tB(s[2] * Dj[1] ** 2 + s[1] * Dj[2], bjet(1))
        if bjet(2) is not None:
            e = e + 3.0 * tB(s[1] * Dj[1], bjet(2))
        E.append(e)
    return E


# ---------------------------------------------------------------------------
# concrete systems
#
# Systems expose:
#   interval_moments(a, b) -> dict of per-interval complex arrays
#   jets(moms, lams, order) -> [B, B1, ...] with shape lead + (2, 2)
# where lead broadcasts the moment arrays against lams.

class DiracSystem:
    """u' = [[-v, 2p - lam], [lam, v]] u  (first-order reduction)."""

    max_order = 1

    def __init__(self, p_potential, v_moments):
        """``v_moments`` provides v_integral(a, b), vectorized."""
        self.p = p_potential
        self.v = v_moments

    def interval_moments(self, a, b):
        return {
            "h": np.asarray(b - a, dtype=complex),
            "P1": np.asarray(self.p.integral(a, b), dtype=complex),
            "V1": np.asarray(self.v.v_integral(a, b), dtype=complex),
        }

    def jets(self, moms, lams, order):
        h, P1, V1 = moms["h"], moms["P1"], moms["V1"]
        shape = np.broadcast_shapes(h.shape, lams.shape)
        B = np.zeros(shape + (2, 2), dtype=complex)
        B[..., 0, 0] = -V1
        B[..., 0, 1] = 2.0 * P1 - lams * h
        B[..., 1, 0] = lams * h
        B[..., 1, 1] = V1
        out = [B]
        if order >= 1:
            B1 = np.zeros(shape + (2, 2), dtype=complex)
            B1[..., 0, 1] = -h + 0.0 * lams
            B1[..., 1, 0] = h + 0.0 * lams
            out.append(B1)
        out.extend([None] * max(0, order - 1))
        return out


class QuasiDerivativeSystem:
    """(y, y^[1])' = [[r, 1], [-r^2 + 2*lam*p - lam^2, -r]] (y, y^[1]).

    Regularized form of -y'' + q y + 2*lam*p*y = lam^2 y with q = r'.
    """

    max_order = 3

    def __init__(self, r_potential, p_potential, m_gauss=8):
        self.r = r_potential
        self.p = p_potential
        self.m = m_gauss

    def interval_moments(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return {
            "h": np.asarray(b - a, dtype=complex),
            "R1": np.asarray(self.r.integral(a, b), dtype=complex),
            "P1": np.asarray(self.p.integral(a, b), dtype=complex),
            "R2": self._r_square_integral(np.atleast_1d(a), np.atleast_1d(b)).reshape(np.shape(a)),
        }

    def _r_square_integral(self, a, b):
        """int_cell r^2 per cell; log-center cells use closed moments."""
        x, w = gauss_rule(self.m)
        half = 0.5 * (b - a)
        nodes = a[:, None] + half[:, None] * (x[None, :] + 1.0)
        vals = np.asarray(self.r.value(nodes.ravel()), dtype=complex).reshape(nodes.shape)
        out = np.sum(vals ** 2 * w[None, :], axis=1) * half
        for t in self.r.log_terms():
            touch = np.isclose(a, t.x0, atol=1e-13) | np.isclose(b, t.x0, atol=1e-13)
            for k in np.nonzero(touch)[0]:
                out[k] = self._log_cell_r2(t, float(a[k]), float(b[k]))
        return out

    def _log_cell_r2(self, t, a, b):
        """Exact moments for r = c*log|x-x0| + g, g frozen mid-cell."""
        c = t.strength
        lo = min(abs(a - t.x0), abs(b - t.x0))
        hi = max(abs(a - t.x0), abs(b - t.x0))

        def m_log(u):
            return u * (math.log(u) - 1.0) if u > 0 else 0.0

        def m_log2(u):
            return u * (math.log(u) ** 2 - 2.0 * math.log(u) + 2.0) if u > 0 else 0.0

        i_log = m_log(hi) - m_log(lo)
        i_log2 = m_log2(hi) - m_log2(lo)
        from .potentials import Potential
        rest = Potential(tuple(s for s in self.r.terms if s is not t))
        gm = complex(rest.value(0.5 * (a + b))) if rest.terms else 0j
        return c * c * i_log2 + 2.0 * c * gm * i_log + gm * gm * (b - a)

    def jets(self, moms, lams, order):
        h, R1, P1, R2 = moms["h"], moms["R1"], moms["P1"], moms["R2"]
        shape = np.broadcast_shapes(h.shape, lams.shape)
        B = np.zeros(shape + (2, 2), dtype=complex)
        B[..., 0, 0] = R1 + 0.0 * lams
        B[..., 0, 1] = h + 0.0 * lams
        B[..., 1, 0] = -R2 + 2.0 * lams * P1 - lams ** 2 * h
        B[..., 1, 1] = -R1 + 0.0 * lams
        out = [B]
        if order >= 1:
            B1 = np.zeros(shape + (2, 2), dtype=complex)
            B1[..., 1, 0] = 2.0 * P1 - 2.0 * lams * h
            out.append(B1)
        if order >= 2:
            B2 = np.zeros(shape + (2, 2), dtype=complex)
            B2[..., 1, 0] = -2.0 * h + 0.0 * lams
            out.append(B2)
        if order >= 3:
            out.append(None)
        return out


def system_breakpoints(*potentials, extra=()):
    """Base cell boundaries: kinks and graded singular centers.

    Nodes of large grid terms are omitted on purpose: cell moments are
    exact for the interpolant regardless, and thousands of forced cells
    would dominate the cost.
    """
    interior = set()
    centers = set()
    for f in potentials:
        if f is None:
            continue
        from .potentials import GridTerm
        for t in f.terms:
            if isinstance(t, GridTerm) and len(t.nodes) > 64:
                continue
            interior.update(t.breakpoints())
        centers.update(f.singular_points())
    interior.update(float(x) for x in extra if 0.0 < float(x) < 1.0)
    interior -= centers
    return graded_breakpoints(0.0, 1.0, interior=sorted(interior), centers=sorted(centers))


# ---------------------------------------------------------------------------
# propagation

def _mm2(A, B):
    """Batched 2x2 matmul written out by components (faster than @ for tiny mats)."""
    a00 = A[..., 0, 0]; a01 = A[..., 0, 1]; a10 = A[..., 1, 0]; a11 = A[..., 1, 1]
    b00 = B[..., 0, 0]; b01 = B[..., 0, 1]; b10 = B[..., 1, 0]; b11 = B[..., 1, 1]
    out = np.empty(np.broadcast_shapes(A.shape, B.shape), dtype=complex)
    out[..., 0, 0] = a00 * b00 + a01 * b10
    out[..., 0, 1] = a00 * b01 + a01 * b11
    out[..., 1, 0] = a10 * b00 + a11 * b10
    out[..., 1, 1] = a10 * b01 + a11 * b11
    return out


def _apply_jets(E, U, order):
    """Leibniz update: jets of E @ U from jets of E and of U."""
    out = []
    for n in range(order + 1):
        acc = _mm2(E[0], U[n])
        for k in range(1, n + 1):
            acc = acc + math.comb(n, k) * _mm2(E[k], U[n - k])
        out.append(acc)
    return out


_CHUNK_BYTES = 1 << 28   # ~256 MB of transient jet storage


def _all_cell_jets(system, breaks, lams, order):
    """Exponential jets of every cell, vectorized: list of (C, L, 2, 2)."""
    a, b = breaks[:-1], breaks[1:]
    moms = system.interval_moments(a, b)
    moms = {k: np.asarray(v, dtype=complex)[:, None] for k, v in moms.items()}
    Bj = system.jets(moms, lams[None, :], order)
    return cell_exponential_jets(Bj, order)


def _tree_product(E, order):
    """Ordered product E[C-1] @ ... @ E[0] with jets, via pairwise reduction."""
    seq = E
    while seq[0].shape[0] > 1:
        n = seq[0].shape[0]
        even = [x[0 : n - 1 : 2] for x in seq]
        odd = [x[1:n:2] for x in seq]
        prod = _apply_jets(odd, even, order)
        if n % 2 == 1:
            seq = [np.concatenate([p, x[n - 1 :]], axis=0) for p, x in zip(prod, seq)]
        else:
            seq = prod
    return [x[0] for x in seq]


def _prefix_scan(E, order):
    """All prefixes P_k = E[k-1] @ ... @ E[0], k = 0..C (blocked scan)."""
    C, L = E[0].shape[0], E[0].shape[1]
    blk = max(8, int(np.sqrt(C)))
    nblk = -(-C // blk)
    pad = nblk * blk - C
    if pad:
        padded = []
        for t, x in enumerate(E):
            if t == 0:
                tail = np.broadcast_to(_I2, (pad, L, 2, 2))
            else:
                tail = np.zeros((pad, L, 2, 2), complex)
            padded.append(np.concatenate([x, tail], axis=0))
        E = padded
    Eb = [x.reshape(nblk, blk, L, 2, 2) for x in E]
    # within-block running products (inclusive): loop over block-local index
    within = [np.empty_like(x) for x in Eb]
    cur = [np.broadcast_to(_I2, (nblk, L, 2, 2)).copy()]
    cur += [np.zeros((nblk, L, 2, 2), complex) for _ in range(order)]
    for j in range(blk):
        cur = _apply_jets([x[:, j] for x in Eb], cur, order)
        for t in range(order + 1):
            within[t][:, j] = cur[t]
    # sequential scan of block offsets
    offs = [np.empty((nblk, L, 2, 2), complex) for _ in range(order + 1)]
    run = [np.broadcast_to(_I2, (L, 2, 2)).copy()]
    run += [np.zeros((L, 2, 2), complex) for _ in range(order)]
    for k in range(nblk):
        for t in range(order + 1):
            offs[t][k] = run[t]
        run = _apply_jets([x[k, blk - 1] for x in within], run, order)
    # combine: prefix after cell (k*blk + j) = within[k, j] @ offs[k]
    combined = _apply_jets([x.reshape(nblk * blk, L, 2, 2)[: C] for x in within],
                           [np.repeat(x, blk, axis=0)[: C] for x in offs], order)
    out = [np.empty((C + 1, L, 2, 2), complex) for _ in range(order + 1)]
    out[0][0] = _I2
    for t in range(1, order + 1):
        out[t][0] = 0.0
    for t in range(order + 1):
        out[t][1:] = combined[t]
    return out


def _propagate(system, breaks, lams, order, dense):
    """Product of all cell exponentials, vectorized over cells and lams."""
    C = len(breaks) - 1
    L = len(lams)
    nchunk = max(1, int(np.ceil(C * L * 64 * (order + 1) / _CHUNK_BYTES)))
    ends, stores = [], []
    for piece in np.array_split(np.arange(L), nchunk):
        if len(piece) == 0:
            continue
        E = _all_cell_jets(system, breaks, lams[piece], order)
        if dense:
            pref = _prefix_scan(E, order)
            stores.append(pref)
            ends.append([x[-1] for x in pref])
        else:
            ends.append(_tree_product(E, order))
    U = [np.concatenate([e[t] for e in ends], axis=0) for t in range(order + 1)]
    store = None
    if dense:
        store = [np.concatenate([s[t] for s in stores], axis=1) for t in range(order + 1)]
    return U, store


def _det2(M):
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


@dataclass
class PropagatorSolution:
    """Fundamental matrix (with lam-jets) produced by one propagation."""

    breaks: np.ndarray          # fine cell boundaries, (N+1,)
    lams: np.ndarray            # (L,)
    end: list                   # [U(1), dU(1), ...], (L,2,2); Richardson-extrapolated
    end_raw: list               # same, plain finest-level values
    dense: list | None          # [U(x_k), ...], each (N+1, L, 2, 2), finest level
    err_est: float
    det_drift: float
    system: object = None

    def node_index(self, x):
        i = np.searchsorted(self.breaks, x)
        if i >= len(self.breaks) or not np.isclose(self.breaks[i], x):
            raise ValueError(f"{x} is not a stored node")
        return i


def gauss_point_values(sol: PropagatorSolution, m=4, order=0, lam_index=0):
    """Values of U (jets) at the Gauss points of every stored cell.

    Scheme-consistent interior evaluation: for a point t inside cell
    [a, b] the partial-cell exponential exp(B(a, t)) is applied to the
    stored U(a).  Returns (points, weights, [U jets at points]) where U
    jets have shape (n_points, 2, 2) for the selected lam.
    """
    breaks = sol.breaks
    a = breaks[:-1]
    h = np.diff(breaks)
    x, w = gauss_rule(m)
    pts = (a[:, None] + 0.5 * h[:, None] * (x[None, :] + 1.0)).ravel()
    wts = (0.5 * h[:, None] * w[None, :]).ravel()
    starts = np.repeat(a, m)
    moms = sol.system.interval_moments(starts, pts)
    lam_arr = np.full(pts.shape, sol.lams[lam_index])
    Bj = sol.system.jets(moms, lam_arr, order)
    E = cell_exponential_jets(Bj, order)
    base = [np.repeat(sol.dense[t][:-1, lam_index], m, axis=0) for t in range(order + 1)]
    vals = _apply_jets(E, base, order)
    return pts, wts, vals


def _bisect(breaks):
    mid = 0.5 * (breaks[:-1] + breaks[1:])
    return np.sort(np.concatenate([breaks, mid]))


_EPS = float(np.finfo(float).eps)


def solve_system(system, lams, tol, order=0, dense=False, extra_breaks=(),
                 base_breaks=None, n0=None, n_max=1 << 18, fixed_breaks=None):
    """Adaptively refined propagation of ``system`` over [0,1].

    ``dense`` selects what is stored along the way:

    * ``False``        -- endpoint only.  The step-halving loop tracks
      Richardson-extrapolated endpoints and accepts when two successive
      extrapolations agree to ``tol`` (cheapest; used for characteristic
      function values).
    * ``"raw"``        -- dense output is the plain finest-level solution,
      acceptance uses the raw inter-level difference.  det U = 1 holds at
      the stored nodes to round-off; used wherever the unimodularity gate
      applies (fundamental-solution traces, norming constants).
    * ``"extrapolated"`` -- dense output holds Richardson-extrapolated
      values on the coarse node set; fastest way to high nodewise
      accuracy when unimodularity of the stored values is not required
      (the angle/Miura stage).

    Endpoint values (``end``) are always extrapolated; ``end_raw`` keeps
    the plain finest values.  A round-off floor proportional to the cell
    count caps the achievable tolerance honestly: ``err_est`` records the
    achieved level.  ``fixed_breaks`` skips adaptivity (one extra
    bisection keeps endpoint accuracy except in raw mode, which trusts
    the provided layout).
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    dense_mode = {False: None, True: "raw"}.get(dense, dense)

    if fixed_breaks is not None:
        breaks = np.asarray(fixed_breaks, dtype=float)
        if dense_mode == "raw":
            U, store = _propagate(system, breaks, lams, order, True)
            drift = float(np.max(np.abs(_det2(store[0]) - 1.0)))
            return PropagatorSolution(breaks, lams, end=U, end_raw=U, dense=store,
                                      err_est=float("nan"), det_drift=drift,
                                      system=system)
        fine = _bisect(breaks)
        U_c, store_c = _propagate(system, breaks, lams, order,
                                  dense_mode == "extrapolated")
        U_f, store_f = _propagate(system, fine, lams, order,
                                  dense_mode == "extrapolated")
        end = [uf + (uf - uc) / 3.0 for uf, uc in zip(U_f, U_c)]
        if dense_mode == "extrapolated":
            store = [sf[::2] + (sf[::2] - sc) / 3.0 for sf, sc in zip(store_f, store_c)]
            drift = float(np.max(np.abs(_det2(store[0]) - 1.0)))
            return PropagatorSolution(breaks, lams, end=end, end_raw=U_f, dense=store,
                                      err_est=float("nan"), det_drift=drift,
                                      system=system)
        drift = float(np.max(np.abs(_det2(U_f[0]) - 1.0)))
        return PropagatorSolution(fine, lams, end=end, end_raw=U_f, dense=None,
                                  err_est=float("nan"), det_drift=drift, system=system)

    if base_breaks is None:
        base_breaks = np.array([0.0, 1.0])
    pts = set(float(x) for x in np.asarray(base_breaks, dtype=float))
    pts.update(float(x) for x in extra_breaks if 0.0 <= float(x) <= 1.0)
    breaks = np.array(sorted(pts))
    scale = float(np.max(np.abs(lams))) if len(lams) else 1.0
    if n0 is None:
        n0 = max(64, int(2 ** np.ceil(np.log2(max(scale, 1.0)))))
    breaks = refine_breaks(breaks, n0)

    want_store = dense_mode is not None
    U_c, store_c = _propagate(system, breaks, lams, order, want_store)
    ext_prev = None
    while True:
        fine = _bisect(breaks)
        too_big = len(fine) - 1 >= n_max
        U_f, store_f = _propagate(system, fine, lams, order, want_store)
        ext = [uf + (uf - uc) / 3.0 for uf, uc in zip(U_f, U_c)]
        if dense_mode == "raw":
            num = np.max(np.abs(U_f[0] - U_c[0]), axis=(1, 2))
        elif ext_prev is not None:
            num = np.max(np.abs(ext[0] - ext_prev[0]), axis=(1, 2))
        else:
            num = None
        if num is not None:
            den = np.maximum(1.0, np.max(np.abs(U_f[0]), axis=(1, 2)))
            err = float(np.max(num / den))
            floor = 4.0 * _EPS * (len(fine) - 1)
            if err <= max(tol, floor) or too_big:
                if err > max(tol, floor):
                    raise ToleranceError(
                        f"tolerance not reached: err~{err:.2e} at {len(fine) - 1} cells")
                if dense_mode is None:
                    return PropagatorSolution(fine, lams, end=ext, end_raw=U_f,
                                              dense=None, err_est=err,
                                              det_drift=float(np.max(np.abs(_det2(U_f[0]) - 1.0))),
                                              system=system)
                if dense_mode == "raw":
                    drift = float(np.max(np.abs(_det2(store_f[0]) - 1.0)))
                    return PropagatorSolution(fine, lams, end=ext, end_raw=U_f,
                                              dense=store_f, err_est=err,
                                              det_drift=drift, system=system)
                store = [sf[::2] + (sf[::2] - sc) / 3.0
                         for sf, sc in zip(store_f, store_c)]
                drift = float(np.max(np.abs(_det2(store[0]) - 1.0)))
                return PropagatorSolution(breaks, lams, end=ext, end_raw=U_f,
                                          dense=store, err_est=err,
                                          det_drift=drift, system=system)
        breaks, U_c, store_c, ext_prev = fine, U_f, store_f, ext
