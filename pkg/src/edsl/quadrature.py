"""Panel-based Gauss quadrature with singularity-aware panel layout.

All integrands are complex-valued and vectorized over numpy arrays of
evaluation points.  Panels never straddle a listed interior breakpoint,
and panels are geometrically graded toward listed singular centers so
that integrable singularities (log, log**2) are resolved.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ToleranceError

__all__ = [
    "gauss_rule", "graded_breakpoints", "refine_breaks",
    "panel_quad", "adaptive_panel_quad", "panel_nodes", "cumulative_matrix",
]


@lru_cache(maxsize=None)
def gauss_rule(m: int):
    """Gauss-Legendre nodes/weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    return x, w


def graded_breakpoints(a, b, interior=(), centers=(), floor=1e-10, levels=None):
    """Breakpoints for [a,b]: interior kinks plus dyadic grading at centers.

    Around each center c the panels shrink geometrically (ratio 2) from the
    distance to the nearest neighbouring breakpoint down to ``floor``.
    """
    pts = {float(a), float(b)}
    pts.update(float(x) for x in interior if a < x < b)
    pts.update(float(c) for c in centers if a <= c <= b)
    base = np.array(sorted(pts))
    out = set(base)
    for c in centers:
        c = float(c)
        if not a <= c <= b:
            continue
        i = np.searchsorted(base, c)
        span_l = c - (base[i - 1] if i > 0 and base[i - 1] < c else a)
        span_r = (base[i + 1] if i + 1 < len(base) and base[i + 1] > c else b) - c
        for span, sgn in ((span_l, -1.0), (span_r, 1.0)):
            if span <= floor:
                continue
            n = levels or max(4, int(np.ceil(np.log2(span / floor))))
            d = span
            for _ in range(n):
                d *= 0.5
                if d <= floor:
                    break
                out.add(c + sgn * d)
    return np.array(sorted(out))


def refine_breaks(breaks, n_min):
    """Bisect every panel until there are at least ``n_min`` panels."""
    breaks = np.asarray(breaks, dtype=float)
    while len(breaks) - 1 < n_min:
        mid = 0.5 * (breaks[:-1] + breaks[1:])
        breaks = np.sort(np.concatenate([breaks, mid]))
    return breaks


def panel_nodes(breaks, m=8):
    """All Gauss nodes and weights for the given panels, flattened."""
    x, w = gauss_rule(m)
    a = breaks[:-1][:, None]
    b = breaks[1:][:, None]
    half = 0.5 * (b - a)
    nodes = a + half * (x[None, :] + 1.0)
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def panel_quad(f, breaks, m=8):
    """Fixed panel quadrature of a vectorized integrand."""
    nodes, weights = panel_nodes(breaks, m)
    return np.sum(weights * f(nodes))


def adaptive_panel_quad(f, breaks, tol=1e-10, m=8, max_doublings=12):
    """Double the panel count until two successive values agree to tol."""
    breaks = np.asarray(breaks, dtype=float)
    prev = panel_quad(f, breaks, m)
    for _ in range(max_doublings):
        mid = 0.5 * (breaks[:-1] + breaks[1:])
        breaks = np.sort(np.concatenate([breaks, mid]))
        cur = panel_quad(f, breaks, m)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    raise ToleranceError("quadrature did not converge to the requested tolerance")


@lru_cache(maxsize=None)
def cumulative_matrix(m: int):
    """Matrix C with (C f)_i ~ int_{-1}^{x_i} f for Gauss nodes x_i.

    Built from the Legendre expansion of the degree-(m-1) interpolant;
    exact for polynomials of degree < m.  Scale by (b-a)/2 for a panel.
    """
    x, _ = gauss_rule(m)
    V = np.polynomial.legendre.legvander(x, m - 1)          # values of P_k at nodes
    coeff_from_vals = np.linalg.inv(V)                      # f values -> Legendre coeffs
    # antiderivative of P_k vanishing at -1: (P_{k+1} - P_{k-1})/(2k+1), P_{-1}:=P_0
    anti = np.zeros((m, m))
    for k in range(m):
        ck = np.zeros(k + 2)
        ck[k + 1] = 1.0 / (2 * k + 1)
        if k >= 1:
            ck[k - 1] = -1.0 / (2 * k + 1)
        vals = np.polynomial.legendre.legval(x, ck)
        vals0 = np.polynomial.legendre.legval(-1.0, ck)
        anti[:, k] = vals - vals0
    return anti @ coeff_from_vals
