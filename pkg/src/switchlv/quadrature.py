"""Quadrature kernels for densities with algebraic endpoint behaviour.

``adaptive_gk`` is a globally adaptive 7/15-point Gauss-Kronrod integrator;
``endpoint_regularized`` wraps it with the substitution y = endpoint +/- s^(1/(1+g))
that removes an integrable (y - endpoint)^g singularity; ``gauss_jacobi`` is an
independent route that absorbs the endpoint powers into the quadrature weight.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

# Kronrod nodes on [0, 1) of the 15-point rule; odd indices are the 7-point Gauss nodes.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate((-_XGK[:-1], _XGK[::-1]))
KRONROD_WEIGHTS = np.concatenate((_WGK[:-1], _WGK[::-1]))
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[1:7:2] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]
GAUSS_WEIGHTS[9:14:2] = _WG[2::-1]


class QuadratureError(RuntimeError):
    pass


@dataclass
class QuadResult:
    value: float
    error: float
    n_intervals: int
    trace: list = field(default_factory=list)


def gk15(f, lo: float, hi: float):
    """Kronrod estimate and |Kronrod - Gauss| on one interval; ``f`` must accept arrays."""
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    vals = f(mid + half * NODES)
    k = half * float(np.dot(KRONROD_WEIGHTS, vals))
    g = half * float(np.dot(GAUSS_WEIGHTS, vals))
    return k, abs(k - g)


def adaptive_gk(f, lo: float, hi: float, tol: float = 1e-12, rel_tol: float = 1e-12,
                max_intervals: int = 2000) -> QuadResult:
    """Bisect the interval with the largest error estimate until the total meets the tolerance."""
    if hi == lo:
        return QuadResult(0.0, 0.0, 0)
    k, e = gk15(f, lo, hi)
    heap = [(-e, lo, hi, k)]
    total, err = k, e
    trace = [(1, total, err)]
    while err > max(tol, rel_tol * abs(total)):
        if len(heap) >= max_intervals:
            raise QuadratureError(f"no convergence after {max_intervals} intervals (err={err:.3g})")
        neg_e, a, b, kab = heapq.heappop(heap)
        m = 0.5 * (a + b)
        k1, e1 = gk15(f, a, m)
        k2, e2 = gk15(f, m, b)
        heapq.heappush(heap, (-e1, a, m, k1))
        heapq.heappush(heap, (-e2, m, b, k2))
        # resum from the heap to avoid drift in the running totals
        total = math.fsum(item[3] for item in heap)
        err = math.fsum(-item[0] for item in heap)
        trace.append((len(heap), total, err))
    return QuadResult(total, err, len(heap), trace)


def endpoint_regularized(f, lo: float, hi: float, g_lo: float = 0.0, g_hi: float = 0.0,
                         tol: float = 1e-13, rel_tol: float = 1e-13) -> QuadResult:
    """Integrate over [lo, hi] a function that behaves like (y-lo)^g_lo and (hi-y)^g_hi at the ends.

    ``f(d_lo, d_hi)`` receives the distances to both endpoints rather than y itself, so
    that the singular factors keep full relative precision. Each half of the interval
    is mapped by y = end +/- s^(1/(1+g)) whenever -1 < g < 0.
    """
    width = hi - lo
    half = 0.5 * width
    parts = []
    for g, near_lo in ((g_lo, True), (g_hi, False)):
        if g <= -1.0:
            raise QuadratureError(f"endpoint exponent {g} is not integrable")
        if g < 0.0:
            p = 1.0 / (1.0 + g)

            def h(s, p=p, near_lo=near_lo):
                s = np.asarray(s)
                d = s ** p
                jac = p * s ** (p - 1.0)
                return jac * (f(d, width - d) if near_lo else f(width - d, d))

            res = adaptive_gk(h, 0.0, half ** (1.0 + g), tol, rel_tol)
        else:
            def h(d, near_lo=near_lo):
                d = np.asarray(d)
                return f(d, width - d) if near_lo else f(width - d, d)

            res = adaptive_gk(h, 0.0, half, tol, rel_tol)
        parts.append(res)
    return QuadResult(parts[0].value + parts[1].value, parts[0].error + parts[1].error,
                      parts[0].n_intervals + parts[1].n_intervals,
                      [("lo",) + t for t in parts[0].trace] + [("hi",) + t for t in parts[1].trace])


def gauss_jacobi(g, lo: float, hi: float, g_lo: float, g_hi: float, n: int = 80) -> float:
    """Integral of (y-lo)^g_lo (hi-y)^g_hi g(y) over [lo, hi] with an n-point Gauss-Jacobi rule."""
    x, w = roots_jacobi(n, g_hi, g_lo)  # weight (1-x)^alpha (1+x)^beta
    half = 0.5 * (hi - lo)
    y = lo + half * (1.0 + x)
    return float(half ** (1.0 + g_lo + g_hi) * np.dot(w, g(y)))
