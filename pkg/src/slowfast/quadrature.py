"""Adaptive Gauss-Kronrod (7/15) quadrature on intervals and along orbit paths."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .integrator import OrbitPath

__all__ = ["gauss_kronrod", "adaptive_quad", "path_integral"]

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327])

# 15 abscissae on [-1, 1] and matching weights; Gauss nodes are the odd slots
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
_WG15[1:7:2] = _WG[:3]
_WG15[7] = _WG[3]
_WG15[9:15:2] = _WG[2::-1]


def gauss_kronrod(fun: Callable[[np.ndarray], np.ndarray], lo, hi):
    """Apply the 7/15 rule on each interval ``[lo[i], hi[i]]``.

    ``fun`` is called once with a flat array of abscissae.  Returns
    ``(kronrod, |kronrod - gauss|)`` per interval.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    fx = np.asarray(fun(x.ravel()), dtype=float).reshape(x.shape)
    k = half * (fx @ _WK)
    g = half * (fx @ _WG15)
    return k, np.abs(k - g)


def adaptive_quad(fun, lo: float | np.ndarray, hi: float | np.ndarray | None = None, *,
                  abs_tol: float = 1e-13, rel_tol: float = 1e-11,
                  max_rounds: int = 30, max_intervals: int = 200_000):
    """Globally adaptive composite Gauss-Kronrod quadrature.

    Either integrate over ``[lo, hi]`` or, when ``hi`` is ``None``, over
    the breakpoints ``lo`` (an increasing array).  Intervals whose local
    error exceeds their share of the tolerance are bisected.
    Returns ``(value, error_estimate)``.
    """
    if hi is None:
        edges = np.asarray(lo, dtype=float)
        a, b = edges[:-1], edges[1:]
    else:
        a, b = np.array([float(lo)]), np.array([float(hi)])
    if a.size == 0:
        return 0.0, 0.0
    total_width = float(np.sum(np.abs(b - a)))
    if total_width == 0.0:
        return 0.0, 0.0
    done_val = 0.0
    done_err = 0.0
    val, err = gauss_kronrod(fun, a, b)
    for _ in range(max_rounds):
        total = done_val + float(val.sum())
        tol = max(abs_tol, rel_tol * abs(total))
        share = tol * np.abs(b - a) / total_width
        bad = err > share
        if not np.any(bad) or a.size + np.count_nonzero(bad) > max_intervals:
            break
        done_val += float(val[~bad].sum())
        done_err += float(err[~bad].sum())
        a, b = a[bad], b[bad]
        m = 0.5 * (a + b)
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
        val, err = gauss_kronrod(fun, a, b)
    return done_val + float(val.sum()), done_err + float(err.sum())


def path_integral(path: OrbitPath, integrand: Callable[[np.ndarray, np.ndarray], np.ndarray], *,
                  t_lo: float | None = None, t_hi: float | None = None,
                  abs_tol: float = 1e-13, rel_tol: float = 1e-11):
    """Integrate ``integrand(t, Y)`` in time along the dense output of ``path``.

    ``Y`` is the ``(n, dim)`` array of *physical* states at times ``t``.
    The accepted steps seed the composite rule; the integration window can be
    narrowed with ``t_lo``/``t_hi``.
    """
    edges = path.t
    lo = path.t0 if t_lo is None else max(path.t0, t_lo)
    hi = path.t1 if t_hi is None else min(path.t1, t_hi)
    if hi <= lo:
        return 0.0, 0.0
    inner = edges[(edges > lo) & (edges < hi)]
    bounds = np.concatenate([[lo], inner, [hi]])

    def fun(t):
        return integrand(t, path.state(t))

    return adaptive_quad(fun, bounds, abs_tol=abs_tol, rel_tol=rel_tol)
