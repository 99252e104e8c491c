"""Planar slow-fast models a' = eps f + b h, b' = b g and their structural checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Evaluator",
    "SlowFastModel",
    "StructureFlags",
    "GridSpec",
    "ConditionResult",
    "ValidationReport",
    "central_difference",
    "validate_model",
]

Evaluator = Callable[[object, object, float], object]

FD_REL_STEP = 1e-6
PARTIAL_RTOL = 1e-6
FLAG_RTOL = 1e-8


def central_difference(fn: Callable, x, step: float | None = None):
    """Second-order central difference of a scalar-valued vectorized ``fn`` at ``x``.

    The default step is ``1e-6 * max(1, |x|)``.
    """
    x = np.asarray(x, dtype=float)
    hstep = FD_REL_STEP * np.maximum(1.0, np.abs(x)) if step is None else step
    return (np.asarray(fn(x + hstep)) - np.asarray(fn(x - hstep))) / (2.0 * hstep)


def _call(fn: Evaluator, a, b, eps):
    """Evaluate ``fn`` on broadcast arrays, falling back to a scalar loop."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    try:
        out = np.asarray(fn(a, b, eps), dtype=float)
        if out.shape == a.shape:
            return out
        if out.ndim == 0:
            return np.full(a.shape, float(out))
    except (TypeError, ValueError):
        pass
    flat = [float(fn(float(x), float(y), eps)) for x, y in zip(a.ravel(), b.ravel())]
    return np.asarray(flat, dtype=float).reshape(a.shape)


@dataclass(frozen=True)
class StructureFlags:
    """Declared algebraic structure that enables the simplified stability integrals.

    ``separable_fh``: f = a f~(b, eps) and h = a h~(b, eps).
    ``h_independent_of_a``: h = h(b, eps).
    ``g_factorizable``: g = phi(b) G(a, b, eps) with phi(0) != 0; ``phi`` and ``G``
    must then be supplied (``dG_db`` is optional).
    """

    separable_fh: bool = False
    h_independent_of_a: bool = False
    g_factorizable: bool = False
    phi: Optional[Callable] = None
    G: Optional[Evaluator] = None
    dG_db: Optional[Evaluator] = None

    def __post_init__(self):
        if self.g_factorizable and (self.phi is None or self.G is None):
            raise ValueError("g_factorizable requires the phi and G evaluators")

    def names(self) -> list[str]:
        out = []
        if self.separable_fh:
            out.append("separable_fh")
        if self.h_independent_of_a:
            out.append("h_independent")
        if self.g_factorizable:
            out.append("g_factor")
        return out


@dataclass(frozen=True)
class SlowFastModel:
    """Immutable bundle of the evaluators f, g, h of ``(a, b, eps)``.

    ``a_min``/``a_max`` may be infinite; ``a_bar`` is the declared turning
    point of g(., 0, 0).  Missing partials fall back to central differences.
    Set ``check_partials=False`` for models whose evaluators come from
    interpolated tables, where finite differences measure the interpolant.
    """

    f: Evaluator
    g: Evaluator
    h: Evaluator
    a_min: float
    a_max: float
    a_bar: float
    name: str = "model"
    df_da: Optional[Evaluator] = None
    dh_da: Optional[Evaluator] = None
    dg_db: Optional[Evaluator] = None
    flags: StructureFlags = field(default_factory=StructureFlags)
    check_partials: bool = True

    def __post_init__(self):
        if not (self.a_min < self.a_bar < self.a_max):
            raise ValueError("need a_min < a_bar < a_max")
        if math.isnan(self.a_min) or math.isnan(self.a_max):
            raise ValueError("domain bounds must not be NaN")

    @property
    def a_min_bounded(self) -> bool:
        return math.isfinite(self.a_min)

    @property
    def a_max_bounded(self) -> bool:
        return math.isfinite(self.a_max)

    # partials -------------------------------------------------------------
    def f_a(self, a, b, eps=0.0):
        if self.df_da is not None:
            return self.df_da(a, b, eps)
        return central_difference(lambda x: _call(self.f, x, b, eps), a)

    def h_a(self, a, b, eps=0.0):
        if self.dh_da is not None:
            return self.dh_da(a, b, eps)
        return central_difference(lambda x: _call(self.h, x, b, eps), a)

    def g_b(self, a, b, eps=0.0):
        if self.dg_db is not None:
            return self.dg_db(a, b, eps)
        return central_difference(lambda y: _call(self.g, a, y, eps), b)

    def G_b(self, a, b, eps=0.0):
        fl = self.flags
        if not fl.g_factorizable:
            raise ValueError("model has no g factorization")
        if fl.dG_db is not None:
            return fl.dG_db(a, b, eps)
        return central_difference(lambda y: _call(fl.G, a, y, eps), b)

    # vector fields --------------------------------------------------------
    def log_rhs(self, eps: float):
        """Right-hand side in ``(a, ln b)`` coordinates for :func:`integrate`."""
        f, g, h = self.f, self.g, self.h

        def rhs(t, y):
            a = y[0]
            b = math.exp(y[1])
            return np.array([eps * f(a, b, eps) + b * h(a, b, eps), g(a, b, eps)])

        return rhs

    def rhs(self, eps: float):
        """Right-hand side in plain ``(a, b)`` coordinates."""
        f, g, h = self.f, self.g, self.h

        def rhs(t, y):
            a, b = y[0], y[1]
            return np.array([eps * f(a, b, eps) + b * h(a, b, eps), b * g(a, b, eps)])

        return rhs


@dataclass(frozen=True)
class GridSpec:
    """Rectangle ``[a_lo, a_hi] x [0, b_hi]`` sampled on an ``n_a x n_b`` grid."""

    a_lo: float
    a_hi: float
    b_hi: float
    n_a: int = 200
    n_b: int = 200

    def __post_init__(self):
        if not (math.isfinite(self.a_lo) and math.isfinite(self.a_hi) and self.a_lo < self.a_hi):
            raise ValueError("grid needs finite a_lo < a_hi")
        if not (math.isfinite(self.b_hi) and self.b_hi > 0):
            raise ValueError("grid needs finite b_hi > 0")
        if self.n_a < 2 or self.n_b < 2:
            raise ValueError("grid needs at least 2 points per axis")

    def axes(self):
        return np.linspace(self.a_lo, self.a_hi, self.n_a), np.linspace(0.0, self.b_hi, self.n_b)


@dataclass
class ConditionResult:
    name: str
    passed: bool
    violation: tuple[float, float] | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "violation": None if self.violation is None else list(self.violation),
                "detail": self.detail}


@dataclass
class ValidationReport:
    """Per-condition outcome.  ``boundary`` holds the b = 0 row checks."""

    model: str
    conditions: list[ConditionResult]
    boundary: list[ConditionResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions) and all(c.passed for c in self.boundary)

    def failures(self) -> list[ConditionResult]:
        return [c for c in self.conditions + self.boundary if not c.passed]

    def __getitem__(self, name: str) -> ConditionResult:
        for c in self.conditions + self.boundary:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"model": self.model, "passed": self.passed,
                "conditions": [c.to_dict() for c in self.conditions],
                "boundary": [c.to_dict() for c in self.boundary]}


def _first(mask: np.ndarray, A: np.ndarray, B: np.ndarray):
    idx = np.argwhere(mask)
    if idx.size == 0:
        return None
    i = tuple(idx[0])
    return float(A[i]), float(B[i])


def _finite_check(name, vals, A, B):
    bad = ~np.isfinite(vals)
    if np.any(bad):
        return ConditionResult(name, False, _first(bad, A, B), "evaluator returned a non-finite value")
    return None


def validate_model(model: SlowFastModel, grid: GridSpec) -> ValidationReport:
    """Check the turning conditions, supplied partials and declared flags on ``grid``.

    Sign conditions refer to the open domain, so grid points on a finite
    ``a_min``/``a_max`` (and at ``a_bar`` for the g condition) are skipped.
    Passing is necessary, not sufficient: only the samples are inspected.
    """
    if grid.a_lo < model.a_min or grid.a_hi > model.a_max:
        raise ValueError("grid leaves the declared a-domain")
    a_ax, b_ax = grid.axes()
    a_ax = a_ax[(a_ax > model.a_min) & (a_ax < model.a_max)]
    if a_ax.size == 0:
        raise ValueError("grid has no interior a samples")
    A, B = np.meshgrid(a_ax, b_ax[1:], indexing="ij")   # b > 0
    a0 = a_ax
    z0 = np.zeros_like(a0)
    conditions: list[ConditionResult] = []
    boundary: list[ConditionResult] = []

    # f(a,0,0) > 0 (lives on the axis)
    fv = _call(model.f, a0, z0, 0.0)
    res = _finite_check("turning_f", fv, a0, z0)
    if res is None:
        bad = fv <= 0
        res = ConditionResult("turning_f", not np.any(bad), _first(bad, a0, z0),
                              "" if not np.any(bad) else "f(a,0,0) <= 0")
    conditions.append(res)

    # h(a,b,0) < 0 for b > 0; the b = 0 row is reported separately
    hv = _call(model.h, A, B, 0.0)
    res = _finite_check("turning_h", hv, A, B)
    if res is None:
        bad = hv >= 0
        res = ConditionResult("turning_h", not np.any(bad), _first(bad, A, B),
                              "" if not np.any(bad) else "h(a,b,0) >= 0")
    conditions.append(res)
    h0 = _call(model.h, a0, z0, 0.0)
    res = _finite_check("turning_h_axis", h0, a0, z0)
    if res is None:
        bad = h0 >= 0
        res = ConditionResult("turning_h_axis", not np.any(bad), _first(bad, a0, z0),
                              "" if not np.any(bad) else "h(a,0,0) >= 0")
    boundary.append(res)

    # g(a,0,0) changes sign from - to + at a_bar
    gv = _call(model.g, a0, z0, 0.0)
    res = _finite_check("turning_g", gv, a0, z0)
    if res is None:
        tol = 1e-12 * max(1.0, abs(model.a_bar))
        left = a0 < model.a_bar - tol
        right = a0 > model.a_bar + tol
        bad = (left & (gv >= 0)) | (right & (gv <= 0))
        res = ConditionResult("turning_g", not np.any(bad), _first(bad, a0, z0),
                              "" if not np.any(bad) else "g(a,0,0) has the wrong sign")
    conditions.append(res)

    if model.check_partials:
        conditions.append(_check_partials(model, A, B))
    else:
        conditions.append(ConditionResult("partials", True, None, "skipped (tabulated model)"))
    conditions.extend(_check_flags(model, A, B))
    return ValidationReport(model.name, conditions, boundary)


def _check_partials(model: SlowFastModel, A, B) -> ConditionResult:
    pairs = (
        ("df_da", model.df_da, lambda x: _call(model.f, x, B, 0.0), A),
        ("dh_da", model.dh_da, lambda x: _call(model.h, x, B, 0.0), A),
        ("dg_db", model.dg_db, lambda y: _call(model.g, A, y, 0.0), B),
    )
    for label, an, fn, var in pairs:
        if an is None:
            continue
        exact = _call(an, A, B, 0.0)
        fd = central_difference(fn, var)
        bad = ~np.isfinite(exact) | (np.abs(exact - fd) > PARTIAL_RTOL * np.maximum(1.0, np.abs(fd)))
        if np.any(bad):
            return ConditionResult("partials", False, _first(bad, A, B),
                                   f"{label} disagrees with central differences")
    return ConditionResult("partials", True)


def _rel_spread(vals: np.ndarray) -> np.ndarray:
    """Per-row relative spread along axis 0 (the a direction)."""
    ref = vals[:1]
    return np.abs(vals - ref) / np.maximum(np.abs(ref), 1e-300)


def _check_flags(model: SlowFastModel, A, B) -> list[ConditionResult]:
    fl = model.flags
    out = []
    if fl.h_independent_of_a:
        hv = _call(model.h, A, B, 0.0)
        bad = _rel_spread(hv) > FLAG_RTOL
        out.append(ConditionResult("flag_h_independent", not np.any(bad), _first(bad, A, B),
                                   "" if not np.any(bad) else "h varies with a"))
    if fl.separable_fh:
        nz = np.abs(A[:, 0]) > 1e-12
        As, Bs = A[nz], B[nz]
        ft = _call(model.f, As, Bs, 0.0) / As
        ht = _call(model.h, As, Bs, 0.0) / As
        bad = (_rel_spread(ft) > FLAG_RTOL) | (_rel_spread(ht) > FLAG_RTOL)
        out.append(ConditionResult("flag_separable_fh", not np.any(bad), _first(bad, As, Bs),
                                   "" if not np.any(bad) else "f/a or h/a varies with a"))
    if fl.g_factorizable:
        gv = _call(model.g, A, B, 0.0)
        phi = np.asarray(fl.phi(B), dtype=float) * np.ones_like(B)
        prod = phi * _call(fl.G, A, B, 0.0)
        scale = np.maximum(np.abs(gv), 1e-12 * max(1.0, float(np.max(np.abs(gv)))))
        bad = np.abs(gv - prod) > FLAG_RTOL * np.maximum(scale, 1.0)
        phi0 = float(np.asarray(fl.phi(np.array(0.0))))
        ok = not np.any(bad) and phi0 != 0.0
        detail = "" if ok else ("phi(0) = 0" if phi0 == 0.0 else "g != phi(b) G(a,b)")
        out.append(ConditionResult("flag_g_factor", ok, _first(bad, A, B) if np.any(bad) else None,
                                   detail))
    return out
