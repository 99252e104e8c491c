"""Scan chi over an orbit family, refine its roots and classify the cycles they select."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .characteristics import CharacteristicValues, characteristic_values
from .heteroclinic import HeteroclinicError, HeteroclinicOrbit
from .model import SlowFastModel, _call
from .parallel import pmap
from .quadrature import adaptive_quad

__all__ = [
    "DegenerateWarning",
    "ScanPoint",
    "ChiScan",
    "Plateau",
    "CycleCandidate",
    "CandidateSet",
    "scan_chi",
    "find_candidates",
    "predicted_period",
    "period_coefficient",
    "candidates_summary",
]

NOISE_FACTOR = 10.0   # |chi| below this many error estimates counts as zero


class DegenerateWarning(UserWarning):
    """chi vanishes identically on a stretch, or lambda is indistinguishable from 0."""


@dataclass
class ScanPoint:
    s: float
    values: CharacteristicValues | None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.values is not None

    @property
    def in_noise(self) -> bool:
        v = self.values
        return v is not None and abs(v.chi) <= NOISE_FACTOR * v.chi_err


@dataclass
class ChiScan:
    """Grid evaluation of chi and lambda; failed points keep their error message."""

    points: list[ScanPoint]
    family: Callable[[float], HeteroclinicOrbit]
    model: SlowFastModel
    form: str = "auto"

    @property
    def s(self) -> np.ndarray:
        return np.array([p.s for p in self.points])

    @property
    def good(self) -> list[ScanPoint]:
        return [p for p in self.points if p.ok]

    @property
    def chi_scale(self) -> float:
        vals = [abs(p.values.chi) for p in self.good]
        return max(vals) if vals else 0.0

    def rows(self) -> list[dict]:
        out = []
        for p in self.points:
            v = p.values
            out.append({
                "s": p.s,
                "chi": v.chi if v else math.nan, "chi_err": v.chi_err if v else math.nan,
                "lambda": v.lam if v else math.nan, "lambda_err": v.lambda_err if v else math.nan,
                "a_alpha": v.a_alpha if v else math.nan, "a_omega": v.a_omega if v else math.nan,
                "error": p.error})
        return out


def _evaluate(family, model, s: float, form: str) -> ScanPoint:
    try:
        orbit = family(s)
        return ScanPoint(s, characteristic_values(model, orbit, form=form))
    except (HeteroclinicError, ValueError, ArithmeticError) as exc:
        return ScanPoint(s, None, f"{type(exc).__name__}: {exc}")


def scan_chi(family: Callable[[float], HeteroclinicOrbit], model: SlowFastModel,
             window: tuple[float, float], n_grid: int = 41, *, form: str = "auto",
             workers: int | None = None) -> ChiScan:
    """chi and lambda on ``n_grid`` equally spaced parameters spanning ``window``.

    Points where no orbit can be computed are recorded, not raised; the scan
    fails only when every point does.
    """
    lo, hi = map(float, window)
    if not lo < hi:
        raise ValueError("window must satisfy lo < hi")
    if n_grid < 8:
        raise ValueError("n_grid must be at least 8")
    grid = np.linspace(lo, hi, int(n_grid))
    points = pmap(lambda s: _evaluate(family, model, float(s), form), grid, workers)
    if not any(p.ok for p in points):
        raise HeteroclinicError("no orbit could be computed anywhere in the window: "
                                + points[0].error)
    return ChiScan(points, family, model, form)


def period_coefficient(model: SlowFastModel, a_omega: float, a_alpha: float) -> float:
    """Integral of 1/f(a,0,0) over [a_omega, a_alpha]."""
    def inv_f(a):
        a = np.asarray(a, dtype=float)
        return 1.0 / _call(model.f, a, np.zeros_like(a), 0.0)

    val, _ = adaptive_quad(inv_f, a_omega, a_alpha)
    return float(val)


@dataclass
class CycleCandidate:
    """A chi root and the singular cycle it selects."""

    s0: float
    chi0: float
    chi_err: float
    lambda0: float
    lambda_err: float
    lambda_tol: float
    stability: str
    gamma: HeteroclinicOrbit
    bracket: tuple[float, float]
    predicted_period_coeff: float
    chi_slope: float = math.nan
    warnings: list[str] = field(default_factory=list)

    @property
    def a_alpha(self) -> float:
        return self.gamma.a_alpha

    @property
    def a_omega(self) -> float:
        return self.gamma.a_omega

    @property
    def classified(self) -> bool:
        return self.stability in ("stable", "unstable")

    def singular_cycle(self) -> np.ndarray:
        """Closed polyline: the orbit samples, then the axis from a_omega back to a_alpha."""
        a, b = self.gamma.path.a, self.gamma.path.b
        pts = [np.column_stack([[self.a_alpha], [0.0]]), np.column_stack([a, b]),
               np.array([[self.a_omega, 0.0], [self.a_alpha, 0.0]])]
        return np.vstack(pts)

    def to_dict(self) -> dict:
        return {
            "s0": self.s0, "chi": self.chi0, "chi_err": self.chi_err,
            "lambda": self.lambda0, "lambda_err": self.lambda_err, "lambda_tol": self.lambda_tol,
            "stability": self.stability, "bracket": list(self.bracket),
            "a_alpha": self.a_alpha, "a_omega": self.a_omega,
            "period_coefficient": self.predicted_period_coeff, "chi_slope": self.chi_slope,
            "warnings": list(self.warnings)}


@dataclass
class Plateau:
    """Consecutive scan points where chi is indistinguishable from zero."""

    lo: float
    hi: float
    n_points: int

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "n_points": self.n_points}


@dataclass
class CandidateSet:
    candidates: list[CycleCandidate]
    plateaus: list[Plateau]
    warnings: list[str]

    @property
    def classified(self) -> list[CycleCandidate]:
        return [c for c in self.candidates if c.classified]

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]


def _plateaus(points: Sequence[ScanPoint]) -> list[Plateau]:
    out, run = [], []
    for p in list(points) + [None]:
        if p is not None and p.in_noise:
            run.append(p.s)
            continue
        if len(run) >= 2:
            out.append(Plateau(run[0], run[-1], len(run)))
        run = []
    return out


def _classify(lam: float, tol: float) -> str:
    if lam < -tol:
        return "stable"
    if lam > tol:
        return "unstable"
    return "degenerate"


def _refine(scan: ChiScan, lo: ScanPoint, hi: ScanPoint, root_tol: float,
            lambda_tol: float | None, slope_step: float) -> CycleCandidate:
    family, model, form = scan.family, scan.model, scan.form
    cache: dict[float, tuple[HeteroclinicOrbit, CharacteristicValues]] = {}

    def chi(s):
        orbit = family(float(s))
        cv = characteristic_values(model, orbit, form=form)
        cache[float(s)] = (orbit, cv)
        return cv.chi

    a, b = lo.s, hi.s
    fa, fb = lo.values.chi, hi.values.chi
    xtol = 1e-13 * max(1.0, abs(a), abs(b))
    s0 = brentq(lambda s: fa if s == a else fb if s == b else chi(s), a, b,
                xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
    if float(s0) not in cache:
        chi(s0)
    orbit, cv = cache[float(s0)]
    notes = []
    if abs(cv.chi) > root_tol:
        notes.append(f"|chi(s0)| = {abs(cv.chi):.3g} exceeds root_tol {root_tol:.3g}")
    tol = 1e-4 + 3.0 * cv.lambda_err if lambda_tol is None else float(lambda_tol)
    stability = _classify(cv.lam, tol)
    if stability == "degenerate":
        notes.append("lambda is within tolerance of zero; stability left unclassified")
    slope = math.nan
    h = slope_step * (b - a)
    if a < s0 - h and s0 + h < b:
        try:
            slope = (characteristic_values(model, family(s0 + h), form=form).chi
                     - characteristic_values(model, family(s0 - h), form=form).chi) / (2 * h)
        except (HeteroclinicError, ValueError):
            pass
    return CycleCandidate(
        s0=float(s0), chi0=cv.chi, chi_err=cv.chi_err, lambda0=cv.lam, lambda_err=cv.lambda_err,
        lambda_tol=tol, stability=stability, gamma=orbit, bracket=(a, b),
        predicted_period_coeff=period_coefficient(model, orbit.a_omega, orbit.a_alpha),
        chi_slope=slope, warnings=notes)


def find_candidates(scan: ChiScan, root_tol: float | None = None,
                    lambda_tol: float | None = None, *, slope_step: float = 1e-3,
                    workers: int | None = None) -> CandidateSet:
    """Refine every sign change of chi to a root and classify it by the sign of lambda.

    ``root_tol`` defaults to 1e-8 times the largest |chi| on the scan.  A
    sign change between two points that are both inside chi's error band is
    treated as part of a zero plateau, not as a root.
    """
    good = scan.good
    scale = scan.chi_scale
    root_tol = 1e-8 * scale if root_tol is None else float(root_tol)
    notes: list[str] = []
    plateaus = _plateaus(good)
    for p in plateaus:
        notes.append(f"chi vanishes within its error on [{p.lo!r}, {p.hi!r}] "
                     f"({p.n_points} points); no cycle can be classified there")
    brackets = []
    for p, q in zip(good[:-1], good[1:]):
        if p.in_noise and q.in_noise:
            continue
        if p.values.chi == 0.0 or q.values.chi == 0.0 or p.values.chi * q.values.chi > 0:
            continue
        brackets.append((p, q))
    if not brackets and not plateaus:
        notes.append("chi has no sign change on the scanned window")
    cands = pmap(lambda pq: _refine(scan, pq[0], pq[1], root_tol, lambda_tol, slope_step),
                 brackets, workers)
    cands.sort(key=lambda c: c.s0)
    for c in cands:
        for w in c.warnings:
            notes.append(f"s0={c.s0!r}: {w}")
    for msg in notes:
        if "vanishes" in msg or "unclassified" in msg:
            warnings.warn(msg, DegenerateWarning, stacklevel=2)
    return CandidateSet(cands, plateaus, notes)


def predicted_period(candidate: CycleCandidate, eps: float) -> float:
    """Leading-order period coefficient / eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not candidate.classified:
        raise ValueError("period prediction needs a non-degenerate candidate")
    return candidate.predicted_period_coeff / eps


def candidates_summary(cset: CandidateSet) -> str:
    """Deterministic JSON text for a candidate set."""
    payload = {"candidates": [c.to_dict() for c in cset.candidates],
               "plateaus": [p.to_dict() for p in cset.plateaus],
               "warnings": list(cset.warnings)}
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=True)
