"""Checks of the predicted cycles on the full eps > 0 system.

Every system exposes ``rhs(eps)`` in internal coordinates, ``log_components``,
``roles`` (indices of the a and b roles), ``project`` (physical state to
(a, b)), ``lift`` ((a, b) to a physical state) and ``residual`` (distance from
the reduced surface).  Planar models are wrapped by :class:`PlanarSystem`.

Return maps use the section b = delta1: an orbit starts there heading down
on the attracting side, exits upward after its slow passage, and returns
down again after the fast excursion.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .analysis import CycleCandidate
from .heteroclinic import stable_direction, unstable_direction
from .integrator import EventSpec, OrbitPath, Termination, integrate
from .model import SlowFastModel, _call
from .quadrature import adaptive_quad

__all__ = [
    "NonRecurrentError",
    "PlanarSystem",
    "as_system",
    "VerifySettings",
    "SectionPass",
    "VerificationReport",
    "FloquetResult",
    "EntryExitResult",
    "section_pass",
    "return_map",
    "section_seed",
    "find_periodic_orbit",
    "floquet_check",
    "exit_point",
    "entry_exit_check",
    "polyline_distance",
    "section_crossings",
    "b_peaks",
    "reports_json",
]


class NonRecurrentError(RuntimeError):
    """The trajectory did not come back to the section in time."""


class PlanarSystem:
    """A planar model seen as a system: internal (a, ln b), trivial lift."""

    dim = 2
    log_components = (1,)
    roles = (0, 1)

    def __init__(self, model: SlowFastModel):
        self.model = model

    def rhs(self, eps: float):
        return self.model.log_rhs(eps)

    def project(self, Y):
        Y = np.asarray(Y, dtype=float)
        return Y[..., 0], Y[..., 1]

    def lift(self, a: float, b: float) -> np.ndarray:
        return np.array([a, b], dtype=float)

    def residual(self, Y):
        return np.zeros(np.asarray(Y).shape[:-1])


def as_system(obj):
    return PlanarSystem(obj) if isinstance(obj, SlowFastModel) else obj


@dataclass(frozen=True)
class VerifySettings:
    rtol: float = 1e-10
    atol: float = 1e-12
    t_max_factor: float = 50.0     # give up after t_max_factor / eps
    max_iter: int = 40
    fp_tol: float = 1e-8           # |P(a) - a| <= fp_tol * max(1, |a|)
    damping: float = 0.5           # secant steps are capped at this fraction of |a - a_bar|
    max_stage_events: int = 50


@dataclass
class SectionPass:
    """One return: exit upward through the section, then back down."""

    a_in: float
    a_exit: float
    t_exit: float
    a_out: float
    t_out: float
    path: OrbitPath | None = None


def _integrate(system, eps, y0, t_end, events, settings):
    return integrate(system.rhs(eps), y0, (0.0, t_end), events, settings.rtol, settings.atol,
                     log_components=system.log_components, roles=system.roles)


def _stage(system, eps, y0, delta1, direction, side, t_left, settings):
    """Run to the next ``direction`` crossing of b = delta1 whose a lies on ``side`` of a_bar."""
    a_bar = system.model.a_bar
    ev = [EventSpec("b_crosses_level", delta1, direction, name="section")]
    y = np.asarray(y0, dtype=float)
    t = 0.0
    paths = []
    for _ in range(settings.max_stage_events):
        path = _integrate(system, eps, y, t_left - t, ev, settings)
        paths.append(path)
        if path.termination is not Termination.EVENT:
            raise NonRecurrentError(
                f"no {direction} crossing of b={delta1!r} within t={t_left!r} "
                f"({path.termination.value}{': ' + path.message if path.message else ''})")
        t += path.event_time
        y = np.asarray(path.event_state, dtype=float)
        a, _ = system.project(y)
        if (a < a_bar) if side == "low" else (a > a_bar):
            return float(a), t, y, paths
    raise NonRecurrentError("too many section crossings on the wrong side")


def _joined(paths: Sequence[OrbitPath]) -> OrbitPath:
    out = paths[0]
    for p in paths[1:]:
        shifted = _shift(p, out.t1)
        out = OrbitPath.join(out, shifted)
    return out


def _shift(path: OrbitPath, dt: float) -> OrbitPath:
    cp = OrbitPath(**{**path.__dict__})
    cp.t = path.t + dt
    cp.seg_t0 = path.seg_t0 + dt
    if cp.event_time is not None:
        cp.event_time = path.event_time + dt
    cp.crossings = [(t + dt, n, s) for t, n, s in path.crossings]
    return cp


def section_pass(system, eps: float, delta1: float, a_in: float,
                 settings: VerifySettings = VerifySettings(), keep_path: bool = False) -> SectionPass:
    system = as_system(system)
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not a_in < system.model.a_bar:
        raise ValueError("a_in must lie on the attracting side a < a_bar")
    t_max = settings.t_max_factor / eps
    y0 = system.lift(a_in, delta1)
    a_exit, t_exit, y_exit, p1 = _stage(system, eps, y0, delta1, "up", "high", t_max, settings)
    a_out, t2, _, p2 = _stage(system, eps, y_exit, delta1, "down", "low", t_max - t_exit, settings)
    path = None
    if keep_path:
        path = _joined(list(p1) + list(p2))
    return SectionPass(float(a_in), a_exit, t_exit, a_out, t_exit + t2, path)


def return_map(system, eps: float, delta1: float, a_in: float,
               settings: VerifySettings = VerifySettings()) -> tuple[float, float]:
    """(a_out, transit time) for the first return to b = delta1 going down on a < a_bar."""
    p = section_pass(system, eps, delta1, a_in, settings)
    return p.a_out, p.t_out


def section_seed(orbit, delta1: float) -> float:
    """a where the orbit's descending branch crosses b = delta1."""
    path = orbit.path
    b = path.b
    k = int(np.argmax(b))
    idx = np.nonzero(b[k:] < delta1)[0]
    if idx.size == 0 or b[k] <= delta1:
        raise ValueError("delta1 must lie strictly between 0 and the orbit's peak")
    j = k + int(idx[0])
    t = brentq(lambda s: float(path.state(s)[1]) - delta1, path.t[j - 1], path.t[j], xtol=1e-14)
    return float(path.state(t)[0])


def polyline_distance(points: np.ndarray, poly: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Distance of each point to the polyline through ``poly`` (rows are vertices)."""
    P = np.asarray(points, dtype=float)
    A, B = poly[:-1], poly[1:]
    d = B - A
    L2 = np.einsum("ij,ij->i", d, d)
    L2 = np.where(L2 > 0, L2, 1.0)
    out = np.empty(len(P))
    for s in range(0, len(P), chunk):
        Q = P[s:s + chunk, None, :]
        u = np.clip(np.einsum("kij,ij->ki", Q - A[None], d) / L2, 0.0, 1.0)
        C = A[None] + u[..., None] * d[None]
        out[s:s + chunk] = np.sqrt(((Q - C) ** 2).sum(-1)).min(axis=1)
    return out


@dataclass
class VerificationReport:
    epsilon: float
    candidate_s0: float
    lambda0: float
    delta1: float
    fixed_point_a: float
    measured_period: float
    predicted_period: float
    orbit_distance: float
    distance_over_eps: float
    residual_max: float
    floquet_estimate: float
    exp_lambda: float
    converged: bool
    iterations: int
    a_omega: float
    iterates: list = field(default_factory=list)
    message: str = ""
    orbit_path: OrbitPath | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "orbit_path"}


def _secant(fun, x0, settings: VerifySettings, scale: float):
    """Damped secant on fun(a) = P(a) - a; returns (a, P(a) - a, iterations, history)."""
    hist = []
    f0 = fun(x0)
    hist.append((x0, f0))
    cap = settings.damping * scale
    x1 = x0 + float(np.clip(f0, -cap, cap))
    for it in range(1, settings.max_iter + 1):
        f1 = fun(x1)
        hist.append((x1, f1))
        if abs(f1) <= settings.fp_tol * max(1.0, abs(x1)):
            return x1, f1, it, hist
        if f1 == f0:
            break
        step = -f1 * (x1 - x0) / (f1 - f0)
        step = float(np.clip(step, -cap, cap))
        x0, f0 = x1, f1
        x1 = x1 + step
    return x1, hist[-1][1], settings.max_iter, hist


def find_periodic_orbit(system, eps: float, candidate: CycleCandidate, delta1: float | None = None,
                        settings: VerifySettings = VerifySettings(),
                        with_floquet: bool = True) -> VerificationReport:
    """Solve P(a) = a on b = delta1 by a damped secant started on the candidate's orbit."""
    system = as_system(system)
    if not candidate.classified:
        raise ValueError("candidate is degenerate; nothing to verify")
    gamma = candidate.gamma
    delta1 = 0.05 * gamma.peak_b if delta1 is None else float(delta1)
    a0 = section_seed(gamma, delta1)
    a_bar = system.model.a_bar
    scale = abs(a0 - a_bar)
    cache: dict[float, SectionPass] = {}

    def F(a):
        p = section_pass(system, eps, delta1, a, settings)
        cache[a] = p
        return p.a_out - a

    msg = ""
    try:
        a_star, res, iters, hist = _secant(F, a0, settings, scale)
        converged = abs(res) <= settings.fp_tol * max(1.0, abs(a_star))
    except NonRecurrentError as exc:
        return VerificationReport(
            eps, candidate.s0, candidate.lambda0, delta1, math.nan, math.nan,
            candidate.predicted_period_coeff / eps, math.nan, math.nan, math.nan, math.nan,
            math.exp(candidate.lambda0), False, 0, candidate.a_omega, [], str(exc))
    if not converged:
        msg = f"secant did not converge; last residual {res!r}"
    fin = section_pass(system, eps, delta1, a_star, settings, keep_path=True)
    Y = fin.path.physical
    pa, pb = system.project(Y)
    dist = float(polyline_distance(np.column_stack([pa, pb]), candidate.singular_cycle()).max())
    r = np.abs(system.residual(Y))
    resid = float(np.nanmax(r)) if np.any(np.isfinite(r)) else math.nan
    rep = VerificationReport(
        epsilon=float(eps), candidate_s0=candidate.s0, lambda0=candidate.lambda0, delta1=delta1,
        fixed_point_a=float(a_star), measured_period=fin.t_out,
        predicted_period=candidate.predicted_period_coeff / eps, orbit_distance=dist,
        distance_over_eps=dist / eps, residual_max=resid, floquet_estimate=math.nan,
        exp_lambda=math.exp(candidate.lambda0), converged=bool(converged), iterations=iters,
        a_omega=candidate.a_omega, iterates=[[float(x), float(f)] for x, f in hist], message=msg,
        orbit_path=fin.path)
    if with_floquet and converged:
        fl = floquet_check(system, eps, rep, settings)
        rep.floquet_estimate = fl.det_dp
        if fl.degraded:
            rep.message = (rep.message + "; " if rep.message else "") + fl.message
    return rep


@dataclass
class FloquetResult:
    det_dp: float
    exp_lambda: float
    gap: float
    step: float
    degraded: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def floquet_check(system, eps: float, report: VerificationReport,
                  settings: VerifySettings = VerifySettings()) -> FloquetResult:
    """Central-difference derivative of the return map at the fixed point."""
    system = as_system(system)
    if not report.converged:
        raise ValueError("floquet_check needs a converged report")
    a = report.fixed_point_a
    h = max(1e-6, 1e-3 * abs(a - report.a_omega))
    try:
        up, _ = return_map(system, eps, report.delta1, a + h, settings)
        dn, _ = return_map(system, eps, report.delta1, a - h, settings)
    except (NonRecurrentError, ValueError) as exc:
        return FloquetResult(math.nan, report.exp_lambda, math.nan, h, True,
                             f"finite-difference step left the basin: {exc}")
    det = (up - dn) / (2 * h)
    return FloquetResult(float(det), report.exp_lambda, abs(det - report.exp_lambda), h)


# entry and exit -----------------------------------------------------------------

def _ratio(model: SlowFastModel):
    def fn(a):
        a = np.asarray(a, dtype=float)
        z = np.zeros_like(a)
        return _call(model.g, a, z, 0.0) / _call(model.f, a, z, 0.0)
    return fn


def exit_point(model: SlowFastModel, a_entry: float) -> float:
    """The a1 > a_bar with zero integral of g/f on the axis from a_entry to a1."""
    if not a_entry < model.a_bar:
        raise ValueError("a_entry must lie on the attracting side a < a_bar")
    r = _ratio(model)

    def partial(a1):
        return adaptive_quad(r, a_entry, a1, abs_tol=1e-15, rel_tol=1e-13)[0]

    top = model.a_max - 1e-12 * max(1.0, abs(model.a_max))
    lo = model.a_bar
    span = model.a_bar - a_entry
    hi = min(model.a_bar + span, top)
    while partial(hi) < 0:
        if hi >= top:
            raise ValueError("no exit point inside the domain")
        lo, hi = hi, min(hi + span, top)
    return float(brentq(partial, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


def _limiting_to_section(model, y0, delta1, direction, backward=False, rtol=1e-12):
    t_end = -1e7 if backward else 1e7
    ev = [EventSpec("b_crosses_level", delta1, direction, name="section")]
    path = integrate(model.log_rhs(0.0), y0, (0.0, t_end), ev, rtol, 1e-14, log_components=(1,))
    if path.termination is not Termination.EVENT:
        raise ValueError("limiting orbit did not reach the section")
    return path


@dataclass
class EntryExitResult:
    epsilon: float
    a_entry: float
    a_exit_axis: float
    a_exit_predicted: float
    a_exit_measured: float
    a_entry_measured: float

    @property
    def gap(self) -> float:
        return abs(self.a_exit_measured - self.a_exit_predicted)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gap"] = self.gap
        return d


def entry_exit_check(system, eps: float, a_entry: float, delta1: float,
                     settings: VerifySettings = VerifySettings(),
                     seed: float = 1e-9) -> EntryExitResult:
    """Measured versus predicted exit for a trajectory arriving along a fast orbit.

    The trajectory starts at the peak of the limiting orbit that lands on
    (a_entry, 0).  The prediction maps a_entry to a1 through the partial
    integral and follows the limiting orbit leaving (a1, 0) up to b = delta1.
    """
    system = as_system(system)
    model = system.model
    v = stable_direction(model, a_entry)
    back = integrate(model.log_rhs(0.0), (a_entry + seed * v[0], seed * v[1]), (0.0, -1e7),
                     [EventSpec("b_crosses_level", seed * 1e-3, "down", name="axis")],
                     1e-12, 1e-14, log_components=(1,))
    k = int(np.argmax(back.y[:, 1]))
    if back.b[k] <= delta1:
        raise ValueError("delta1 is above the arriving orbit's peak")
    start = system.lift(float(back.a[k]), float(back.b[k]))
    t_max = settings.t_max_factor / eps
    a_in, t_in, y_in, _ = _stage(system, eps, start, delta1, "down", "low", t_max, settings)
    a_out, _, _, _ = _stage(system, eps, y_in, delta1, "up", "high", t_max - t_in, settings)
    a1 = exit_point(model, a_entry)
    u = unstable_direction(model, a1)
    leave = _limiting_to_section(model, (a1 + seed * u[0], seed * u[1]), delta1, "up")
    return EntryExitResult(float(eps), float(a_entry), a1, float(leave.event_state[0]),
                           float(a_out), float(a_in))


# long runs ------------------------------------------------------------------------

def section_crossings(system, eps: float, y0: Sequence[float], delta1: float, t_end: float,
                      settings: VerifySettings = VerifySettings()) -> tuple[np.ndarray, np.ndarray]:
    """Times and a-values of downward crossings of b = delta1 on a < a_bar."""
    system = as_system(system)
    ev = [EventSpec("b_crosses_level", delta1, "down", terminal=False, name="section")]
    path = _integrate(system, eps, y0, t_end, ev, settings)
    ts, As = [], []
    for t, _, state in path.crossings:
        a, _ = system.project(np.asarray(state))
        if a < system.model.a_bar:
            ts.append(t)
            As.append(float(a))
    return np.array(ts), np.array(As)


def b_peaks(system, eps: float, y0: Sequence[float], t_end: float,
            settings: VerifySettings = VerifySettings()) -> tuple[np.ndarray, np.ndarray]:
    """Successive local maxima of b along a trajectory (sampled at accepted steps)."""
    system = as_system(system)
    path = _integrate(system, eps, y0, t_end, [], settings)
    _, b = system.project(path.physical)
    k = np.nonzero((b[1:-1] > b[:-2]) & (b[1:-1] >= b[2:]))[0] + 1
    return path.t[k], b[k]


def reports_json(reports: Sequence[VerificationReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2, allow_nan=True)
