"""Heteroclinic orbits of the limiting system a' = b h(a,b,0), b' = b g(a,b,0).

Orbits leave the repelling part of the equilibrium line (g > 0) and land on
the attracting part (g < 0).  They are integrated in ``(a, ln b)`` so the
approach to the axis is resolved without underflow, and truncated at
``b = b_stop`` with a first-order tail correction for the endpoint.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .integrator import EventSpec, OrbitPath, Termination, integrate
from .model import SlowFastModel
from .parallel import pmap

__all__ = [
    "HeteroclinicError",
    "HeteroclinicOrbit",
    "OrbitSettings",
    "OmegaMap",
    "ExistenceWindow",
    "AlphaParameterization",
    "PointParameterization",
    "unstable_direction",
    "stable_direction",
    "compute_heteroclinic",
    "compute_heteroclinic_through",
    "reversal_check",
    "omega_map",
    "existence_window",
    "write_family_csv",
]


class HeteroclinicError(RuntimeError):
    """No heteroclinic connection could be computed."""


@dataclass(frozen=True)
class OrbitSettings:
    """Numerical knobs for orbit computation.

    ``delta_rel``/``b_stop_rel`` are multiplied by the orbit's b-scale (its
    peak, estimated from a coarse pilot run when not known in advance).
    """

    rtol: float = 1e-10
    atol: float = 1e-12
    delta_rel: float = 1e-8
    b_stop_rel: float = 1e-7
    t_max: float = 1e7
    a_window: tuple[float, float] | None = None
    max_steps: int = 2_000_000


@dataclass
class HeteroclinicOrbit:
    """One member of the orbit family and how it was truncated."""

    a_alpha: float
    a_omega: float
    path: OrbitPath
    seed_offset: float
    tail_cut: float
    tail_correction: float
    alpha_correction: float = 0.0
    s: float = math.nan
    omega_err: float = 0.0
    alpha_err: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def peak_index(self) -> int:
        return int(np.argmax(self.path.y[:, 1]))

    @property
    def peak_b(self) -> float:
        return float(math.exp(self.path.y[self.peak_index, 1]))

    @property
    def peak_a(self) -> float:
        return float(self.path.y[self.peak_index, 0])

    @property
    def a_start(self) -> float:
        return float(self.path.y[0, 0])

    @property
    def a_end(self) -> float:
        return float(self.path.y[-1, 0])

    def summary(self) -> dict:
        return {
            "s": self.s, "a_alpha": self.a_alpha, "a_omega": self.a_omega,
            "peak_b": self.peak_b, "seed_offset": self.seed_offset, "tail_cut": self.tail_cut,
            "tail_correction": self.tail_correction, "alpha_correction": self.alpha_correction,
        }


def _axis_values(model: SlowFastModel, a: float):
    h = float(model.h(a, 0.0, 0.0))
    g = float(model.g(a, 0.0, 0.0))
    return h, g


def unstable_direction(model: SlowFastModel, a: float) -> np.ndarray:
    """Unit eigenvector for the eigenvalue g(a,0,0) > 0 at the equilibrium (a, 0).

    The Jacobian there is [[0, h], [0, g]], so the direction is (h/g, 1) up to scale.
    """
    h, g = _axis_values(model, a)
    if not g > 0:
        raise ValueError(f"g({a!r},0,0) = {g!r} is not positive; (a,0) is not repelling")
    v = np.array([h / g, 1.0])
    return v / np.linalg.norm(v)


def stable_direction(model: SlowFastModel, a: float) -> np.ndarray:
    """Unit eigenvector for the eigenvalue g(a,0,0) < 0, oriented into b > 0."""
    h, g = _axis_values(model, a)
    if not g < 0:
        raise ValueError(f"g({a!r},0,0) = {g!r} is not negative; (a,0) is not attracting")
    v = np.array([h / g, 1.0])
    return v / np.linalg.norm(v)


def _tail(model: SlowFastModel, a: float, b: float) -> float:
    """First-order a-drift from (a, b) to the axis along da/db = h/g."""
    return -b * float(model.h(a, b, 0.0)) / float(model.g(a, b, 0.0))


def _endpoint_err(path: OrbitPath, rtol: float, corr: float) -> float:
    """Uncertainty of a tail-corrected endpoint: integration drift plus tail model."""
    span = float(np.max(np.abs(path.y[:, 0])))
    return 10.0 * rtol * max(1.0, span) + 1e-2 * abs(corr)


def _window_events(model: SlowFastModel, settings: OrbitSettings) -> list[EventSpec]:
    lo, hi = settings.a_window if settings.a_window is not None else (model.a_min, model.a_max)
    evs = []
    if math.isfinite(lo):
        evs.append(EventSpec("a_crosses_level", lo, "down", name="window"))
    if math.isfinite(hi):
        evs.append(EventSpec("a_crosses_level", hi, "up", name="window"))
    return evs


def _run_to_axis(model, y0, settings, b_stop, backward=False):
    t_end = -settings.t_max if backward else settings.t_max
    evs = [EventSpec("b_crosses_level", b_stop, "down", name="b_stop")]
    evs += _window_events(model, settings)
    return integrate(model.log_rhs(0.0), y0, (0.0, t_end), evs, settings.rtol, settings.atol,
                     log_components=(1,), max_steps=settings.max_steps)


def _check_landing(path: OrbitPath, what: str):
    if path.termination is not Termination.EVENT or path.event_name != "b_stop":
        reason = path.message or (
            "left the a-window" if path.event_name == "window" else "time limit reached")
        raise HeteroclinicError(f"no heteroclinic connection in window ({what}: {reason})")


def _seed_run(model, a_alpha, delta, b_stop, settings):
    v = unstable_direction(model, a_alpha)
    y0 = (a_alpha + delta * v[0], delta * v[1])
    path = _run_to_axis(model, y0, settings, b_stop)
    _check_landing(path, f"a_alpha={a_alpha!r}")
    return path


def compute_heteroclinic(model: SlowFastModel, a_alpha: float, delta: float | None = None,
                         b_stop: float | None = None,
                         settings: OrbitSettings = OrbitSettings()) -> HeteroclinicOrbit:
    """Orbit leaving (a_alpha, 0) along the unstable eigenvector.

    ``delta`` is the seed distance and ``b_stop`` the truncation level; when
    omitted they are scaled by the peak b of a coarse pilot orbit.
    """
    if not (model.a_bar < a_alpha < model.a_max):
        raise ValueError("a_alpha must lie in (a_bar, a_max)")
    scale = None
    if delta is None or b_stop is None:
        pilot_settings = OrbitSettings(rtol=1e-7, atol=1e-9, t_max=settings.t_max,
                                       a_window=settings.a_window, max_steps=settings.max_steps)
        pilot = _seed_run(model, a_alpha, 1e-6, 1e-5, pilot_settings)
        scale = float(np.exp(pilot.y[:, 1].max()))
        delta = settings.delta_rel * scale if delta is None else delta
        b_stop = settings.b_stop_rel * scale if b_stop is None else b_stop
    if not (delta > 0 and b_stop > 0):
        raise ValueError("delta and b_stop must be positive")
    path = _seed_run(model, a_alpha, delta, b_stop, settings)
    a_end, b_end = path.event_state
    if not float(model.g(a_end, 0.0, 0.0)) < 0:
        raise HeteroclinicError("orbit reached b_stop before the attracting side")
    corr = _tail(model, a_end, b_end)
    return HeteroclinicOrbit(
        a_alpha=float(a_alpha), a_omega=float(a_end + corr), path=path, seed_offset=float(delta),
        tail_cut=float(b_stop), tail_correction=float(corr), s=float(a_alpha),
        omega_err=_endpoint_err(path, settings.rtol, corr),
        alpha_err=float(delta) ** 2,
        meta={"scale": scale, "mode": "alpha"})


def compute_heteroclinic_through(model: SlowFastModel, point: Sequence[float],
                                 b_stop: float | None = None,
                                 settings: OrbitSettings = OrbitSettings(),
                                 s: float = math.nan) -> HeteroclinicOrbit:
    """Orbit through an interior point ``(a, b)``, integrated both ways to the axis."""
    a0, b0 = map(float, point)
    if not b0 > 0:
        raise ValueError("point must have b > 0")
    if b_stop is None:
        b_stop = settings.b_stop_rel * b0
    back = _run_to_axis(model, (a0, b0), settings, b_stop, backward=True)
    _check_landing(back, f"backward from {point!r}")
    fwd = _run_to_axis(model, (a0, b0), settings, b_stop)
    _check_landing(fwd, f"forward from {point!r}")
    path = OrbitPath.join(back, fwd)
    a_s, b_s = back.event_state
    a_e, b_e = fwd.event_state
    if not float(model.g(a_s, 0.0, 0.0)) > 0 or not float(model.g(a_e, 0.0, 0.0)) < 0:
        raise HeteroclinicError("orbit ends do not straddle the turning point")
    c_alpha = _tail(model, a_s, b_s)
    c_omega = _tail(model, a_e, b_e)
    return HeteroclinicOrbit(
        a_alpha=float(a_s + c_alpha), a_omega=float(a_e + c_omega), path=path,
        seed_offset=float(b_s), tail_cut=float(b_stop), tail_correction=float(c_omega),
        alpha_correction=float(c_alpha), s=float(s if not math.isnan(s) else b0),
        omega_err=_endpoint_err(fwd, settings.rtol, c_omega),
        alpha_err=_endpoint_err(back, settings.rtol, c_alpha),
        meta={"scale": b0, "mode": "through", "point": [a0, b0]})


def reversal_check(model: SlowFastModel, orbit: HeteroclinicOrbit,
                   settings: OrbitSettings = OrbitSettings()) -> float:
    """Recover a_alpha by integrating backward from (a_omega, 0) + delta * stable direction.

    Returns the recovered a_alpha.
    """
    v = stable_direction(model, orbit.a_omega)
    delta = orbit.seed_offset
    y0 = (orbit.a_omega + delta * v[0], delta * v[1])
    back = _run_to_axis(model, y0, settings, orbit.tail_cut, backward=True)
    _check_landing(back, "reversal")
    a_s, b_s = back.event_state
    return float(a_s + _tail(model, a_s, b_s))


class AlphaParameterization:
    """Family indexed by the alpha endpoint, s = a_alpha."""

    kind = "alpha"

    def __init__(self, model: SlowFastModel, settings: OrbitSettings = OrbitSettings()):
        self.model = model
        self.settings = settings

    def __call__(self, s: float) -> HeteroclinicOrbit:
        return compute_heteroclinic(self.model, s, settings=self.settings)


class PointParameterization:
    """Family indexed by an arbitrary parameter via a point the orbit passes through."""

    kind = "point"

    def __init__(self, model: SlowFastModel, point_of: Callable[[float], tuple[float, float]],
                 settings: OrbitSettings = OrbitSettings()):
        self.model = model
        self.point_of = point_of
        self.settings = settings

    def __call__(self, s: float) -> HeteroclinicOrbit:
        return compute_heteroclinic_through(self.model, self.point_of(s), settings=self.settings, s=s)


@dataclass
class OmegaMap:
    """Sampled map a_alpha -> a_omega with failures flagged in place."""

    a_alpha: np.ndarray
    a_omega: np.ndarray
    ok: np.ndarray
    messages: list[str]

    @property
    def pairs(self) -> list[tuple[float, float]]:
        return [(float(x), float(y)) for x, y in zip(self.a_alpha, self.a_omega)]

    @property
    def monotonicity(self) -> str:
        y = self.a_omega[self.ok]
        if y.size < 2:
            return "trivial"
        d = np.diff(y)
        if np.all(d < 0):
            return "decreasing"
        if np.all(d > 0):
            return "increasing"
        return "non-monotone"


def omega_map(model: SlowFastModel, a_grid: Sequence[float],
              settings: OrbitSettings = OrbitSettings(), workers: int | None = None) -> OmegaMap:
    grid = np.asarray(list(a_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("empty a_alpha grid")
    if np.any(grid <= model.a_bar) or np.any(grid >= model.a_max):
        raise ValueError("every grid point must lie in (a_bar, a_max)")

    def one(a):
        try:
            return compute_heteroclinic(model, float(a), settings=settings).a_omega, ""
        except HeteroclinicError as exc:
            return math.nan, str(exc)

    res = pmap(one, grid, workers)
    om = np.array([r[0] for r in res])
    return OmegaMap(grid, om, np.isfinite(om), [r[1] for r in res])


@dataclass
class ExistenceWindow:
    lo: float
    hi: float
    grid: np.ndarray
    ok: np.ndarray


def existence_window(family: Callable[[float], HeteroclinicOrbit], lo: float, hi: float,
                     n: int = 41, workers: int | None = None) -> ExistenceWindow:
    """Largest run of consecutive grid points on [lo, hi] where ``family`` succeeds."""
    grid = np.linspace(lo, hi, n)

    def one(s):
        try:
            family(float(s))
            return True
        except (HeteroclinicError, ValueError):
            return False

    ok = np.array(pmap(one, grid, workers), dtype=bool)
    best = (0, -1)
    start = None
    for i, flag in enumerate(list(ok) + [False]):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - 1 - start > best[1] - best[0]:
                best = (start, i - 1)
            start = None
    if best[1] < best[0]:
        raise HeteroclinicError("no heteroclinic connection anywhere in the window")
    return ExistenceWindow(float(grid[best[0]]), float(grid[best[1]]), grid, ok)


def write_family_csv(orbits: Sequence[HeteroclinicOrbit], path: str,
                     path_dir: str | None = None) -> None:
    """CSV of ``a_alpha, a_omega, peak_b, path_file``; orbit samples go to ``path_dir``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a_alpha", "a_omega", "peak_b", "path_file"])
        for k, orb in enumerate(orbits):
            ref = ""
            if path_dir is not None:
                os.makedirs(path_dir, exist_ok=True)
                ref = os.path.join(path_dir, f"orbit_{k:04d}.csv")
                orb.path.to_csv(ref)
            w.writerow([repr(orb.a_alpha), repr(orb.a_omega), repr(orb.peak_b), ref])
