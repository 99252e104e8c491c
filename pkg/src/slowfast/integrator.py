"""Dormand-Prince 5(4) integration with dense output and event location.

The integrator works in *internal* coordinates.  Components listed in
``log_components`` are carried as logarithms, which keeps the invariant
axis ``b = 0`` out of reach and lets trajectories of singularly perturbed
systems dive to ``b ~ exp(-K/eps)`` without underflow.  The right-hand side
passed to :func:`integrate` must already be written in those coordinates
(for ``b' = b g`` the log component obeys ``(ln b)' = g``).
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "EventSpec",
    "IntegrationError",
    "OrbitPath",
    "Termination",
    "integrate",
]

Rhs = Callable[[float, np.ndarray], np.ndarray]

# Dormand-Prince 5(4) tableau.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (
    9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_A71, _A73, _A74, _A75, _A76 = (
    35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# Continuous extension (Hairer, Norsett & Wanner, CONTD5).
_D1, _D3, _D4, _D5, _D6, _D7 = (
    -12715105075 / 11282082432, 87487479700 / 32700410799,
    -10690763975 / 1880347072, 701980252875 / 199316789632,
    -1453857185 / 822651844, 69997945 / 29380423)

# PI step-size controller constants.
_SAFE = 0.9
_BETA = 0.04
_EXPO1 = 0.2 - _BETA * 0.75
_SHRINK = 5.0    # h may shrink at most 5x per step
_GROW = 10.0     # and grow at most 10x


class IntegrationError(RuntimeError):
    """Raised when the right-hand side produces non-finite values."""

    def __init__(self, message: str, t: float, y: np.ndarray):
        super().__init__(f"{message} at t={t!r}, y={np.asarray(y).tolist()!r}")
        self.t = t
        self.y = np.asarray(y)


class Termination(str, enum.Enum):
    EVENT = "event hit"
    TIME_LIMIT = "time limit"
    STEP_FAILURE = "step failure"


@dataclass(frozen=True)
class EventSpec:
    """Crossing condition evaluated on the (a, b) role coordinates.

    ``kind`` is one of ``"b_crosses_level"``, ``"a_crosses_level"`` or
    ``"proximity_to_point"``; for the last one ``point`` is the target
    ``(a, b)`` and ``level`` the capture radius.
    """

    kind: str
    level: float
    direction: str = "either"
    point: tuple[float, float] | None = None
    terminal: bool = True
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("b_crosses_level", "a_crosses_level", "proximity_to_point"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.direction not in ("up", "down", "either"):
            raise ValueError(f"unknown event direction {self.direction!r}")
        if not math.isfinite(self.level):
            raise ValueError("event level must be finite")
        if self.kind == "proximity_to_point":
            if self.point is None:
                raise ValueError("proximity_to_point needs a point")
            if self.level <= 0:
                raise ValueError("proximity radius must be positive")
            if self.direction == "up":
                raise ValueError("proximity events fire on approach (direction 'down' or 'either')")
        if self.kind == "b_crosses_level" and self.level <= 0:
            raise ValueError("b levels must be positive (the axis b=0 is invariant)")

    def compile(self, roles: tuple[int, int], log_components: Sequence[int]):
        ia, ib = roles
        a_log = ia in log_components
        b_log = ib in log_components
        if self.kind == "b_crosses_level":
            if b_log:
                ref = math.log(self.level)
                return lambda y: y[ib] - ref
            lev = self.level
            return lambda y: y[ib] - lev
        if self.kind == "a_crosses_level":
            if a_log:
                ref = math.log(self.level)
                return lambda y: y[ia] - ref
            lev = self.level
            return lambda y: y[ia] - lev
        pa, pb = self.point
        r = self.level

        def proximity(y):
            a = math.exp(y[ia]) if a_log else y[ia]
            b = math.exp(y[ib]) if b_log else y[ib]
            return math.hypot(a - pa, b - pb) - r

        return proximity


@dataclass
class OrbitPath:
    """Time-ordered trajectory with a piecewise quartic dense interpolant.

    ``y`` holds internal coordinates; :meth:`state` and the ``a``/``b``
    properties convert log components back to physical values.
    ``crossings`` lists non-terminal event hits as ``(t, name, state)``.
    """

    t: np.ndarray
    y: np.ndarray
    seg_t0: np.ndarray
    seg_h: np.ndarray
    seg_coef: np.ndarray
    termination: Termination
    log_components: tuple[int, ...] = ()
    roles: tuple[int, int] = (0, 1)
    event_time: float | None = None
    event_state: np.ndarray | None = None
    event_name: str | None = None
    message: str = ""
    stats: dict = field(default_factory=dict)
    crossings: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.y.shape[1]

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t1(self) -> float:
        return float(self.t[-1])

    def _lo_hi(self):
        end = self.seg_t0 + self.seg_h
        return np.minimum(self.seg_t0, end), np.maximum(self.seg_t0, end)

    def internal(self, t) -> np.ndarray:
        """Interpolated internal state at time(s) ``t`` (shape ``(..., dim)``)."""
        tt = np.asarray(t, dtype=float)
        scalar = tt.ndim == 0
        tt = np.atleast_1d(tt)
        if np.any(tt < self.t[0] - 1e-12 * max(1.0, abs(self.t[0]))) or np.any(
                tt > self.t[-1] + 1e-12 * max(1.0, abs(self.t[-1]))):
            raise ValueError("requested time outside the integrated interval")
        if len(self.seg_h) == 0:
            out = np.repeat(self.y[:1], len(tt), axis=0)
            return out[0] if scalar else out
        idx = np.searchsorted(self.t, tt, side="right") - 1
        idx = np.clip(idx, 0, len(self.seg_h) - 1)
        theta = (tt - self.seg_t0[idx]) / self.seg_h[idx]
        theta = theta[:, None]
        c = self.seg_coef[idx]
        th1 = 1.0 - theta
        out = c[:, 0] + theta * (c[:, 1] + th1 * (c[:, 2] + theta * (c[:, 3] + th1 * c[:, 4])))
        # sample times reproduce the stored samples exactly
        pos = np.searchsorted(self.t, tt)
        pos = np.clip(pos, 0, len(self.t) - 1)
        hit = self.t[pos] == tt
        if np.any(hit):
            out[hit] = self.y[pos[hit]]
        return out[0] if scalar else out

    def to_physical(self, y: np.ndarray) -> np.ndarray:
        out = np.array(y, dtype=float, copy=True)
        for i in self.log_components:
            out[..., i] = np.exp(out[..., i])
        return out

    def state(self, t) -> np.ndarray:
        return self.to_physical(self.internal(t))

    @property
    def physical(self) -> np.ndarray:
        return self.to_physical(self.y)

    @property
    def a(self) -> np.ndarray:
        return self.physical[:, self.roles[0]]

    @property
    def b(self) -> np.ndarray:
        return self.physical[:, self.roles[1]]

    def samples(self) -> np.ndarray:
        """``(n, 3)`` array of ``(t, a, b)`` rows."""
        return np.column_stack([self.t, self.a, self.b])

    def to_csv(self, path, columns: Sequence[str] | None = None) -> None:
        """Write physical samples; default columns are ``t,a,b``."""
        if columns is None:
            header = ["t", "a", "b"]
            rows = self.samples()
        else:
            header = ["t", *columns]
            rows = np.column_stack([self.t, self.physical])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) for v in r])

    def reversed_time(self) -> "OrbitPath":
        """The same curve re-labelled with ``t -> -t`` (for backward runs)."""
        return OrbitPath(
            t=-self.t[::-1],
            y=self.y[::-1].copy(),
            seg_t0=-self.seg_t0[::-1],
            seg_h=-self.seg_h[::-1],
            seg_coef=self.seg_coef[::-1].copy(),
            termination=self.termination,
            crossings=[(-te, name, ye) for te, name, ye in self.crossings[::-1]],
            log_components=self.log_components,
            roles=self.roles,
            event_time=None if self.event_time is None else -self.event_time,
            event_state=self.event_state,
            event_name=self.event_name,
            message=self.message,
            stats=dict(self.stats),
        )

    @staticmethod
    def join(first: "OrbitPath", second: "OrbitPath") -> "OrbitPath":
        """Concatenate two paths that meet at ``first.t1 == second.t0``."""
        if abs(first.t1 - second.t0) > 1e-12 * max(1.0, abs(first.t1)):
            raise ValueError("paths do not meet")
        if first.log_components != second.log_components or first.roles != second.roles:
            raise ValueError("paths use different coordinates")
        return OrbitPath(
            t=np.concatenate([first.t, second.t[1:]]),
            y=np.concatenate([first.y, second.y[1:]]),
            seg_t0=np.concatenate([first.seg_t0, second.seg_t0]),
            seg_h=np.concatenate([first.seg_h, second.seg_h]),
            seg_coef=np.concatenate([first.seg_coef, second.seg_coef]),
            termination=second.termination,
            log_components=second.log_components,
            roles=second.roles,
            event_time=second.event_time,
            event_state=second.event_state,
            event_name=second.event_name,
            message=second.message,
            stats={k: first.stats.get(k, 0) + second.stats.get(k, 0)
                   for k in sorted(set(first.stats) | set(second.stats))},
            crossings=first.crossings + second.crossings,
        )

    def segment_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Increasing ``(lo, hi)`` time bounds of each dense segment."""
        return self._lo_hi()


def _initial_step(rhs, t0, y0, f0, direction, rtol, atol, max_step):
    sc = atol + rtol * np.abs(y0)
    d0 = math.sqrt(np.mean((y0 / sc) ** 2))
    d1 = math.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = y0 + direction * h0 * f0
    f1 = rhs(t0 + direction * h0, y1)
    d2 = math.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, max_step)


def integrate(
    rhs: Rhs,
    y0: Sequence[float],
    t_span: tuple[float, float],
    events: Sequence[EventSpec] = (),
    rtol: float = 1e-9,
    atol: float = 1e-12,
    *,
    log_components: Sequence[int] = (),
    roles: tuple[int, int] = (0, 1),
    max_step: float = math.inf,
    max_steps: int = 5_000_000,
    first_step: float | None = None,
) -> OrbitPath:
    """Integrate ``y' = rhs(t, y)`` over ``t_span``.

    ``y0`` is given in physical coordinates; components named in
    ``log_components`` must be positive and are converted to logarithms.
    Integration stops at the first terminal event, at ``t_span[1]``, or on
    step-size underflow (reported as ``Termination.STEP_FAILURE``).
    """
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    log_components = tuple(sorted(log_components))
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state must be finite")
    for i in log_components:
        if y[i] <= 0:
            raise ValueError(f"component {i} must be positive to integrate in log form")
        y[i] = math.log(y[i])
    t0, tf = map(float, t_span)
    direction = 1.0 if tf >= t0 else -1.0
    compiled = [(ev, ev.compile(roles, log_components)) for ev in events]

    def f(t, yy):
        out = np.asarray(rhs(t, yy), dtype=float)
        if not np.all(np.isfinite(out)):
            raise IntegrationError("non-finite right-hand side", t, yy)
        return out

    ts = [t0]
    ys = [y.copy()]
    seg_t0: list[float] = []
    seg_h: list[float] = []
    seg_coef: list[np.ndarray] = []
    crossings: list = []
    nfev = 0

    k1 = f(t0, y)
    nfev += 1
    if first_step is None:
        h = _initial_step(f, t0, y, k1, direction, rtol, atol, max_step)
        nfev += 1
    else:
        h = min(abs(first_step), max_step)
    ev_prev = [fn(y) for _, fn in compiled]
    t = t0
    err_old = 1e-4
    reject = False
    naccept = nreject = 0
    termination = Termination.TIME_LIMIT
    message = ""
    ev_hit = None
    blocked = None      # last non-finite trial stage since the previous accepted step

    if t0 == tf:
        return _assemble(ts, ys, seg_t0, seg_h, seg_coef, termination, log_components,
                         roles, None, "", nfev, 0, 0)

    while True:
        if naccept + nreject >= max_steps:
            termination = Termination.STEP_FAILURE
            message = f"maximum number of steps ({max_steps}) exceeded at t={t!r}"
            break
        if 0.1 * abs(h) <= abs(t) * np.finfo(float).eps * 16 or abs(h) < 1e-300:
            if blocked is not None:
                raise IntegrationError("non-finite right-hand side blocks every step", t,
                                       y) from blocked
            termination = Termination.STEP_FAILURE
            message = f"step size underflow (h={h!r}) at t={t!r}; problem may be too stiff"
            break
        last = False
        if direction * (t + direction * h - tf) >= 0:
            h = abs(tf - t)
            last = True
        hs = direction * h
        try:
            k2 = f(t + _C[1] * hs, y + hs * (_A21 * k1))
            k3 = f(t + _C[2] * hs, y + hs * (_A31 * k1 + _A32 * k2))
            k4 = f(t + _C[3] * hs, y + hs * (_A41 * k1 + _A42 * k2 + _A43 * k3))
            k5 = f(t + _C[4] * hs, y + hs * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
            k6 = f(t + hs, y + hs * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
            y_new = y + hs * (_A71 * k1 + _A73 * k3 + _A74 * k4 + _A75 * k5 + _A76 * k6)
            t_new = tf if last else t + hs
            k7 = f(t_new, y_new)
        except (IntegrationError, OverflowError, FloatingPointError) as exc:
            # a trial stage left the region where rhs is finite: shrink and retry;
            # if no step size gets past it, the error is raised at underflow
            blocked = exc
            nfev += 6
            nreject += 1
            reject = True
            h = h / _SHRINK
            continue
        nfev += 6
        err_vec = hs * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(float(np.mean((err_vec / sc) ** 2)))

        fac11 = err ** _EXPO1 if err > 0 else 0.0
        if err <= 1.0:
            fac = fac11 / err_old ** _BETA / _SAFE
            fac = min(_SHRINK, max(1.0 / _GROW, fac))
            h_next = h / fac if fac > 0 else h * _GROW
            err_old = max(err, 1e-4)
            ydiff = y_new - y
            bspl = hs * k1 - ydiff
            coef = np.stack([
                y,
                ydiff,
                bspl,
                ydiff - hs * k7 - bspl,
                hs * (_D1 * k1 + _D3 * k3 + _D4 * k4 + _D5 * k5 + _D6 * k6 + _D7 * k7),
            ])
            naccept += 1
            seg_t0.append(t)
            seg_h.append(t_new - t)
            seg_coef.append(coef)

            # event detection on the accepted step
            ev_now = [fn(y_new) for _, fn in compiled]
            hits = []
            for i, ((spec, fn), g0, g1) in enumerate(zip(compiled, ev_prev, ev_now)):
                up = g0 < 0 <= g1 if g0 != 0 else False
                down = g0 > 0 >= g1 if g0 != 0 else False
                if (spec.direction == "up" and up) or (spec.direction == "down" and down) or (
                        spec.direction == "either" and (up or down)):
                    te = _locate(fn, t, t_new - t, coef, g0, g1)
                    hits.append((direction * te, i, te))
            ev_prev = ev_now
            hits.sort()
            terminal_hits = [hx for hx in hits if compiled[hx[1]][0].terminal]
            stop = terminal_hits[0][0] if terminal_hits else math.inf
            for key, i, te in hits:
                if not compiled[i][0].terminal and key <= stop:
                    spec = compiled[i][0]
                    crossings.append((te, spec.name or spec.kind,
                                      _dense(coef, (te - t) / (t_new - t))))
            if terminal_hits:
                _, i, te = terminal_hits[0]
                theta = (te - t) / (t_new - t)
                ye = _dense(coef, theta)
                ts.append(te)
                ys.append(ye)
                termination = Termination.EVENT
                ev_hit = (te, ye, compiled[i][0].name or compiled[i][0].kind)
                break
            t, y, k1 = t_new, y_new, k7
            blocked = None
            ts.append(t)
            ys.append(y.copy())
            if reject:
                h_next = min(h_next, h)
            reject = False
            h = min(h_next, max_step)
            if last:
                termination = Termination.TIME_LIMIT
                break
        else:
            nreject += 1
            reject = True
            h = h / min(_SHRINK, fac11 / _SAFE)

    if direction < 0:
        # store backward runs in increasing time; segments keep negative h
        ts.reverse()
        ys.reverse()
        seg_t0.reverse()
        seg_h.reverse()
        seg_coef.reverse()
    path = _assemble(ts, ys, seg_t0, seg_h, seg_coef, termination, log_components,
                     roles, ev_hit, message, nfev, naccept, nreject)
    path.crossings = [(float(te), name, path.to_physical(ye)) for te, name, ye in crossings]
    return path


def _dense(coef, theta):
    th1 = 1.0 - theta
    return coef[0] + theta * (coef[1] + th1 * (coef[2] + theta * (coef[3] + th1 * coef[4])))


def _locate(fn, t, h, coef, g0, g1):
    if g1 == 0:
        return t + h

    def gfun(s):
        return fn(_dense(coef, (s - t) / h))

    lo, hi = (t, t + h) if h > 0 else (t + h, t)
    # brentq needs a sign change; the endpoints carry it by construction
    return brentq(gfun, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200)


def _assemble(ts, ys, seg_t0, seg_h, seg_coef, termination, log_components, roles,
              ev_hit, message, nfev, naccept, nreject):
    dim = len(ys[0])
    path = OrbitPath(
        t=np.asarray(ts, dtype=float),
        y=np.asarray(ys, dtype=float).reshape(len(ts), dim),
        seg_t0=np.asarray(seg_t0, dtype=float),
        seg_h=np.asarray(seg_h, dtype=float),
        seg_coef=np.asarray(seg_coef, dtype=float).reshape(len(seg_t0), 5, dim),
        termination=termination,
        log_components=tuple(log_components),
        roles=roles,
        message=message,
        stats={"nfev": nfev, "naccept": naccept, "nreject": nreject},
    )
    if ev_hit is not None:
        path.event_time = float(ev_hit[0])
        path.event_state = path.to_physical(np.asarray(ev_hit[1]))
        path.event_name = ev_hit[2]
    return path
