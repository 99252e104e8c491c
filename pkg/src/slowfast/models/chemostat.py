"""Predator-prey interaction in a chemostat.

Full system in (S, x, y)::

    S' = (S0 - S) eps - rho m S x
    x' = x (-eps + m S) - c y p(x)
    y' = y (-eps + p(x))

On the invariant plane S = S0 - rho x - c rho y the (x, y) dynamics is a
planar slow-fast system with a = -y and b = x:

    f = -a,   h = a q(b),   g = -eps + phi(b) (F(b) + a)

where q(x) = p(x)/x, phi(x) = c (rho m + q(x)) and F is the prey isocline
F(x) = (m S0 - rho m x) / (c (rho m + q(x))).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from ..heteroclinic import (HeteroclinicOrbit, OrbitSettings, PointParameterization,
                            compute_heteroclinic_through)
from ..model import SlowFastModel, StructureFlags
from ..quadrature import path_integral

__all__ = [
    "HollingII",
    "LinearResponse",
    "ChemostatParams",
    "chemostat_reduced",
    "chemostat_family",
    "chemostat_orbit",
    "chi_role_factor",
    "psi",
    "psi_exit",
    "chemostat_chi",
    "chemostat_chi_line",
    "chemostat_lambda",
    "OneHump",
    "one_hump_check",
    "chemostat_full",
    "ChemostatSystem",
    "EXAMPLE_PARAMS",
]


@dataclass(frozen=True)
class HollingII:
    """p(x) = b x / (a + x)."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("Holling II constants must be positive")

    def p(self, x):
        return self.b * x / (self.a + x)

    def dp(self, x):
        return self.a * self.b / (self.a + x) ** 2

    def q(self, x):
        """p(x)/x, continuous at 0."""
        return self.b / (self.a + x)

    def dq(self, x):
        return -self.b / (self.a + x) ** 2

    def to_dict(self) -> dict:
        return {"kind": "holling2", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class LinearResponse:
    """p(x) = k x."""

    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("linear response slope must be positive")

    def p(self, x):
        return self.k * np.asarray(x, dtype=float)

    def dp(self, x):
        return self.k + 0.0 * np.asarray(x, dtype=float)

    def q(self, x):
        return self.k + 0.0 * np.asarray(x, dtype=float)

    def dq(self, x):
        return 0.0 * np.asarray(x, dtype=float)

    def to_dict(self) -> dict:
        return {"kind": "linear", "k": self.k}


@dataclass(frozen=True)
class ChemostatParams:
    S0: float
    m: float
    rho: float
    c: float
    response: HollingII | LinearResponse

    def __post_init__(self):
        for name in ("S0", "m", "rho", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        r = self.response
        if float(r.p(0.0)) != 0.0 or not float(r.dp(0.0)) > 0:
            raise ValueError("functional response needs p(0) = 0 and p'(0) > 0")

    @property
    def x_max(self) -> float:
        """S0/rho, where the isocline F vanishes."""
        return self.S0 / self.rho

    @property
    def y_bar(self) -> float:
        """F(0) = m S0 / (c (rho m + p'(0)))."""
        return self.m * self.S0 / (self.c * (self.rho * self.m + float(self.response.dp(0.0))))

    def phi(self, x):
        return self.c * (self.rho * self.m + self.response.q(x))

    def dphi(self, x):
        return self.c * self.response.dq(x)

    def F(self, x, eps: float = 0.0):
        """Prey isocline F_eps(x) written through q = p/x so that x = 0 is regular."""
        x = np.asarray(x, dtype=float)
        return (self.m * self.S0 - eps - self.rho * self.m * x) / self.phi(x)

    def dF(self, x, eps: float = 0.0):
        x = np.asarray(x, dtype=float)
        num = self.m * self.S0 - eps - self.rho * self.m * x
        ph = self.phi(x)
        return (-self.rho * self.m * ph - num * self.dphi(x)) / ph ** 2

    def to_dict(self) -> dict:
        return {"S0": self.S0, "m": self.m, "rho": self.rho, "c": self.c,
                "response": self.response.to_dict()}


EXAMPLE_PARAMS = ChemostatParams(S0=10.0, m=1.0, rho=1.0, c=1.0, response=HollingII(1.5, 3.0))


def chemostat_reduced(params: ChemostatParams) -> SlowFastModel:
    """Planar model on the invariant plane with a = -y, b = x."""
    P = params
    q, dq = P.response.q, P.response.dq
    rm = P.rho * P.m

    def f(a, b, eps):
        return -a + 0.0 * b

    def h(a, b, eps):
        return a * q(b)

    def g(a, b, eps):
        return -eps + P.m * P.S0 - rm * b + P.c * rm * a + P.c * a * q(b)

    def dg_db(a, b, eps):
        return -rm + P.c * a * dq(b)

    def G(a, b, eps):
        return P.F(b) + a - eps / P.phi(b)

    def dG_db(a, b, eps):
        return P.dF(b) + eps * P.dphi(b) / P.phi(b) ** 2

    flags = StructureFlags(separable_fh=True, g_factorizable=True, phi=P.phi, G=G, dG_db=dG_db)
    return SlowFastModel(
        f=f, g=g, h=h, a_min=-math.inf, a_max=0.0, a_bar=-P.y_bar, name="chemostat",
        df_da=lambda a, b, eps: -1.0 + 0.0 * a * b,
        dh_da=lambda a, b, eps: q(b) + 0.0 * a,
        dg_db=dg_db, flags=flags)


def chemostat_family(params: ChemostatParams, settings: OrbitSettings = OrbitSettings()):
    """Orbits indexed by s = x0, the peak prey level, where the orbit meets y = F(x0)."""
    model = chemostat_reduced(params)
    return PointParameterization(model, lambda x0: (-float(params.F(x0)), float(x0)), settings)


def chemostat_orbit(params: ChemostatParams, x0: float,
                    settings: OrbitSettings = OrbitSettings()) -> HeteroclinicOrbit:
    if not 0 < x0 < params.x_max:
        raise ValueError("x0 must lie in (0, S0/rho)")
    model = chemostat_reduced(params)
    return compute_heteroclinic_through(model, (-float(params.F(x0)), float(x0)),
                                        settings=settings, s=x0)


def chi_role_factor(params: ChemostatParams) -> float:
    """Exact multiplier from the predator-level chi to the generic chi under a = -y.

    The generic integrand (m S0 + K a)/(-a) with K = c (rho m + p'(0)) becomes
    -K (y - y_bar)/y dy, so the factor is -K (negative).
    """
    return -params.c * (params.rho * params.m + float(params.response.dp(0.0)))


def psi(params: ChemostatParams, y):
    """Antiderivative of (y - y_bar)/y normalised to vanish at y_bar."""
    yb = params.y_bar
    y = np.asarray(y, dtype=float)
    return y - yb - yb * np.log(y / yb)


def psi_exit(params: ChemostatParams, y_entry: float) -> float:
    """The predator level y < y_bar with psi(y) = psi(y_entry), for y_entry > y_bar."""
    yb = params.y_bar
    if not y_entry > yb:
        raise ValueError("y_entry must exceed y_bar")
    target = float(psi(params, y_entry))
    lo = yb
    while float(psi(params, lo)) < target:
        lo *= 0.5
    return float(brentq(lambda y: float(psi(params, y)) - target, lo, yb,
                        xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


def _ends(orbit: HeteroclinicOrbit) -> tuple[float, float]:
    y_alpha, y_omega = -orbit.a_alpha, -orbit.a_omega
    if not (y_alpha > 0 and y_omega > 0):
        raise ValueError("orbit endpoints must have positive predator level")
    return y_alpha, y_omega


def chemostat_chi(params: ChemostatParams, orbit: HeteroclinicOrbit) -> float:
    """Integral of (y - y_bar)/y from y_alpha to y_omega, i.e. psi(y_omega) - psi(y_alpha)."""
    y_alpha, y_omega = _ends(orbit)
    return float(psi(params, y_omega) - psi(params, y_alpha))


def _single_peak(orbit: HeteroclinicOrbit):
    x = orbit.path.y[:, 1]
    k = int(np.argmax(x))
    d1, d2 = np.diff(x[:k + 1]), np.diff(x[k:])
    tol = 1e-9 * max(1.0, abs(float(x[k])))
    if np.any(d1 < -tol) or np.any(d2 > tol):
        raise ValueError("orbit is not single-peaked in x; branch split fails")


def chemostat_chi_line(params: ChemostatParams, orbit: HeteroclinicOrbit) -> tuple[float, float]:
    """chi as a line integral over the orbit.

    With dx = c (rho m x + p) (F - y) dt the x-form integrand
    p (F - F(0)) / (c (rho m x + p) (F - y)) dx equals p(x) (F(x) - y_bar) dt,
    which is bounded, so the time form is integrated.
    """
    _single_peak(orbit)
    P = params
    yb = P.y_bar

    def integrand(t, Y):
        x = Y[:, 1]
        return P.response.p(x) * (P.F(x) - yb)

    return path_integral(orbit.path, integrand, abs_tol=1e-13, rel_tol=1e-11)


def chemostat_lambda(params: ChemostatParams, orbit: HeteroclinicOrbit) -> tuple[float, float]:
    """Integral of F'(x)/(F(x) - y) dx over the orbit, evaluated in time form.

    F'/(F - y) dx = c (rho m x + p(x)) F'(x) dt removes the singularity at the
    peak, where F = y.
    """
    _single_peak(orbit)
    P = params

    def integrand(t, Y):
        x = Y[:, 1]
        return P.c * (P.rho * P.m * x + P.response.p(x)) * P.dF(x)

    return path_integral(orbit.path, integrand, abs_tol=1e-13, rel_tol=1e-11)


@dataclass
class OneHump:
    holds: bool
    x_hat: float | None
    sign_changes: int


def one_hump_check(params: ChemostatParams, n_grid: int = 2001,
                   dF: Callable | None = None) -> OneHump:
    """Whether F' is positive then negative on (0, S0/rho) with a single switch.

    ``dF`` overrides the isocline slope (for testing other shapes).
    """
    slope = params.dF if dF is None else dF
    x = np.linspace(0.0, params.x_max, n_grid + 2)[1:-1]
    s = np.sign(np.asarray(slope(x), dtype=float))
    nz = s != 0
    xs, s = x[nz], s[nz]
    flips = np.nonzero(s[1:] != s[:-1])[0]
    holds = len(flips) == 1 and s[0] > 0 and s[-1] < 0
    x_hat = None
    if holds:
        i = flips[0]
        x_hat = float(brentq(lambda z: float(slope(np.asarray(z))), xs[i], xs[i + 1], xtol=1e-14))
    return OneHump(bool(holds), x_hat, int(len(flips)))


def chemostat_full(params: ChemostatParams, eps: float):
    """Full vector field in (S, x, y)."""
    P = params
    p = P.response.p

    def rhs(t, z):
        S, x, y = z
        return np.array([(P.S0 - S) * eps - P.rho * P.m * S * x,
                         x * (-eps + P.m * S) - P.c * y * p(x),
                         y * (-eps + p(x))])

    return rhs


class ChemostatSystem:
    """Full system prepared for section-based verification.

    Internal coordinates are (S, ln x, y); the reduced plane is (a, b) = (-y, x)
    and lifting places a point on the invariant plane S = S0 - rho x - c rho y.
    """

    dim = 3
    log_components = (1,)
    roles = (2, 1)

    def __init__(self, params: ChemostatParams):
        self.params = params
        self.model = chemostat_reduced(params)

    def rhs(self, eps: float):
        P = self.params
        q = P.response.q

        def rhs(t, z):
            S, u, y = z
            x = math.exp(u)
            return np.array([(P.S0 - S) * eps - P.rho * P.m * S * x,
                             -eps + P.m * S - P.c * y * q(x),
                             y * (-eps + P.response.p(x))])

        return rhs

    def project(self, Y):
        Y = np.asarray(Y, dtype=float)
        return -Y[..., 2], Y[..., 1]

    def lift(self, a: float, b: float) -> np.ndarray:
        P = self.params
        y, x = -a, b
        return np.array([P.S0 - P.rho * x - P.c * P.rho * y, x, y])

    def residual(self, Y):
        P = self.params
        Y = np.asarray(Y, dtype=float)
        return Y[..., 0] + P.rho * Y[..., 1] + P.c * P.rho * Y[..., 2] - P.S0
