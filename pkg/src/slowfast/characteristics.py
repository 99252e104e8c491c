"""The entry-exit function chi and the stability exponent lambda of an orbit.

chi is the integral of g(a,0,0)/f(a,0,0) over [a_omega, a_alpha].  lambda is

    ln(f(a_alpha)/f(a_omega)) + int_gamma (h_a/h) da + int_gamma (g_b/h) da

and since da = b h dt along the orbit, both path terms are evaluated as time
integrals of b h_a and b g_b, whose integrands stay bounded and decay
exponentially at both ends.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .heteroclinic import HeteroclinicOrbit
from .model import SlowFastModel, _call
from .quadrature import adaptive_quad, path_integral

__all__ = [
    "DomainError",
    "CharacteristicValues",
    "LAMBDA_FORMS",
    "chi_endpoint",
    "chi_line_integral",
    "lambda_general",
    "lambda_separable",
    "lambda_h_independent",
    "lambda_g_factor",
    "lambda_by_form",
    "applicable_forms",
    "characteristic_values",
    "write_characteristics_csv",
]

LAMBDA_FORMS = ("general", "separable_fh", "h_independent", "g_factor")

QUAD_ABS = 1e-13
QUAD_REL = 1e-11


class DomainError(ValueError):
    """An evaluator left the region where the formulas are defined."""


@dataclass
class CharacteristicValues:
    s: float
    chi: float
    chi_err: float
    lam: float
    lambda_err: float
    lambda_form: str
    a_alpha: float
    a_omega: float
    f_alpha: float
    f_omega: float
    chi_line: float = math.nan
    chi_line_err: float = math.nan

    @property
    def endpoint_data(self) -> tuple[float, float, float, float]:
        return self.a_alpha, self.a_omega, self.f_alpha, self.f_omega

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(model: SlowFastModel):
    def fn(a):
        a = np.asarray(a, dtype=float)
        z = np.zeros_like(a)
        return _call(model.g, a, z, 0.0) / _call(model.f, a, z, 0.0)
    return fn


def _f0(model: SlowFastModel, a: float) -> float:
    return float(model.f(a, 0.0, 0.0))


def _check_f(model: SlowFastModel, lo: float, hi: float):
    a = np.linspace(lo, hi, 257)
    fv = _call(model.f, a, np.zeros_like(a), 0.0)
    if not np.all(np.isfinite(fv)) or np.any(fv <= 0):
        i = int(np.argmax(~np.isfinite(fv) | (fv <= 0)))
        raise DomainError(f"f(a,0,0) is not positive at a={a[i]!r}")


def chi_endpoint(model: SlowFastModel, orbit: HeteroclinicOrbit) -> tuple[float, float]:
    """Quadrature of g/f on the axis between the endpoints.

    The error adds the quadrature estimate and the effect of the endpoint
    uncertainties carried by the orbit.
    """
    lo, hi = orbit.a_omega, orbit.a_alpha
    _check_f(model, lo, hi)
    r = _ratio(model)
    val, err = adaptive_quad(r, lo, hi, abs_tol=QUAD_ABS, rel_tol=QUAD_REL)
    err += abs(float(r(lo))) * orbit.omega_err + abs(float(r(hi))) * orbit.alpha_err
    return float(val), float(err)


def chi_line_integral(model: SlowFastModel, orbit: HeteroclinicOrbit) -> tuple[float, float]:
    """chi as minus the integral of (g/f)(a) da along the orbit itself.

    The orbit runs from a_alpha to a_omega, hence the sign.  The stretches
    beyond the truncated ends are closed with short axis quadratures.
    """
    _check_f(model, orbit.a_omega, orbit.a_alpha)
    r = _ratio(model)

    def integrand(t, Y):
        a, b = Y[:, 0], Y[:, 1]
        return r(a) * b * _call(model.h, a, b, 0.0)

    body, err = path_integral(orbit.path, integrand, abs_tol=QUAD_ABS, rel_tol=QUAD_REL)
    head, e1 = adaptive_quad(r, orbit.a_start, orbit.a_alpha)
    tail, e2 = adaptive_quad(r, orbit.a_omega, orbit.a_end)
    val = -body + head + tail
    err += e1 + e2 + abs(float(r(orbit.a_omega))) * orbit.omega_err \
        + abs(float(r(orbit.a_alpha))) * orbit.alpha_err
    return float(val), float(err)


def _path_term(orbit: HeteroclinicOrbit, fn) -> tuple[float, float]:
    """Time integral of b * fn(a, b) along the stored path."""
    def integrand(t, Y):
        a, b = Y[:, 0], Y[:, 1]
        return b * fn(a, b)

    val, err = path_integral(orbit.path, integrand, abs_tol=QUAD_ABS, rel_tol=QUAD_REL)
    return val, err


def _tail_bound(model: SlowFastModel, orbit: HeteroclinicOrbit, fn) -> float:
    """Size of the truncated pieces: b decays like exp(g t) beyond each end."""
    out = 0.0
    for a, b in (orbit.path.state(orbit.path.t0), orbit.path.state(orbit.path.t1)):
        g = abs(float(model.g(a, b, 0.0)))
        if g > 0:
            out += b * abs(float(np.asarray(fn(np.array([a]), np.array([b]))).ravel()[0])) / g
    return out


def _log_term(model: SlowFastModel, orbit: HeteroclinicOrbit) -> tuple[float, float]:
    fa, fo = _f0(model, orbit.a_alpha), _f0(model, orbit.a_omega)
    if not (fa > 0 and fo > 0):
        raise DomainError("f(a,0,0) must be positive at both endpoints")
    val = math.log(fa / fo)
    # sensitivity to endpoint errors
    da = float(_call(model.f_a, orbit.a_alpha, 0.0, 0.0)) / fa
    do = float(_call(model.f_a, orbit.a_omega, 0.0, 0.0)) / fo
    return val, abs(da) * orbit.alpha_err + abs(do) * orbit.omega_err


def _check_h(model: SlowFastModel, orbit: HeteroclinicOrbit):
    Y = orbit.path.physical
    hv = _call(model.h, Y[:, 0], Y[:, 1], 0.0)
    if np.any(hv == 0) or not np.all(np.isfinite(hv)):
        raise DomainError("h vanishes or is not finite on the orbit")


def _terms(model, orbit, fns):
    val = err = 0.0
    for fn in fns:
        v, e = _path_term(orbit, fn)
        val += v
        err += e + _tail_bound(model, orbit, fn)
    return val, err


def lambda_general(model: SlowFastModel, orbit: HeteroclinicOrbit) -> tuple[float, float]:
    _check_h(model, orbit)
    lv, le = _log_term(model, orbit)
    pv, pe = _terms(model, orbit, (lambda a, b: _call(model.h_a, a, b, 0.0),
                                   lambda a, b: _call(model.g_b, a, b, 0.0)))
    return lv + pv, le + pe


def _require(model: SlowFastModel, flag: str):
    if not getattr(model.flags, flag):
        raise ValueError(f"model {model.name!r} does not declare {flag}")


def lambda_separable(model: SlowFastModel, orbit: HeteroclinicOrbit) -> tuple[float, float]:
    """f = a f~(b), h = a h~(b): the log term cancels the h_a/h term."""
    _require(model, "separable_fh")
    _check_h(model, orbit)
    return _terms(model, orbit, (lambda a, b: _call(model.g_b, a, b, 0.0),))


def lambda_h_independent(model: SlowFastModel, orbit: HeteroclinicOrbit) -> tuple[float, float]:
    _require(model, "h_independent_of_a")
    _check_h(model, orbit)
    lv, le = _log_term(model, orbit)
    pv, pe = _terms(model, orbit, (lambda a, b: _call(model.g_b, a, b, 0.0),))
    return lv + pv, le + pe


def lambda_g_factor(model: SlowFastModel, orbit: HeteroclinicOrbit) -> tuple[float, float]:
    """g = phi(b) G: the g_b/g weight becomes G_b/G (phi'/phi integrates to zero).

    In time form (G_b/G) db = b phi G_b dt.
    """
    _require(model, "g_factorizable")
    _check_h(model, orbit)
    phi = model.flags.phi
    lv, le = _log_term(model, orbit)
    pv, pe = _terms(model, orbit, (
        lambda a, b: _call(model.h_a, a, b, 0.0),
        lambda a, b: np.asarray(phi(b), dtype=float) * _call(model.G_b, a, b, 0.0)))
    return lv + pv, le + pe


_FORMS = {
    "general": lambda_general,
    "separable_fh": lambda_separable,
    "h_independent": lambda_h_independent,
    "g_factor": lambda_g_factor,
}


def applicable_forms(model: SlowFastModel) -> list[str]:
    """``general`` followed by every simplified form the model's flags allow."""
    return ["general"] + model.flags.names()


def lambda_by_form(model: SlowFastModel, orbit: HeteroclinicOrbit, form: str):
    if form not in _FORMS:
        raise ValueError(f"unknown lambda form {form!r}")
    return _FORMS[form](model, orbit)


def _preferred_form(model: SlowFastModel) -> str:
    names = model.flags.names()
    return names[0] if names else "general"


def characteristic_values(model: SlowFastModel, orbit: HeteroclinicOrbit, form: str = "auto",
                          with_line: bool = False) -> CharacteristicValues:
    """chi (endpoint form) and lambda (preferred simplified form unless ``form`` is given)."""
    chi, chi_err = chi_endpoint(model, orbit)
    form = _preferred_form(model) if form == "auto" else form
    lam, lam_err = lambda_by_form(model, orbit, form)
    cv = CharacteristicValues(
        s=orbit.s, chi=chi, chi_err=chi_err, lam=float(lam), lambda_err=float(lam_err),
        lambda_form=form, a_alpha=orbit.a_alpha, a_omega=orbit.a_omega,
        f_alpha=_f0(model, orbit.a_alpha), f_omega=_f0(model, orbit.a_omega))
    if with_line:
        cv.chi_line, cv.chi_line_err = chi_line_integral(model, orbit)
    return cv


CSV_COLUMNS = ("s", "chi", "chi_err", "lambda", "lambda_err", "a_alpha", "a_omega")


def write_characteristics_csv(rows: Sequence[CharacteristicValues], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([repr(float(v)) for v in
                        (r.s, r.chi, r.chi_err, r.lam, r.lambda_err, r.a_alpha, r.a_omega)])
