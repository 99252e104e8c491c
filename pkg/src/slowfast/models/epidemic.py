"""SIR-type epidemic model with a numerically constructed center manifold.

Full system in (S, I, N)::

    S' = D N + eps f(N) - g(S,N) I - (D+p) S
    I' = (g(S,N) - a) I,            a = d + gamma + alpha
    N' = eps f(N) - alpha I

At eps = 0 the line I = 0, S = D N/(D+p) consists of equilibria.  Orbits of
the limiting system live on an attracting invariant surface S = S~(I, N);
restricted to it, (N, I) is a planar slow-fast system with a = N, b = I,
h = -alpha and g = g(S~(I,N), N) - a.  S~ is tabulated from a fan of
limiting-system orbits seeded along the unstable eigenvectors of the line.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.optimize import brentq

from ..heteroclinic import AlphaParameterization, HeteroclinicOrbit, OrbitSettings
from ..integrator import EventSpec, integrate
from ..model import SlowFastModel, StructureFlags
from ..parallel import pmap
from ..quadrature import path_integral

__all__ = [
    "EpidemicParams",
    "CASE1",
    "CASE2",
    "TableCoverageError",
    "CenterManifoldTable",
    "epidemic_N0",
    "build_center_manifold",
    "epidemic_reduced",
    "epidemic_family",
    "epidemic_chi",
    "epidemic_lambda",
    "epidemic_full",
    "EpidemicSystem",
    "axis_slope",
]


@dataclass(frozen=True)
class EpidemicParams:
    """Rates of the epidemic model and the shape of the perturbation profile.

    ``profile`` is ``"logistic"`` (f = r N (1 - N/N_max)) or ``"deformed"``
    (f minus a bump of height c1 centred at c3).  The bump is Gaussian,
    ``c1 exp(-(c2 (N - c3))^2)``; ``bump="exponential"`` selects
    ``c1 exp(-c2 (N - c3))`` instead, which makes f negative at small N.
    ``d`` defaults to ``D``.
    """

    D: float = 0.2
    p: float = 0.01
    alpha: float = 0.048
    beta: float = 1.0
    gamma_rec: float = 0.75
    m_sat: float = 0.1
    N_max: float = 400.0
    r: float = 1.0
    d: float | None = None
    profile: str = "logistic"
    c1: float = 60.0
    c2: float = 0.04
    c3: float = 90.0
    bump: str = "gaussian"

    def __post_init__(self):
        for name in ("D", "p", "alpha", "beta", "gamma_rec", "m_sat", "N_max", "r"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.d is not None and not self.d > 0:
            raise ValueError("d must be positive")
        if self.profile not in ("logistic", "deformed"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.bump not in ("gaussian", "exponential"):
            raise ValueError(f"unknown bump {self.bump!r}")

    @property
    def death(self) -> float:
        return self.D if self.d is None else self.d

    @property
    def a_comb(self) -> float:
        return self.death + self.gamma_rec + self.alpha

    @property
    def k(self) -> float:
        """Slope D/(D+p) of the equilibrium line S = k N."""
        return self.D / (self.D + self.p)

    def incidence(self, S, N):
        return self.beta * S / (self.m_sat + S) + 0.0 * N

    def incidence_S(self, S, N):
        return self.beta * self.m_sat / (self.m_sat + S) ** 2 + 0.0 * N

    def incidence_N(self, S, N):
        return 0.0 * (S + N)

    def f_logistic(self, N):
        N = np.asarray(N, dtype=float)
        return self.r * N * (1.0 - N / self.N_max)

    def profile_f(self, N):
        base = self.f_logistic(N)
        if self.profile == "logistic":
            return base
        N = np.asarray(N, dtype=float)
        if self.bump == "gaussian":
            return base - self.c1 * np.exp(-(self.c2 * (N - self.c3)) ** 2)
        return base - self.c1 * np.exp(-self.c2 * (N - self.c3))

    def to_dict(self) -> dict:
        return asdict(self)


CASE1 = EpidemicParams()
CASE2 = EpidemicParams(profile="deformed")


class TableCoverageError(ValueError):
    """A query fell outside the tabulated part of the center manifold."""


def epidemic_N0(params: EpidemicParams) -> float:
    """The N at which g(k N, N) = a on the equilibrium line."""
    P = params

    def fn(N):
        return float(P.incidence(P.k * N, N)) - P.a_comb

    lo, hi = 1e-12, P.N_max
    if not fn(lo) < 0 < fn(hi):
        raise ValueError("no threshold N0 in (0, N_max)")
    return float(brentq(fn, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500))


def axis_slope(params: EpidemicParams, N):
    """d S~/dI at I = 0, from invariance of the surface to first order in I."""
    P = params
    N = np.asarray(N, dtype=float)
    g = P.incidence(P.k * N, N)
    return (P.k * P.alpha - g) / (g - P.a_comb + P.D + P.p)


def limiting_rhs(params: EpidemicParams):
    """eps = 0 vector field in (S, ln I, N)."""
    P = params

    def rhs(t, y):
        S, u, N = y
        I = math.exp(u)
        g = P.beta * S / (P.m_sat + S)
        return np.array([P.D * N - g * I - (P.D + P.p) * S, g - P.a_comb, -P.alpha * I])

    return rhs


def _field(params: EpidemicParams, S, I, N):
    """Physical eps = 0 vector field, vectorized."""
    P = params
    g = P.incidence(S, N)
    return P.D * N - g * I - (P.D + P.p) * S, (g - P.a_comb) * I, -P.alpha * I


def unstable_vector(params: EpidemicParams, N1: float) -> np.ndarray:
    """Unit eigenvector (S, I, N) of the unstable eigenvalue at (k N1, 0, N1)."""
    P = params
    g = float(P.incidence(P.k * N1, N1))
    mu = g - P.a_comb
    if not mu > 0:
        raise ValueError("N1 must exceed N0")
    vN = -P.alpha / mu
    vS = (-g + P.D * vN) / (mu + P.D + P.p)
    v = np.array([vS, 1.0, vN])
    return v / np.linalg.norm(v)


@dataclass
class CenterManifoldTable:
    """S~ and its partials on a regular (I, N) grid.

    ``dS_dI`` comes from the orbit-difference scheme (2x2 inversion per
    cell); ``dS_dI_row`` is the derivative of the per-row interpolant.
    Queries are bilinear and refuse cells with an invalid corner.
    """

    I: np.ndarray
    N: np.ndarray
    S: np.ndarray
    dS_dI: np.ndarray
    dS_dN: np.ndarray
    dS_dI_row: np.ndarray
    valid: np.ndarray
    cond: np.ndarray
    params: EpidemicParams
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._dI = float(self.I[1] - self.I[0])
        self._dN = float(self.N[1] - self.N[0])
        self._cell_ok = (self.valid[:-1, :-1] & self.valid[1:, :-1]
                         & self.valid[:-1, 1:] & self.valid[1:, 1:])

    # arrays are indexed [i_N, i_I]
    @property
    def shape(self):
        return self.S.shape

    def _locate(self, I, N):
        I = np.asarray(I, dtype=float)
        N = np.asarray(N, dtype=float)
        x = (N - self.N[0]) / self._dN
        y = (I - self.I[0]) / self._dI
        nN, nI = self.S.shape
        tol = 1e-9
        if np.any(x < -tol) or np.any(x > nN - 1 + tol) or np.any(y < -tol) or np.any(y > nI - 1 + tol):
            raise TableCoverageError("query outside the table's (I, N) box")
        i = np.clip(np.floor(x).astype(int), 0, nN - 2)
        j = np.clip(np.floor(y).astype(int), 0, nI - 2)
        if not np.all(self._cell_ok[i, j]):
            raise TableCoverageError("query in a cell outside the tabulated surface")
        return i, j, x - i, y - j

    def _interp(self, arr, I, N):
        i, j, u, v = self._locate(I, N)
        return ((1 - u) * (1 - v) * arr[i, j] + u * (1 - v) * arr[i + 1, j]
                + (1 - u) * v * arr[i, j + 1] + u * v * arr[i + 1, j + 1])

    def covers(self, I, N) -> bool:
        try:
            self._locate(I, N)
            return True
        except TableCoverageError:
            return False

    def S_tilde(self, I, N):
        return self._interp(self.S, I, N)

    def dSdI(self, I, N):
        return self._interp(self.dS_dI, I, N)

    def dSdI_row(self, I, N):
        return self._interp(self.dS_dI_row, I, N)

    def dSdN(self, I, N):
        return self._interp(self.dS_dN, I, N)

    def flagged_fraction(self) -> float:
        v = self.valid
        return float(np.count_nonzero(v & (self.cond > 1e8)) / max(1, np.count_nonzero(v)))

    # persistence ----------------------------------------------------------
    COLUMNS = ("I", "N", "S", "dS_dI", "dS_dN", "dS_dI_row", "valid", "cond")

    def to_csv(self, path: str) -> None:
        """Rows (I, N, S~, partials, flags); line 1 is a ``#`` JSON header."""
        head = {"params": self.params.to_dict(), "shape": list(self.S.shape), "meta": self.meta}
        NN, II = np.meshgrid(self.N, self.I, indexing="ij")
        cols = [II, NN, self.S, self.dS_dI, self.dS_dN, self.dS_dI_row,
                self.valid.astype(float), self.cond]
        data = np.column_stack([c.ravel() for c in cols])
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(head, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in data:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str) -> "CenterManifoldTable":
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# "):
                raise ValueError("missing table header")
            head = json.loads(first[2:])
            data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
        nN, nI = head["shape"]
        cols = {name: data[:, k].reshape(nN, nI) for k, name in enumerate(cls.COLUMNS)}
        return cls(I=cols["I"][0].copy(), N=cols["N"][:, 0].copy(), S=cols["S"],
                   dS_dI=cols["dS_dI"], dS_dN=cols["dS_dN"], dS_dI_row=cols["dS_dI_row"],
                   valid=cols["valid"] > 0.5, cond=cols["cond"],
                   params=EpidemicParams(**head["params"]), meta=head["meta"])


@dataclass
class _Fan:
    """One seeded limiting-system orbit, resampled as a function of N."""

    N1: float
    path: object
    N_lo: float
    N_hi: float
    S_of_N: CubicHermiteSpline
    I_of_N: CubicHermiteSpline
    t_of_N: CubicHermiteSpline


def _fan_orbit(params: EpidemicParams, N1: float, delta: float, T: float,
               rtol: float, atol: float) -> _Fan:
    P = params
    v = unstable_vector(P, N1)
    y0 = np.array([P.k * N1, 0.0, N1]) + delta * v
    # stop well inside the attracting side
    stop = EventSpec("b_crosses_level", 1e-9 * delta, "down", name="stop")
    path = integrate(limiting_rhs(P), y0, (0.0, T), [stop], rtol, atol,
                     log_components=(1,), roles=(2, 1))
    Y = path.physical
    S, I, N = Y[:, 0], Y[:, 1], Y[:, 2]
    dS, dI, dN = _field(P, S, I, N)
    keep = np.concatenate([[True], np.diff(N) < 0])
    t = path.t[keep]
    S, I, N, dS, dI, dN = S[keep], I[keep], N[keep], dS[keep], dI[keep], dN[keep]
    # N decreases strictly (N' = -alpha I), so invert with Hermite pieces
    Nr = N[::-1]
    return _Fan(
        N1=N1, path=path, N_lo=float(N[-1]), N_hi=float(N[0]),
        S_of_N=CubicHermiteSpline(Nr, S[::-1], (dS / dN)[::-1]),
        I_of_N=CubicHermiteSpline(Nr, I[::-1], (dI / dN)[::-1]),
        t_of_N=CubicHermiteSpline(Nr, t[::-1], (1.0 / dN)[::-1]),
    )


def _cell_partials(params: EpidemicParams, fan: list[_Fan], k: int, Nq: np.ndarray,
                   scheme: str):
    """dS~/dI and dS~/dN at orbit k's crossings of the levels ``Nq``.

    Differences along the orbit (time direction) and across neighbouring
    orbits at equal time form the 2x2 system that is inverted per cell.
    """
    P = params
    me = fan[k]
    tq = np.clip(me.t_of_N(Nq), me.path.t0, me.path.t1)
    Xk = me.path.state(tq)
    out_I = np.full(Nq.shape, np.nan)
    out_N = np.full(Nq.shape, np.nan)
    cond = np.full(Nq.shape, np.inf)
    hi = fan[k + 1] if k + 1 < len(fan) else None
    lo = me if scheme == "forward" else (fan[k - 1] if k > 0 else None)
    if hi is None or lo is None:
        return out_I, out_N, cond
    ok = (tq >= hi.path.t0) & (tq <= hi.path.t1) & (tq >= lo.path.t0) & (tq <= lo.path.t1)
    if not np.any(ok):
        return out_I, out_N, cond
    dx = hi.path.state(tq[ok]) - (Xk[ok] if lo is me else lo.path.state(tq[ok]))
    if scheme == "forward":
        # literal forward difference on a time grid of spacing 1/len(fan)
        step = 1.0 / len(fan)
        t2 = np.where(tq[ok] + step <= me.path.t1, tq[ok] + step, tq[ok] - step)
        dtv = (me.path.state(t2) - Xk[ok]) * np.sign(t2 - tq[ok])[:, None]
    else:
        S, I, N = Xk[ok, 0], Xk[ok, 1], Xk[ok, 2]
        dtv = np.column_stack(_field(P, S, I, N))
    # [dS/dI, dS/dN] = [dt_S, dx_S] [[dt_I, dx_I], [dt_N, dx_N]]^-1
    Mtx = np.empty((dtv.shape[0], 2, 2))
    Mtx[:, 0, 0], Mtx[:, 0, 1] = dtv[:, 1], dx[:, 1]
    Mtx[:, 1, 0], Mtx[:, 1, 1] = dtv[:, 2], dx[:, 2]
    rhs = np.column_stack([dtv[:, 0], dx[:, 0]])
    with np.errstate(all="ignore"):
        c = np.linalg.cond(Mtx)
        sol = np.linalg.solve(np.transpose(Mtx, (0, 2, 1)), rhs[:, :, None])[:, :, 0]
    out_I[ok], out_N[ok], cond[ok] = sol[:, 0], sol[:, 1], c
    return out_I, out_N, cond


def build_center_manifold(params: EpidemicParams, delta: float | None = None, T: float = 2e4,
                          M: int = 200, *, n_N: int = 801, n_I: int = 401,
                          N_top: float | None = None, scheme: str = "central",
                          rtol: float = 1e-10, atol: float = 1e-12,
                          cond_max: float = 1e8, workers: int | None = None) -> CenterManifoldTable:
    """Tabulate S~(I, N) from ``M`` seeded orbits of the limiting system.

    Seeds sit on [N0 + delta, N_top] (default N_top = 1.05 N_max, a margin
    so orbits started at N_max stay inside the table).  Each orbit starts
    ``delta`` along the unstable eigenvector and runs for at most ``T``.
    On every grid row N = const the orbit crossings, plus the equilibrium
    S = k N at I = 0, are joined by a cubic spline in I.
    """
    P = params
    if M < 50:
        raise ValueError("M must be at least 50")
    if scheme not in ("central", "forward"):
        raise ValueError("scheme must be 'central' or 'forward'")
    delta = 1e-4 * P.N_max if delta is None else float(delta)
    N0 = epidemic_N0(P)
    N_top = 1.05 * P.N_max if N_top is None else float(N_top)
    seeds = np.linspace(N0 + delta, N_top, M)
    fan = pmap(lambda N1: _fan_orbit(P, float(N1), delta, T, rtol, atol), seeds, workers)

    N_lo = min(o.N_lo for o in fan)
    Ngrid = np.linspace(N_lo, N_top, n_N)
    I_top = max(float(o.path.b.max()) for o in fan)
    Igrid = np.linspace(0.0, 1.02 * I_top, n_I)

    # crossings of every grid row by every orbit
    Ic = np.full((M, n_N), np.nan)
    Sc = np.full((M, n_N), np.nan)
    pI = np.full((M, n_N), np.nan)
    pN = np.full((M, n_N), np.nan)
    cc = np.full((M, n_N), np.inf)
    for k, o in enumerate(fan):
        inside = (Ngrid >= o.N_lo) & (Ngrid <= o.N_hi)
        if not np.any(inside):
            continue
        Nq = Ngrid[inside]
        Ic[k, inside] = o.I_of_N(Nq)
        Sc[k, inside] = o.S_of_N(Nq)
        a, b, c = _cell_partials(P, fan, k, Nq, scheme)
        pI[k, inside], pN[k, inside], cc[k, inside] = a, b, c

    S = np.full((n_N, n_I), np.nan)
    dSI = np.full((n_N, n_I), np.nan)
    dSN = np.full((n_N, n_I), np.nan)
    dSI_row = np.full((n_N, n_I), np.nan)
    cond = np.full((n_N, n_I), np.inf)
    valid = np.zeros((n_N, n_I), dtype=bool)
    slope0 = axis_slope(P, Ngrid)
    top = np.array([np.nanmax(Ic[:, j], initial=0.0) for j in range(n_N)])
    # rows may be extended up to the neighbouring rows' reach plus one I step,
    # so bilinear cells along the steep outer edge stay usable
    reach = np.maximum.reduce([top, np.r_[top[1:], 0.0], np.r_[0.0, top[:-1]]])
    reach = reach + (Igrid[1] - Igrid[0])
    for j, Nj in enumerate(Ngrid):
        m = np.isfinite(Ic[:, j]) & (Ic[:, j] > 1e-6 * I_top)
        Ik, Sk = Ic[m, j], Sc[m, j]
        order = np.argsort(Ik)
        Ik, Sk = Ik[order], Sk[order]
        if Ik.size < 3:
            continue
        keep = np.concatenate([[True], np.diff(Ik) > 1e-12 * max(1.0, Ik[-1])])
        Ik, Sk = Ik[keep], Sk[keep]
        xs = np.concatenate([[0.0], Ik])
        ys = np.concatenate([[P.k * Nj], Sk])
        spl = CubicSpline(xs, ys, bc_type=((1, float(slope0[j])), "not-a-knot"))
        inside = Igrid <= reach[j] * (1.0 + 1e-9)
        S[j, inside] = spl(Igrid[inside])
        dSI_row[j, inside] = spl(Igrid[inside], 1)
        valid[j, inside] = True
        # orbit-difference partials, good cells only; the axis value anchors I = 0
        pk, ck = pI[m, j][order][keep], cc[m, j][order][keep]
        nk = pN[m, j][order][keep]
        good = np.isfinite(pk) & (ck <= cond_max)
        xi = np.concatenate([[0.0], Ik[good]])
        dSI[j, inside] = np.interp(Igrid[inside], xi, np.concatenate([[slope0[j]], pk[good]]))
        dSN[j, inside] = np.interp(Igrid[inside], xi, np.concatenate([[P.k], nk[good]]))
        if np.any(good):
            cond[j, inside] = np.interp(Igrid[inside], Ik[good], ck[good])
        else:
            cond[j, inside] = np.inf
    # the lowest rows only see orbit endpoints; extrapolate one row from above
    filled = np.nonzero(valid.any(axis=1))[0]
    if filled.size and filled[0] > 0 and np.all(valid[filled[0]:filled[0] + 3].any(axis=1)):
        j = filled[0] - 1
        inside = (Igrid <= reach[j] * (1.0 + 1e-9)) & valid[j + 1] & valid[j + 2] & valid[j + 3]
        for arr in (S, dSI, dSN, dSI_row):
            arr[j, inside] = 3 * arr[j + 1, inside] - 3 * arr[j + 2, inside] + arr[j + 3, inside]
        cond[j, inside] = cond[j + 1, inside]
        valid[j, inside] = True
    meta = {"delta": delta, "T": T, "M": M, "scheme": scheme, "N0": N0, "N_top": N_top,
            "rtol": rtol, "cond_max": cond_max,
            "orbits_reaching_stop": int(sum(o.path.termination.value == "event hit" for o in fan))}
    return CenterManifoldTable(I=Igrid, N=Ngrid, S=S, dS_dI=dSI, dS_dN=dSN, dS_dI_row=dSI_row,
                               valid=valid, cond=cond, params=P, meta=meta)


def epidemic_reduced(params: EpidemicParams, table: CenterManifoldTable) -> SlowFastModel:
    """Planar model on the tabulated surface with a = N, b = I.

    The axis I = 0 uses the exact equilibrium S = k N.
    """
    P = params
    A = P.a_comb
    k = P.k

    def S_at(I, N):
        I = np.asarray(I, dtype=float)
        if I.ndim == 0:
            return k * N if I == 0.0 else table.S_tilde(I, N)
        out = np.asarray(k * np.asarray(N, dtype=float) + 0.0 * I, dtype=float)
        pos = I > 0
        if np.any(pos):
            out[pos] = table.S_tilde(I[pos], np.broadcast_to(N, I.shape)[pos])
        return out

    def f(a, b, eps):
        return P.profile_f(a) + 0.0 * np.asarray(b, dtype=float)

    def h(a, b, eps):
        return -P.alpha + 0.0 * (np.asarray(a, dtype=float) + np.asarray(b, dtype=float))

    def g(a, b, eps):
        return P.incidence(S_at(b, a), a) - A

    def dg_db(a, b, eps):
        a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        S = S_at(b, a)
        slope = np.where(b > 0, 0.0, axis_slope(P, a))
        pos = b > 0
        if np.any(pos):
            slope = np.array(slope, dtype=float)
            slope[pos] = table.dSdI_row(b[pos], a[pos])
        return P.incidence_S(S, a) * slope

    def dh_da(a, b, eps):
        return 0.0 * (np.asarray(a, dtype=float) + np.asarray(b, dtype=float))

    return SlowFastModel(
        f=f, g=g, h=h, a_min=0.0, a_max=P.N_max, a_bar=epidemic_N0(P),
        name=f"epidemic-{P.profile}", dh_da=dh_da, dg_db=dg_db,
        flags=StructureFlags(h_independent_of_a=True), check_partials=False)


def epidemic_family(params: EpidemicParams, table: CenterManifoldTable,
                    settings: OrbitSettings = OrbitSettings()) -> AlphaParameterization:
    """Orbits indexed by s = N1, the alpha endpoint on the equilibrium line."""
    return AlphaParameterization(epidemic_reduced(params, table), settings)


def epidemic_chi(params: EpidemicParams, N1: float, omega: float) -> float:
    """Integral of (g(kN, N) - a)/f(N) from omega to N1 (plain quadrature oracle)."""
    from scipy.integrate import quad
    P = params
    val, _ = quad(lambda N: (float(P.incidence(P.k * N, N)) - P.a_comb) / float(P.profile_f(N)),
                  omega, N1, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(val)


def epidemic_lambda(params: EpidemicParams, table: CenterManifoldTable,
                    orbit: HeteroclinicOrbit) -> tuple[float, float]:
    """ln(f(N1)/f(omega)) - (1/alpha) int dS g * dI S~ dN along the orbit.

    Uses the orbit-difference partial dS~/dI; with dN = -alpha I dt the path
    term is the time integral of I dS g dI S~.
    """
    P = params
    fa, fo = float(P.profile_f(orbit.a_alpha)), float(P.profile_f(orbit.a_omega))
    if not (fa > 0 and fo > 0):
        raise ValueError("f must be positive at both endpoints")
    log_term = math.log(fa / fo)

    def integrand(t, Y):
        N, I = Y[:, 0], Y[:, 1]
        S = table.S_tilde(I, N)
        return I * P.incidence_S(S, N) * table.dSdI(I, N)

    val, err = path_integral(orbit.path, integrand, abs_tol=1e-12, rel_tol=1e-10)
    return log_term + float(val), float(err)


def epidemic_full(params: EpidemicParams, eps: float):
    """Full vector field in (S, I, N)."""
    P = params

    def rhs(t, z):
        S, I, N = z
        g = P.incidence(S, N)
        fN = eps * P.profile_f(N)
        return np.array([P.D * N + fN - g * I - (P.D + P.p) * S,
                         (g - P.a_comb) * I,
                         fN - P.alpha * I])

    return rhs


class EpidemicSystem:
    """Full system prepared for section-based verification.

    Internal coordinates are (S, ln I, N); the reduced plane is (a, b) = (N, I)
    and lifting puts a point on the tabulated surface S = S~(I, N).
    """

    dim = 3
    log_components = (1,)
    roles = (2, 1)

    def __init__(self, params: EpidemicParams, table: CenterManifoldTable):
        self.params = params
        self.table = table
        self.model = epidemic_reduced(params, table)

    def rhs(self, eps: float):
        P = self.params

        def rhs(t, z):
            S, u, N = z
            I = math.exp(u)
            g = P.beta * S / (P.m_sat + S)
            fN = eps * float(P.profile_f(N))
            return np.array([P.D * N + fN - g * I - (P.D + P.p) * S, g - P.a_comb,
                             fN - P.alpha * I])

        return rhs

    def project(self, Y):
        Y = np.asarray(Y, dtype=float)
        return Y[..., 2], Y[..., 1]

    def lift(self, a: float, b: float) -> np.ndarray:
        return np.array([float(self.table.S_tilde(b, a)), b, a])

    def residual(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.full(Y.shape[0], np.nan)
        for i, (S, I, N) in enumerate(Y):
            if self.table.covers(I, N):
                out[i] = S - float(self.table.S_tilde(I, N))
        return out
