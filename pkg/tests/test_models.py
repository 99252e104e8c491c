import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slowfast.characteristics import chi_endpoint, lambda_h_independent
from slowfast.integrator import integrate
from slowfast.models.chemostat import (EXAMPLE_PARAMS, ChemostatParams, ChemostatSystem,
                                       HollingII, LinearResponse, chemostat_chi,
                                       chemostat_chi_line, chemostat_full, chemostat_lambda,
                                       chemostat_orbit, chemostat_reduced, chi_role_factor,
                                       one_hump_check, psi)
from slowfast.models.epidemic import (CASE1, CASE2, EpidemicParams, EpidemicSystem,
                                      TableCoverageError, axis_slope, build_center_manifold,
                                      epidemic_chi, epidemic_family, epidemic_full,
                                      epidemic_lambda, epidemic_N0, epidemic_reduced,
                                      unstable_vector)

P = EXAMPLE_PARAMS


# chemostat ----------------------------------------------------------------

def test_example_isocline_values():
    assert P.y_bar == pytest.approx(10 / 3)
    assert float(P.F(0.0)) == pytest.approx(P.y_bar)
    assert float(P.F(P.x_max)) == pytest.approx(0.0, abs=1e-14)
    x = np.linspace(0.1, 9.9, 7)
    h = 1e-6
    fd = (P.F(x + h) - P.F(x - h)) / (2 * h)
    assert np.allclose(P.dF(x), fd, rtol=1e-7, atol=1e-9)


@pytest.mark.parametrize("kw", [{"S0": 0.0}, {"m": -1.0}, {"rho": 0.0}, {"c": -2.0}])
def test_chemostat_params_reject_nonpositive(kw):
    base = dict(S0=10.0, m=1.0, rho=1.0, c=1.0, response=HollingII(1.5, 3.0))
    base.update(kw)
    with pytest.raises(ValueError):
        ChemostatParams(**base)


def test_response_validation():
    with pytest.raises(ValueError):
        HollingII(-1.0, 3.0)
    with pytest.raises(ValueError):
        LinearResponse(0.0)


def test_one_hump_holling():
    oh = one_hump_check(P)
    assert oh.holds and oh.sign_changes == 1
    assert 0 < oh.x_hat < P.x_max
    assert abs(float(P.dF(oh.x_hat))) < 1e-10


def test_one_hump_linear_response_vertex():
    # p = k x makes F linear with negative slope: no hump
    lin = ChemostatParams(10.0, 1.0, 1.0, 1.0, LinearResponse(2.0))
    oh = one_hump_check(lin)
    assert not oh.holds and oh.x_hat is None


def test_one_hump_rejects_two_humps():
    oh = one_hump_check(P, dF=lambda x: np.cos(x))
    assert not oh.holds and oh.sign_changes == 3


def test_role_factor_links_predator_and_generic_chi():
    model = chemostat_reduced(P)
    k = chi_role_factor(P)
    assert k < 0
    for x0 in (1.0, 5.0, 9.0):
        orb = chemostat_orbit(P, x0)
        generic, _ = chi_endpoint(model, orb)
        assert generic == pytest.approx(k * chemostat_chi(P, orb), rel=1e-9, abs=1e-12)


def test_chi_line_sign_pattern():
    low = chemostat_chi_line(P, chemostat_orbit(P, 0.5))[0]
    vals = [chemostat_chi_line(P, chemostat_orbit(P, x0))[0] for x0 in (8.0, 9.0, 9.5, 9.8)]
    assert low > 0
    assert all(v < 0 for v in vals)
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_psi_vanishes_on_equal_levels():
    assert float(psi(P, 2.0) - psi(P, 2.0)) == 0.0
    assert float(psi(P, P.y_bar)) == 0.0
    y = np.linspace(0.1, 20, 50)
    assert np.all(psi(P, y) >= 0)


def test_chemostat_lambda_negative_past_hump():
    orb = chemostat_orbit(P, 9.0)
    lam, err = chemostat_lambda(P, orb)
    assert lam < 0 and err < 1e-6


def test_chemostat_orbit_rejects_outside():
    with pytest.raises(ValueError):
        chemostat_orbit(P, 10.5)


@settings(max_examples=20, deadline=None)
@given(x=st.floats(0.2, 9.0), y=st.floats(0.2, 9.0))
def test_invariant_plane_is_preserved(x, y):
    sysm = ChemostatSystem(P)
    Y0 = sysm.lift(-y, x)
    path = integrate(sysm.rhs(0.1), Y0, (0.0, 5.0), rtol=1e-10, atol=1e-12, log_components=(1,))
    Yend = path.y[-1].copy()
    Yend[1] = math.exp(Yend[1])
    # S + rho x + c rho y relaxes to S0 at rate eps, starting on it
    assert abs(float(sysm.residual(Yend))) < 1e-8


def test_full_chemostat_matches_reduced_on_plane():
    sysm = ChemostatSystem(P)
    model = sysm.model
    x, y = 3.0, 2.0
    S = P.S0 - P.rho * x - P.c * P.rho * y
    dS, dx, dy = chemostat_full(P, 0.0)(0.0, np.array([S, x, y]))
    da = -dy
    assert da == pytest.approx(float(model.h(-y, x, 0.0)) * x, rel=1e-12)
    assert dx == pytest.approx(float(model.g(-y, x, 0.0)) * x, rel=1e-12)


# epidemic -----------------------------------------------------------------

def test_epidemic_threshold():
    N0 = epidemic_N0(CASE1)
    assert abs(float(CASE1.incidence(CASE1.k * N0, N0)) - CASE1.a_comb) < 1e-10
    assert 0 < N0 < CASE1.N_max
    higher = EpidemicParams(beta=1.5)
    assert epidemic_N0(higher) < N0


@pytest.mark.parametrize("kw", [{"D": 0.0}, {"alpha": -1.0}, {"d": 0.0},
                                {"profile": "cubic"}, {"bump": "box"}])
def test_epidemic_params_reject(kw):
    with pytest.raises(ValueError):
        EpidemicParams(**kw)


def test_unstable_vector_is_eigenvector():
    N1 = 300.0
    v = unstable_vector(CASE1, N1)
    S = CASE1.k * N1
    g = float(CASE1.incidence(S, N1))
    gS = float(CASE1.incidence_S(S, N1))
    D, p, al = CASE1.D, CASE1.p, CASE1.alpha
    J = np.array([[-g * 0 - (D + p), -g, D],
                  [0.0, g - CASE1.a_comb, 0.0],
                  [0.0, -al, 0.0]])
    # at I = 0 the S-row I-derivative is -g and the I-row S-derivative vanishes
    mu = g - CASE1.a_comb
    assert np.allclose(J @ v, mu * v, atol=1e-12)
    assert gS > 0
    with pytest.raises(ValueError):
        unstable_vector(CASE1, 0.5 * epidemic_N0(CASE1))


def test_I_zero_plane_invariant():
    rhs = epidemic_full(CASE2, 1e-3)
    z = rhs(0.0, np.array([50.0, 0.0, 200.0]))
    assert z[1] == 0.0


def test_deformation_is_local():
    N = np.linspace(CASE2.c3 + 10 / CASE2.c2, CASE2.N_max, 200)
    f, f1 = CASE1.profile_f(N), CASE2.profile_f(N)
    mask = f > 0
    assert np.all(np.abs(f1[mask] - f[mask]) < 1e-3 * f[mask])
    assert float(CASE2.profile_f(CASE2.c3)) < float(CASE1.profile_f(CASE1.c3)) - 0.9 * CASE2.c1


def test_axis_slope_matches_first_order_invariance():
    N = np.array([150.0, 250.0, 350.0])
    s = axis_slope(CASE1, N)
    # d/dt (S - kN - s I) = O(I^2) along the field near I = 0
    I = 1e-6
    S = CASE1.k * N + s * I
    g = CASE1.incidence(S, N)
    dS = CASE1.D * N - g * I - (CASE1.D + CASE1.p) * S
    dI = (g - CASE1.a_comb) * I
    dN = -CASE1.alpha * I
    assert np.all(np.abs(dS - CASE1.k * dN - s * dI) < 1e-9)


@pytest.fixture(scope="module")
def small_table():
    return build_center_manifold(CASE1, M=50, n_N=201, n_I=101)


def test_small_build_rejects_bad_settings():
    with pytest.raises(ValueError):
        build_center_manifold(CASE1, M=49)
    with pytest.raises(ValueError):
        build_center_manifold(CASE1, scheme="backward")


def test_table_axis_and_coverage(small_table):
    t = small_table
    N = np.linspace(120.0, 390.0, 10)
    assert np.allclose(t.S_tilde(np.zeros_like(N), N), CASE1.k * N, rtol=1e-6)
    assert t.covers(0.5, 300.0)
    assert not t.covers(-1.0, 300.0)
    with pytest.raises(TableCoverageError):
        t.S_tilde(0.5, 1e4)
    assert 0 <= t.flagged_fraction() <= 1


def test_table_csv_roundtrip(small_table, tmp_path):
    path = tmp_path / "t.csv"
    small_table.to_csv(str(path))
    back = type(small_table).from_csv(str(path))
    for name in ("I", "N", "S", "dS_dI", "dS_dN", "dS_dI_row", "cond"):
        assert np.array_equal(getattr(back, name), getattr(small_table, name), equal_nan=True)
    assert np.array_equal(back.valid, small_table.valid)
    assert back.params == small_table.params
    path2 = tmp_path / "t2.csv"
    back.to_csv(str(path2))
    assert path.read_bytes() == path2.read_bytes()


def test_table_build_deterministic(small_table, tmp_path):
    again = build_center_manifold(CASE1, M=50, n_N=201, n_I=101, workers=2)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    small_table.to_csv(str(a))
    again.to_csv(str(b))
    assert a.read_bytes() == b.read_bytes()


def _invariance_residual(P, t, pts):
    out = []
    for I, N in pts:
        S = float(t.S_tilde(I, N))
        g = float(P.incidence(S, N))
        lhs = float(t.dSdI(I, N)) * (g - P.a_comb) * I + float(t.dSdN(I, N)) * (-P.alpha * I)
        out.append(abs(lhs - (P.D * N - g * I - (P.D + P.p) * S)))
    return np.array(out)


def _inside_points(tables, n=150):
    rng = np.random.default_rng(0)
    pts = []
    while len(pts) < n:
        N, I = rng.uniform(60, 380), rng.uniform(0.01, 3.0)
        if all(t.covers(I, N) for t in tables):
            pts.append((I, N))
    return pts


def test_surface_invariance_residual(small_table, epidemic_table):
    pts = _inside_points([small_table, epidemic_table.table])
    coarse = _invariance_residual(CASE1, small_table, pts)
    fine = _invariance_residual(CASE1, epidemic_table.table, pts)
    assert np.max(fine) < 1e-5
    assert np.mean(fine) <= np.mean(coarse)


def test_lift_lands_on_surface(epidemic_table):
    sysm = EpidemicSystem(CASE1, epidemic_table.table)
    Y = sysm.lift(250.0, 1.0)
    assert abs(float(sysm.residual(Y)[0])) < 1e-12
    N, I = sysm.project(Y)
    assert (N, I) == (250.0, 1.0)


@pytest.mark.parametrize("params,N1", [(CASE1, 377.0), (CASE2, 157.0), (CASE2, 342.6)])
def test_epidemic_forms_agree(params, N1, epidemic_table):
    t = epidemic_table.table
    model = epidemic_reduced(params, t)
    orb = epidemic_family(params, t)(N1)
    chi, chi_err = chi_endpoint(model, orb)
    ref = epidemic_chi(params, N1, orb.a_omega)
    assert chi == pytest.approx(ref, rel=1e-8, abs=1e-9)
    lam, lam_err = epidemic_lambda(params, t, orb)
    lam2, lam2_err = lambda_h_independent(model, orb)
    # the two forms use independent table partials (orbit-difference vs row spline),
    # so they agree to table resolution rather than quadrature error
    assert abs(lam - lam2) < 1e-3 * (1 + abs(lam)) + 3 * (lam_err + lam2_err)
