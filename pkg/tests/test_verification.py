import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slowfast.analysis import find_candidates, scan_chi
from slowfast.heteroclinic import compute_heteroclinic
from slowfast.integrator import integrate
from slowfast.models.chemostat import (EXAMPLE_PARAMS, ChemostatSystem, chemostat_family,
                                       chemostat_full, chemostat_reduced, psi, psi_exit)
from slowfast.models.toy import shifted_toy, symmetric_toy
from slowfast.verification import (NonRecurrentError, PlanarSystem, VerifySettings, b_peaks,
                                   entry_exit_check, exit_point, find_periodic_orbit,
                                   floquet_check, polyline_distance, return_map, section_crossings,
                                   section_pass, section_seed)

P = EXAMPLE_PARAMS
CHEM = chemostat_reduced(P)
TOY = symmetric_toy()


@pytest.fixture(scope="module")
def candidate():
    return find_candidates(scan_chi(chemostat_family(P), CHEM, (0.2, 9.8), 25))[0]


@pytest.fixture(scope="module")
def report(candidate):
    return find_periodic_orbit(ChemostatSystem(P), 0.1, candidate)


def test_section_seed_on_conic():
    orb = compute_heteroclinic(TOY, 1.0)
    # descending branch of b = (1 - a^2)/2 meets b = 0.1 at a = -sqrt(0.8)
    assert section_seed(orb, 0.1) == pytest.approx(-math.sqrt(0.8), abs=1e-8)
    with pytest.raises(ValueError):
        section_seed(orb, 0.6)


def test_polyline_distance():
    poly = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    pts = np.array([[0.5, 0.5], [2.0, 0.5], [-1.0, 0.0], [1.0, 1.0]])
    assert np.allclose(polyline_distance(pts, poly), [0.5, 1.0, 1.0, 0.0])


def test_planar_system_wraps_model():
    sysm = PlanarSystem(TOY)
    assert np.array_equal(sysm.lift(0.5, 0.2), [0.5, 0.2])
    assert sysm.residual(np.zeros((3, 2))).shape == (3,)


def test_periodic_orbit_report(report, candidate):
    assert report.converged
    assert report.measured_period > 0
    assert report.measured_period * 0.1 == pytest.approx(candidate.predicted_period_coeff, rel=0.1)
    assert report.orbit_distance < 1.0
    assert report.residual_max < 1e-6
    assert report.floquet_estimate > 0
    d = report.to_dict()
    assert "orbit_path" not in d and d["epsilon"] == 0.1


def test_stable_iteration_contracts(report):
    steps = [abs(b[0] - a[0]) for a, b in zip(report.iterates[:-1], report.iterates[1:])]
    assert all(y < x for x, y in zip(steps[1:], steps[2:]))


def test_fixed_point_is_fixed(report):
    sysm = ChemostatSystem(P)
    a_out, t = return_map(sysm, 0.1, report.delta1, report.fixed_point_a)
    assert abs(a_out - report.fixed_point_a) <= 1e-6
    assert t == pytest.approx(report.measured_period, rel=1e-6)


def test_floquet_sign_matches_lambda(report, candidate):
    fl = floquet_check(ChemostatSystem(P), 0.1, report)
    assert np.sign(math.log(fl.det_dp)) == np.sign(candidate.lambda0)
    assert not fl.degraded


def test_degenerate_candidate_is_refused(candidate):
    from dataclasses import replace
    with pytest.raises(ValueError):
        find_periodic_orbit(ChemostatSystem(P), 0.1, replace(candidate, stability="degenerate"))


def test_section_pass_without_return_raises():
    # on the toy the far side of the section is never reached within a tiny time budget
    tight = VerifySettings(t_max_factor=1e-3)
    with pytest.raises(NonRecurrentError):
        section_pass(PlanarSystem(TOY), 0.01, 0.05, -1.0, tight)


def test_toy_entry_exit_gap_shrinks():
    gaps = [entry_exit_check(TOY, e, -1.0, 0.05).gap for e in (1e-2, 1e-3)]
    assert gaps[1] < gaps[0]
    assert exit_point(TOY, -1.0) == pytest.approx(1.0, abs=1e-12)


def test_exit_point_preconditions():
    with pytest.raises(ValueError):
        exit_point(TOY, 0.5)
    # g = a - 1/4: entering at -1.9 would exit at 2.4, outside (-2, 2)
    with pytest.raises(ValueError):
        exit_point(shifted_toy(0.25), -1.9)
    assert exit_point(shifted_toy(0.25), -1.0) == pytest.approx(1.5, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(y_entry=st.floats(3.5, 40.0))
def test_psi_oracle_matches_partial_integral(y_entry):
    y_exit = psi_exit(P, y_entry)
    assert y_exit < P.y_bar
    assert float(psi(P, y_exit)) == pytest.approx(float(psi(P, y_entry)), rel=1e-12, abs=1e-12)
    # a = -y: the entry is on a < a_bar
    a1 = exit_point(CHEM, -y_entry)
    assert abs(-a1 - y_exit) <= 1e-8 * max(1.0, y_exit)


@settings(max_examples=20, deadline=None)
@given(y=st.floats(0.01, 50.0))
def test_psi_nonnegative(y):
    assert float(psi(P, y)) >= 0.0


def test_simplex_decays_at_rate_eps():
    eps = 0.3
    z0 = np.array([2.0, 3.0, 1.0])
    path = integrate(chemostat_full(P, eps), z0, (0.0, 5.0), rtol=1e-11, atol=1e-13)
    w = path.y[:, 0] + P.rho * path.y[:, 1] + P.c * P.rho * path.y[:, 2] - P.S0
    assert np.allclose(w, w[0] * np.exp(-eps * path.t), rtol=1e-7, atol=1e-10)


def test_prey_free_state_tends_to_feed():
    path = integrate(chemostat_full(P, 0.5), [1.0, 0.0, 0.0], (0.0, 40.0))
    assert path.y[-1, 0] == pytest.approx(P.S0, rel=1e-6)


def test_trajectory_enters_periodic_regime():
    sysm = ChemostatSystem(P)
    y0 = np.array([6.0, 1.0, 10.0])
    ts, As = section_crossings(sysm, 0.5, y0, 0.5, 400.0)
    assert len(As) >= 5
    assert abs(As[-1] - As[-2]) < 1e-4 * abs(As[-1])


def test_b_peaks_on_toy_cycle():
    t, b = b_peaks(PlanarSystem(TOY), 0.05, [1.0, 0.01], 200.0)
    assert len(b) >= 2
