import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slowfast.integrator import EventSpec, IntegrationError, OrbitPath, Termination, integrate


def decay(k):
    return lambda t, y: -k * y


def oscillator(t, y):
    return np.array([y[1], -y[0]])


def test_exponential_decay_matches_closed_form():
    path = integrate(decay(1.3), [2.0], (0.0, 4.0), rtol=1e-11, atol=1e-14)
    assert path.termination is Termination.TIME_LIMIT
    assert path.t1 == 4.0
    assert abs(path.y[-1, 0] - 2.0 * math.exp(-5.2)) < 1e-11


def test_dense_output_between_steps():
    path = integrate(oscillator, [1.0, 0.0], (0.0, 10.0), rtol=1e-11, atol=1e-13)
    tq = np.linspace(0.0, 10.0, 257)
    Y = path.state(tq)
    assert np.max(np.abs(Y[:, 0] - np.cos(tq))) < 1e-8
    assert np.max(np.abs(Y[:, 1] + np.sin(tq))) < 1e-8


def test_backward_integration():
    path = integrate(decay(0.5), [1.0], (0.0, -3.0), rtol=1e-11, atol=1e-14)
    # backward runs are stored in increasing time
    assert path.t0 == -3.0 and path.t1 == 0.0
    assert abs(path.state(-3.0)[0] - math.exp(1.5)) < 1e-9
    assert abs(path.y[0, 0] - math.exp(1.5)) < 1e-9


def test_log_component_keeps_positive_state():
    # b' = -b in log form is (ln b)' = -1: exact for any step
    path = integrate(lambda t, y: np.array([-1.0]), [1e-3], (0.0, 50.0), log_components=(0,))
    assert np.all(path.physical[:, 0] > 0)
    assert abs(math.log(path.physical[-1, 0]) - (math.log(1e-3) - 50.0)) < 1e-10


def test_level_event_time_is_exact():
    # b = exp(-t) crosses 0.1 at t = ln 10
    ev = [EventSpec("b_crosses_level", 0.1, "down", name="hit")]
    path = integrate(lambda t, y: np.array([1.0, -1.0]), [0.0, 1.0], (0.0, 100.0), ev,
                     log_components=(1,), roles=(0, 1))
    assert path.termination is Termination.EVENT
    assert path.event_name == "hit"
    assert abs(path.event_time - math.log(10.0)) < 1e-12
    assert abs(path.event_state[1] - 0.1) < 1e-12


def test_event_direction_filters_crossings():
    ev = [EventSpec("a_crosses_level", 0.5, "down", terminal=False, name="x")]
    path = integrate(oscillator, [1.0, 0.0], (0.0, 4 * math.pi), ev, rtol=1e-11, atol=1e-13)
    times = [t for t, _, _ in path.crossings]
    # cos t = 0.5 going down at pi/3 and pi/3 + 2 pi
    assert np.allclose(times, [math.pi / 3, math.pi / 3 + 2 * math.pi], atol=1e-8)


def test_proximity_event():
    ev = [EventSpec("proximity_to_point", 0.01, "down", point=(0.0, 1.0), name="near")]
    path = integrate(oscillator, [1.0, 0.0], (0.0, 10.0), ev, rtol=1e-11, atol=1e-13)
    assert path.termination is Termination.EVENT
    a, b = path.event_state
    assert abs(math.hypot(a, b - (-1.0)) - 0.01) < 1e-8 or abs(math.hypot(a, b - 1.0) - 0.01) < 1e-8


@pytest.mark.parametrize("kwargs", [
    dict(kind="nope", level=1.0),
    dict(kind="b_crosses_level", level=1.0, direction="sideways"),
    dict(kind="b_crosses_level", level=-1.0),
    dict(kind="a_crosses_level", level=math.nan),
    dict(kind="proximity_to_point", level=0.1),
])
def test_event_spec_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        EventSpec(**kwargs)


def test_nonfinite_rhs_raises():
    def rhs(t, y):
        return np.array([math.nan if t > 0.5 else 1.0])
    with pytest.raises(IntegrationError):
        integrate(rhs, [0.0], (0.0, 1.0))


def test_blowup_is_a_step_failure():
    # y' = y^2 from y = 1 blows up at t = 1
    path = integrate(lambda t, y: y * y, [1.0], (0.0, 2.0), max_steps=20000)
    assert path.termination is Termination.STEP_FAILURE
    assert path.message
    assert abs(path.t1 - 1.0) < 1e-6


def test_nonfinite_trial_stage_is_stepped_around():
    # rhs undefined beyond y = 2, but the solution y = 1 + t stops at t = 0.9
    def rhs(t, y):
        return np.array([1.0 if y[0] < 2.0 else math.nan])
    path = integrate(rhs, [1.0], (0.0, 0.9))
    assert path.termination is Termination.TIME_LIMIT
    assert abs(path.y[-1, 0] - 1.9) < 1e-12


def _fixed_step_error(h):
    # huge tolerances make every step max_step long
    path = integrate(oscillator, [1.0, 0.0], (0.0, 2.0), rtol=1e3, atol=1e3, max_step=h,
                     first_step=h)
    return abs(path.y[-1, 0] - math.cos(2.0)) + abs(path.y[-1, 1] + math.sin(2.0))


def test_observed_order_at_least_four():
    e1, e2 = _fixed_step_error(0.1), _fixed_step_error(0.05)
    assert math.log2(e1 / e2) >= 4.0


def test_tighter_tolerance_never_worse():
    errs = []
    for tol in (1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10):
        path = integrate(oscillator, [1.0, 0.0], (0.0, 10.0), rtol=tol, atol=tol * 1e-2)
        errs.append(abs(path.y[-1, 0] - math.cos(10.0)))
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_time_outside_path_rejected():
    path = integrate(decay(1.0), [1.0], (0.0, 1.0))
    with pytest.raises(ValueError):
        path.state(1.5)


def test_join_and_reverse():
    p1 = integrate(oscillator, [1.0, 0.0], (0.0, 1.0), rtol=1e-11, atol=1e-13)
    p2 = integrate(oscillator, p1.y[-1], (1.0, 2.0), rtol=1e-11, atol=1e-13)
    joined = OrbitPath.join(p1, p2)
    assert joined.t0 == 0.0 and joined.t1 == 2.0
    assert np.allclose(joined.state(1.7), [math.cos(1.7), -math.sin(1.7)], atol=1e-9)
    rev = joined.reversed_time()
    assert rev.t0 == -2.0 and rev.t1 == 0.0
    assert np.allclose(rev.state(-1.7), joined.state(1.7), atol=1e-12)
    with pytest.raises(ValueError):
        OrbitPath.join(p2, p1)


def test_csv_roundtrip(tmp_path):
    path = integrate(oscillator, [1.0, 0.0], (0.0, 1.0))
    f = tmp_path / "p.csv"
    path.to_csv(f)
    data = np.loadtxt(f, delimiter=",", skiprows=1)
    assert np.array_equal(data, path.samples())


@settings(max_examples=25, deadline=None)
@given(x0=st.floats(-2.0, 2.0), v0=st.floats(-2.0, 2.0), T=st.floats(0.1, 10.0))
def test_forward_then_backward_returns_to_start(x0, v0, T):
    fw = integrate(oscillator, [x0, v0], (0.0, T), rtol=1e-11, atol=1e-13)
    bw = integrate(oscillator, fw.y[-1], (T, 0.0), rtol=1e-11, atol=1e-13)
    assert np.max(np.abs(bw.state(0.0) - [x0, v0])) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(r=st.floats(0.2, 3.0), T=st.floats(0.5, 20.0))
def test_oscillator_conserves_energy(r, T):
    path = integrate(oscillator, [r, 0.0], (0.0, T), rtol=1e-11, atol=1e-13)
    energy = np.sum(path.y ** 2, axis=1)
    assert np.max(np.abs(energy - r * r)) <= 1e-8 * r * r


@settings(max_examples=20, deadline=None)
@given(level=st.floats(0.01, 0.9))
def test_level_event_matches_logarithm(level):
    ev = [EventSpec("b_crosses_level", level, "down")]
    path = integrate(lambda t, y: np.array([0.0, -1.0]), [0.0, 1.0], (0.0, 10.0), ev,
                     log_components=(1,))
    assert abs(path.event_time + math.log(level)) < 1e-11
