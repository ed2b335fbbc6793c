import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cineflight.errors import Diverged
from cineflight.grammar import parse
from cineflight.sim import (DEFAULT_GAINS, GAIN_BOUNDS, ChannelGains, PidGains, PidState,
                            UavModel, UavState, pid_step, simulate_tracking, step_metrics,
                            step_response, tune_default_gains, write_control_log)
from cineflight.trajectory import Pose, Trajectory, synthesize
from conftest import RADIUS, START, straight_line

gains_st = st.builds(ChannelGains, st.floats(0, 50), st.floats(0, 20), st.floats(0, 20),
                     st.floats(0.01, 10), st.floats(0, 0.99))
errors_st = st.lists(st.floats(-100, 100), min_size=1, max_size=50)
dt_st = st.floats(1e-3, 0.1)


def _run(gains, errors, dt):
    state, out = PidState(), []
    for e in errors:
        u, state = pid_step(gains, e, state, dt)
        out.append((u, state))
    return out


@given(gains_st, st.integers(1, 50), dt_st)
def test_zero_error_zero_output(gains, n, dt):
    assert all(u == 0.0 for u, _ in _run(gains, [0.0] * n, dt))


@given(st.floats(0, 50), st.floats(-100, 100), st.integers(1, 30), dt_st)
def test_proportional_only(kp, e, n, dt):
    g = ChannelGains(kp=kp)
    assert all(u == kp * e for u, _ in _run(g, [e] * n, dt))


@pytest.mark.parametrize("i_max", [1.0, 0.5])
def test_trapezoid_closed_form(i_max):
    g = ChannelGains(ki=1.0, i_max=i_max)
    out = _run(g, [1.0] * 100, 0.01)
    for n, (u, _) in enumerate(out, start=1):
        assert math.isclose(u, min(n * 0.01, i_max), rel_tol=1e-12)


def test_trapezoid_ramp():
    # e_k = k dt: trapezoid integral of a ramp is exact
    dt, g = 0.01, ChannelGains(ki=1.0, i_max=100.0)
    errs = [k * dt for k in range(50)]
    for k, (u, _) in enumerate(_run(g, errs, dt)):
        assert math.isclose(u, 0.5 * (k * dt) ** 2, rel_tol=1e-12, abs_tol=1e-15)


@given(gains_st, errors_st, dt_st)
def test_anti_windup(gains, errors, dt):
    for u, st_ in _run(gains, errors, dt):
        assert abs(st_.integral) <= gains.i_max
        assert abs(gains.ki * st_.integral) <= gains.ki * gains.i_max


@given(gains_st, errors_st, dt_st)
def test_derivative_filter(gains, errors, dt):
    d, prev = 0.0, None
    for e, (u, st_) in zip(errors, _run(gains, errors, dt)):
        raw = 0.0 if prev is None else (e - prev) / dt
        d = gains.alpha * d + (1 - gains.alpha) * raw
        assert st_.derivative == d
        prev = e


def test_pid_bad_dt():
    with pytest.raises(ValueError):
        pid_step(ChannelGains(), 1.0, PidState(), 0.0)


@pytest.mark.parametrize("kw", [dict(kp=-1), dict(i_max=0), dict(alpha=1.0), dict(alpha=-0.1)])
def test_gain_validation(kw):
    with pytest.raises(ValueError):
        ChannelGains(**kw)


@pytest.mark.parametrize("kw", [dict(a_max=0), dict(v_max=-1), dict(omega_max=0), dict(dt_sim=0),
                                dict(abort_radius=0), dict(accel_noise_sigma=-1)])
def test_model_validation(kw):
    with pytest.raises(ValueError):
        UavModel(**kw)


def test_default_gains_lookup():
    assert tune_default_gains(UavModel()) is DEFAULT_GAINS
    for ch in DEFAULT_GAINS.channels():
        for name, (lo, hi) in GAIN_BOUNDS.items():
            assert lo <= getattr(ch, name) <= hi
    assert PidGains.from_dict(DEFAULT_GAINS.to_dict()) == DEFAULT_GAINS


@pytest.mark.parametrize("channel", ["x", "y", "z"])
def test_default_step_response(channel):
    t, x = step_response(getattr(DEFAULT_GAINS, channel))
    overshoot, settling = step_metrics(t, x)
    assert overshoot <= 0.20
    assert settling <= 3.0


def test_step_metrics():
    t = np.linspace(0, 4, 401)
    assert step_metrics(t, np.ones_like(t)) == (0.0, 0.0)
    x = 1 - np.exp(-2 * t)
    over, settle = step_metrics(t, x)
    assert over == 0.0
    assert settle == pytest.approx(-math.log(0.02) / 2, abs=0.011)
    assert step_metrics(t, np.zeros_like(t))[1] == math.inf


def test_hold_equilibrium():
    ref = synthesize(parse("target(0,0,1); hold for 5s"), Pose(0.0, 1.0, 2.0, 3.0, 0.5))
    ex, log = simulate_tracking(ref)
    assert np.array_equal(ex.pos, ref.pos) and np.array_equal(ex.yaw, ref.yaw)
    assert np.all(log.error == 0.0) and np.all(log.u == 0.0)


def test_zero_gains_open_loop(orbit_ref):
    ex, log = simulate_tracking(orbit_ref, PidGains())
    assert np.all(ex.pos == orbit_ref.pos[0])
    assert np.all(log.true_pos == orbit_ref.pos[0])
    np.testing.assert_array_equal(log.error[:, :3], log.desired[:, :3] - orbit_ref.pos[0])


def test_orbit_tracking(orbit_ref):
    ex, log = simulate_tracking(orbit_ref)
    rmse = math.sqrt(np.mean(np.sum((ex.pos - orbit_ref.pos) ** 2, axis=1)))
    assert rmse < 0.05 * RADIUS
    assert len(log) == 1200
    assert np.all(np.diff(log.t) > 0)
    assert np.all((log.error[:, 3] > -math.pi) & (log.error[:, 3] <= math.pi))


def test_rate_consistency(orbit_ref):
    a, _ = simulate_tracking(orbit_ref)
    b, _ = simulate_tracking(orbit_ref, model=UavModel(dt_sim=0.005))
    assert np.linalg.norm(a.pos[-1] - b.pos[-1]) < 1e-3


def test_dt_sim_above_reference():
    with pytest.raises(ValueError):
        simulate_tracking(straight_line(dt=0.05), model=UavModel(dt_sim=0.1))


def test_saturation_respected():
    ref = synthesize(parse("target(0,0,1); orbit(radius=4, speed=120deg/s, dir=cw) for 6s"), START)
    model = UavModel(a_max=2.0, v_max=1.5, omega_max=1.0)
    gains = PidGains.uniform(ChannelGains(kp=80, ki=5, kd=20), ChannelGains(kp=40, kd=2))
    _, log = simulate_tracking(ref, gains, model, estimator_noise_sigma=0.05, seed=3)
    assert np.abs(log.u[:, :3]).max() <= model.a_max
    assert np.abs(log.u[:, 3]).max() <= model.omega_max
    assert np.abs(log.true_vel).max() <= model.v_max
    assert np.abs(log.u[:, :3]).max() == model.a_max  # the clamp was actually hit


def _with_yaw(traj, yaw):
    return Trajectory(traj.t, traj.pos, yaw, traj.speed)


def test_yaw_two_pi_bitwise():
    n = 81
    t = np.arange(n) * 0.05
    yaw = np.round(np.linspace(-3.0, 3.0, n) * 64) / 64  # dyadic, so yaw + 2 pi is exact
    pos = np.column_stack([np.cos(t), np.sin(t), 1 + 0.1 * t])
    ref = Trajectory.from_samples(t, pos, yaw)
    assert np.all(ref.yaw == yaw)
    shifted = _with_yaw(ref, yaw + 2 * math.pi)
    for noise in (0.0, 0.01):
        a, la = simulate_tracking(ref, estimator_noise_sigma=noise, seed=4)
        b, lb = simulate_tracking(shifted, estimator_noise_sigma=noise, seed=4)
        for f in ("error", "u", "true_pos", "true_yaw"):
            assert np.array_equal(getattr(la, f), getattr(lb, f))
        assert np.array_equal(a.pos, b.pos) and np.array_equal(a.yaw, b.yaw)


def test_determinism(orbit_ref):
    model = UavModel(wind=(0.2, -0.1, 0.0), accel_noise_sigma=0.3)
    a, la = simulate_tracking(orbit_ref, model=model, estimator_noise_sigma=0.02, seed=9)
    b, lb = simulate_tracking(orbit_ref, model=model, estimator_noise_sigma=0.02, seed=9)
    c, _ = simulate_tracking(orbit_ref, model=model, estimator_noise_sigma=0.02, seed=10)
    assert np.array_equal(a.pos, b.pos)
    for f in ("t", "desired", "estimated", "error", "u", "true_pos", "true_vel", "true_yaw"):
        assert np.array_equal(getattr(la, f), getattr(lb, f))
    assert not np.array_equal(a.pos, c.pos)


def test_estimator_noise_statistics():
    ref = synthesize(parse("target(0,0,1); hold for 30s"), Pose(0.0, 1.0, 0.0, 1.0, 0.0))
    _, log = simulate_tracking(ref, PidGains(), estimator_noise_sigma=0.1, seed=1)
    d = log.estimated[:, :3] - log.true_pos
    assert np.all(np.abs(d.std(axis=0) - 0.1) < 0.01)


def test_wind_offset_with_clamped_integral():
    # once the integral clamps, the steady offset is (wind - ki i_max) / kp
    ref = synthesize(parse("target(0,0,1); hold for 200s"), Pose(0.0, 1.0, 0.0, 1.0, 0.0))
    wind = (0.5, 0.0, -0.3)
    ex, log = simulate_tracking(ref, model=UavModel(wind=wind))
    g = DEFAULT_GAINS.x
    for a, w in enumerate(wind):
        expected = math.copysign(max(abs(w) - g.ki * g.i_max, 0.0), w) / g.kp
        assert ex.pos[-1, a] - ref.pos[-1, a] == pytest.approx(expected, abs=1e-4)
    p_only = np.abs(np.array(wind)) / g.kp
    assert np.all(np.abs(ex.pos[-1] - ref.pos[-1]) <= p_only)


def test_diverged_carries_log():
    t = np.arange(201) * 0.05
    ref = Trajectory.from_samples(t, np.column_stack([10 * t, 0 * t, 0 * t]), 0 * t)
    with pytest.raises(Diverged) as exc:
        simulate_tracking(ref, PidGains(), UavModel(abort_radius=20.0))
    assert exc.value.log is not None and len(exc.value.log) > 0


def test_initial_state():
    ref = synthesize(parse("target(0,0,1); hold for 4s"), Pose(0.0, 0.0, 0.0, 1.0, 0.0))
    init = UavState(np.array([0.5, 0.0, 1.0]), np.array([9.0, 0.0, 0.0]), 7.0)
    _, log = simulate_tracking(ref, initial_state=init)
    assert log.true_vel[0, 0] == UavModel().v_max
    assert -math.pi < log.true_yaw[0] <= math.pi


def test_control_log_csv(tmp_path, orbit_ref):
    _, log = simulate_tracking(orbit_ref)
    write_control_log(tmp_path / "log.csv", log)
    with open(tmp_path / "log.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:5] == ["t", "x_des", "x_est", "x_err", "x_u"]
    assert len(rows[0]) == 1 + 16 + 7
    assert len(rows) == len(log) + 1
    assert float(rows[1][0]) == log.t[0]
