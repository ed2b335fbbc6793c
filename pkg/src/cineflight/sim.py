"""Closed-loop PID tracking of a reference trajectory on a simulated UAV.

Plant: one double integrator per position axis (acceleration command
clamped to ``a_max``, velocity clamped to ``v_max``, integrated exactly over
each zero-order-hold step) plus a rate-commanded yaw channel.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import Diverged
from .geometry import wrap_angle
from .trajectory import Trajectory

CHANNELS = ("x", "y", "z", "yaw")


@dataclass(frozen=True)
class ChannelGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    i_max: float = 1.0
    alpha: float = 0.9  # derivative low-pass coefficient

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError("PID gains must be >= 0")
        if not self.i_max > 0:
            raise ValueError("i_max must be > 0")
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError("alpha must lie in [0, 1)")


@dataclass(frozen=True)
class PidGains:
    x: ChannelGains = ChannelGains()
    y: ChannelGains = ChannelGains()
    z: ChannelGains = ChannelGains()
    yaw: ChannelGains = ChannelGains()

    def channels(self) -> tuple[ChannelGains, ...]:
        return (self.x, self.y, self.z, self.yaw)

    @classmethod
    def uniform(cls, position: ChannelGains, yaw: ChannelGains) -> "PidGains":
        return cls(position, position, position, yaw)

    def to_dict(self) -> dict:
        return {c: vars(g).copy() for c, g in zip(CHANNELS, self.channels())}

    @classmethod
    def from_dict(cls, doc: dict) -> "PidGains":
        base = DEFAULT_GAINS
        return cls(**{c: replace(getattr(base, c), **doc.get(c, {})) for c in CHANNELS})


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float | None = None
    derivative: float = 0.0


def pid_step(gains: ChannelGains, error: float, state: PidState, dt: float):
    """One discrete PID update; returns ``(u, new_state)``.

    Integral: trapezoidal, clamped to ``±i_max`` (the first step treats the
    previous error as equal to the current one).  Derivative: backward
    difference of the error, low-passed as ``d = a*d_prev + (1-a)*raw``
    (zero raw derivative on the first step).
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    prev = error if state.prev_error is None else state.prev_error
    integral = state.integral + 0.5 * (error + prev) * dt
    integral = min(gains.i_max, max(-gains.i_max, integral))
    raw = (error - prev) / dt
    deriv = gains.alpha * state.derivative + (1.0 - gains.alpha) * raw
    u = gains.kp * error + gains.ki * integral + gains.kd * deriv
    return u, PidState(integral, error, deriv)


@dataclass(frozen=True)
class UavModel:
    a_max: float = 4.0  # m/s^2, per axis
    v_max: float = 5.0  # m/s, per axis
    omega_max: float = math.pi  # rad/s
    dt_sim: float = 0.01  # s
    wind: tuple[float, float, float] = (0.0, 0.0, 0.0)  # m/s^2
    accel_noise_sigma: float = 0.0  # m/s^2
    abort_radius: float = 50.0  # m

    def __post_init__(self):
        if not (self.a_max > 0 and self.v_max > 0 and self.omega_max > 0):
            raise ValueError("a_max, v_max and omega_max must be > 0")
        if not self.dt_sim > 0:
            raise ValueError("dt_sim must be > 0")
        if not self.abort_radius > 0:
            raise ValueError("abort_radius must be > 0")
        if self.accel_noise_sigma < 0:
            raise ValueError("accel_noise_sigma must be >= 0")


# Tuned once on the default model with scripts/tune_gains.py (grid search
# minimizing orbit RMSE subject to the step-response bounds).  Yaw gains
# are hand-set: the yaw channel is a pure rate integrator.
DEFAULT_GAINS = PidGains(
    x=ChannelGains(kp=30.0, ki=0.5, kd=8.0, i_max=0.5, alpha=0.9),
    y=ChannelGains(kp=30.0, ki=0.5, kd=8.0, i_max=0.5, alpha=0.9),
    z=ChannelGains(kp=30.0, ki=0.5, kd=8.0, i_max=0.5, alpha=0.9),
    yaw=ChannelGains(kp=6.0, ki=0.5, kd=0.2, i_max=0.5, alpha=0.9),
)
GAIN_BOUNDS = {"kp": (0.0, 50.0), "ki": (0.0, 20.0), "kd": (0.0, 20.0)}


def tune_default_gains(model: UavModel = UavModel()) -> PidGains:
    """The repository's documented default gains (a pure lookup)."""
    return DEFAULT_GAINS


@dataclass
class UavState:
    pos: np.ndarray
    vel: np.ndarray
    yaw: float

    def copy(self) -> "UavState":
        return UavState(self.pos.copy(), self.vel.copy(), self.yaw)


@dataclass
class ControlLog:
    """Per control step; yaw entries are wrapped to (-pi, pi]."""
    t: np.ndarray  # (K,)
    desired: np.ndarray  # (K, 4) x, y, z, yaw
    estimated: np.ndarray  # (K, 4)
    error: np.ndarray  # (K, 4)
    u: np.ndarray  # (K, 4) ax, ay, az (clamped) and yaw rate (clamped)
    true_pos: np.ndarray  # (K, 3)
    true_vel: np.ndarray  # (K, 3)
    true_yaw: np.ndarray  # (K,)

    def __len__(self):
        return len(self.t)


@dataclass
class _LogBuffer:
    rows: list = field(default_factory=list)

    def freeze(self) -> ControlLog:
        if not self.rows:
            z4, z3 = np.zeros((0, 4)), np.zeros((0, 3))
            return ControlLog(np.zeros(0), z4, z4, z4, z4, z3, z3, np.zeros(0))
        cols = list(zip(*self.rows))
        return ControlLog(np.array(cols[0]), np.array(cols[1]), np.array(cols[2]),
                          np.array(cols[3]), np.array(cols[4]), np.array(cols[5]),
                          np.array(cols[6]), np.array(cols[7]))


def _integrate_axis(p: float, v: float, a: float, dt: float, v_max: float):
    """Exact double-integrator step with the velocity clamped to ``±v_max``."""
    v_end = v + a * dt
    if abs(v_end) <= v_max:
        return p + v * dt + 0.5 * a * dt * dt, v_end
    lim = math.copysign(v_max, v_end)
    tau = (lim - v) / a if a != 0 else 0.0
    tau = min(dt, max(0.0, tau))
    return p + v * tau + 0.5 * a * tau * tau + lim * (dt - tau), lim


class _Setpoints:
    """Linear position / shortest-arc yaw interpolation of the reference."""

    def __init__(self, ref: Trajectory):
        self.t = ref.t
        self.pos = ref.pos
        self.yaw = np.array([wrap_angle(float(y)) for y in ref.yaw])
        self.dyaw = np.array([wrap_angle(float(b - a)) for a, b in zip(self.yaw[:-1], self.yaw[1:])])

    def __call__(self, t: float):
        n = len(self.t)
        if n == 1 or t <= self.t[0]:
            return self.pos[0].copy(), float(self.yaw[0])
        if t >= self.t[-1]:
            return self.pos[-1].copy(), float(self.yaw[-1])
        k = int(np.searchsorted(self.t, t, side="right")) - 1
        s = (t - self.t[k]) / (self.t[k + 1] - self.t[k])
        pos = self.pos[k] + s * (self.pos[k + 1] - self.pos[k])
        return pos, wrap_angle(float(self.yaw[k] + s * self.dyaw[k]))


def simulate_tracking(reference: Trajectory, gains: PidGains = DEFAULT_GAINS,
                      model: UavModel = UavModel(), estimator_noise_sigma: float = 0.0,
                      seed: int = 0, initial_state: UavState | None = None):
    """Fly ``reference`` with per-axis PID; returns ``(executed, log)``.

    The UAV starts at rest on the first reference pose unless
    ``initial_state`` is given.  Control runs every ``model.dt_sim`` seconds
    against interpolated setpoints; the estimate fed to the controller is
    the true state plus Gaussian noise (``estimator_noise_sigma`` on x, y, z
    in metres and on yaw in radians).  The executed trajectory is sampled
    back onto the reference timestamps.
    """
    if len(reference) == 0:
        raise ValueError("reference is empty")
    if len(reference) > 1 and model.dt_sim > reference.dt + 1e-12:
        raise ValueError(f"dt_sim {model.dt_sim} exceeds the reference dt {reference.dt}")
    if estimator_noise_sigma < 0:
        raise ValueError("estimator_noise_sigma must be >= 0")
    setpoint = _Setpoints(reference)
    dt = model.dt_sim
    t0 = float(reference.t[0])
    n_steps = int(math.ceil((float(reference.t[-1]) - t0) / dt - 1e-9))
    est_rng = np.random.default_rng([seed, 0])
    dist_rng = np.random.default_rng([seed, 1])
    wind = np.asarray(model.wind, dtype=float)

    if initial_state is None:
        state = UavState(reference.pos[0].astype(float).copy(), np.zeros(3), float(setpoint.yaw[0]))
    else:
        state = initial_state.copy()
        state.vel = np.clip(state.vel, -model.v_max, model.v_max)
        state.yaw = wrap_angle(state.yaw)
    pid = [PidState() for _ in CHANNELS]
    chans = gains.channels()
    buf = _LogBuffer()
    ts = [t0]
    pos_hist = [state.pos.copy()]
    yaw_hist = [state.yaw]

    for i in range(n_steps):
        t = t0 + i * dt
        des_pos, des_yaw = setpoint(t)
        est_pos, est_yaw = state.pos, state.yaw
        if estimator_noise_sigma > 0:
            noise = est_rng.normal(0.0, estimator_noise_sigma, 4)
            est_pos = est_pos + noise[:3]
            est_yaw = wrap_angle(est_yaw + noise[3])
        err = np.empty(4)
        err[:3] = des_pos - est_pos
        err[3] = wrap_angle(des_yaw - est_yaw)
        if np.linalg.norm(des_pos - state.pos) > model.abort_radius:
            raise Diverged(f"position error exceeded {model.abort_radius} m at t={t:.3f} s",
                           buf.freeze())
        u = np.empty(4)
        for c in range(4):
            u[c], pid[c] = pid_step(chans[c], float(err[c]), pid[c], dt)
        u[:3] = np.clip(u[:3], -model.a_max, model.a_max)
        u[3] = min(model.omega_max, max(-model.omega_max, u[3]))
        buf.rows.append((t, np.array([*des_pos, des_yaw]), np.array([*est_pos, est_yaw]),
                         err, u.copy(), state.pos.copy(), state.vel.copy(), state.yaw))

        acc = u[:3] + wind
        if model.accel_noise_sigma > 0:
            acc = acc + dist_rng.normal(0.0, model.accel_noise_sigma, 3)
        for a in range(3):
            state.pos[a], state.vel[a] = _integrate_axis(
                float(state.pos[a]), float(state.vel[a]), float(acc[a]), dt, model.v_max)
        state.yaw = wrap_angle(state.yaw + u[3] * dt)
        if not np.all(np.isfinite(state.pos)):
            raise Diverged(f"non-finite state at t={t + dt:.3f} s", buf.freeze())
        ts.append(t0 + (i + 1) * dt)
        pos_hist.append(state.pos.copy())
        yaw_hist.append(state.yaw)

    ts = np.array(ts)
    pos_hist = np.array(pos_hist)
    yaw_unwrapped = np.unwrap(np.array(yaw_hist))
    t_ref = reference.t
    pos = np.column_stack([np.interp(t_ref, ts, pos_hist[:, a]) for a in range(3)])
    yaw = np.interp(t_ref, ts, yaw_unwrapped)
    executed = Trajectory.from_samples(t_ref, pos, yaw)
    return executed, buf.freeze()


# --------------------------------------------------------------------------
# step-response harness


def step_response(gains: ChannelGains, model: UavModel = UavModel(), step: float = 1.0,
                  duration: float = 6.0) -> tuple[np.ndarray, np.ndarray]:
    """Single position axis from rest at 0 towards a constant setpoint ``step``."""
    dt = model.dt_sim
    n = int(round(duration / dt))
    p = v = 0.0
    st = PidState()
    ts, xs = [0.0], [0.0]
    for i in range(n):
        u, st = pid_step(gains, step - p, st, dt)
        u = min(model.a_max, max(-model.a_max, u))
        p, v = _integrate_axis(p, v, u, dt, model.v_max)
        ts.append((i + 1) * dt)
        xs.append(p)
    return np.array(ts), np.array(xs)


def step_metrics(t, x, step: float = 1.0, band: float = 0.02) -> tuple[float, float]:
    """``(overshoot fraction, settling time)``; settling is the last exit from the band."""
    x = np.asarray(x)
    overshoot = max(0.0, float((x.max() - step) / step))
    outside = np.nonzero(np.abs(x - step) > band * abs(step))[0]
    if len(outside) == 0:
        return overshoot, 0.0
    last = outside[-1]
    settling = float(t[last + 1]) if last + 1 < len(t) else math.inf
    return overshoot, settling


# --------------------------------------------------------------------------
# files


def write_control_log(path, log: ControlLog) -> None:
    """``control_log.csv``: t, per channel desired/estimated/error/u, true state."""
    header = ["t"]
    for c in CHANNELS:
        header += [f"{c}_des", f"{c}_est", f"{c}_err", f"{c}_u"]
    header += ["x_true", "y_true", "z_true", "yaw_true", "vx_true", "vy_true", "vz_true"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(log)):
            row = [log.t[k]]
            for c in range(4):
                row += [log.desired[k, c], log.estimated[k, c], log.error[k, c], log.u[k, c]]
            row += [*log.true_pos[k], log.true_yaw[k], *log.true_vel[k]]
            w.writerow([f"{float(v):.9g}" for v in row])
