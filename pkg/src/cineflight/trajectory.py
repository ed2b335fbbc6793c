"""Compile a ShotPlan into a uniformly sampled reference trajectory.

World frame is right-handed with z up; yaw is the heading in the xy plane,
zero along +x and positive counterclockwise, stored wrapped to (-pi, pi].
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasiblePlan, TooShort
from .geometry import wrap_angle, wrap_angles
from .grammar import DollyToward, Hold, Orbit, PanOrbit, Reveal, ShotPlan

log = logging.getLogger(__name__)

DEFAULT_DT = 0.05


@dataclass(frozen=True)
class Pose:
    t: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass
class Trajectory:
    """Pose samples on a uniform time grid plus their speeds.

    ``pos`` is (N, 3); ``t``, ``yaw`` and ``speed`` are (N,).
    """
    t: np.ndarray
    pos: np.ndarray
    yaw: np.ndarray
    speed: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @classmethod
    def from_samples(cls, t, pos, yaw, warnings=None) -> "Trajectory":
        t = np.asarray(t, dtype=float)
        pos = np.asarray(pos, dtype=float).reshape(-1, 3)
        yaw = wrap_angles(yaw)
        if not (len(t) == len(pos) == len(yaw)):
            raise ValueError("t, pos and yaw must have equal length")
        return cls(t, pos, yaw, sample_speeds(t, pos), list(warnings or []))

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        if len(self.t) < 2:
            return 0.0
        return float((self.t[-1] - self.t[0]) / (len(self.t) - 1))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def pose(self, i: int) -> Pose:
        x, y, z = self.pos[i]
        return Pose(float(self.t[i]), float(x), float(y), float(z), float(self.yaw[i]))

    def poses(self) -> list[Pose]:
        return [self.pose(i) for i in range(len(self))]


@dataclass(frozen=True)
class StateActionPair:
    """State s_t = (pose, speed) and the finite-difference command to s_{t+1}."""
    state: Pose
    speed: float
    velocity: tuple[float, float, float]
    yaw_rate: float


def sample_speeds(t, pos) -> np.ndarray:
    """Central differences inside, one-sided at the endpoints."""
    if len(t) < 2:
        return np.zeros(len(t))
    dt = (t[-1] - t[0]) / (len(t) - 1)
    vel = np.gradient(pos, dt, axis=0)
    return np.linalg.norm(vel, axis=1)


# --------------------------------------------------------------------------
# primitive curves: each maps local time tau (array, may be < 0 or > D
# for blend extrapolation) to (positions (n, 3), yaws (n,))


def _look_at(pos, target):
    return np.arctan2(target[1] - pos[:, 1], target[0] - pos[:, 0])


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _curve(prim, duration, target, p0, yaw0, warnings):
    target = np.asarray(target, dtype=float)
    p0 = np.asarray(p0, dtype=float)

    if isinstance(prim, (Orbit, PanOrbit)):
        dx, dy = p0[0] - target[0], p0[1] - target[1]
        if math.hypot(dx, dy) < 1e-12:
            warnings.append("orbit start is above the target; phase set to 0")
            log.warning(warnings[-1])
            theta0 = 0.0
        else:
            theta0 = math.atan2(dy, dx)
        climb = prim.climb_rate if isinstance(prim, Orbit) else 0.0
        r, w = prim.radius, prim.sign * prim.angular_speed

        def f(tau):
            th = theta0 + w * tau
            pos = np.column_stack([target[0] + r * np.cos(th),
                                   target[1] + r * np.sin(th),
                                   p0[2] + climb * tau])
            yaw = _look_at(pos, target)
            if isinstance(prim, PanOrbit):
                yaw = yaw + prim.pan_offset * _smoothstep(tau / duration)
            return pos, yaw
        return f

    if isinstance(prim, DollyToward):
        d = target - p0
        dist = float(np.linalg.norm(d))
        if dist < prim.stop_distance:
            raise InfeasiblePlan(
                f"dolly starts {dist:.3f} m from target, inside stop distance "
                f"{prim.stop_distance} m")
        u = d / dist if dist > 0 else np.zeros(3)
        travel = dist - prim.stop_distance
        overhead = math.hypot(d[0], d[1]) < 1e-9

        def f(tau):
            s = np.minimum(prim.speed * tau, travel)
            pos = p0 + s[:, None] * u
            yaw = np.full(len(tau), yaw0) if overhead else _look_at(pos, target)
            return pos, yaw
        return f

    if isinstance(prim, Reveal):
        h = p0[:2] - target[:2]
        hn = float(np.linalg.norm(h))
        away = h / hn if hn > 1e-9 else -np.array([math.cos(yaw0), math.sin(yaw0)])

        def f(tau):
            pos = np.column_stack([p0[0] + away[0] * prim.retreat_speed * tau,
                                   p0[1] + away[1] * prim.retreat_speed * tau,
                                   p0[2] + prim.climb_rate * tau])
            return pos, _look_at(pos, target)
        return f

    if isinstance(prim, Hold):
        def f(tau):
            return np.tile(p0, (len(tau), 1)), np.full(len(tau), yaw0)
        return f

    raise TypeError(f"unknown primitive {prim!r}")


def _cosine_ramp(s):
    return 0.5 * (1.0 - np.cos(np.pi * np.clip(s, 0.0, 1.0)))


def synthesize(plan: ShotPlan, start_pose: Pose, dt: float = DEFAULT_DT) -> Trajectory:
    """Sample the plan every ``dt`` seconds starting at ``start_pose``.

    Each segment starts from the unblended end pose of the previous one.
    Joins are cross-faded over ``plan.blend_duration`` (centred on the join)
    with a cosine ramp applied to the two segments' extrapolated curves.
    """
    if not (0.01 <= dt <= 0.5):
        raise ValueError(f"dt must lie in [0.01, 0.5], got {dt}")
    p0 = np.array([start_pose.x, start_pose.y, start_pose.z], dtype=float)
    if not (np.all(np.isfinite(p0)) and math.isfinite(start_pose.yaw)
            and math.isfinite(start_pose.t)):
        raise ValueError("start pose must be finite")

    warnings: list[str] = []
    curves, starts = [], []
    t_seg, yaw = 0.0, wrap_angle(start_pose.yaw)
    for seg in plan.segments:
        f = _curve(seg.primitive, seg.duration, plan.target, p0, yaw, warnings)
        curves.append(f)
        starts.append(t_seg)
        end_pos, end_yaw = f(np.array([seg.duration]))
        p0, yaw = end_pos[0], float(end_yaw[0])
        t_seg += seg.duration
    total = t_seg

    n = int(math.ceil(total / dt - 1e-9)) + 1
    tau = np.arange(n) * dt
    idx = np.clip(np.searchsorted(starts, tau, side="right") - 1, 0, len(curves) - 1)

    pos = np.empty((n, 3))
    yaws = np.empty(n)
    for k, f in enumerate(curves):
        m = idx == k
        if m.any():
            pos[m], yaws[m] = f(tau[m] - starts[k])

    half = plan.blend_duration / 2.0
    if half > 0:
        for k in range(1, len(curves)):
            tj = starts[k]
            m = (tau > tj - half) & (tau < tj + half)
            if not m.any():
                continue
            w = _cosine_ramp((tau[m] - (tj - half)) / (2 * half))
            pa, ya = curves[k - 1](tau[m] - starts[k - 1])
            pb, yb = curves[k](tau[m] - tj)
            pos[m] = (1.0 - w)[:, None] * pa + w[:, None] * pb
            yaws[m] = ya + w * wrap_angles(yb - ya)

    return Trajectory.from_samples(start_pose.t + tau, pos, yaws, warnings)


def segment_windows(plan: ShotPlan) -> list[tuple[float, float, float, float]]:
    """Per segment: (start, end, unblended start, unblended end) in plan time."""
    out, t, half = [], 0.0, plan.blend_duration / 2.0
    segs = plan.segments
    for k, seg in enumerate(segs):
        lo = t + (half if k > 0 else 0.0)
        hi = t + seg.duration - (half if k < len(segs) - 1 else 0.0)
        out.append((t, t + seg.duration, lo, hi))
        t += seg.duration
    return out


def state_action_pairs(traj: Trajectory) -> list[StateActionPair]:
    """Forward differences between consecutive samples.

    Integrating pair ``k``'s action over ``dt`` from its state lands on
    sample ``k + 1``.
    """
    if len(traj) < 2:
        raise TooShort("need at least two samples")
    vel, yaw_rate = actions(traj)
    return [StateActionPair(traj.pose(k), float(traj.speed[k]),
                            tuple(float(v) for v in vel[k]), float(yaw_rate[k]))
            for k in range(len(traj) - 1)]


def actions(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Array form of the actions: velocities (N-1, 3) and yaw rates (N-1,)."""
    if len(traj) < 2:
        raise TooShort("need at least two samples")
    h = np.diff(traj.t)
    vel = np.diff(traj.pos, axis=0) / h[:, None]
    yaw_rate = wrap_angles(np.diff(traj.yaw)) / h
    return vel, yaw_rate


def resample(traj: Trajectory, new_dt: float) -> Trajectory:
    """Linear position / shortest-arc yaw interpolation onto a new grid.

    The grid always ends on the last input timestamp; when the span is not a
    whole number of ``new_dt`` steps the spacing is stretched slightly to the
    nearest whole count.
    """
    if not (0.001 <= new_dt <= 0.5):
        raise ValueError(f"new_dt must lie in [0.001, 0.5], got {new_dt}")
    if len(traj) < 2:
        raise TooShort("need at least two samples")
    span = traj.t[-1] - traj.t[0]
    n = max(1, int(round(span / new_dt)))
    if n == len(traj) - 1 and math.isclose(span / n, traj.dt, rel_tol=1e-12):
        return Trajectory(traj.t.copy(), traj.pos.copy(), traj.yaw.copy(),
                          traj.speed.copy(), list(traj.warnings))
    t_new = traj.t[0] + np.arange(n + 1) * (span / n)
    t_new[-1] = traj.t[-1]
    pos = np.column_stack([np.interp(t_new, traj.t, traj.pos[:, i]) for i in range(3)])
    yaw = np.interp(t_new, traj.t, np.unwrap(traj.yaw))
    pos[0], pos[-1] = traj.pos[0], traj.pos[-1]
    yaw[0], yaw[-1] = traj.yaw[0], traj.yaw[-1]
    return Trajectory.from_samples(t_new, pos, yaw, traj.warnings)


def interpolate(traj: Trajectory, times) -> tuple[np.ndarray, np.ndarray]:
    """Positions and yaws at arbitrary times inside the trajectory span."""
    times = np.asarray(times, dtype=float)
    pos = np.column_stack([np.interp(times, traj.t, traj.pos[:, i]) for i in range(3)])
    if len(traj) < 2:
        return pos, np.full(times.shape, traj.yaw[0] if len(traj) else np.nan)
    # step from the left sample by the wrapped increment: exact at sample times
    i = np.clip(np.searchsorted(traj.t, times, side="right") - 1, 0, len(traj) - 2)
    s = np.clip((times - traj.t[i]) / (traj.t[i + 1] - traj.t[i]), 0.0, 1.0)
    step = wrap_angles(traj.yaw[i + 1] - traj.yaw[i])
    yaw = wrap_angles(traj.yaw[i] + s * step)
    return pos, yaw
