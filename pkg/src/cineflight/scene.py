"""Synthetic landmark scenes and pinhole rendering of feature tracks.

Camera frame: z forward, x right, y down.  The camera body follows the
trajectory yaw and is tilted down by ``mount_pitch``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BadParams
from .trajectory import Trajectory

MIN_LANDMARKS = 8
MIN_DEPTH = 0.1


@dataclass(frozen=True)
class SceneParams:
    count: int = 300
    inner_radius: float = 1.0
    outer_radius: float = 8.0
    z_min: float = 0.0
    z_max: float = 4.0
    center: tuple[float, float, float] = (0.0, 0.0, 1.0)


@dataclass
class Scene:
    ids: np.ndarray  # (N,) int
    points: np.ndarray  # (N, 3)
    params: SceneParams
    seed: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "params": {**asdict(self.params), "center": list(self.params.center)},
            "landmarks": [[int(i), *map(float, p)] for i, p in zip(self.ids, self.points)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scene":
        params = dict(doc["params"])
        params["center"] = tuple(params["center"])
        lm = doc["landmarks"]
        ids = np.array([int(r[0]) for r in lm], dtype=int)
        if len(set(ids.tolist())) != len(ids):
            raise BadParams("landmark ids must be unique")
        pts = np.array([r[1:4] for r in lm], dtype=float).reshape(-1, 3)
        return cls(ids, pts, SceneParams(**params), int(doc["seed"]))


@dataclass(frozen=True)
class CameraModel:
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    mount_pitch: float = 0.0  # rad, positive tilts the optical axis down

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise BadParams("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise BadParams("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def normalize(self, uv) -> np.ndarray:
        """Pixels (N, 2) -> normalized image coordinates (N, 2)."""
        uv = np.asarray(uv, dtype=float)
        return np.column_stack([(uv[:, 0] - self.cx) / self.fx, (uv[:, 1] - self.cy) / self.fy])

    def in_bounds(self, uv) -> np.ndarray:
        return ((uv[:, 0] >= 0) & (uv[:, 0] < self.width)
                & (uv[:, 1] >= 0) & (uv[:, 1] < self.height))


@dataclass
class Frame:
    t: float
    ids: np.ndarray  # (M,) int
    uv: np.ndarray  # (M, 2) pixels


@dataclass
class ObservationSequence:
    frames: list[Frame]
    camera: CameraModel
    noise_sigma: float
    degenerate_frames: list[int] = field(default_factory=list)


def generate_scene(params: SceneParams = SceneParams(), seed: int = 0) -> Scene:
    """Landmarks uniform over an annulus around ``params.center``."""
    if params.count < MIN_LANDMARKS:
        raise BadParams(f"count must be >= {MIN_LANDMARKS}, got {params.count}")
    if not (0 <= params.inner_radius <= params.outer_radius):
        raise BadParams("need 0 <= inner_radius <= outer_radius")
    if params.z_min > params.z_max:
        raise BadParams("need z_min <= z_max")
    rng = np.random.default_rng(seed)
    n = params.count
    r = np.sqrt(rng.uniform(params.inner_radius**2, params.outer_radius**2, n))
    a = rng.uniform(-math.pi, math.pi, n)
    z = rng.uniform(params.z_min, params.z_max, n)
    cx, cy, _ = params.center
    pts = np.column_stack([cx + r * np.cos(a), cy + r * np.sin(a), z])
    return Scene(np.arange(n), pts, params, seed)


def camera_rotation(yaw: float, pitch: float = 0.0) -> np.ndarray:
    """World-from-camera rotation with columns (right, down, forward)."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = np.array([cy * cp, sy * cp, -sp])
    right = np.array([sy, -cy, 0.0])
    down = np.cross(forward, right)
    return np.column_stack([right, down, forward])


def project(points, R_wc, center, camera: CameraModel):
    """Pinhole projection; returns (pixels (N, 2), depths (N,))."""
    pc = (np.asarray(points, dtype=float) - center) @ R_wc
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.column_stack([camera.fx * pc[:, 0] / z + camera.cx,
                              camera.fy * pc[:, 1] / z + camera.cy])
    return uv, z


def camera_poses(traj: Trajectory, camera: CameraModel):
    """World-from-camera rotations (N, 3, 3) and centres (N, 3)."""
    Rs = np.stack([camera_rotation(y, camera.mount_pitch) for y in traj.yaw])
    return Rs, traj.pos.copy()


def render(scene: Scene, traj: Trajectory, camera: CameraModel = CameraModel(),
           noise_sigma: float = 0.0, seed: int = 0,
           outlier_rate: float = 0.0) -> ObservationSequence:
    """Project every landmark into every frame of ``traj``.

    Visibility uses the exact projection (depth > 0.1 m, inside the image).
    Noise is drawn from a per-frame generator seeded by ``(seed, frame)``;
    a noisy measurement pushed outside the image is dropped.  With
    ``outlier_rate`` > 0 that fraction of measurements is replaced by
    uniformly random pixels.
    """
    if len(traj) == 0:
        raise BadParams("trajectory is empty")
    if noise_sigma < 0 or not (0.0 <= outlier_rate < 1.0):
        raise BadParams("noise_sigma must be >= 0 and outlier_rate in [0, 1)")
    Rs, Cs = camera_poses(traj, camera)
    frames, degenerate = [], []
    for k in range(len(traj)):
        uv, depth = project(scene.points, Rs[k], Cs[k], camera)
        vis = (depth > MIN_DEPTH)
        vis[vis] = camera.in_bounds(uv[vis])
        ids, uv = scene.ids[vis], uv[vis]
        if noise_sigma > 0 or outlier_rate > 0:
            rng = np.random.default_rng([seed, k])
            if noise_sigma > 0:
                uv = uv + rng.normal(0.0, noise_sigma, uv.shape)
            if outlier_rate > 0:
                bad = rng.random(len(ids)) < outlier_rate
                uv[bad] = rng.uniform([0, 0], [camera.width, camera.height], (int(bad.sum()), 2))
            keep = camera.in_bounds(uv)
            ids, uv = ids[keep], uv[keep]
        if len(ids) < MIN_LANDMARKS:
            degenerate.append(k)
        frames.append(Frame(float(traj.t[k]), ids, uv))
    return ObservationSequence(frames, camera, noise_sigma, degenerate)


# --------------------------------------------------------------------------
# files


def write_scene_json(path, scene: Scene) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(scene.to_dict(), fh, indent=1)
        fh.write("\n")


def read_scene_json(path) -> Scene:
    with open(path, encoding="utf-8") as fh:
        return Scene.from_dict(json.load(fh))


def write_observations(path, obs: ObservationSequence) -> None:
    """``observations.jsonl``: one ``{"t": ..., "obs": [[id, u, v], ...]}`` per frame."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for fr in obs.frames:
            rows = [[int(i), float(u), float(v)] for i, (u, v) in zip(fr.ids, fr.uv)]
            fh.write(json.dumps({"t": fr.t, "obs": rows}, separators=(",", ":")))
            fh.write("\n")


def read_observations(path, camera: CameraModel = CameraModel(),
                      noise_sigma: float = 0.0) -> ObservationSequence:
    frames = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            rows = doc["obs"]
            ids = np.array([int(r[0]) for r in rows], dtype=int)
            uv = np.array([r[1:3] for r in rows], dtype=float).reshape(-1, 2)
            frames.append(Frame(float(doc["t"]), ids, uv))
    degenerate = [k for k, f in enumerate(frames) if len(f.ids) < MIN_LANDMARKS]
    return ObservationSequence(frames, camera, noise_sigma, degenerate)
