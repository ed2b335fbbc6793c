"""TOML run configuration.

Every parameter of a pipeline run, including all seeds, lives in one
:class:`RunConfig`; ``cineflight defaults`` prints the full document.  Unknown
keys are rejected so typos never fall back silently to defaults.
"""
from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, fields, replace

import tomli_w

from .errors import CineflightError
from .scene import CameraModel, SceneParams
from .sim import DEFAULT_GAINS, CHANNELS, ChannelGains, PidGains, UavModel
from .trajectory import Pose
from .vo import VoConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_PROMPT = "target(0,0,1); orbit(radius=3, speed=30deg/s, dir=ccw) for 12s"
ALIGN_MODES = ("none", "se3", "sim3")
FLY_SOURCES = ("estimate", "reference")


class ConfigError(CineflightError, ValueError):
    stage = "config"


@dataclass
class RunConfig:
    prompt: str = DEFAULT_PROMPT
    plan_file: str = ""
    align_mode: str = "sim3"
    fly: str = "estimate"  # fly the aligned VO estimate or the reference itself
    figures: bool = True
    start: Pose = Pose(0.0, 3.0, 0.0, 1.0, math.pi)
    dt: float = 0.05
    scene: SceneParams = SceneParams()
    scene_seed: int = 0
    camera: CameraModel = CameraModel()
    noise_sigma: float = 0.0
    outlier_rate: float = 0.0
    render_seed: int = 1
    vo: VoConfig = VoConfig()
    uav: UavModel = UavModel()
    gains: PidGains = DEFAULT_GAINS
    estimator_noise_sigma: float = 0.0
    sim_seed: int = 0

    def __post_init__(self):
        if self.align_mode not in ALIGN_MODES:
            raise ConfigError(f"run.align_mode must be one of {ALIGN_MODES}")
        if self.fly not in FLY_SOURCES:
            raise ConfigError(f"run.fly must be one of {FLY_SOURCES}")

    def to_dict(self) -> dict:
        """TOML-ready nested dict (``None`` values are omitted)."""
        def clean(d):
            return {k: (list(v) if isinstance(v, tuple) else v)
                    for k, v in d.items() if v is not None}

        return {
            "run": {"prompt": self.prompt, "plan_file": self.plan_file,
                    "align_mode": self.align_mode, "fly": self.fly, "figures": self.figures},
            "start": clean(asdict(self.start)),
            "synth": {"dt": self.dt},
            "scene": {**clean(asdict(self.scene)), "seed": self.scene_seed},
            "camera": clean(asdict(self.camera)),
            "render": {"noise_sigma": self.noise_sigma, "outlier_rate": self.outlier_rate,
                       "seed": self.render_seed},
            "vo": clean(asdict(self.vo)),
            "uav": clean(asdict(self.uav)),
            "sim": {"estimator_noise_sigma": self.estimator_noise_sigma, "seed": self.sim_seed},
            "gains": self.gains.to_dict(),
        }

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _take(section: str, doc: dict, cls, extra=()):
    """Build dataclass ``cls`` from ``doc``; ``extra`` keys are returned separately."""
    if not isinstance(doc, dict):
        raise ConfigError(f"[{section}] must be a table")
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names - set(extra)
    if unknown:
        raise ConfigError(f"unknown key {section}.{sorted(unknown)[0]}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items() if k in names}
    try:
        obj = cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None
    return obj, {k: doc[k] for k in extra if k in doc}


def _check_keys(section: str, doc: dict, allowed):
    if not isinstance(doc, dict):
        raise ConfigError(f"[{section}] must be a table")
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key {section}.{sorted(unknown)[0]}")


def from_dict(doc: dict) -> RunConfig:
    _check_keys("config", doc, ("run", "start", "synth", "scene", "camera", "render",
                                "vo", "uav", "sim", "gains"))
    kw = {}
    run = doc.get("run", {})
    _check_keys("run", run, ("prompt", "plan_file", "align_mode", "fly", "figures"))
    kw.update(run)
    if "start" in doc:
        kw["start"], _ = _take("start", doc["start"], Pose)
    synth = doc.get("synth", {})
    _check_keys("synth", synth, ("dt",))
    kw.update(synth)
    if "scene" in doc:
        kw["scene"], extra = _take("scene", doc["scene"], SceneParams, ("seed",))
        if "seed" in extra:
            kw["scene_seed"] = extra["seed"]
    if "camera" in doc:
        kw["camera"], _ = _take("camera", doc["camera"], CameraModel)
    render = doc.get("render", {})
    _check_keys("render", render, ("noise_sigma", "outlier_rate", "seed"))
    kw.update({("render_seed" if k == "seed" else k): v for k, v in render.items()})
    if "vo" in doc:
        kw["vo"], _ = _take("vo", doc["vo"], VoConfig)
    if "uav" in doc:
        kw["uav"], _ = _take("uav", doc["uav"], UavModel)
    sim = doc.get("sim", {})
    _check_keys("sim", sim, ("estimator_noise_sigma", "seed"))
    kw.update({("sim_seed" if k == "seed" else k): v for k, v in sim.items()})
    if "gains" in doc:
        gains = doc["gains"]
        _check_keys("gains", gains, CHANNELS)
        chans = {}
        for c in CHANNELS:
            base = getattr(DEFAULT_GAINS, c)
            sub = gains.get(c, {})
            _check_keys(f"gains.{c}", sub, [f.name for f in fields(ChannelGains)])
            try:
                chans[c] = replace(base, **sub)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[gains.{c}]: {exc}") from None
        kw["gains"] = PidGains(**chans)
    try:
        return RunConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def loads(text: str) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return from_dict(doc)


def load(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    return from_dict(doc)

