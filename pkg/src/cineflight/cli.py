"""``cineflight`` command line: stage subcommands plus the end-to-end pipeline.

Exit codes: 0 success, 2 usage / parse / format / config error, 3 pipeline
stage failure (the failing stage is named on stderr).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, config as cfgmod
from .errors import CineflightError, FormatError, ShotSyntaxError, ValidationError
from .grammar import parse, plan_from_dict, plan_to_dict, serialize
from .metrics import apply_alignment, compare, write_metrics_json
from .overlay import render_overlay, write_overlay
from .scene import generate_scene, read_observations, render, write_observations, write_scene_json
from .sim import simulate_tracking, write_control_log
from .trajectory import Pose, synthesize
from .trajio import read_traj_csv, write_traj_csv
from .vo import as_trajectory, estimate_trajectory, write_map_json

log = logging.getLogger("cineflight")

EXIT_OK, EXIT_USAGE, EXIT_STAGE = 0, 2, 3
USAGE_ERRORS = (ShotSyntaxError, ValidationError, FormatError, cfgmod.ConfigError)


class StageFailed(Exception):
    def __init__(self, stage: str, error: BaseException):
        super().__init__(f"stage {stage} failed: {type(error).__name__}: {error}")
        self.stage = stage
        self.error = error


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _load_plan(cfg: cfgmod.RunConfig):
    if cfg.plan_file:
        path = Path(cfg.plan_file)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".json":
            return plan_from_dict(json.loads(text))
        return parse(text)
    return parse(cfg.prompt)


# --------------------------------------------------------------------------
# pipeline


class _Run:
    """Stage bookkeeping: wall time and output digests, in order."""

    def __init__(self, out: Path):
        self.out = out
        self.stages: list[dict] = []

    def stage(self, name: str, fn, outputs: list[str]):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:  # noqa: BLE001 - reported with the stage name
            self.stages.append({"name": name, "seconds": time.perf_counter() - t0,
                                "status": "failed", "error": f"{type(exc).__name__}: {exc}",
                                "outputs": self._digests(outputs, missing_ok=True)})
            raise StageFailed(name, exc) from exc
        self.stages.append({"name": name, "seconds": time.perf_counter() - t0,
                            "status": "ok", "outputs": self._digests(outputs)})
        return result

    def _digests(self, outputs, missing_ok=False):
        out = {}
        for rel in outputs:
            p = self.out / rel
            if p.exists():
                out[rel] = sha256_file(p)
            elif not missing_ok:
                raise FileNotFoundError(p)
        return out

    def digests(self) -> dict[str, str]:
        return {k: v for s in self.stages for k, v in s["outputs"].items()}


def run_pipeline(cfg: cfgmod.RunConfig, out_dir) -> dict:
    """Run every stage into ``out_dir``; returns the manifest document.

    On a stage failure the artifacts written so far and a manifest marking
    the failed stage are kept, and :class:`StageFailed` is raised.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(out)
    state: dict = {}

    def plan_stage():
        plan = _load_plan(cfg)
        _write_json(out / "plan.json", plan_to_dict(plan))
        state["plan"] = plan

    def synth_stage():
        ref = synthesize(state["plan"], cfg.start, cfg.dt)
        write_traj_csv(out / "traj_ref.csv", ref)
        state["ref"] = ref

    def render_stage():
        scene = generate_scene(cfg.scene, cfg.scene_seed)
        write_scene_json(out / "scene.json", scene)
        obs = render(scene, state["ref"], cfg.camera, cfg.noise_sigma, cfg.render_seed,
                     cfg.outlier_rate)
        write_observations(out / "observations.jsonl", obs)
        state["obs"] = obs

    def extract_stage():
        est, mp = estimate_trajectory(state["obs"], cfg.vo)
        ref = state["ref"]
        report = compare(ref, est, cfg.align_mode)
        write_traj_csv(out / "traj_est.csv", as_trajectory(est), est.status)
        write_map_json(out / "map.json", mp, report.alignment)
        state.update(est=est, est_report=report,
                     est_aligned=as_trajectory(est, report.alignment))

    def fly_stage():
        target = state["est_aligned"] if cfg.fly == "estimate" else state["ref"]
        executed, clog = simulate_tracking(target, cfg.gains, cfg.uav,
                                           cfg.estimator_noise_sigma, cfg.sim_seed)
        write_traj_csv(out / "traj_exec.csv", executed)
        write_control_log(out / "control_log.csv", clog)
        state.update(executed=executed, log=clog)

    def eval_stage():
        ref, plan = state["ref"], state["plan"]
        reports = {"estimate": state["est_report"],
                   "executed": compare(ref, state["executed"], "none")}
        radius = _orbit_radius(plan)
        extra = {"reference": {"samples": len(ref), "duration": ref.duration,
                               "orbit_radius": radius},
                 "flown": cfg.fly}
        if radius:
            extra["relative"] = {"estimate_ate_over_radius": reports["estimate"].ate_rmse / radius,
                                 "executed_ate_over_radius": reports["executed"].ate_rmse / radius}
        write_metrics_json(out / "metrics.json", reports, extra)
        svg = render_overlay(ref, state["est_aligned"], state["executed"], plan.target)
        write_overlay(out / "overlay.svg", svg)
        if cfg.figures:
            from .figures import plot_control, plot_overlay, plot_tracking_error

            (out / "figures").mkdir(exist_ok=True)
            plot_overlay(out / "figures" / "overlay.png", ref, state["est_aligned"],
                         state["executed"], plan.target)
            plot_tracking_error(out / "figures" / "tracking_error.png", ref,
                                state["est_aligned"], state["executed"])
            plot_control(out / "figures" / "control.png", state["log"])

    figures = (["figures/overlay.png", "figures/tracking_error.png", "figures/control.png"]
               if cfg.figures else [])
    stages = [
        ("shot_grammar", plan_stage, ["plan.json"]),
        ("traj_synth", synth_stage, ["traj_ref.csv"]),
        ("scene_render", render_stage, ["scene.json", "observations.jsonl"]),
        ("vo_extract", extract_stage, ["traj_est.csv", "map.json"]),
        ("uav_sim", fly_stage, ["traj_exec.csv", "control_log.csv"]),
        ("eval_metrics", eval_stage, ["metrics.json", "overlay.svg", *figures]),
    ]
    manifest = {"tool": "cineflight", "version": __version__, "config": cfg.to_dict()}
    (out / "config.toml").write_text(cfg.to_toml(), encoding="utf-8")
    try:
        for name, fn, outputs in stages:
            run.stage(name, fn, outputs)
    finally:
        manifest["stages"] = run.stages
        manifest["digests"] = {"config.toml": sha256_file(out / "config.toml"), **run.digests()}
        manifest["status"] = "ok" if all(s["status"] == "ok" for s in run.stages) \
            and len(run.stages) == len(stages) else "failed"
        _write_json(out / "manifest.json", manifest)
    return manifest


def _orbit_radius(plan):
    radii = [getattr(s.primitive, "radius", None) for s in plan.segments]
    radii = [r for r in radii if r is not None]
    return radii[0] if radii else None


def verify_manifest(out_dir) -> list[str]:
    """Files whose digest no longer matches the manifest (empty when intact)."""
    out = Path(out_dir)
    with open(out / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    bad = []
    for rel, digest in manifest["digests"].items():
        p = out / rel
        if not p.exists() or sha256_file(p) != digest:
            bad.append(rel)
    return bad


# --------------------------------------------------------------------------
# subcommands


def _config_from_args(args) -> cfgmod.RunConfig:
    return cfgmod.load(args.config) if getattr(args, "config", None) else cfgmod.RunConfig()


def cmd_plan(args) -> int:
    if args.prompt_file:
        text = Path(args.prompt_file).read_bytes()
    elif args.prompt is not None:
        text = args.prompt
    else:
        text = sys.stdin.read()
    plan = parse(text)
    _write_json(args.out, plan_to_dict(plan))
    print(serialize(plan))
    return EXIT_OK


def _parse_start(text: str) -> Pose:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise cfgmod.ConfigError(f"--start expects x,y,z,yaw numbers, got {text!r}") from None
    if len(vals) != 4 or not all(math.isfinite(v) for v in vals):
        raise cfgmod.ConfigError(f"--start expects four finite numbers x,y,z,yaw, got {text!r}")
    return Pose(0.0, *vals)


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    with open(args.plan, encoding="utf-8") as fh:
        text = fh.read()
    try:
        plan = plan_from_dict(json.loads(text))
    except json.JSONDecodeError:
        plan = parse(text)
    start = _parse_start(args.start) if args.start else cfg.start
    traj = synthesize(plan, start, args.dt if args.dt else cfg.dt)
    write_traj_csv(args.out, traj)
    for w in traj.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = _config_from_args(args)
    ref, _ = read_traj_csv(args.traj)
    scene = generate_scene(cfg.scene, cfg.scene_seed)
    noise = cfg.noise_sigma if args.noise is None else args.noise
    obs = render(scene, ref, cfg.camera, noise, cfg.render_seed, cfg.outlier_rate)
    write_scene_json(args.scene_out, scene)
    write_observations(args.out, obs)
    if obs.degenerate_frames:
        print(f"warning: {len(obs.degenerate_frames)} frames see fewer than 8 landmarks",
              file=sys.stderr)
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _config_from_args(args)
    obs = read_observations(args.obs, cfg.camera, cfg.noise_sigma if args.noise is None else args.noise)
    est, mp = estimate_trajectory(obs, cfg.vo)
    alignment = None
    if args.reference:
        ref, _ = read_traj_csv(args.reference)
        alignment = compare(ref, est, args.align).alignment
    write_traj_csv(args.out, as_trajectory(est, alignment), est.status)
    if args.map:
        write_map_json(args.map, mp, alignment)
    return EXIT_OK


def cmd_fly(args) -> int:
    cfg = _config_from_args(args)
    ref, _ = read_traj_csv(args.traj)
    noise = cfg.estimator_noise_sigma if args.noise is None else args.noise
    executed, clog = simulate_tracking(ref, cfg.gains, cfg.uav, noise, cfg.sim_seed)
    write_traj_csv(args.out, executed)
    if args.log:
        write_control_log(args.log, clog)
    return EXIT_OK


def cmd_eval(args) -> int:
    ref, _ = read_traj_csv(args.ref)
    cand, _ = read_traj_csv(args.cand)
    report = compare(ref, cand, args.mode)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_json(out / "metrics.json", {"candidate": report})
    aligned = apply_alignment(cand, report.alignment)
    target = None if args.target is None else [float(v) for v in args.target.split(",")]
    write_overlay(out / "overlay.svg", render_overlay(ref, aligned, None, target))
    print(json.dumps({"ate_rmse": report.ate_rmse, "align_mode": args.mode}))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config_from_args(args)
    if args.prompt is not None:
        cfg = replace(cfg, prompt=args.prompt, plan_file="")
    if args.noise is not None:
        cfg = replace(cfg, noise_sigma=args.noise)
    if args.no_figures:
        cfg = replace(cfg, figures=False)
    manifest = run_pipeline(cfg, args.out)
    total = sum(s["seconds"] for s in manifest["stages"])
    print(f"pipeline ok: {len(manifest['digests'])} artifacts in {args.out} ({total:.2f} s)")
    return EXIT_OK


def cmd_defaults(args) -> int:
    sys.stdout.write(cfgmod.RunConfig().to_toml())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cineflight",
        description="Shot descriptions to UAV trajectories: stage subcommands and the full pipeline.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="parse a shot description into plan.json")
    p.add_argument("prompt", nargs="?", help="shot description (default: stdin)")
    p.add_argument("--prompt-file", help="read the description from a file")
    p.add_argument("-o", "--out", default="plan.json")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("synth", help="sample a plan into traj.csv")
    p.add_argument("plan", help="plan.json (or a text shot description file)")
    p.add_argument("--start", help="start pose x,y,z,yaw (default from config)")
    p.add_argument("--dt", type=float)
    p.add_argument("--config")
    p.add_argument("-o", "--out", default="traj_ref.csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="generate a scene and render feature tracks")
    p.add_argument("traj")
    p.add_argument("--config")
    p.add_argument("--noise", type=float, help="pixel noise sigma (overrides config)")
    p.add_argument("--scene-out", default="scene.json")
    p.add_argument("-o", "--out", default="observations.jsonl")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("extract", help="visual odometry on observations.jsonl")
    p.add_argument("obs")
    p.add_argument("--config")
    p.add_argument("--noise", type=float, help="pixel noise sigma the data was rendered with")
    p.add_argument("--reference", help="traj.csv to align the estimate to")
    p.add_argument("--align", choices=cfgmod.ALIGN_MODES, default="sim3")
    p.add_argument("--map", help="write map.json here")
    p.add_argument("-o", "--out", default="traj_est.csv")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fly", help="track a traj.csv with the simulated UAV")
    p.add_argument("traj")
    p.add_argument("--config")
    p.add_argument("--noise", type=float, help="estimator noise sigma (overrides config)")
    p.add_argument("--log", default="control_log.csv")
    p.add_argument("-o", "--out", default="traj_exec.csv")
    p.set_defaults(func=cmd_fly)

    p = sub.add_parser("eval", help="compare two traj.csv files")
    p.add_argument("ref")
    p.add_argument("cand")
    p.add_argument("--mode", choices=cfgmod.ALIGN_MODES, default="sim3")
    p.add_argument("--target", help="target marker x,y")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run every stage into one run directory")
    p.add_argument("--config")
    p.add_argument("--prompt")
    p.add_argument("--noise", type=float, help="pixel noise sigma (overrides config)")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("-o", "--out", default="run")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("defaults", help="print the default configuration as TOML")
    p.set_defaults(func=cmd_defaults)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageFailed as exc:
        err = exc.error
        if isinstance(err, USAGE_ERRORS) and exc.stage == "shot_grammar":
            print(f"error: stage {exc.stage}: {type(err).__name__}: {err}", file=sys.stderr)
            return EXIT_USAGE
        print(f"error: stage {exc.stage}: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_STAGE
    except USAGE_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CineflightError as exc:
        print(f"error: stage {exc.stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
