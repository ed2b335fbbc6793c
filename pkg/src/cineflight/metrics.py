"""Trajectory alignment and error metrics.

Trajectories are associated by timestamp: the candidate is interpolated onto
the reference samples that fall inside its time span.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import Degenerate, NoOverlap
from .geometry import SimilarityTransform, wrap_angles
from .trajectory import Trajectory, interpolate
from .vo import EstimatedTrajectory, as_trajectory, level_frame

ALIGN_MODES = ("none", "se3", "sim3")


def align_umeyama(source, target, with_scale: bool = True) -> SimilarityTransform:
    """Least-squares ``T`` minimizing ``sum |T(source_i) - target_i|^2``.

    Closed form via the SVD of the cross-covariance, with the sign
    correction that keeps ``det R = +1``.
    """
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    dst = np.asarray(target, dtype=float).reshape(-1, 3)
    if len(src) != len(dst):
        raise ValueError(f"point counts differ: {len(src)} vs {len(dst)}")
    if len(src) < 3:
        raise ValueError(f"need at least 3 point pairs, got {len(src)}")
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    ds, dd = src - mu_s, dst - mu_d
    var_s = float((ds ** 2).sum()) / len(src)
    var_d = float((dd ** 2).sum()) / len(dst)
    for var, mu, name in ((var_s, mu_s, "source"), (var_d, mu_d, "target")):
        if var <= 1e-24 * max(1.0, float(mu @ mu)):
            raise Degenerate(f"{name} points are all coincident")
    cov = dd.T @ ds / len(src)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    scale = float(np.trace(np.diag(D) @ S)) / var_s if with_scale else 1.0
    if not scale > 0:
        raise Degenerate("alignment scale is not positive")
    return SimilarityTransform(scale, R, mu_d - scale * R @ mu_s)


@dataclass
class TrajectoryReport:
    ate_rmse: float
    per_axis_rmse: tuple[float, float, float]
    yaw_rmse: float
    max_deviation: float
    path_length_ratio: float
    alignment: SimilarityTransform
    align_mode: str = "none"
    samples: int = 0

    def to_dict(self) -> dict:
        ratio = self.path_length_ratio
        return {
            "ate_rmse": self.ate_rmse,
            "per_axis_rmse": list(self.per_axis_rmse),
            "yaw_rmse": self.yaw_rmse,
            "max_deviation": self.max_deviation,
            "path_length_ratio": ratio if math.isfinite(ratio) else None,
            "align_mode": self.align_mode,
            "samples": self.samples,
            "alignment": self.alignment.to_dict(),
        }


def path_length(pos) -> float:
    pos = np.asarray(pos, dtype=float)
    if len(pos) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pos, axis=0), axis=1).sum())


def _rotate_yaw(yaw, R):
    """Heading of the horizontal unit vector at ``yaw`` after rotation ``R``."""
    h = np.column_stack([np.cos(yaw), np.sin(yaw), np.zeros(len(yaw))]) @ R.T
    return np.arctan2(h[:, 1], h[:, 0])


def apply_alignment(traj: Trajectory, T: SimilarityTransform) -> Trajectory:
    """``traj`` with positions and headings mapped through ``T``."""
    return Trajectory.from_samples(traj.t, T.apply(traj.pos), _rotate_yaw(traj.yaw, T.rotation),
                                   traj.warnings)


def associate(reference: Trajectory, candidate: Trajectory):
    """Reference samples inside the candidate span, and the candidate there.

    Returns ``(mask, positions (M, 3), yaws (M,))``.
    """
    if len(reference) == 0 or len(candidate) == 0:
        raise NoOverlap("empty trajectory")
    tol = 1e-9 * max(1.0, abs(float(candidate.t[-1])))
    mask = (reference.t >= candidate.t[0] - tol) & (reference.t <= candidate.t[-1] + tol)
    if not mask.any():
        raise NoOverlap(
            f"reference [{reference.t[0]:.6g}, {reference.t[-1]:.6g}] s and candidate "
            f"[{candidate.t[0]:.6g}, {candidate.t[-1]:.6g}] s do not overlap")
    t = np.clip(reference.t[mask], candidate.t[0], candidate.t[-1])
    if len(candidate) == 1:
        return mask, np.repeat(candidate.pos, len(t), axis=0), np.repeat(candidate.yaw, len(t))
    pos, yaw = interpolate(candidate, t)
    return mask, pos, yaw


def compare(reference: Trajectory, candidate, align_mode: str = "sim3") -> TrajectoryReport:
    """Error report of ``candidate`` against ``reference``.

    An :class:`EstimatedTrajectory` candidate is first levelled into a z-up
    frame; the reported alignment then maps its gauge frame into the
    reference frame, so ``as_trajectory(est, report.alignment)`` reproduces
    the compared trajectory.
    """
    if align_mode not in ALIGN_MODES:
        raise ValueError(f"align_mode must be one of {ALIGN_MODES}, got {align_mode!r}")
    base = None
    if isinstance(candidate, EstimatedTrajectory):
        base = level_frame(candidate.mount_pitch)
        candidate = as_trajectory(candidate, base)
    mask, pos, yaw = associate(reference, candidate)
    ref_pos, ref_yaw = reference.pos[mask], reference.yaw[mask]

    if align_mode == "none":
        T = SimilarityTransform()
    else:
        T = align_umeyama(pos, ref_pos, with_scale=align_mode == "sim3")
        pos = T.apply(pos)
        yaw = _rotate_yaw(yaw, T.rotation)

    err = pos - ref_pos
    dist = np.linalg.norm(err, axis=1)
    yaw_err = wrap_angles(yaw - ref_yaw)
    ref_len = path_length(ref_pos)
    cand_len = path_length(pos)
    if ref_len > 0:
        ratio = cand_len / ref_len
    else:
        ratio = 1.0 if cand_len == 0 else math.inf
    return TrajectoryReport(
        ate_rmse=float(np.sqrt(np.mean(dist ** 2))),
        per_axis_rmse=tuple(float(v) for v in np.sqrt(np.mean(err ** 2, axis=0))),
        yaw_rmse=float(np.sqrt(np.mean(yaw_err ** 2))),
        max_deviation=float(dist.max()),
        path_length_ratio=float(ratio),
        alignment=T if base is None else T.compose(base),
        align_mode=align_mode,
        samples=int(mask.sum()),
    )


def errors_over_time(reference: Trajectory, candidate: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample position error (no alignment): ``(t, |p_cand - p_ref|)``."""
    mask, pos, _ = associate(reference, candidate)
    return reference.t[mask], np.linalg.norm(pos - reference.pos[mask], axis=1)


def write_metrics_json(path, reports: dict[str, TrajectoryReport], extra: dict | None = None) -> None:
    """``metrics.json``: one report object per comparison name, plus ``extra`` keys."""
    doc = {name: rep.to_dict() for name, rep in reports.items()}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")
