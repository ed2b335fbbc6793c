"""Minimal monocular visual odometry over ID-labelled feature tracks.

Two-view bootstrap (normalized 8-point essential matrix, cheirality vote,
DLT triangulation) followed by frame-to-map PnP tracking: DLT
initialization refined by Gauss-Newton on pixel reprojection error.
A map point is re-triangulated over all of its tracked views whenever a
new view widens its ray angle.

Conventions: ``R_wc`` / ``c`` are world-from-camera rotation and camera
centre; ``R_cw`` / ``t`` map world points into the camera.  The world
("gauge") frame is the first camera, and the bootstrap baseline has unit
length.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (CheiralityAmbiguous, InitializationFailed,
                     InsufficientCorrespondences, InsufficientParallax,
                     TooShort, TrackingLost)
from .geometry import SimilarityTransform, skew, so3_exp
from .scene import CameraModel, Frame, ObservationSequence, camera_rotation
from .trajectory import StateActionPair, Trajectory, state_action_pairs

log = logging.getLogger(__name__)

INITIALIZED, TRACKED, LOST = "initialized", "tracked", "lost"


@dataclass(frozen=True)
class VoConfig:
    parallax_deg: float = 5.0
    ransac_iterations: int = 200
    ransac_threshold_px: float = 1.0
    use_ransac: bool | None = None  # None: RANSAC iff the sequence is noisy
    seed: int = 0
    cheirality_fraction: float = 0.75
    refine_init: bool = True
    new_point_parallax_deg: float = 1.0
    retriangulate: bool = True
    multiview: bool = True
    max_track_gap: int = 2
    max_reprojection_rms_px: float = 3.0
    pnp_outlier_px: float = 4.0
    gn_max_iterations: int = 50
    gn_step_tol: float = 1e-10


@dataclass
class MapPoints:
    points: dict[int, np.ndarray] = field(default_factory=dict)
    counts: dict[int, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def __contains__(self, lid):
        return lid in self.points

    retired: list[tuple[int, np.ndarray, int]] = field(default_factory=list)

    def add(self, lid: int, xyz, count: int = 2) -> None:
        self.points[int(lid)] = np.asarray(xyz, dtype=float)
        self.counts[int(lid)] = count

    def retire(self, lid: int) -> None:
        """Drop a point whose track broke; it is kept for export only."""
        self.retired.append((lid, self.points.pop(lid), self.counts.pop(lid)))

    def lookup(self, ids):
        """Split ``ids`` into (mask of mapped ids, stacked positions)."""
        mask = np.array([int(i) in self.points for i in ids], dtype=bool)
        pts = np.array([self.points[int(i)] for i in np.asarray(ids)[mask]]).reshape(-1, 3)
        return mask, pts

    def to_dict(self) -> dict:
        return {"points": [[lid, *map(float, p), self.counts[lid]]
                           for lid, p in sorted(self.points.items())],
                "retired": [[lid, *map(float, p), c] for lid, p, c in self.retired]}


@dataclass
class EstimatedTrajectory:
    """Up-to-scale camera poses in the gauge frame, one per frame."""
    t: np.ndarray
    R: np.ndarray  # (N, 3, 3) world-from-camera
    pos: np.ndarray  # (N, 3) camera centres
    status: list[str]
    mount_pitch: float = 0.0

    def __len__(self):
        return len(self.t)

    @property
    def tracked(self) -> np.ndarray:
        return np.array([s != LOST for s in self.status], dtype=bool)


@dataclass
class InitResult:
    rotation: np.ndarray  # world(frame a)-from-camera b
    translation: np.ndarray  # centre of camera b in frame a, unit length
    map_points: MapPoints
    essential: np.ndarray
    inlier_ids: np.ndarray

    def __iter__(self):
        return iter((self.rotation, self.translation, self.map_points))


# --------------------------------------------------------------------------
# two-view geometry


def _homog(x):
    return np.column_stack([x, np.ones(len(x))])


def _hartley(x):
    c = x.mean(axis=0)
    d = np.sqrt(((x - c) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / d if d > 0 else 1.0
    T = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return (x - c) * s, T


def eight_point(x1, x2, essential: bool = True) -> np.ndarray:
    """Essential matrix with x2^T E x1 = 0 from >= 8 normalized pairs.

    With ``essential=False`` only rank 2 is enforced.  At short baselines
    forcing the two singular values equal moves the matrix far (in image
    distance) from the data, so hypothesis scoring uses the rank-2 fit.
    """
    n1, T1 = _hartley(x1)
    n2, T2 = _hartley(x2)
    h1, h2 = _homog(n1), _homog(n2)
    A = np.einsum("ni,nj->nij", h2, h1).reshape(len(h1), 9)
    _, _, Vt = np.linalg.svd(A)
    E = T2.T @ Vt[-1].reshape(3, 3) @ T1
    U, S, Vt = np.linalg.svd(E)
    E = U @ np.diag([1.0, 1.0, 0.0] if essential else [S[0], S[1], 0.0]) @ Vt
    return E / np.linalg.norm(E)


def epipolar_residuals(E, x1, x2) -> np.ndarray:
    return np.einsum("ni,ij,nj->n", _homog(x2), E, _homog(x1))


def sampson_distance(E, x1, x2) -> np.ndarray:
    h1, h2 = _homog(x1), _homog(x2)
    Ex1 = h1 @ E.T
    Etx2 = h2 @ E
    num = np.einsum("ni,ni->n", h2, Ex1) ** 2
    den = Ex1[:, 0] ** 2 + Ex1[:, 1] ** 2 + Etx2[:, 0] ** 2 + Etx2[:, 1] ** 2
    return num / np.maximum(den, 1e-300)


def decompose_essential(E):
    """Four (R, t) candidates with x2 = R x1 + t."""
    U, _, Vt = np.linalg.svd(E)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    R1, R2 = U @ W @ Vt, U @ W.T @ Vt
    t = U[:, 2]
    return [(R1, t), (R1, -t), (R2, t), (R2, -t)]


def triangulate(R1, t1, R2, t2, x1, x2) -> np.ndarray:
    """Linear (DLT) triangulation from two camera-from-world poses.

    Either pose may be batched ((N, 3, 3), (N, 3)) to give every point its
    own pair of views.
    """
    P1 = np.concatenate([np.asarray(R1), np.asarray(t1)[..., None]], axis=-1)
    P2 = np.concatenate([np.asarray(R2), np.asarray(t2)[..., None]], axis=-1)
    A = np.stack([x1[:, 0, None] * P1[..., 2, :] - P1[..., 0, :],
                  x1[:, 1, None] * P1[..., 2, :] - P1[..., 1, :],
                  x2[:, 0, None] * P2[..., 2, :] - P2[..., 0, :],
                  x2[:, 1, None] * P2[..., 2, :] - P2[..., 1, :]], axis=1)
    _, _, Vt = np.linalg.svd(A)
    X = Vt[:, -1, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        return X[:, :3] / X[:, 3:4]


def triangulate_views(Ps, xs, seg, X0, iterations=2) -> np.ndarray:
    """Linear triangulation of many points over many views, rows reweighted by 1/depth.

    ``Ps`` (V, 3, 4) and ``xs`` (V, 2) are the views, ``seg`` (V,) the index of
    the point each view belongs to and ``X0`` (N, 3) the starting points.
    With the weights the algebraic residual approximates the image-plane
    residual, so distant short-baseline views do not dominate.  A point with
    a view behind the camera keeps its current estimate.
    """
    Ps, xs, seg = np.asarray(Ps), np.asarray(xs), np.asarray(seg)
    X = np.array(X0, dtype=float, copy=True)
    r1 = xs[:, 0, None] * Ps[:, 2] - Ps[:, 0]
    r2 = xs[:, 1, None] * Ps[:, 2] - Ps[:, 1]
    outer = np.einsum("vi,vj->vij", r1, r1) + np.einsum("vi,vj->vij", r2, r2)
    for _ in range(iterations):
        depth = np.einsum("vi,vi->v", Ps[:, 2, :3], X[seg]) + Ps[:, 2, 3]
        behind = np.zeros(len(X), dtype=bool)
        np.logical_or.at(behind, seg, depth <= 0)
        w2 = 1.0 / np.where(depth > 0, depth, 1.0) ** 2
        M = np.zeros((len(X), 4, 4))
        np.add.at(M, seg, w2[:, None, None] * outer)
        h = np.linalg.eigh(M)[1][:, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            new = h[:, :3] / h[:, 3:4]
        keep = ~behind & np.all(np.isfinite(new), axis=1)
        X[keep] = new[keep]
    return X


def _depths(R, t, X):
    return X @ R[2] + t[2]


def triangulation_angles(X, c1, c2) -> np.ndarray:
    """Angle (rad) between the two viewing rays at each point."""
    a, b = X - c1, X - c2
    cos = np.einsum("ni,ni->n", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    return np.arccos(np.clip(cos, -1.0, 1.0))


def _bearing_angles(x1, x2):
    b1, b2 = _homog(x1), _homog(x2)
    b1 /= np.linalg.norm(b1, axis=1, keepdims=True)
    b2 /= np.linalg.norm(b2, axis=1, keepdims=True)
    return np.arccos(np.clip(np.einsum("ni,ni->n", b1, b2), -1.0, 1.0))


def _ransac_essential(x1, x2, threshold, iterations, rng):
    n = len(x1)
    best = None
    for _ in range(iterations):
        sample = rng.choice(n, 8, replace=False)
        try:
            E = eight_point(x1[sample], x2[sample], essential=False)
        except np.linalg.LinAlgError:
            continue
        inl = sampson_distance(E, x1, x2) < threshold**2
        if best is None or inl.sum() > best.sum():
            best = inl
    if best is None or best.sum() < 8:
        raise InsufficientCorrespondences("RANSAC found fewer than 8 inliers")
    F = eight_point(x1[best], x2[best], essential=False)
    inl = sampson_distance(F, x1, x2) < threshold**2
    if inl.sum() >= 8:
        best = inl
    return eight_point(x1[best], x2[best]), best


def _tangent_basis(t):
    a = np.array([1.0, 0.0, 0.0]) if abs(t[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = np.cross(t, a)
    b1 /= np.linalg.norm(b1)
    return np.column_stack([b1, np.cross(t, b1)])


def _proj_jacobian(pc, camera):
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    iz = 1.0 / z
    J = np.zeros((len(pc), 2, 3))
    J[:, 0, 0] = camera.fx * iz
    J[:, 0, 2] = -camera.fx * x * iz * iz
    J[:, 1, 1] = camera.fy * iz
    J[:, 1, 2] = -camera.fy * y * iz * iz
    return J


def _two_view_cost(R, t, X, uv_a, uv_b, camera):
    ra, pa = _pixel_residuals(np.eye(3), np.zeros(3), X, uv_a, camera)
    rb, pb = _pixel_residuals(R, t, X, uv_b, camera)
    if np.any(pa[:, 2] <= 0) or np.any(pb[:, 2] <= 0):
        return math.inf, None, None, None, None
    return float((ra ** 2).sum() + (rb ** 2).sum()), ra, rb, pa, pb


def refine_two_view(R, t, X, uv_a, uv_b, camera: CameraModel, max_iterations=30):
    """Joint Gauss-Newton (Levenberg-damped) refinement of a two-view bootstrap.

    ``R, t`` map frame-a coordinates into frame b (``|t| = 1`` is kept), and
    ``X`` are the points in frame a.  Minimizes the squared pixel
    reprojection error in both views.
    """
    R, t, X = R.copy(), t / np.linalg.norm(t), X.copy()
    m = len(X)
    cost, ra, rb, pa, pb = _two_view_cost(R, t, X, uv_a, uv_b, camera)
    if not math.isfinite(cost):
        return R, t, X
    lam = 1e-3
    for _ in range(max_iterations):
        B = _tangent_basis(t)
        Ja = _proj_jacobian(pa, camera)  # d r_a / d X
        Jb = _proj_jacobian(pb, camera)  # d r_b / d p_b
        RX = X @ R.T
        # d p_b / d omega = -[R X]x ; d p_b / d t-tangent = B
        dp_dw = np.zeros((m, 3, 3))
        dp_dw[:, 0, 1], dp_dw[:, 0, 2] = RX[:, 2], -RX[:, 1]
        dp_dw[:, 1, 0], dp_dw[:, 1, 2] = -RX[:, 2], RX[:, 0]
        dp_dw[:, 2, 0], dp_dw[:, 2, 1] = RX[:, 1], -RX[:, 0]
        Jpose = np.concatenate([Jb @ dp_dw, Jb @ B], axis=2)  # (m, 2, 5)
        JX_b = Jb @ R  # (m, 2, 3)
        n = 5 + 3 * m
        J = np.zeros((4 * m, n))
        rows_a = np.arange(m) * 2
        rows_b = 2 * m + np.arange(m) * 2
        for i in range(m):
            c = 5 + 3 * i
            J[rows_a[i]:rows_a[i] + 2, c:c + 3] = Ja[i]
            J[rows_b[i]:rows_b[i] + 2, :5] = Jpose[i]
            J[rows_b[i]:rows_b[i] + 2, c:c + 3] = JX_b[i]
        r = np.concatenate([ra.ravel(), rb.ravel()])
        H = J.T @ J
        g = J.T @ r
        improved = False
        while lam < 1e8:
            try:
                d = -np.linalg.solve(H + lam * np.diag(np.diag(H) + 1e-12), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            R_new = so3_exp(d[:3]) @ R
            t_new = t + B @ d[3:5]
            t_new /= np.linalg.norm(t_new)
            X_new = X + d[5:].reshape(m, 3)
            new = _two_view_cost(R_new, t_new, X_new, uv_a, uv_b, camera)
            if new[0] <= cost:
                R, t, X = R_new, t_new, X_new
                cost, ra, rb, pa, pb = new
                lam = max(lam / 10, 1e-9)
                improved = True
                break
            lam *= 10
        if not improved or np.linalg.norm(d) < 1e-12:
            break
    return R, t, X


def initialize_two_view(frame_a: Frame, frame_b: Frame, camera: CameraModel,
                        config: VoConfig = VoConfig(), ransac: bool = False,
                        rng=None) -> InitResult:
    """Relative pose of ``frame_b`` w.r.t. ``frame_a`` plus the initial map."""
    shared, ia, ib = np.intersect1d(frame_a.ids, frame_b.ids, return_indices=True)
    if len(shared) < 8:
        raise InsufficientCorrespondences(f"{len(shared)} shared landmarks, need 8")
    x1 = camera.normalize(frame_a.uv[ia])
    x2 = camera.normalize(frame_b.uv[ib])
    min_parallax = math.radians(config.parallax_deg)
    if np.median(_bearing_angles(x1, x2)) < min_parallax:
        raise InsufficientParallax("median ray parallax below threshold")

    if ransac:
        rng = np.random.default_rng(config.seed) if rng is None else rng
        f = 0.5 * (camera.fx + camera.fy)
        E, inl = _ransac_essential(x1, x2, config.ransac_threshold_px / f,
                                   config.ransac_iterations, rng)
    else:
        E, inl = eight_point(x1, x2), np.ones(len(x1), dtype=bool)
    x1i, x2i, idi = x1[inl], x2[inl], shared[inl]

    I, z = np.eye(3), np.zeros(3)
    best, best_count = None, -1
    for R, t in decompose_essential(E):
        X = triangulate(I, z, R, t, x1i, x2i)
        ok = (_depths(I, z, X) > 0) & (_depths(R, t, X) > 0)
        if ok.sum() > best_count:
            best, best_count = (R, t, X, ok), int(ok.sum())
    if best_count < config.cheirality_fraction * len(x1i):
        raise CheiralityAmbiguous(
            f"best decomposition has {best_count}/{len(x1i)} points in front")
    R, t, X, ok = best
    if config.refine_init and ok.sum() >= 8:
        uv_a = frame_a.uv[ia][inl][ok]
        uv_b = frame_b.uv[ib][inl][ok]
        R, t, Xr = refine_two_view(R, t, X[ok], uv_a, uv_b, camera)
        X = X.copy()
        X[ok] = Xr
        ok = ok & (_depths(I, z, X) > 0) & (_depths(R, t, X) > 0)
        E = skew(t) @ R
    c_b = -R.T @ t
    angles = triangulation_angles(X[ok], z, c_b)
    if np.median(angles) < min_parallax:
        raise InsufficientParallax("median triangulation angle below threshold")

    mp = MapPoints()
    for lid, p in zip(idi[ok], X[ok]):
        mp.add(lid, p)
    return InitResult(R.T, c_b, mp, E, idi)


# --------------------------------------------------------------------------
# perspective-n-point


def _pixel_residuals(R, t, X, uv, camera):
    pc = X @ R.T + t
    z = pc[:, 2]
    r = np.column_stack([camera.fx * pc[:, 0] / z + camera.cx - uv[:, 0],
                         camera.fy * pc[:, 1] / z + camera.cy - uv[:, 1]])
    return r, pc


def reprojection_cost(R, t, X, uv, camera) -> float:
    r, pc = _pixel_residuals(R, t, X, uv, camera)
    if np.any(pc[:, 2] <= 0):
        return math.inf
    return float((r ** 2).sum())


def pnp_dlt(X, x):
    """Camera-from-world (R, t) from >= 6 points and normalized coords, or None."""
    if len(X) < 6:
        return None
    c = X.mean(axis=0)
    s = math.sqrt(3.0) / max(np.sqrt(((X - c) ** 2).sum(axis=1)).mean(), 1e-300)
    T = np.eye(4)
    T[:3, :3] *= s
    T[:3, 3] = -s * c
    Xh = np.column_stack([(X - c) * s, np.ones(len(X))])
    zeros = np.zeros_like(Xh)
    A = np.vstack([np.hstack([Xh, zeros, -x[:, 0:1] * Xh]),
                   np.hstack([zeros, Xh, -x[:, 1:2] * Xh])])
    _, S, Vt = np.linalg.svd(A)
    if S[-2] < 1e-12 * S[0]:
        return None
    P = Vt[-1].reshape(3, 4) @ T
    M = P[:, :3]
    if np.linalg.det(M) < 0:
        P, M = -P, -M
    U, Sm, Vt = np.linalg.svd(M)
    if Sm[-1] < 1e-9 * Sm[0]:
        return None
    R = U @ Vt
    t = P[:, 3] / Sm.mean()
    if np.median(X @ R[2] + t[2]) < 0:
        return None
    return R, t


def refine_pose(R, t, X, uv, camera: CameraModel, max_iterations=50, step_tol=1e-10,
                history: list | None = None):
    """Gauss-Newton on squared pixel reprojection error.

    Steps that raise the cost are halved until they do not; iteration stops
    when the step norm drops below ``step_tol`` or after ``max_iterations``.
    Accepted costs are appended to ``history`` when given.
    """
    R, t = R.copy(), t.copy()
    cost = reprojection_cost(R, t, X, uv, camera)
    if history is not None:
        history.append(cost)
    for _ in range(max_iterations):
        r, pc = _pixel_residuals(R, t, X, uv, camera)
        x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
        iz = 1.0 / z
        # d(residual)/d(p_c), rows u and v
        Ju = np.column_stack([camera.fx * iz, np.zeros_like(z), -camera.fx * x * iz * iz])
        Jv = np.column_stack([np.zeros_like(z), camera.fy * iz, -camera.fy * y * iz * iz])
        # d(p_c)/d(omega) = -[p_c]x, d(p_c)/d(t) = I
        def rows(Jp):
            return np.column_stack([Jp[:, 2] * y - Jp[:, 1] * z,
                                    Jp[:, 0] * z - Jp[:, 2] * x,
                                    Jp[:, 1] * x - Jp[:, 0] * y,
                                    Jp])
        J = np.vstack([rows(Ju), rows(Jv)])
        res = np.concatenate([r[:, 0], r[:, 1]])
        delta = np.linalg.lstsq(J, -res, rcond=None)[0]
        step = 1.0
        accepted = False
        while step > 1e-6:
            d = step * delta
            dR = so3_exp(d[:3])
            R_new, t_new = dR @ R, dR @ t + d[3:]
            new_cost = reprojection_cost(R_new, t_new, X, uv, camera)
            if new_cost <= cost:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        R, t, cost = R_new, t_new, new_cost
        if history is not None:
            history.append(cost)
        if np.linalg.norm(d) < step_tol:
            break
    return R, t, cost


def track_frame(frame: Frame, map_points: MapPoints, camera: CameraModel,
                prev_pose, config: VoConfig = VoConfig()):
    """Pose ``(R_wc, centre)`` of ``frame`` against the current map.

    Raises :class:`TrackingLost` with fewer than 4 mapped points or when the
    refined RMS reprojection error exceeds the configured bound.
    """
    mask, X = map_points.lookup(frame.ids)
    uv = frame.uv[mask]
    if len(X) < 4:
        raise TrackingLost(f"{len(X)} mapped landmarks visible, need 4")

    R_prev, c_prev = prev_pose
    candidates = [(R_prev.T, -R_prev.T @ c_prev)]
    dlt = pnp_dlt(X, camera.normalize(uv))
    if dlt is not None:
        candidates.append(dlt)
    R0, t0 = min(candidates, key=lambda rt: reprojection_cost(rt[0], rt[1], X, uv, camera))

    R, t, cost = refine_pose(R0, t0, X, uv, camera, config.gn_max_iterations, config.gn_step_tol)
    if math.isfinite(cost):
        r, _ = _pixel_residuals(R, t, X, uv, camera)
        good = np.linalg.norm(r, axis=1) <= config.pnp_outlier_px
        if not good.all() and good.sum() >= 4:
            X, uv = X[good], uv[good]
            R, t, cost = refine_pose(R, t, X, uv, camera,
                                     config.gn_max_iterations, config.gn_step_tol)
    rms = math.sqrt(cost / len(X)) if math.isfinite(cost) else math.inf
    if rms > config.max_reprojection_rms_px:
        raise TrackingLost(f"RMS reprojection error {rms:.3g} px above bound")
    return R.T, -R.T @ t


# --------------------------------------------------------------------------
# full pass


def estimate_trajectory(obs: ObservationSequence, config: VoConfig = VoConfig()):
    """Run the VO over every frame; returns (EstimatedTrajectory, MapPoints)."""
    frames = obs.frames
    if len(frames) < 2:
        raise TooShort("need at least two frames")
    camera = obs.camera
    ransac = config.use_ransac if config.use_ransac is not None else obs.noise_sigma > 0
    rng = np.random.default_rng(config.seed)

    init, k_init = None, None
    for k in range(1, len(frames)):
        try:
            init = initialize_two_view(frames[0], frames[k], camera, config, ransac, rng)
        except (InsufficientParallax, InsufficientCorrespondences, CheiralityAmbiguous):
            continue
        k_init = k
        break
    if init is None:
        raise InitializationFailed("no frame reaches the parallax threshold against frame 0")
    log.debug("initialized on frames 0 and %d with %d points", k_init, len(init.map_points))

    n = len(frames)
    Rs = np.empty((n, 3, 3))
    Cs = np.empty((n, 3))
    status = [LOST] * n
    Rs[0], Cs[0], status[0] = np.eye(3), np.zeros(3), INITIALIZED
    mp = init.map_points
    min_new = math.radians(config.new_point_parallax_deg)
    # first tracked observation of every landmark, and the ray angle its
    # current map position was triangulated with
    first: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    used_angle: dict[int, float] = {}
    if init.map_points:
        X0 = np.array([mp.points[i] for i in mp.points])
        for lid, a in zip(mp.points, triangulation_angles(X0, np.zeros(3), init.translation)):
            used_angle[lid] = float(a)

    # every tracked observation as (projection, normalized point), by landmark
    offsets = np.cumsum([0] + [len(f.ids) for f in frames])
    obs_P = np.empty((offsets[-1], 3, 4)) if config.multiview else None
    obs_x = np.empty((offsets[-1], 2)) if config.multiview else None
    views: dict[int, list[int]] = {}
    last_seen: dict[int, int] = {}

    def prune(k):
        """Forget landmarks whose track broke for more than ``max_track_gap`` frames.

        A re-appearing landmark starts a fresh track, so the map never mixes
        points triangulated at very different drift states.
        """
        for lid in frames[k].ids.tolist():
            if lid in last_seen and k - last_seen[lid] - 1 > config.max_track_gap:
                if lid in mp:
                    mp.retire(lid)
                first.pop(lid, None)
                views.pop(lid, None)
                used_angle.pop(lid, None)
        for lid in frames[k].ids.tolist():
            last_seen[lid] = k

    def absorb(k):
        """Count map hits; (re)triangulate from the first view and this one."""
        fr = frames[k]
        R_cw, t_cw = Rs[k].T, -Rs[k].T @ Cs[k]
        xs = camera.normalize(fr.uv)
        if config.multiview:
            obs_P[offsets[k]:offsets[k + 1]] = np.hstack([R_cw, t_cw[:, None]])
            obs_x[offsets[k]:offsets[k + 1]] = xs
        cand = []
        for j, lid in enumerate(fr.ids.tolist()):
            mapped = lid in mp
            if mapped:
                mp.counts[lid] += 1
            if config.multiview:
                views.setdefault(lid, []).append(offsets[k] + j)
            if lid not in first:
                first[lid] = (R_cw, t_cw, xs[j])
            elif config.retriangulate or not mapped:
                cand.append(j)
        if not cand:
            return
        lids = fr.ids[cand].tolist()
        R1 = np.stack([first[i][0] for i in lids])
        t1 = np.stack([first[i][1] for i in lids])
        x1 = np.stack([first[i][2] for i in lids])
        X = triangulate(R1, t1, R_cw, t_cw, x1, xs[cand])
        c1 = -np.einsum("nji,nj->ni", R1, t1)
        with np.errstate(invalid="ignore"):
            good = (np.all(np.isfinite(X), axis=1)
                    & (np.einsum("ni,ni->n", R1[:, 2], X) + t1[:, 2] > 0)
                    & (_depths(R_cw, t_cw, X) > 0))
        angles = np.full(len(lids), -1.0)
        if good.any():
            a, b = X[good] - c1[good], X[good] - Cs[k]
            cos = np.einsum("ni,ni->n", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles[good] = np.arccos(np.clip(cos, -1.0, 1.0))
        accepted = [i for i, (lid, angle) in enumerate(zip(lids, angles.tolist()))
                    if angle >= 0 and angle >= (used_angle[lid] if lid in mp else min_new)]
        if not accepted:
            return
        X = X[accepted]
        if config.multiview:
            idx = [views[lids[i]] for i in accepted]
            seg = np.repeat(np.arange(len(idx)), [len(v) for v in idx])
            idx = np.concatenate(idx)
            X = triangulate_views(obs_P[idx], obs_x[idx], seg, X)
        for i, Xi in zip(accepted, X):
            lid = lids[i]
            if lid in mp:
                mp.points[lid] = Xi
            else:
                mp.add(lid, Xi)
            used_angle[lid] = angles[i]

    prune(0)
    absorb(0)
    for k in range(1, n):
        prune(k)
        if k == k_init:
            Rs[k], Cs[k], status[k] = init.rotation, init.translation, INITIALIZED
        else:
            try:
                Rs[k], Cs[k] = track_frame(frames[k], mp, camera, (Rs[k - 1], Cs[k - 1]), config)
                status[k] = TRACKED
            except TrackingLost as exc:
                log.debug("frame %d lost: %s", k, exc)
                Rs[k], Cs[k] = Rs[k - 1], Cs[k - 1]
                status[k] = LOST
        if status[k] != LOST:
            absorb(k)

    t = np.array([f.t for f in frames])
    return EstimatedTrajectory(t, Rs, Cs, status, camera.mount_pitch), mp


# --------------------------------------------------------------------------
# states


def level_frame(mount_pitch: float = 0.0) -> SimilarityTransform:
    """Gauge (first camera) frame -> a z-up frame with the first heading at yaw 0."""
    return SimilarityTransform(1.0, camera_rotation(0.0, mount_pitch))


def as_trajectory(est: EstimatedTrajectory,
                  alignment: SimilarityTransform | None = None) -> Trajectory:
    """Positions and forward-axis headings, aligned or in the levelled gauge frame."""
    T = level_frame(est.mount_pitch) if alignment is None else alignment
    pos = T.apply(est.pos)
    fwd = np.einsum("ij,njk->nik", T.rotation, est.R)[:, :, 2]
    yaw = np.arctan2(fwd[:, 1], fwd[:, 0])
    return Trajectory.from_samples(est.t, pos, yaw)


def to_states(est: EstimatedTrajectory, dt: float | None = None,
              alignment: SimilarityTransform | None = None):
    """State-action pairs of the estimate; returns ``(pairs, frame)``.

    ``frame`` is ``"aligned"`` when ``alignment`` is given, else ``"gauge"``.
    Timestamps are rebuilt on a ``dt`` grid when ``dt`` is given.
    """
    if int(est.tracked.sum()) < 2:
        raise TooShort("need at least two tracked poses")
    traj = as_trajectory(est, alignment)
    if dt is not None:
        traj = Trajectory.from_samples(traj.t[0] + dt * np.arange(len(traj)), traj.pos, traj.yaw)
    pairs: list[StateActionPair] = state_action_pairs(traj)
    return pairs, ("gauge" if alignment is None else "aligned")


def write_map_json(path, mp: MapPoints, alignment: SimilarityTransform | None = None) -> None:
    doc = mp.to_dict()
    if alignment is not None:
        doc["alignment"] = alignment.to_dict()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")

