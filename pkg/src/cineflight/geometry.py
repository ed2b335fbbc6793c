"""Angle and rotation helpers used across modules."""
from __future__ import annotations

import math

import numpy as np

TAU = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi].

    ``math.remainder`` is exact, so angles already inside the interval come
    back unchanged and ``a + 2*pi`` maps back to ``a`` whenever that sum was
    itself exact.
    """
    r = math.remainder(a, TAU)
    return math.pi if r == -math.pi else r


_wrap_ufunc = np.frompyfunc(wrap_angle, 1, 1)


def wrap_angles(a) -> np.ndarray:
    return np.asarray(_wrap_ufunc(np.asarray(a, dtype=float)), dtype=float)


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(w) -> np.ndarray:
    """Rodrigues formula."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    K = skew(w)
    if theta < 1e-12:
        return np.eye(3) + K
    return (np.eye(3) + math.sin(theta) / theta * K
            + (1.0 - math.cos(theta)) / theta**2 * (K @ K))


def so3_log(R) -> np.ndarray:
    cos_t = min(1.0, max(-1.0, (np.trace(R) - 1.0) / 2.0))
    theta = math.acos(cos_t)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-9:
        return 0.5 * v
    if math.pi - theta < 1e-6:
        # near pi: axis from the symmetric part
        A = (R + np.eye(3)) / 2.0
        axis = A[np.argmax(np.diag(A))]
        axis = axis / np.linalg.norm(axis)
        return theta * axis
    return theta / (2.0 * math.sin(theta)) * v


def rotation_angle(R) -> float:
    return float(np.linalg.norm(so3_log(R)))


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def project_to_so3(M) -> np.ndarray:
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return R


class SimilarityTransform:
    """``p -> scale * rotation @ p + translation``."""

    def __init__(self, scale=1.0, rotation=None, translation=None):
        self.scale = float(scale)
        self.rotation = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        self.translation = (np.zeros(3) if translation is None
                            else np.asarray(translation, dtype=float).reshape(3))
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def apply(self, points) -> np.ndarray:
        return self.scale * np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """``self ∘ other`` (apply ``other`` first)."""
        return SimilarityTransform(self.scale * other.scale,
                                   self.rotation @ other.rotation,
                                   self.scale * self.rotation @ other.translation
                                   + self.translation)

    def inverse(self) -> "SimilarityTransform":
        Rt = self.rotation.T
        return SimilarityTransform(1.0 / self.scale, Rt,
                                   -(Rt @ self.translation) / self.scale)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.scale * self.rotation
        T[:3, 3] = self.translation
        return T

    def to_dict(self) -> dict:
        return {"scale": self.scale, "rotation": self.rotation.tolist(),
                "translation": self.translation.tolist()}

    def __repr__(self):
        return (f"SimilarityTransform(scale={self.scale!r}, "
                f"rotation={self.rotation.tolist()!r}, translation={self.translation.tolist()!r})")
