"""Quaternion and translate/rotate/scale helpers shared by the render modules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-6
IDENTITY_QUAT = (0.0, 0.0, 0.0, 1.0)


def quat_normalize(q) -> np.ndarray:
    """Return q/|q| as float64 [x, y, z, w]; rejects near-zero quaternions."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have 4 components, got shape {q.shape}")
    n = float(np.linalg.norm(q))
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    return q / n


def check_unit_quat(q, tol=QUAT_NORM_TOL):
    q = np.asarray(q, dtype=np.float64)
    n = float(np.linalg.norm(q))
    if abs(n - 1.0) > tol:
        raise ValueError(f"quaternion norm {n} deviates from 1 by more than {tol}")
    return q


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix for unit quaternion [x, y, z, w] (applies as m @ v)."""
    x, y, z, w = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ], dtype=np.float64)


def quat_from_axis_angle(axis, angle_rad) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * float(angle_rad)
    return np.concatenate([axis * np.sin(half), [np.cos(half)]])


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=np.float64)


@dataclass
class Trs:
    """Uniform-scale rigid transform, composed as translate(rotate(scale(p)))."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation_quat: np.ndarray = field(default_factory=lambda: np.array(IDENTITY_QUAT))
    scale: float = 1.0

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        self.rotation_quat = check_unit_quat(self.rotation_quat)
        self.scale = float(self.scale)
        if not self.scale > 0.0:
            raise ValueError(f"scale must be > 0, got {self.scale}")

    def matrix(self) -> np.ndarray:
        """Composed 4x4 matrix (row-major, column-vector convention)."""
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation_quat) * self.scale
        m[:3, 3] = self.translation
        return m

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        r = quat_to_matrix(self.rotation_quat)
        return (self.scale * p) @ r.T + self.translation

    def apply_inverse(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        r = quat_to_matrix(self.rotation_quat)
        return ((p - self.translation) @ r) / self.scale

    def is_identity(self, tol=0.0) -> bool:
        return (np.allclose(self.translation, 0.0, atol=tol)
                and np.allclose(np.abs(self.rotation_quat), [0, 0, 0, 1], atol=tol)
                and abs(self.scale - 1.0) <= tol)


def identity_trs() -> Trs:
    return Trs()
