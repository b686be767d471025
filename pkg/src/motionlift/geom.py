"""Weak-perspective projection, rotation sampling, and body orientation.

Convention: the image plane is x-y, depth is z, the camera looks down -z,
and gravity is -y (yaw rotations spin about the y axis).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Camera",
    "project",
    "yaw_matrix",
    "sample_rotation",
    "body_orientation",
    "orientation_penalty",
    "DEGENERATE_CROSS_TOL",
]

DEGENERATE_CROSS_TOL = 1e-8


@dataclass(frozen=True)
class Camera:
    """Weak-perspective camera: a single positive magnification factor."""

    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"camera scale must be positive, got {self.scale}")


def project(points: np.ndarray, camera: Camera = Camera()) -> np.ndarray:
    """Drop z and scale: (..., 3) -> (..., 2) with output = s * (x, y)."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[-1] != 3:
        raise ValueError(f"project: last axis must be 3, got {points.shape}")
    return camera.scale * points[..., :2]


def yaw_matrix(angle: float) -> np.ndarray:
    """Rotation about the vertical y axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([
        [c, 0.0, s],
        [0.0, 1.0, 0.0],
        [-s, 0.0, c],
    ])


def sample_rotation(rng: np.random.Generator, mode: str = "yaw") -> np.ndarray:
    """Random rotation matrix: uniform yaw (default) or uniform over SO(3)."""
    if mode == "yaw":
        return yaw_matrix(rng.uniform(0.0, 2.0 * np.pi))
    if mode == "so3":
        # uniform via QR of a Gaussian matrix, sign-fixed, det corrected
        a = rng.normal(size=(3, 3))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        return q
    raise ValueError(f"unknown rotation mode {mode!r} (expected 'yaw' or 'so3')")


def body_orientation(v_rhip: np.ndarray, v_lhip: np.ndarray):
    """Unit forward vector: cross(right hip limb, left hip limb), normalized.

    Returns None when the hips are (near-)collinear; callers skip the
    orientation penalty for such frames.
    """
    cross = np.cross(np.asarray(v_rhip, dtype=np.float64),
                     np.asarray(v_lhip, dtype=np.float64))
    norm = np.linalg.norm(cross)
    if norm < DEGENERATE_CROSS_TOL:
        return None
    return cross / norm


def orientation_penalty(v_foot: np.ndarray, v_ori: np.ndarray) -> float:
    """Hinge penalty max(0, -v_foot . v_ori); zero when feet agree with the
    body's forward direction."""
    return max(0.0, -float(np.dot(v_foot, v_ori)))
