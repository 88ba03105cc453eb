"""Pinhole camera model, pose containers and accuracy metrics.

Image coordinates are always *centered*: the principal point has already been
subtracted, so a pixel ``(u, v)`` lifts to the homogeneous ray ``[u, v, f]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NonPositiveDepth, NonPositiveScale, ValidationError, ZeroEstimate

ORTHO_TOL = 1e-9


class ImagePoint(NamedTuple):
    u: float
    v: float
    f: float

    @property
    def homogeneous(self) -> np.ndarray:
        return np.array([self.u, self.v, self.f])


class Correspondence(NamedTuple):
    world: np.ndarray
    image: ImagePoint


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float
    cu: float = 0.0
    cv: float = 0.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if not np.isfinite(self.f) or self.f <= 0:
            raise ValidationError(f"focal length must be positive, got {self.f}")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("image size must be positive")

    def center(self, pixels: np.ndarray) -> np.ndarray:
        """Shift raw pixel coordinates so the principal point sits at the origin."""
        return np.asarray(pixels, dtype=float) - np.array([self.cu, self.cv])


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform taking world points into the camera frame: ``X_c = R X_w + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not is_rotation(R, tol=1e-6) or np.linalg.det(R) < 0:
            raise ValidationError("pose rotation must be a proper rotation matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def transform(self, world: np.ndarray) -> np.ndarray:
        return np.asarray(world, dtype=float) @ self.rotation.T + self.translation

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )


@dataclass(frozen=True, eq=False)
class Correspondences:
    """N world points paired with N centered image observations at focal length ``f``."""

    world: np.ndarray
    image: np.ndarray
    f: float

    def __post_init__(self):
        world = np.ascontiguousarray(self.world, dtype=float).reshape(-1, 3)
        image = np.ascontiguousarray(self.image, dtype=float).reshape(-1, 2)
        if len(world) != len(image):
            raise ValidationError(
                f"{len(world)} world points but {len(image)} image points"
            )
        if not (np.all(np.isfinite(world)) and np.all(np.isfinite(image))):
            raise ValidationError("correspondences must be finite")
        if not np.isfinite(self.f) or self.f <= 0:
            raise ValidationError(f"focal length must be positive, got {self.f}")
        object.__setattr__(self, "world", world)
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "f", float(self.f))

    def __len__(self):
        return len(self.world)

    def __getitem__(self, i) -> Correspondence:
        u, v = self.image[i]
        return Correspondence(self.world[i], ImagePoint(u, v, self.f))

    @property
    def rays(self) -> np.ndarray:
        """Homogeneous image points ``[u, v, f]``, shape (N, 3)."""
        return np.column_stack([self.image, np.full(len(self), self.f)])

    def subset(self, index) -> "Correspondences":
        return Correspondences(self.world[index], self.image[index], self.f)


def is_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    """Orthonormality check; either determinant sign is accepted."""
    R = np.asarray(R, dtype=float)
    return R.shape == (3, 3) and np.allclose(R.T @ R, np.eye(3), rtol=0, atol=tol)


def project(points: np.ndarray, f: float) -> np.ndarray:
    """Pinhole projection of camera-frame points, ``u = f x / z``, ``v = f y / z``.

    Accepts a single point of shape (3,) or a batch of shape (N, 3).
    """
    X = np.asarray(points, dtype=float)
    z = X[..., 2]
    if np.any(z <= 0):
        raise NonPositiveDepth("cannot project a point with non-positive depth")
    return f * X[..., :2] / z[..., None]


def recover_translation(
    R: np.ndarray, mu: float, control_ray: np.ndarray, control_world: np.ndarray
) -> np.ndarray:
    """Translation implied by rotation ``R``, scale ``mu`` and the control point.

    ``control_ray`` is the homogeneous image point ``[u_o, v_o, f]``; the control
    point sits at depth ``f / mu`` along it.
    """
    if not mu > 0:
        raise NonPositiveScale(f"scale factor must be positive, got {mu}")
    return np.asarray(control_ray, dtype=float) / mu - np.asarray(R) @ np.asarray(
        control_world, dtype=float
    )


def rotation_error_deg(R_true: np.ndarray, R_est: np.ndarray) -> float:
    """Norm of the three per-column angles between two rotations, in degrees.

    Each angle is ``acos(r_true_k . r_k)``, evaluated as
    ``atan2(|r_true_k x r_k|, r_true_k . r_k)``: identical for unit columns but
    free of the ~1e-6 degree floor that ``acos`` has next to 1.
    """
    A = np.asarray(R_true, dtype=float)
    B = np.asarray(R_est, dtype=float)
    cosines = np.clip(np.sum(A * B, axis=0), -1.0, 1.0)
    sines = np.linalg.norm(np.cross(A.T, B.T), axis=1)
    angles = np.arctan2(sines, cosines)
    return float(np.linalg.norm(angles) * 180.0 / np.pi)


def translation_error_pct(t_true: np.ndarray, t_est: np.ndarray) -> float:
    """``100 * |t_true - t_est| / |t_est|``.

    The denominator is the norm of the *estimate*, not of the ground truth.
    """
    t_true = np.asarray(t_true, dtype=float)
    t_est = np.asarray(t_est, dtype=float)
    denom = np.linalg.norm(t_est)
    if denom == 0:
        raise ZeroEstimate("estimated translation has zero norm")
    return float(np.linalg.norm(t_true - t_est) / denom * 100.0)


def reprojection_errors(pose: Pose, corr: Correspondences) -> np.ndarray:
    """Pixel distance between each projected world point and its observation.

    Points that land on or behind the camera plane get ``inf`` so they can never
    pass an inlier threshold.
    """
    Xc = pose.transform(corr.world)
    z = Xc[:, 2]
    err = np.full(len(corr), np.inf)
    front = z > 0
    proj = corr.f * Xc[front, :2] / z[front, None]
    err[front] = np.linalg.norm(proj - corr.image[front], axis=1)
    return err


def reprojection_error(pose: Pose, c: Correspondence) -> float:
    """Single-correspondence version of :func:`reprojection_errors`."""
    Xc = pose.transform(c.world)
    if Xc[2] <= 0:
        return float("inf")
    proj = c.image.f * Xc[:2] / Xc[2]
    return float(np.hypot(proj[0] - c.image.u, proj[1] - c.image.v))


def pose_errors(truth: Pose, est: Pose) -> tuple[float, float]:
    """(rotation error in degrees, translation error in percent)."""
    return (
        rotation_error_deg(truth.rotation, est.rotation),
        translation_error_pct(truth.translation, est.translation),
    )
