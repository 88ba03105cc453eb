"""Seeded synthetic PnP scenes: inliers in a camera-frame box plus random mismatches."""
from __future__ import annotations

import enum
from dataclasses import dataclass, asdict

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import CameraIntrinsics, Correspondences, Pose, reprojection_errors
from .errors import ValidationError


class Regime(str, enum.Enum):
    ORDINARY = "ordinary"
    QUASI_SINGULAR = "quasi"

    @property
    def box(self) -> np.ndarray:
        """Camera-frame sampling box as rows ``[low, high]`` for x, y, z."""
        if self is Regime.ORDINARY:
            return np.array([[-2.0, 2.0], [-2.0, 2.0], [4.0, 8.0]])
        return np.array([[1.0, 2.0], [1.0, 2.0], [4.0, 8.0]])


class OutlierModel(str, enum.Enum):
    REPROJECTED = "reprojected"  # image point of an unrelated scene point
    VIEWPORT = "viewport"  # uniform pixel over the viewport


@dataclass(frozen=True)
class SceneConfig:
    regime: Regime = Regime.ORDINARY
    n_inliers: int = 100
    n_outliers: int = 0
    noise_sigma: float = 0.0
    f: float = 1000.0
    width: int = 640
    height: int = 480
    seed: int = 0
    outlier_model: OutlierModel = OutlierModel.REPROJECTED

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "outlier_model", OutlierModel(self.outlier_model))
        if self.n_inliers < 4:
            raise ValidationError("need at least 4 inliers")
        if self.n_outliers < 0 or self.noise_sigma < 0:
            raise ValidationError("outlier count and noise must be non-negative")

    @property
    def outlier_fraction(self) -> float:
        return self.n_outliers / (self.n_inliers + self.n_outliers)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        d["outlier_model"] = self.outlier_model.value
        return d


@dataclass(frozen=True, eq=False)
class SyntheticInstance:
    correspondences: Correspondences
    truth_pose: Pose
    truth_inlier_mask: np.ndarray
    config: SceneConfig

    @property
    def intrinsics(self) -> CameraIntrinsics:
        # coordinates are generated already centred on the principal point
        return CameraIntrinsics(self.config.f, 0.0, 0.0, self.config.width, self.config.height)


def _sample_box(rng: np.random.Generator, box: np.ndarray, n: int) -> np.ndarray:
    return rng.uniform(box[:, 0], box[:, 1], size=(n, 3))


def generate(config: SceneConfig) -> SyntheticInstance:
    """Draw one instance.

    Points are sampled in the camera frame, then mapped to a world frame through
    a uniformly random rotation and a translation uniform in ``[-1, 1]^3``.
    Each outlier pairs a fresh box point with either the noisy image of a second,
    unrelated box point or a uniform pixel over the viewport.
    """
    rng = np.random.default_rng(config.seed)
    box = config.regime.box
    R = Rotation.random(random_state=rng).as_matrix()
    t = rng.uniform(-1.0, 1.0, size=3)

    cam_in = _sample_box(rng, box, config.n_inliers)
    img_in = config.f * cam_in[:, :2] / cam_in[:, 2:3]
    img_in = img_in + rng.normal(0.0, config.noise_sigma, size=img_in.shape)

    cam_out = _sample_box(rng, box, config.n_outliers)
    if config.outlier_model is OutlierModel.REPROJECTED:
        decoy = _sample_box(rng, box, config.n_outliers)
        img_out = config.f * decoy[:, :2] / decoy[:, 2:3]
        img_out = img_out + rng.normal(0.0, config.noise_sigma, size=img_out.shape)
    else:
        half = np.array([config.width / 2.0, config.height / 2.0])
        img_out = rng.uniform(-half, half, size=(config.n_outliers, 2))

    cam = np.vstack([cam_in, cam_out])
    world = (cam - t) @ R  # R^T (X_c - t), row-wise
    image = np.vstack([img_in, img_out])
    mask = np.zeros(len(cam), dtype=bool)
    mask[: config.n_inliers] = True

    order = rng.permutation(len(cam))
    return SyntheticInstance(
        correspondences=Correspondences(world[order], image[order], config.f),
        truth_pose=Pose(R, t),
        truth_inlier_mask=mask[order],
        config=config,
    )


def regenerate_errors(instance: SyntheticInstance, pose: Pose) -> np.ndarray:
    """Per-point reprojection errors of ``instance`` under ``pose``."""
    return reprojection_errors(pose, instance.correspondences)
