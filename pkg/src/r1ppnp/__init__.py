"""Robust perspective-n-point pose estimation with soft re-weighting and 1-point RANSAC."""
from .core import CoreConfig, CoreResult, solve_core
from .errors import (
    DegenerateConfiguration,
    DegenerateSample,
    DegenerateScale,
    NoConvergence,
    NoSolution,
    NonPositiveDepth,
    NonPositiveScale,
    ParseError,
    PnPError,
    ValidationError,
    ZeroEstimate,
)
from .geometry import (
    CameraIntrinsics,
    Correspondence,
    Correspondences,
    ImagePoint,
    Pose,
    pose_errors,
    project,
    recover_translation,
    reprojection_error,
    reprojection_errors,
    rotation_error_deg,
    translation_error_pct,
)
from .p3p import ransac_p3p, solve_p3p
from .robust import RobustConfig, RobustResult, solve_robust
from .synth import OutlierModel, Regime, SceneConfig, SyntheticInstance, generate

__version__ = "0.1.0"
