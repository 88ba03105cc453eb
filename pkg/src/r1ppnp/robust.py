"""Outlier handling: soft re-weighting inside the core iteration plus 1-point RANSAC.

Each RANSAC trial picks one control point and runs the core iteration with
weights ``min(1, H / e_i)`` recomputed from the current reprojection errors.  A
trial stops once its inlier count has not grown for ``stall_window``
iterations.  The best trial's inliers are then re-solved without re-weighting.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core import (
    CoreConfig,
    ShapeVectors,
    SolverState,
    compute_p,
    image_residuals,
    initial_state,
    iterate,
    mirror_flip,
    solve_core,
    state_pose,
)
from .errors import (
    DegenerateConfiguration,
    DegenerateScale,
    NoConvergence,
    NoSolution,
    ValidationError,
)
from .geometry import Correspondences, Pose, reprojection_errors

MIN_INLIERS = 4
TRIAL_FAILURES = (DegenerateConfiguration, DegenerateScale)


@dataclass(frozen=True)
class RobustConfig:
    inlier_threshold: float = 10.0
    certainty: float = 0.99
    early_stop_inlier_fraction: float = 0.60
    stall_window: int = 20
    core: CoreConfig = field(default_factory=CoreConfig)
    max_control_trials: Optional[int] = None  # None: one trial per point at most

    def __post_init__(self):
        if not self.inlier_threshold > 0:
            raise ValidationError("inlier threshold must be positive")
        if not 0 < self.certainty < 1:
            raise ValidationError("certainty must lie in (0, 1)")
        if self.stall_window < 1:
            raise ValidationError("stall_window must be >= 1")
        if self.max_control_trials is not None and self.max_control_trials < 1:
            raise ValidationError("max_control_trials must be >= 1")


@dataclass(frozen=True, eq=False)
class RobustResult:
    pose: Pose
    inlier_mask: np.ndarray
    control_index: int
    trials_used: int
    total_iterations: int
    mean_inlier_reprojection_error: float
    trial_iterations: int = 0
    refinement_iterations: int = 0

    @property
    def n_inliers(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))


class TrialResult(NamedTuple):
    control_index: int
    state: SolverState
    inlier_counts: list
    inlier_mask: np.ndarray
    errors: np.ndarray

    @property
    def n_inliers(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))

    @property
    def iterations(self) -> int:
        return self.state.iteration

    @property
    def mean_inlier_error(self) -> float:
        return float(np.mean(self.errors[self.inlier_mask]))


def compute_weights(errors: np.ndarray, H: float) -> np.ndarray:
    """``1`` up to the threshold, ``H / e`` beyond it, ``0`` for infinite errors."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(e <= H, 1.0, H / e)


def control_point_order(corr: Correspondences) -> np.ndarray:
    """Indices sorted by pixel distance to the image centroid, nearest first."""
    d = np.linalg.norm(corr.image - corr.image.mean(axis=0), axis=1)
    return np.argsort(d, kind="stable")


def ransac_trials_needed(
    certainty: float, inlier_fraction: float, s: int, cap: int = 10**9
) -> int:
    """Smallest trial count giving ``certainty`` of one all-inlier sample of size ``s``."""
    if inlier_fraction >= 1.0:
        return 1
    good = inlier_fraction**s
    if good <= 0.0:
        return cap
    denom = math.log1p(-good)
    if denom == 0.0:
        return cap
    return min(cap, max(1, math.ceil(math.log1p(-certainty) / denom)))


def run_trial(
    corr: Correspondences,
    control_index: int,
    config: RobustConfig = RobustConfig(),
) -> TrialResult:
    """Re-weighted core iteration from one control point.

    Stops when the inlier count at iteration ``k`` does not exceed the count at
    ``k - stall_window``, or when the core iteration budget runs out.  Settling
    on a reflection (stalled count or a stationary ``R``) triggers a mirror flip
    and restarts the stall window instead.
    """
    H = config.inlier_threshold
    core = config.core
    shape = ShapeVectors.build(corr, control_index)
    state = initial_state(shape, config=core)
    weights = np.ones(len(shape))
    counts = []
    window_start = 0  # stall comparisons never reach back across a mirror flip
    forced = None
    errors = None
    while state.iteration < core.max_iterations:
        R_old = state.R
        state = iterate(state, shape, core.use_depth_weighting, weights, forced)
        forced = None
        errors = image_residuals(compute_p(state.R, state.mu, shape), shape)
        weights = compute_weights(errors, H)
        state.weights = weights
        counts.append(1 + int(np.count_nonzero(errors <= H)))
        k = len(counts)
        stalled = (
            k - window_start > config.stall_window
            and counts[-1] - counts[-1 - config.stall_window] <= 0
        )
        settled = stalled or np.linalg.norm(state.R - R_old) < core.rotation_tolerance
        if settled and np.linalg.det(state.R) < 0 and state.flips < core.max_flips:
            state = mirror_flip(state)
            forced = state.lambdas
            window_start = k
            continue
        if stalled:
            break

    full_err = np.zeros(len(corr))
    full_err[shape.others] = errors
    return TrialResult(control_index, state, counts, full_err <= H, full_err)


def _better(candidate: TrialResult, best: Optional[TrialResult]) -> bool:
    if best is None:
        return True
    if candidate.n_inliers != best.n_inliers:
        return candidate.n_inliers > best.n_inliers
    return candidate.mean_inlier_error < best.mean_inlier_error


def _try_trial(corr, o, config):
    try:
        return run_trial(corr, o, config)
    except TRIAL_FAILURES:
        return None


def refine(corr: Correspondences, trial: TrialResult, config: RobustConfig):
    """Re-solve on the trial's inliers with unit weights, warm-started from the trial."""
    idx = np.flatnonzero(trial.inlier_mask)
    sub_control = int(np.searchsorted(idx, trial.control_index))
    return solve_core(
        corr.subset(idx),
        sub_control,
        config.core,
        initial_rotation=trial.state.R,
        initial_mu=trial.state.mu,
    )


def solve_robust(
    corr: Correspondences,
    config: RobustConfig = RobustConfig(),
    workers: int = 1,
) -> RobustResult:
    """Full pipeline: centre-outward 1-point RANSAC, then unweighted refinement.

    With ``workers > 1`` trials are evaluated in batches on a thread pool but
    reduced strictly in control-point order, so the result (including
    ``trials_used``) is identical to the sequential run.
    """
    n = len(corr)
    if n < MIN_INLIERS:
        raise ValidationError(f"need at least {MIN_INLIERS} correspondences, got {n}")
    cap = n if config.max_control_trials is None else min(n, config.max_control_trials)
    order = [int(i) for i in control_point_order(corr)[:cap]]

    best = None
    trials = 0
    stop = False
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for start in range(0, len(order), max(1, workers)):
            batch = order[start : start + max(1, workers)]
            if pool is None:
                outcomes = [_try_trial(corr, o, config) for o in batch]
            else:
                outcomes = list(pool.map(lambda o: _try_trial(corr, o, config), batch))
            for trial in outcomes:
                trials += 1
                if trial is not None and _better(trial, best):
                    best = trial
                if best is not None:
                    frac = best.n_inliers / n
                    needed = ransac_trials_needed(config.certainty, frac, 1, cap)
                    if frac >= config.early_stop_inlier_fraction or trials >= needed:
                        stop = True
                        break
            if stop:
                break
    finally:
        if pool is not None:
            pool.shutdown()

    if best is None or best.n_inliers < MIN_INLIERS:
        raise NoSolution(f"no control point gathered {MIN_INLIERS} inliers in {trials} trials")

    try:
        refined = refine(corr, best, config)
        pose, refine_iters = refined.pose, refined.iterations
    except (NoConvergence, *TRIAL_FAILURES):
        if np.linalg.det(best.state.R) < 0:
            raise NoSolution("best trial converged onto a reflection and refinement failed")
        pose = state_pose(best.state, ShapeVectors.build(corr, best.control_index))
        refine_iters = 0

    errors = reprojection_errors(pose, corr)
    mask = errors <= config.inlier_threshold
    if np.count_nonzero(mask) < MIN_INLIERS:
        raise NoSolution("refined pose keeps fewer than 4 inliers")
    return RobustResult(
        pose=pose,
        inlier_mask=mask,
        control_index=best.control_index,
        trials_used=trials,
        total_iterations=best.iterations + refine_iters,
        mean_inlier_reprojection_error=float(np.mean(errors[mask])),
        trial_iterations=best.iterations,
        refinement_iterations=refine_iters,
    )
