"""Outlier-free iterative PnP solver built around a single control point.

All other points are described by their offsets ``S_i = X_i - X_o`` from the
control point ``o``.  Two point sets are alternated:

* ``p_i = x_o + mu R S_i`` -- the scaled, rotated object hung from the control ray;
* ``q_i = lambda_i x_i``  -- the closest point to ``p_i`` on its own line of sight.

The q-stage projects every ``p_i`` onto its ray, the p-stage refits ``R`` by a
weighted orthogonal Procrustes problem and rescales ``mu`` by comparing image
spreads.  ``R`` is allowed to become a reflection while iterating; a converged
reflection is escaped by inverting all relative depths.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DegenerateConfiguration, DegenerateScale, NoConvergence, ValidationError
from .geometry import Correspondences, Pose, recover_translation

LAMBDA_FLOOR = 1e-6
RANK_TOL = 1e-10


@dataclass(frozen=True)
class CoreConfig:
    max_iterations: int = 100
    rotation_tolerance: float = 1e-5
    initial_mu: float = 1e-4
    use_depth_weighting: bool = True
    max_flips: int = 2

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if not self.rotation_tolerance > 0:
            raise ValidationError("rotation_tolerance must be positive")
        if not self.initial_mu > 0:
            raise ValidationError("initial_mu must be positive")
        if self.max_flips < 0:
            raise ValidationError("max_flips must be >= 0")


@dataclass(frozen=True, eq=False)
class ShapeVectors:
    """Control-relative geometry, precomputed once per control point.

    Arrays are indexed over the non-control points only; ``others`` maps them
    back to positions in the original correspondence set.
    """

    control_index: int
    control_ray: np.ndarray
    control_world: np.ndarray
    others: np.ndarray
    shape: np.ndarray
    rays: np.ndarray
    rays_sqnorm: np.ndarray
    f: float

    @classmethod
    def build(cls, corr: Correspondences, control_index: int) -> "ShapeVectors":
        n = len(corr)
        if not 0 <= control_index < n:
            raise IndexError(f"control index {control_index} out of range for {n} points")
        if n < 4:
            raise ValidationError(f"need at least 4 correspondences, got {n}")
        rays = corr.rays
        others = np.delete(np.arange(n), control_index)
        x = rays[others]
        return cls(
            control_index=control_index,
            control_ray=rays[control_index],
            control_world=corr.world[control_index],
            others=others,
            shape=corr.world[others] - corr.world[control_index],
            rays=x,
            rays_sqnorm=np.einsum("ij,ij->i", x, x),
            f=corr.f,
        )

    def __len__(self):
        return len(self.others)


@dataclass(eq=False)
class SolverState:
    R: np.ndarray
    mu: float
    lambdas: np.ndarray
    weights: np.ndarray
    iteration: int = 0
    flips: int = 0


class CoreResult(NamedTuple):
    pose: Pose
    objective: float
    iterations: int
    flips: int
    converged: bool
    state: SolverState


def compute_p(R: np.ndarray, mu: float, shape: ShapeVectors) -> np.ndarray:
    """Virtual points ``p_i = x_o + mu R S_i``, shape (M, 3)."""
    return shape.control_ray + mu * (shape.shape @ R.T)


def q_stage(p: np.ndarray, shape: ShapeVectors) -> np.ndarray:
    """Relative depths of the orthogonal feet of ``p_i`` on their lines of sight."""
    lam = np.einsum("ij,ij->i", shape.rays, p) / shape.rays_sqnorm
    return np.maximum(lam, LAMBDA_FLOOR)


def _point_weights(lambdas, weights, use_depth_weighting):
    if weights is None:
        weights = 1.0
    if use_depth_weighting:
        return weights / lambdas
    return np.broadcast_to(np.asarray(weights, dtype=float), lambdas.shape)


def p_stage_rotation(
    q: np.ndarray,
    shape: ShapeVectors,
    lambdas: np.ndarray,
    weights: Optional[np.ndarray] = None,
    use_depth_weighting: bool = True,
) -> np.ndarray:
    """Weighted Procrustes fit of ``R S_i`` to ``q_i - x_o``.

    Each column of both matrices is scaled by ``w_i / lambda_i`` so the cross
    covariance accumulates the squared factor.  The determinant is left alone:
    a reflection is a legitimate intermediate answer.
    """
    omega = _point_weights(lambdas, weights, use_depth_weighting)
    A = (q - shape.control_ray) * (omega**2)[:, None]
    M = A.T @ shape.shape
    U, s, Vt = np.linalg.svd(M)
    if not s[0] > 0 or s[1] <= RANK_TOL * s[0]:
        raise DegenerateConfiguration("shape matrix has rank below 2")
    return U @ Vt


def p_stage_scale(
    p: np.ndarray,
    shape: ShapeVectors,
    weights: Optional[np.ndarray],
    mu_old: float,
) -> float:
    """Rescale ``mu`` by the ratio of observed to predicted image spread around ``x_o``."""
    z = p[:, 2]
    front = z > 0
    if weights is not None:
        front &= weights > 0
    if not np.any(front):
        raise DegenerateScale("no virtual point lies in front of the camera")
    v = shape.f * p[front, :2] / z[front, None]
    xo = shape.control_ray[:2]
    x = shape.rays[front, :2]
    w = 1.0 if weights is None else weights[front, None]
    # third components of v and x both equal f, so they cancel against x_o
    B = w * (v - xo)
    C = w * (x - xo)
    nb = np.linalg.norm(B)
    if nb < 1e-12:
        raise DegenerateScale("projected spread vanished")
    return mu_old * np.linalg.norm(C) / nb


def objective(
    p: np.ndarray,
    q: np.ndarray,
    lambdas: np.ndarray,
    use_depth_weighting: bool = True,
) -> float:
    d = np.linalg.norm(p - q, axis=-1)
    if use_depth_weighting:
        d = d / lambdas
    return float(np.sum(d**2))


def mirror_flip(state: SolverState) -> SolverState:
    """Invert every relative depth to jump out of a mirror-image basin."""
    return replace(state, lambdas=1.0 / state.lambdas, flips=state.flips + 1)


def image_residuals(p: np.ndarray, shape: ShapeVectors) -> np.ndarray:
    """Reprojection error of each non-control point under the current (R, mu).

    The camera-frame point is ``p_i / mu``, so projecting ``p_i`` directly gives
    the same pixel.  Points on or behind the camera plane get ``inf``.
    """
    z = p[:, 2]
    err = np.full(len(p), np.inf)
    front = z > 0
    v = shape.f * p[front, :2] / z[front, None]
    err[front] = np.linalg.norm(v - shape.rays[front, :2], axis=1)
    return err


def iterate(
    state: SolverState,
    shape: ShapeVectors,
    use_depth_weighting: bool,
    weights: Optional[np.ndarray] = None,
    forced_lambdas: Optional[np.ndarray] = None,
) -> SolverState:
    """One q-stage + p-stage pass.

    ``state.lambdas`` holds the previous iteration's depths; they supply the
    ``1/lambda`` weights of the p-stage.  ``forced_lambdas`` replaces the
    q-stage (used right after a mirror flip).
    """
    p = compute_p(state.R, state.mu, shape)
    lam = q_stage(p, shape) if forced_lambdas is None else forced_lambdas
    prev = lam if state.iteration == 0 or forced_lambdas is not None else state.lambdas
    R = p_stage_rotation(lam[:, None] * shape.rays, shape, prev, weights, use_depth_weighting)
    mu = p_stage_scale(compute_p(R, state.mu, shape), shape, weights, state.mu)
    return replace(state, R=R, mu=mu, lambdas=lam, iteration=state.iteration + 1)


def initial_state(shape: ShapeVectors, R=None, mu=None, config: CoreConfig = CoreConfig()):
    R = np.eye(3) if R is None else np.array(R, dtype=float)
    mu = config.initial_mu if mu is None else float(mu)
    lam = q_stage(compute_p(R, mu, shape), shape)
    return SolverState(R=R, mu=mu, lambdas=lam, weights=np.ones(len(shape)))


def state_pose(state: SolverState, shape: ShapeVectors) -> Pose:
    t = recover_translation(state.R, state.mu, shape.control_ray, shape.control_world)
    return Pose(state.R, t)


def state_objective(state: SolverState, shape: ShapeVectors, use_depth_weighting=True) -> float:
    p = compute_p(state.R, state.mu, shape)
    lam = q_stage(p, shape)
    return objective(p, lam[:, None] * shape.rays, lam, use_depth_weighting)


def solve_core(
    corr: Correspondences,
    control_index: int,
    config: CoreConfig = CoreConfig(),
    *,
    initial_rotation=None,
    initial_mu=None,
    callback: Optional[Callable[[SolverState, ShapeVectors], None]] = None,
) -> CoreResult:
    """Solve an outlier-free PnP problem from a chosen control point.

    Iterates until the Frobenius change of ``R`` drops below
    ``config.rotation_tolerance``.  Convergence onto a reflection triggers a
    mirror flip; more than ``config.max_flips`` such convergences raise
    :class:`NoConvergence`.  ``callback`` sees the state after every iteration.
    """
    shape = ShapeVectors.build(corr, control_index)
    state = initial_state(shape, initial_rotation, initial_mu, config)
    state.weights = np.ones(len(shape))
    converged = False
    forced = None
    while state.iteration < config.max_iterations:
        R_old = state.R
        state = iterate(state, shape, config.use_depth_weighting, forced_lambdas=forced)
        forced = None
        if callback is not None:
            callback(state, shape)
        if np.linalg.norm(state.R - R_old) < config.rotation_tolerance:
            if np.linalg.det(state.R) > 0:
                converged = True
                break
            if state.flips >= config.max_flips:
                raise NoConvergence(
                    f"converged onto a reflection after {state.flips} mirror flips"
                )
            state = mirror_flip(state)
            forced = state.lambdas
    if np.linalg.det(state.R) < 0:
        raise NoConvergence(
            f"iteration budget of {config.max_iterations} exhausted on a reflection"
        )
    return CoreResult(
        pose=state_pose(state, shape),
        objective=state_objective(state, shape, config.use_depth_weighting),
        iterations=state.iteration,
        flips=state.flips,
        converged=converged,
        state=state,
    )
