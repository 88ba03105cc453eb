"""RANSAC + P3P baseline.

The minimal solver is Grunert's classical formulation: the three camera-to-point
distances satisfy three law-of-cosines equations, which reduce to a quartic in
the distance ratio ``v = s3 / s1``.  Each real root yields a candidate set of
camera-frame points; the pose follows from absolute orientation.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateSample, NoSolution, ValidationError
from .geometry import Correspondences, Pose, reprojection_errors
from .robust import MIN_INLIERS, RobustConfig, RobustResult, ransac_trials_needed

IMAG_TOL = 1e-8
POLISH_STEPS = 3


def _quartic(a2, b2, c2, ca, cb, cg):
    """Coefficients (highest power first) of Grunert's quartic in ``v``."""
    k = (a2 - c2) / b2
    m = (a2 + c2) / b2
    return np.array(
        [
            (k - 1.0) ** 2 - 4.0 * c2 / b2 * ca**2,
            4.0 * (k * (1.0 - k) * cb - (1.0 - m) * ca * cg + 2.0 * c2 / b2 * ca**2 * cb),
            2.0
            * (
                k**2
                - 1.0
                + 2.0 * k**2 * cb**2
                + 2.0 * (b2 - c2) / b2 * ca**2
                - 4.0 * m * ca * cb * cg
                + 2.0 * (b2 - a2) / b2 * cg**2
            ),
            4.0 * (-k * (1.0 + k) * cb + 2.0 * a2 / b2 * cg**2 * cb - (1.0 - m) * ca * cg),
            (1.0 + k) ** 2 - 4.0 * a2 / b2 * cg**2,
        ]
    )


def _residuals(s, sq, cosines):
    s1, s2, s3 = s
    a2, b2, c2 = sq
    ca, cb, cg = cosines
    return np.array(
        [
            s2 * s2 + s3 * s3 - 2 * s2 * s3 * ca - a2,
            s1 * s1 + s3 * s3 - 2 * s1 * s3 * cb - b2,
            s1 * s1 + s2 * s2 - 2 * s1 * s2 * cg - c2,
        ]
    )


def _polish(s, sq, cosines):
    ca, cb, cg = cosines
    for _ in range(POLISH_STEPS):
        s1, s2, s3 = s
        J = np.array(
            [
                [0.0, 2 * s2 - 2 * s3 * ca, 2 * s3 - 2 * s2 * ca],
                [2 * s1 - 2 * s3 * cb, 0.0, 2 * s3 - 2 * s1 * cb],
                [2 * s1 - 2 * s2 * cg, 2 * s2 - 2 * s1 * cg, 0.0],
            ]
        )
        try:
            step = np.linalg.solve(J, _residuals(s, sq, cosines))
        except np.linalg.LinAlgError:
            break
        s = s - step
    return s


def _distances_from_root(v, sq, cosines):
    a2, b2, c2 = sq
    ca, cb, cg = cosines
    denom = 1.0 + v * v - 2.0 * v * cb
    if denom <= 0:
        return None
    s1 = np.sqrt(b2 / denom)
    k = (a2 - c2) / b2
    den_u = 2.0 * (cg - v * ca)
    if abs(den_u) > 1e-10:
        candidates = [((k - 1.0) * v * v - 2.0 * k * cb * v + 1.0 + k) / den_u]
    else:
        # linear formula is singular; take both roots of the c-equation instead
        disc = cg * cg - 1.0 + c2 / (s1 * s1)
        if disc < 0:
            return None
        candidates = [cg + np.sqrt(disc), cg - np.sqrt(disc)]
    best = None
    for u in candidates:
        s = np.array([s1, u * s1, v * s1])
        r = np.abs(_residuals(s, sq, cosines)).max()
        if best is None or r < best[0]:
            best = (r, s)
    return best[1]


def solve_p3p(world: np.ndarray, image: np.ndarray, f: float) -> list[Pose]:
    """All poses consistent with three world points and their centred pixels.

    Returns between zero and four candidates, each a proper rotation with every
    sample point in front of the camera.
    """
    P = np.asarray(world, dtype=float).reshape(3, 3)
    x = np.column_stack([np.asarray(image, dtype=float).reshape(3, 2), np.full(3, float(f))])
    rays = x / np.linalg.norm(x, axis=1, keepdims=True)

    scale = max(np.ptp(P, axis=0).max(), 1e-300)
    if np.linalg.norm(np.cross(P[1] - P[0], P[2] - P[0])) <= 1e-9 * scale**2:
        raise DegenerateSample("world points are collinear")
    for i, j in ((0, 1), (0, 2), (1, 2)):
        if np.linalg.norm(np.cross(rays[i], rays[j])) <= 1e-12:
            raise DegenerateSample("two observations share a line of sight")

    a2 = np.sum((P[1] - P[2]) ** 2)
    b2 = np.sum((P[0] - P[2]) ** 2)
    c2 = np.sum((P[0] - P[1]) ** 2)
    sq = (a2, b2, c2)
    cosines = (rays[1] @ rays[2], rays[0] @ rays[2], rays[0] @ rays[1])

    coeffs = _quartic(a2, b2, c2, *cosines)
    roots = np.roots(coeffs / np.abs(coeffs).max())
    poses = []
    centroid_w = P.mean(axis=0)
    for root in roots:
        if abs(root.imag) > IMAG_TOL * max(1.0, abs(root.real)) or root.real <= 0:
            continue
        s = _distances_from_root(root.real, sq, cosines)
        if s is None:
            continue
        s = _polish(s, sq, cosines)
        if np.any(s <= 0) or np.abs(_residuals(s, sq, cosines)).max() > 1e-6 * b2:
            continue
        C = s[:, None] * rays
        rot, _ = Rotation.align_vectors(C - C.mean(axis=0), P - centroid_w)
        R = rot.as_matrix()
        t = C.mean(axis=0) - R @ centroid_w
        pose = Pose(R, t)
        if np.all(pose.transform(P)[:, 2] > 0) and not any(_same(pose, q) for q in poses):
            poses.append(pose)
    return poses


def _same(a: Pose, b: Pose) -> bool:
    return np.allclose(a.rotation, b.rotation, atol=1e-9) and np.allclose(
        a.translation, b.translation, atol=1e-9 * max(1.0, np.linalg.norm(a.translation))
    )


def ransac_p3p(
    corr: Correspondences,
    config: RobustConfig = RobustConfig(),
    seed: int = 0,
    max_trials: int = 10_000,
) -> RobustResult:
    """Hypothesise-and-verify with uniformly drawn minimal samples.

    Runs until the trial count reaches the s=3 bound for the best inlier
    fraction seen so far, or ``max_trials``.  No refinement is applied.
    ``control_index`` reports the first index of the winning sample.
    """
    n = len(corr)
    if n < MIN_INLIERS:
        raise ValidationError(f"need at least {MIN_INLIERS} correspondences, got {n}")
    H = config.inlier_threshold
    rng = np.random.default_rng(seed)

    best = None  # (count, mean error, pose, mask, sample)
    trials = 0
    needed = max_trials
    while trials < needed:
        trials += 1
        sample = rng.choice(n, size=3, replace=False)
        try:
            candidates = solve_p3p(corr.world[sample], corr.image[sample], corr.f)
        except DegenerateSample:
            continue
        for pose in candidates:
            err = reprojection_errors(pose, corr)
            mask = err <= H
            count = int(np.count_nonzero(mask))
            if count == 0:
                continue
            mean_err = float(np.mean(err[mask]))
            if best is None or count > best[0] or (count == best[0] and mean_err < best[1]):
                best = (count, mean_err, pose, mask, sample)
        if best is not None:
            needed = ransac_trials_needed(config.certainty, best[0] / n, 3, max_trials)

    if best is None or best[0] < MIN_INLIERS:
        raise NoSolution(f"no sample gathered {MIN_INLIERS} inliers in {trials} trials")
    count, mean_err, pose, mask, sample = best
    return RobustResult(
        pose=pose,
        inlier_mask=mask,
        control_index=int(sample[0]),
        trials_used=trials,
        total_iterations=0,
        mean_inlier_reprojection_error=mean_err,
    )
