"""Command line entry point: ``r1ppnp solve | synth | bench``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .core import CoreConfig, solve_core
from .errors import NoConvergence, NoSolution, PnPError
from .harness import (
    ExperimentSpec,
    default_workers,
    ingest_correspondences,
    save_instance,
    write_benchmark,
)
from .p3p import ransac_p3p
from .robust import RobustConfig, control_point_order, solve_robust
from .synth import SceneConfig, generate

EXIT_OK, EXIT_NO_SOLUTION, EXIT_INPUT = 0, 1, 2


def _solve(args) -> int:
    intr, corr = ingest_correspondences(args.input, args.format)
    config = RobustConfig(inlier_threshold=args.threshold)
    if args.solver == "r1ppnp":
        res = solve_robust(corr, config)
    elif args.solver == "p3p":
        res = ransac_p3p(corr, config, seed=args.seed)
    else:
        core = solve_core(corr, int(control_point_order(corr)[0]), CoreConfig())
        out = {"rotation": core.pose.rotation.tolist(),
               "translation": core.pose.translation.tolist(),
               "iterations": core.iterations}
        print(json.dumps(out, indent=1))
        return EXIT_OK
    out = {
        "rotation": res.pose.rotation.tolist(),
        "translation": res.pose.translation.tolist(),
        "inliers": np.flatnonzero(res.inlier_mask).tolist(),
        "control_index": res.control_index,
        "trials_used": res.trials_used,
        "total_iterations": res.total_iterations,
        "mean_inlier_reprojection_error": res.mean_inlier_reprojection_error,
    }
    print(json.dumps(out, indent=1))
    return EXIT_OK


def _synth(args) -> int:
    scene = SceneConfig(
        regime=args.regime,
        n_inliers=args.inliers,
        n_outliers=args.outliers,
        noise_sigma=args.sigma,
        seed=args.seed,
        outlier_model=args.outlier_model,
    )
    save_instance(generate(scene), args.output, args.format)
    return EXIT_OK


def _bench(args) -> int:
    spec = ExperimentSpec.from_json(args.spec)
    if args.seed is not None:
        spec = ExperimentSpec.from_dict({**spec.__dict__, "base_seed": args.seed})
    write_benchmark(spec, args.output_dir, args.workers)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="r1ppnp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="estimate a pose from a correspondence file")
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=5.0, help="inlier threshold in pixels")
    p.add_argument("--solver", choices=("r1ppnp", "p3p", "core"), default="r1ppnp")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_solve)

    p = sub.add_parser("synth", help="write a synthetic correspondence file")
    p.add_argument("--regime", choices=("ordinary", "quasi"), default="ordinary")
    p.add_argument("--inliers", type=int, default=100)
    p.add_argument("--outliers", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outlier-model", choices=("reprojected", "viewport"), default="reprojected")
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=("json", "csv"))
    p.set_defaults(func=_synth)

    p = sub.add_parser("bench", help="run a benchmark sweep described by a JSON spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--seed", type=int, help="override the spec's base_seed")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $R1PPNP_THREADS or 1)")
    p.set_defaults(func=_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NoSolution, NoConvergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except (PnPError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
