"""Seeded benchmark sweeps, summary statistics and correspondence file I/O."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .core import CoreConfig, solve_core
from .errors import ParseError, PnPError, ValidationError
from .geometry import CameraIntrinsics, Correspondences, Pose, pose_errors, reprojection_errors
from .p3p import ransac_p3p
from .robust import RobustConfig, control_point_order, solve_robust
from .synth import SceneConfig, SyntheticInstance, generate

SOLVERS = ("r1ppnp", "ransac_p3p", "r1ppnp_core")
SWEEP_VARIABLES = ("noise_sigma", "outlier_fraction", "n_points")
THREADS_ENV = "R1PPNP_THREADS"

# ---------------------------------------------------------------------------
# experiment description


@dataclass(frozen=True)
class ExperimentSpec:
    sweep_variable: str
    values: tuple
    scene: dict = field(default_factory=dict)
    solvers: tuple = ("r1ppnp", "ransac_p3p")
    trials_per_cell: int = 100
    base_seed: int = 0
    inlier_threshold: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "solvers", tuple(self.solvers))
        object.__setattr__(self, "scene", dict(self.scene))
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValidationError(f"unknown sweep variable {self.sweep_variable!r}")
        if not self.values:
            raise ValidationError("sweep needs at least one value")
        if not self.solvers or any(s not in SOLVERS for s in self.solvers):
            raise ValidationError(f"solvers must be drawn from {SOLVERS}")
        if self.trials_per_cell < 1:
            raise ValidationError("trials_per_cell must be >= 1")
        if "seed" in self.scene:
            raise ValidationError("scene seeds are derived from base_seed")
        if self.sweep_variable == "outlier_fraction" and any(not 0 <= v < 1 for v in self.values):
            raise ValidationError("outlier fractions must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno) from exc
        except TypeError as exc:
            raise ValidationError(str(exc)) from exc

    def cell_scene(self, value, seed: int) -> SceneConfig:
        scene = dict(self.scene)
        if self.sweep_variable == "noise_sigma":
            scene["noise_sigma"] = float(value)
        elif self.sweep_variable == "n_points":
            scene["n_inliers"] = int(value)
        else:
            n_in = scene.get("n_inliers", SceneConfig.n_inliers)
            scene["n_outliers"] = int(round(n_in * value / (1.0 - value)))
        return SceneConfig(seed=seed, **scene)


def child_seed(base_seed: int, cell: int, trial: int) -> int:
    """Independent 63-bit seed for one (cell, trial) pair."""
    state = np.random.SeedSequence([base_seed, cell, trial]).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))


@dataclass
class ExperimentRecord:
    sweep_variable: str
    value: float
    cell: int
    trial: int
    seed: int
    solver: str
    regime: str
    n_inliers: int
    n_outliers: int
    noise_sigma: float
    status: str
    e_rot_deg: float = math.nan
    e_trans_pct: float = math.nan
    trials_used: int = 0
    total_iterations: int = 0
    inliers_found: int = 0
    inliers_true_positive: int = 0
    wall_ms: float = math.nan

    @property
    def ok(self) -> bool:
        return self.status == "ok"


RECORD_FIELDS = tuple(f.name for f in fields(ExperimentRecord) if f.name != "wall_ms")
TIMING_FIELDS = ("cell", "trial", "solver", "wall_ms")
METRICS = (
    "e_rot_deg",
    "e_trans_pct",
    "trials_used",
    "total_iterations",
    "inliers_found",
    "inliers_true_positive",
)
SUMMARY_FIELDS = (
    ("sweep_variable", "value", "cell", "solver", "n_trials", "n_failed", "failure_rate")
    + tuple(f"{m}_{s}" for m in METRICS for s in ("mean", "median", "std"))
)

# ---------------------------------------------------------------------------
# running


def run_solver(name: str, instance: SyntheticInstance, threshold: float, seed: int = 0):
    """Run one named solver; returns ``(pose, inlier_mask, trials, iterations)``."""
    corr = instance.correspondences
    config = RobustConfig(inlier_threshold=threshold)
    if name == "r1ppnp":
        res = solve_robust(corr, config)
        return res.pose, res.inlier_mask, res.trials_used, res.total_iterations
    if name == "ransac_p3p":
        res = ransac_p3p(corr, config, seed=seed)
        return res.pose, res.inlier_mask, res.trials_used, res.total_iterations
    if name == "r1ppnp_core":
        res = solve_core(corr, int(control_point_order(corr)[0]), CoreConfig())
        mask = reprojection_errors(res.pose, corr) <= threshold
        return res.pose, mask, 1, res.iterations
    raise ValidationError(f"unknown solver {name!r}")


def _run_cell_trial(spec: ExperimentSpec, cell: int, trial: int) -> list[ExperimentRecord]:
    value = spec.values[cell]
    seed = child_seed(spec.base_seed, cell, trial)
    scene = spec.cell_scene(value, seed)
    instance = generate(scene)
    out = []
    for solver in spec.solvers:
        rec = ExperimentRecord(
            sweep_variable=spec.sweep_variable,
            value=float(value),
            cell=cell,
            trial=trial,
            seed=seed,
            solver=solver,
            regime=scene.regime.value,
            n_inliers=scene.n_inliers,
            n_outliers=scene.n_outliers,
            noise_sigma=scene.noise_sigma,
            status="ok",
        )
        start = time.perf_counter()
        try:
            pose, mask, trials, iters = run_solver(solver, instance, spec.inlier_threshold, seed)
            rec.e_rot_deg, rec.e_trans_pct = pose_errors(instance.truth_pose, pose)
            rec.trials_used = trials
            rec.total_iterations = iters
            rec.inliers_found = int(np.count_nonzero(mask))
            rec.inliers_true_positive = int(np.count_nonzero(mask & instance.truth_inlier_mask))
        except PnPError as exc:
            rec.status = type(exc).__name__
        rec.wall_ms = (time.perf_counter() - start) * 1e3
        out.append(rec)
    return out


def _star(args):
    return _run_cell_trial(*args)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None) -> Iterator[ExperimentRecord]:
    """Yield one record per (cell, trial, solver) in that nesting order.

    Every solver in a cell-trial sees the same generated instance.  With
    ``workers > 1`` trials run in worker processes; output order and content
    are unchanged.
    """
    workers = default_workers() if workers is None else workers
    tasks = [
        (spec, cell, trial)
        for cell in range(len(spec.values))
        for trial in range(spec.trials_per_cell)
    ]
    if workers <= 1:
        for task in tasks:
            yield from _star(task)
        return
    with ProcessPoolExecutor(workers) as pool:
        for batch in pool.map(_star, tasks, chunksize=4):
            yield from batch


def aggregate(records: Iterable[ExperimentRecord]) -> list[dict]:
    """Mean, median and std (ddof=0) per (cell, solver); failures are only counted."""
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.cell, rec.solver), []).append(rec)
    if not groups:
        raise ValidationError("no records to aggregate")
    rows = []
    for (cell, solver), recs in groups.items():
        ok = [r for r in recs if r.ok]
        row = {
            "sweep_variable": recs[0].sweep_variable,
            "value": recs[0].value,
            "cell": cell,
            "solver": solver,
            "n_trials": len(recs),
            "n_failed": len(recs) - len(ok),
            "failure_rate": (len(recs) - len(ok)) / len(recs),
        }
        for m in METRICS:
            vals = np.array([getattr(r, m) for r in ok], dtype=float)
            if len(vals):
                row[f"{m}_mean"] = float(np.mean(vals))
                row[f"{m}_median"] = float(np.median(vals))
                row[f"{m}_std"] = float(np.std(vals))
            else:
                row[f"{m}_mean"] = row[f"{m}_median"] = row[f"{m}_std"] = math.nan
        rows.append(row)
    return rows


def curves(summary: Sequence[dict], metric: str) -> tuple[list[str], list[dict]]:
    """Plot-ready table for one metric: ``x`` plus mean/std columns per solver."""
    solvers = list(dict.fromkeys(r["solver"] for r in summary))
    header = ["x"] + [f"{s}_{k}" for s in solvers for k in ("mean", "std")]
    by_x: dict = {}
    for r in summary:
        row = by_x.setdefault(r["cell"], {"x": r["value"]})
        row[f"{r['solver']}_mean"] = r[f"{metric}_mean"]
        row[f"{r['solver']}_std"] = r[f"{metric}_std"]
    return header, [by_x[k] for k in sorted(by_x)]


# ---------------------------------------------------------------------------
# CSV output


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def emit_csv(rows: Iterable, path, header: Sequence[str] = RECORD_FIELDS) -> None:
    """Write dataclass instances or dicts under a fixed header.

    Floats carry 17 significant digits so values survive a parse round trip.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            d = row if isinstance(row, dict) else asdict(row)
            writer.writerow([_fmt(d.get(k, "")) for k in header])


def read_records(path) -> list[ExperimentRecord]:
    """Parse a file written by :func:`emit_csv` with :data:`RECORD_FIELDS`."""
    types = {f.name: f.type for f in fields(ExperimentRecord)}
    casts = {"int": int, "float": float, "str": str}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ExperimentRecord(**{k: casts[types[k]](v) for k, v in row.items()}))
    return out


def write_benchmark(spec: ExperimentSpec, out_dir, workers: Optional[int] = None) -> list[dict]:
    """Run ``spec`` and write records, timings, summary and per-metric curve files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = list(run_experiment(spec, workers))
    emit_csv(records, out / "records.csv", RECORD_FIELDS)
    emit_csv(records, out / "timings.csv", TIMING_FIELDS)
    summary = aggregate(records)
    emit_csv(summary, out / "summary.csv", SUMMARY_FIELDS)
    for metric in METRICS:
        header, rows = curves(summary, metric)
        emit_csv(rows, out / f"curve_{metric}.csv", header)
    return summary


# ---------------------------------------------------------------------------
# correspondence files

POINT_KEYS = ("X", "Y", "Z", "u", "v")
INTRINSIC_KEYS = ("f", "cu", "cv", "width", "height")


def _number(raw, line=None, field=None) -> float:
    if isinstance(raw, bool):
        raise ParseError("expected a number", line=line, field=field)
    try:
        x = float(raw)
    except (TypeError, ValueError):
        raise ParseError(f"expected a number, got {raw!r}", line=line, field=field) from None
    if not math.isfinite(x):
        raise ParseError(f"non-finite value {raw!r}", line=line, field=field)
    return x


def _intrinsics(values: dict, line=None) -> CameraIntrinsics:
    missing = [k for k in INTRINSIC_KEYS if k not in values]
    if missing:
        raise ParseError("missing intrinsics", line=line, field=missing[0])
    f, cu, cv = (_number(values[k], line, k) for k in ("f", "cu", "cv"))
    width, height = (_number(values[k], line, k) for k in ("width", "height"))
    if f <= 0:
        raise ValidationError(f"focal length must be positive, got {f}")
    if width <= 0 or height <= 0 or width != int(width) or height != int(height):
        raise ValidationError("width and height must be positive integers")
    return CameraIntrinsics(f, cu, cv, int(width), int(height))


def _read_json(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(doc, dict) or "intrinsics" not in doc or "points" not in doc:
        raise ParseError("expected an object with 'intrinsics' and 'points'")
    if not isinstance(doc["intrinsics"], dict) or not isinstance(doc["points"], list):
        raise ParseError("'intrinsics' must be an object and 'points' a list")
    intr = _intrinsics(doc["intrinsics"])
    rows = []
    for i, pt in enumerate(doc["points"]):
        if not isinstance(pt, dict):
            raise ParseError(f"point {i} is not an object")
        for k in POINT_KEYS:
            if k not in pt:
                raise ParseError(f"point {i} is missing a coordinate", field=k)
        rows.append([_number(pt[k], None, f"points[{i}].{k}") for k in POINT_KEYS])
    return intr, rows


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("empty file", line=1)
        missing = [k for k in INTRINSIC_KEYS + POINT_KEYS if k not in reader.fieldnames]
        if missing:
            raise ParseError("missing column", line=1, field=missing[0])
        intr = None
        rows = []
        for row in reader:
            line = reader.line_num
            if None in row or any(v is None for v in row.values()):
                raise ParseError("wrong number of fields", line=line)
            this = _intrinsics(row, line)
            if intr is None:
                intr = this
            elif this != intr:
                raise ParseError("intrinsics differ from the first row", line=line)
            rows.append([_number(row[k], line, k) for k in POINT_KEYS])
    if intr is None:
        raise ValidationError("file holds no correspondences")
    return intr, rows


def ingest_correspondences(path, format: Optional[str] = None):
    """Load ``(CameraIntrinsics, Correspondences)``; pixels come back centred.

    ``format`` is ``"json"`` or ``"csv"``; by default it follows the suffix.
    """
    fmt = (format or Path(path).suffix.lstrip(".")).lower()
    if fmt == "json":
        intr, rows = _read_json(path)
    elif fmt == "csv":
        intr, rows = _read_csv(path)
    else:
        raise ValidationError(f"unsupported correspondence format {fmt!r}")
    if len(rows) < 4:
        raise ValidationError(f"need at least 4 correspondences, got {len(rows)}")
    arr = np.array(rows, dtype=float)
    corr = Correspondences(arr[:, :3], intr.center(arr[:, 3:]), intr.f)
    return intr, corr


def write_correspondences(path, intrinsics: CameraIntrinsics, corr: Correspondences,
                          format: Optional[str] = None, extra: Optional[dict] = None) -> None:
    """Inverse of :func:`ingest_correspondences`; ``extra`` keys go into the JSON document."""
    fmt = (format or Path(path).suffix.lstrip(".")).lower()
    pixels = corr.image + np.array([intrinsics.cu, intrinsics.cv])
    table = np.column_stack([corr.world, pixels])
    intr = {k: getattr(intrinsics, k) for k in INTRINSIC_KEYS}
    if fmt == "json":
        doc = {
            "intrinsics": intr,
            "points": [dict(zip(POINT_KEYS, map(float, row))) for row in table],
        }
        if extra:
            doc.update(extra)
        Path(path).write_text(json.dumps(doc, indent=1))
    elif fmt == "csv":
        header = INTRINSIC_KEYS + POINT_KEYS
        emit_csv(
            ({**intr, **dict(zip(POINT_KEYS, map(float, row)))} for row in table),
            path,
            header,
        )
    else:
        raise ValidationError(f"unsupported correspondence format {fmt!r}")


def save_instance(instance: SyntheticInstance, path, format: Optional[str] = None) -> None:
    """Write a synthetic instance; JSON output also carries the ground truth."""
    truth = {
        "truth": {
            "rotation": instance.truth_pose.rotation.tolist(),
            "translation": instance.truth_pose.translation.tolist(),
            "inlier_mask": instance.truth_inlier_mask.astype(int).tolist(),
            "scene": instance.config.to_dict(),
        }
    }
    write_correspondences(path, instance.intrinsics, instance.correspondences, format, truth)
