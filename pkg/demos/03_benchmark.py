"""A small seeded sweep over outlier fractions, written as CSV curve files.

The same thing is available from the shell:

    r1ppnp bench --spec demos/outlier_sweep.json --output-dir out/
"""
import sys
from pathlib import Path

from r1ppnp.harness import ExperimentSpec, write_benchmark

out = Path(sys.argv[1] if len(sys.argv) > 1 else "bench_out")
spec = ExperimentSpec.from_json(Path(__file__).with_name("outlier_sweep.json"))
summary = write_benchmark(spec, out)

print(f"{'fraction':>8} {'solver':>11} {'e_rot mean':>10} {'trials mean':>11} {'failed':>6}")
for row in summary:
    print(f"{row['value']:8.1f} {row['solver']:>11} {row['e_rot_deg_mean']:10.3f} "
          f"{row['trials_used_mean']:11.1f} {row['n_failed']:6d}")
print(f"\nCSV files in {out}/:", ", ".join(sorted(p.name for p in out.iterdir())))
