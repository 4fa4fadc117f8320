"""Sweep the inlier ratio and chart how precision and recall respond.

Runs a compact version of the evaluation protocol: five ratio levels,
three trials per level, all seven algorithms on each generated set.
Emits the records as CSV plus one self-contained SVG chart per metric.

Run from the repository root:  python demos/03_nuisance_sweep.py
Outputs land in demos/out/.
"""

from pathlib import Path

from corrgroup import (
    ALGORITHM_NAMES,
    AlgorithmParams,
    CorrespondenceRecipe,
    InstanceSpec,
    SceneRecipe,
    SweepPlan,
    run_sweep,
    write_csv,
)
from corrgroup.cli import render_metric_chart

plan = SweepPlan(
    axis="inlier_ratio",
    levels=(0.1, 0.3, 0.5, 0.7, 0.9),
    trials_per_level=3,
    base=InstanceSpec(
        model_kind="torus",
        model_points=3000,
        corr=CorrespondenceRecipe(
            n_total=250, inlier_ratio=0.5, inlier_jitter_pr=0.5,
            outlier_min_offset_pr=10.0, lrf_noise_deg=5.0),
        params=AlgorithmParams(n_ransac=2000),
        epsilon_pr=4.0,
    ),
    base_seed=2,
)

records = run_sweep(plan, ALGORITHM_NAMES)
out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)
write_csv(records, out_dir / "inlier_ratio_sweep.csv")
for metric in ("precision", "recall"):
    chart = render_metric_chart(records, metric, "inlier ratio")
    (out_dir / f"inlier_ratio_{metric}.svg").write_text(chart)

print(f"wrote {len(records)} records and two charts to {out_dir}/")
print("\nmean precision by level:")
print(f"{'algorithm':>10s} " + " ".join(f"{lv:>6.1f}" for lv in plan.levels))
for name in ALGORITHM_NAMES:
    means = []
    for level in plan.levels:
        values = [r.precision for r in records
                  if r.algorithm == name and r.nuisance["level"] == level
                  and r.precision is not None]
        means.append(sum(values) / len(values) if values else float("nan"))
    print(f"{name:>10s} " + " ".join(f"{m:>6.3f}" for m in means))
