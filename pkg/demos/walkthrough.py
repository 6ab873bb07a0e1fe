"""Run a reduced pipeline end to end and print the aggregated AUC table.

Usage: python demos/walkthrough.py [run_dir]

The configuration is small enough to finish in about a minute on one core.
The full default run is ``skelxai generate && skelxai train && ...``.
"""
from __future__ import annotations

import sys
from pathlib import Path

from skelxai.harness import (RunConfig, TrainConfig, cmd_evaluate, cmd_generate, cmd_report, cmd_train, cmd_ttest,
                             read_csv)
from skelxai.model import default_roster
from skelxai.perturb import PerturbationSpec
from skelxai.synth import SynthConfig


def main(out: str) -> None:
    cfg = RunConfig(
        out=out,
        synth=SynthConfig(n_sequences=24, class_balance=0.25, rng_seed=0),
        train_synth=SynthConfig(n_sequences=60, class_balance=0.5, rng_seed=1),
        roster=tuple(default_roster(0)[:3]),
        train=TrainConfig(epochs=15),
        perturbation=PerturbationSpec(n=10),
    )
    for step in (cmd_generate, cmd_train, cmd_evaluate, cmd_ttest, cmd_report):
        print(f"{step.__name__[4:]:>8}: {step(cfg)}")

    print("\nmean AUC per metric and method")
    for row in read_csv(cfg.results_path / "aggregate.csv"):
        print(f"  {row['metric']:>4} {row['method']:>8}  {float(row['auc_mean']):.4g} ± {float(row['auc_std']):.2g}"
              f"  (n={row['n_windows']})")
    print("\nunpaired t-tests")
    for row in read_csv(cfg.results_path / "ttest.csv"):
        print(f"  {row['comparison']:>18} {row['metric']:>4}  t={float(row['t_statistic']):+.3f}"
              f"  p={float(row['p_value']):.3g}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else str(Path("runs") / "walkthrough"))
