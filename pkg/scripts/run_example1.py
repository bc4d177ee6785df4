#!/usr/bin/env python3
"""Linear Gaussian benchmark run: Kalman baseline vs particle EM filtering.

Writes results/example1/{results.csv,summary.json,iterates_k*.csv}; the
iterate dumps feed the convergence-curve figure.
"""
import sys
from pathlib import Path

from mlse import ExperimentConfig, run_experiment, write_outputs


def main() -> int:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results/example1")
    config = ExperimentConfig(
        model="example1",
        particles=2000,
        steps=100,
        seed=2,
        estimators=("kalman", "pf-mean", "emsf", "fpsf", "emsp"),
        iterate_dump=(15, 55, 90),
    )
    result = run_experiment(config)
    paths = write_outputs(result, out)
    print(f"wrote {len(paths)} files to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
