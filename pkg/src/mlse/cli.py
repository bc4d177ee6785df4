"""Command-line entry point.

Subcommands:

    mlse run --config experiment.cfg [--out DIR]
    mlse filter  [flags]
    mlse predict [flags] --horizon H
    mlse smooth  [flags] [--lag L]

Config files are plain ``key = value`` lines (``#`` comments allowed) with
the same keys as the flag names; ``estimators`` is a comma-separated list and
``density_grid`` is ``lo:hi:spacing``.

Reproducibility: the master ``seed`` never feeds a generator directly.  Named
child streams are derived as
``default_rng(SeedSequence(entropy=seed, spawn_key=(id,)))`` with the ids
trajectory=0, particles=1, emsf-restarts=2, emsp=3, emss-restarts=4, so each
component owns an independent, individually reproducible stream.  Set
MLSE_THREADS>1 to run independent estimator passes concurrently (results are
identical either way).
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .errors import ConfigurationError, EstimationError
from .experiment import (
    DensityGridSpec,
    ExperimentConfig,
    run_experiment,
    write_outputs,
)
from .model import MODEL_BUILDERS, get_model

_INT_KEYS = {"particles", "steps", "seed", "max_iters", "restarts", "horizon", "lag"}
_FLOAT_KEYS = {"rel_tol", "resample_threshold"}
_STR_KEYS = {"model", "out", "m_step", "restart_density"}


def parse_density_grid(spec: str) -> DensityGridSpec:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigurationError(f"density_grid must be lo:hi:spacing, got {spec!r}")
    return DensityGridSpec(lo=float(parts[0]), hi=float(parts[1]), spacing=float(parts[2]))


def parse_config_file(path) -> ExperimentConfig:
    """Parse the simple key = value experiment config format."""
    values = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        elif key in _STR_KEYS:
            values[key] = value
        elif key == "estimators":
            values[key] = tuple(e.strip() for e in value.split(",") if e.strip())
        elif key == "iterate_dump":
            values[key] = tuple(int(e) for e in value.split(",") if e.strip())
        elif key == "density_grid":
            values[key] = parse_density_grid(value)
        else:
            known = sorted(_INT_KEYS | _FLOAT_KEYS | _STR_KEYS | {"estimators", "density_grid", "iterate_dump"})
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}; known keys: {known}")
    return ExperimentConfig(**values)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", choices=sorted(MODEL_BUILDERS), default=None)
    parser.add_argument("--particles", type=int, default=None)
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--restarts", type=int, default=None)
    parser.add_argument("--tol", type=float, default=None, dest="rel_tol")
    parser.add_argument("--max-iters", type=int, default=None, dest="max_iters")
    parser.add_argument("--out", default=None)
    parser.add_argument("--estimators", default=None, help="comma-separated estimator list")
    parser.add_argument("--resample-threshold", type=float, default=None, dest="resample_threshold")
    parser.add_argument("--m-step", choices=("closed_form_auto", "gradient_ascent"), default=None, dest="m_step")
    parser.add_argument("--restart-density", default=None, dest="restart_density", help="e.g. uniform:-2:2")
    parser.add_argument("--density-grid", default=None, dest="density_grid", help="lo:hi:spacing")
    parser.add_argument("--iterate-dump", default=None, dest="iterate_dump",
                        help="comma-separated steps whose EM iterate paths are exported")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlse",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment described by a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None)

    for name, help_text in (
        ("filter", "filtered-mode estimation over a simulated run"),
        ("predict", "predicted-mode estimation with a fixed horizon"),
        ("smooth", "smoothed-mode estimation over the full run or a fixed lag"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        _add_common_flags(cmd)
        if name == "predict":
            cmd.add_argument("--horizon", type=int, default=1)
        if name == "smooth":
            cmd.add_argument("--lag", type=int, default=0)
    return parser


def _default_estimators(command: str, model_name: str) -> tuple:
    linear = get_model(model_name).linear_dynamics is not None
    if command == "filter":
        return ("kalman", "pf-mean", "emsf") if linear else ("pf-mean", "emsf")
    if command == "predict":
        return ("kalman", "emsp") if linear else ("emsp",)
    return ("rts", "emss") if linear else ("emss",)


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig()
    model_name = args.model or config.model
    overrides = {"model": model_name}
    for key in ("particles", "steps", "seed", "restarts", "rel_tol", "max_iters",
                "out", "resample_threshold", "m_step", "restart_density"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.estimators is not None:
        overrides["estimators"] = tuple(e.strip() for e in args.estimators.split(",") if e.strip())
    else:
        overrides["estimators"] = _default_estimators(args.command, model_name)
    if args.density_grid is not None:
        overrides["density_grid"] = parse_density_grid(args.density_grid)
    if getattr(args, "iterate_dump", None) is not None:
        overrides["iterate_dump"] = tuple(int(e) for e in args.iterate_dump.split(",") if e.strip())
    if getattr(args, "horizon", None) is not None:
        overrides["horizon"] = args.horizon
    if getattr(args, "lag", None) is not None:
        overrides["lag"] = args.lag
    return replace(config, **overrides)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = parse_config_file(args.config)
            if args.out is not None:
                config = replace(config, out=args.out)
        else:
            config = _config_from_args(args)
        result = run_experiment(config)
        out_dir = config.out or "results"
        paths = write_outputs(result, out_dir)
        print(f"wrote {len(paths)} files to {out_dir}")
        return 0
    except (ConfigurationError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
