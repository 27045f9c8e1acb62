"""Command line entry point: ``quasicontact run <config> [--experiment NAME] [--out DIR]``.

Exit codes: 0 success, 1 invalid config, 2 numerical failure, 3 comparison failure.
The worker count for simulator replicas can be set with QUASICONTACT_WORKERS.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, ExperimentConfig
from .hierarchy import (
    AliasingError,
    AliasingWarning,
    BudgetExceeded,
    InstabilityError,
    MemoryBudgetError,
    NegativeSolutionError,
)
from .markspace import ConvergenceError, SupercriticalError
from .pipelines import (
    PIPELINES,
    NumericalFailure,
    run_cauchy,
    run_compare,
    run_simulate,
    run_stationary,
)
from .simulator import PopulationExplosion

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_COMPARE = 0, 1, 2, 3

NUMERICAL_ERRORS = (
    NumericalFailure,
    ConvergenceError,
    NegativeSolutionError,
    InstabilityError,
    BudgetExceeded,
    MemoryBudgetError,
    PopulationExplosion,
    AliasingError,
    FloatingPointError,
)

__all__ = ["main", "run", "run_stationary", "run_cauchy", "run_simulate", "run_compare"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quasicontact",
        description="Stationary correlations and simulation of a marked contact "
                    "process with immigration.")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run the experiment described by a YAML config")
    run_p.add_argument("config", type=Path, help="path to the experiment config")
    run_p.add_argument("--experiment", choices=EXPERIMENTS,
                       help="override the experiment named in the config")
    run_p.add_argument("--out", type=Path, default=None,
                       help="output directory (default: runs/<config name>)")
    return parser


def run(config_path, experiment: str | None = None, out=None) -> int:
    """Run one experiment and return the process exit code."""
    try:
        config = ExperimentConfig.load(config_path)
        if experiment is not None:
            config = config.replace(experiment=experiment)
    except (ConfigError, SupercriticalError) as exc:
        _err(f"invalid config {config_path}:")
        for path, msg in getattr(exc, "errors", [("model.kappa", str(exc))]):
            _err(f"  {path}: {msg}")
        return EXIT_CONFIG
    except OSError as exc:
        _err(f"cannot read config {config_path}: {exc}")
        return EXIT_CONFIG

    out = Path(out) if out is not None else Path("runs") / config.name
    try:
        report = PIPELINES[config.experiment](config, out)
    except NUMERICAL_ERRORS as exc:
        _err(f"{config.experiment} failed: {type(exc).__name__}: {exc}")
        return EXIT_NUMERICAL

    print(f"{report.experiment}: wrote {len(report.files)} files to {report.out_dir}")
    for key, val in report.summary.items():
        print(f"  {key}: {val}")
    if not report.passed:
        _err("comparison failed at the configured sigma policy")
        return EXIT_COMPARE
    return EXIT_OK


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("always", AliasingWarning)
        return run(args.config, args.experiment, args.out)


if __name__ == "__main__":
    sys.exit(main())
