"""Command-line front end.

Every subcommand reads the same config file and operates on a working
directory of named artifacts, so a full run decomposes into resumable
stages:

    btreach simulate -c run.cfg -w out      # dataset.csv
    btreach fit      -c run.cfg -w out      # model.json
    btreach bound    -c run.cfg -w out      # errors.json
    btreach abstract -c run.cfg -w out      # imc_transitions.txt + imc_states.txt
    btreach verify   -c run.cfg -w out      # values.txt + certificate.json
    btreach export   -c run.cfg -w out      # heatmap_vmin.* / heatmap_vmax.*
    btreach run      -c run.cfg -w out      # everything above

Config values can be overridden per invocation with
``--set section.key=value`` (repeatable). Exit codes: 0 success, 2 invalid
configuration or inputs, 3 iteration cap reached before convergence,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import ConfigError, load_config
from .errbound import ErrorTable, error_table
from .errors import (
    DataTooLargeError,
    InconsistentSchemeError,
    InfeasibleError,
    NumericalFailureError,
    OutOfDomainError,
)
from .gp import BtgpModel, fit
from .report import export_heatmap
from .verify import ValueBounds, certify, interval_iteration, load_values

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NONCONVERGED = 3
EXIT_NUMERICAL = 4

_VALIDATION_ERRORS = (
    ConfigError,
    OutOfDomainError,
    InconsistentSchemeError,
    DataTooLargeError,
    ValueError,
    TypeError,
    FileNotFoundError,
    IsADirectoryError,
)
_NUMERICAL_ERRORS = (NumericalFailureError, InfeasibleError, np.linalg.LinAlgError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="btreach",
        description="Certified reachability bounds for sampled stochastic systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", required=True, help="INI config file")
        p.add_argument(
            "-w", "--workdir", default="btreach-out", help="artifact directory"
        )
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override a config value (repeatable)",
        )
        p.add_argument("-q", "--quiet", action="store_true", help="suppress progress")

    def solver_opts(p):
        p.add_argument(
            "--threads", type=int, default=None, help="solver thread count"
        )
        p.add_argument(
            "--no-numba",
            action="store_true",
            help="force the pure-numpy Bellman step",
        )

    p = sub.add_parser("simulate", help="draw one-step samples into dataset.csv")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit the surrogate posterior (model.json)")
    common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("bound", help="compute the learning-error table (errors.json)")
    common(p)
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("abstract", help="build the interval Markov chain")
    common(p)
    p.set_defaults(func=_cmd_abstract)

    p = sub.add_parser("verify", help="run interval iteration on the stored IMC")
    common(p)
    solver_opts(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("export", help="render stored values as heatmap files")
    common(p)
    p.add_argument(
        "--which",
        choices=["v_min", "v_max", "both"],
        default="both",
        help="which bound grid to export",
    )
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("run", help="execute the full pipeline")
    common(p)
    solver_opts(p)
    p.add_argument(
        "--no-report", action="store_true", help="skip the heatmap stage"
    )
    p.add_argument(
        "--reuse-dataset",
        action="store_true",
        help="reuse an existing dataset.csv instead of regenerating",
    )
    p.set_defaults(func=_cmd_run)

    return parser


def _echo(args):
    if args.quiet:
        return lambda msg: None
    return lambda msg: print(msg, flush=True)


def _workdir(args) -> Path:
    wd = Path(args.workdir)
    wd.mkdir(parents=True, exist_ok=True)
    return wd


# -- subcommand bodies --------------------------------------------------------


def _cmd_simulate(cfg, args):
    echo = _echo(args)
    wd = _workdir(args)
    data = pipeline.obtain_dataset(cfg, wd, reuse=False)
    path = pipeline.persist_dataset(data, wd)
    echo(f"[btreach] wrote {data.n_samples} samples to {path}")
    return EXIT_OK


def _cmd_fit(cfg, args):
    echo = _echo(args)
    wd = _workdir(args)
    data = pipeline.obtain_dataset(cfg, wd)
    pipeline.persist_dataset(data, wd)
    model = fit(data, cfg.bt_kernel())
    path = pipeline.persist_model(model, wd)
    occupied = int(np.count_nonzero(model.var_table < 1.0))
    echo(f"[btreach] fitted {occupied} informed cells; wrote {path}")
    return EXIT_OK


def _cmd_bound(cfg, args):
    echo = _echo(args)
    wd = _workdir(args)
    data = pipeline.obtain_dataset(cfg, wd)
    model = BtgpModel.load(pipeline.artifact_path(wd, "model"))
    table = error_table(data, model, cfg.error_config())
    path = pipeline.persist_errors(table, wd)
    echo(
        f"[btreach] error radii: max {float(table.eps.max()):.4g}, "
        f"median {float(np.median(table.eps)):.4g}; wrote {path}"
    )
    return EXIT_OK


def _cmd_abstract(cfg, args):
    from .abstraction import build_imc

    echo = _echo(args)
    wd = _workdir(args)
    model = BtgpModel.load(pipeline.artifact_path(wd, "model"))
    errors = ErrorTable.load(pipeline.artifact_path(wd, "errors"))
    imc = build_imc(
        model,
        errors,
        pipeline.target_cell_ids(cfg),
        cfg.x_init,
        prune_threshold=cfg.prune_threshold,
    )
    tpath, spath = pipeline.persist_imc(imc, wd)
    echo(
        f"[btreach] IMC with {imc.n_states} states, "
        f"{imc.indices.size} kept transitions; wrote {tpath} and {spath}"
    )
    return EXIT_OK


def _cmd_verify(cfg, args):
    echo = _echo(args)
    wd = _workdir(args)
    imc = pipeline.load_imc(wd)
    bounds = interval_iteration(
        imc,
        nu=cfg.nu,
        max_iters=cfg.max_iters,
        threads=args.threads,
        use_numba=False if args.no_numba else None,
    )
    certificate = certify(imc, bounds)
    pipeline.persist_results(bounds, certificate, imc.q, wd)
    echo("[btreach] " + certificate.summary())
    return EXIT_OK if bounds.converged else EXIT_NONCONVERGED


def _cmd_export(cfg, args):
    echo = _echo(args)
    wd = _workdir(args)
    scheme = cfg.scheme()
    v_min, v_max = load_values(
        pipeline.artifact_path(wd, "values"), n_states=scheme.n_cells
    )
    bounds = ValueBounds(
        v_min=v_min,
        v_max=v_max,
        nu=cfg.nu,
        iterations=(0, 0),
        gaps=(0.0, 0.0),
        converged=True,
    )
    selected = ["v_min", "v_max"] if args.which == "both" else [args.which]
    for which in selected:
        name = "heatmap_vmin" if which == "v_min" else "heatmap_vmax"
        paths = export_heatmap(bounds, scheme, which, pipeline.artifact_path(wd, name))
        echo(f"[btreach] wrote {paths['csv']}, {paths['pgm']}, {paths['png']}")
    return EXIT_OK


def _cmd_run(cfg, args):
    result = pipeline.run_pipeline(
        cfg,
        _workdir(args),
        verbose=not args.quiet,
        threads=args.threads,
        use_numba=False if args.no_numba else None,
        report=not args.no_report,
        reuse_dataset=args.reuse_dataset,
    )
    return EXIT_OK if result.bounds.converged else EXIT_NONCONVERGED


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        return args.func(cfg, args)
    except _NUMERICAL_ERRORS as exc:
        print(f"btreach: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except _VALIDATION_ERRORS as exc:
        print(f"btreach: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
