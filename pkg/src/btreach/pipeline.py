"""End-to-end orchestration: data -> fit -> error table -> IMC -> bounds.

Each stage consumes the previous stage's in-memory object, persists its
artifact into the working directory (write-then-rename, so reruns never see
torn files), and reports its wall-clock compute time separately from the
persistence time. Artifact names are fixed:

    dataset.csv             one-step samples
    model.json              fitted piecewise-constant posterior
    errors.json             per-cell learning-error table
    imc_transitions.txt     kept transition bounds (CSR rows)
    imc_states.txt          per-state reward/loss/pruned bounds
    values.txt              per-cell [V_min, V_max]
    certificate.json        the bound at the initial state
    heatmap_vmin.*          value grids (csv + pgm + rendered png)
    heatmap_vmax.*

Stage failures print the stage name and re-raise the original exception so
callers can map it to an exit code.
"""

from __future__ import annotations

import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

from .abstraction import Imc, build_imc
from .config import PipelineConfig
from .errbound import ErrorTable, error_table
from .gp import BtgpModel, Dataset, fit
from .ioutil import atomic_output
from .partition import project_set
from .report import export_heatmap
from .systems import simulate
from .verify import certify, interval_iteration, save_values

ARTIFACTS = {
    "dataset": "dataset.csv",
    "model": "model.json",
    "errors": "errors.json",
    "transitions": "imc_transitions.txt",
    "states": "imc_states.txt",
    "values": "values.txt",
    "certificate": "certificate.json",
    "heatmap_vmin": "heatmap_vmin",
    "heatmap_vmax": "heatmap_vmax",
}


def artifact_path(workdir, name) -> Path:
    return Path(workdir) / ARTIFACTS[name]


@dataclass
class PipelineResult:
    config: PipelineConfig
    dataset: Dataset
    model: BtgpModel
    errors: ErrorTable
    imc: Imc
    bounds: object
    certificate: object
    timings: dict = field(default_factory=dict)
    workdir: Path = None


class _Stages:
    """Timed stage runner with uniform logging."""

    def __init__(self, echo):
        self.echo = echo
        self.timings = {}

    def run(self, name, fn):
        start = time.perf_counter()
        try:
            out = fn()
        except BaseException as exc:
            self.echo(f"[btreach] stage {name} failed: {exc}")
            raise
        elapsed = time.perf_counter() - start
        self.timings[name] = elapsed
        self.echo(f"[btreach] {name}: {elapsed:.2f} s")
        return out


def _echo_factory(verbose: bool):
    if not verbose:
        return lambda msg: None
    return lambda msg: print(msg, flush=True)


def obtain_dataset(cfg: PipelineConfig, workdir=None, reuse: bool = True) -> Dataset:
    """Resolve the configured data source.

    Prefers an already-persisted ``dataset.csv`` in the working directory
    (so downstream stages rerun on identical data), then the configured
    external CSV, then simulation of the built-in system.
    """
    if workdir is not None and reuse:
        path = artifact_path(workdir, "dataset")
        if path.exists():
            return Dataset.load_csv(path, noise_std=_noise_level(cfg))
    if cfg.dataset_path is not None:
        return cfg.load_dataset()
    system = cfg.system()
    return simulate(system, cfg.n_samples, cfg.seed, cfg.domain())


def _noise_level(cfg: PipelineConfig) -> float:
    if cfg.noise_std is not None:
        return cfg.noise_std
    if cfg.system_name is not None:
        return cfg.system().noise_std
    raise ValueError("noise level is undetermined; set data.noise_std")


def persist_dataset(data: Dataset, workdir):
    path = artifact_path(workdir, "dataset")
    with atomic_output(path) as tmp:
        data.save_csv(tmp)
    return path


def persist_model(model: BtgpModel, workdir):
    path = artifact_path(workdir, "model")
    with atomic_output(path) as tmp:
        model.save(tmp)
    return path


def persist_errors(errors: ErrorTable, workdir):
    path = artifact_path(workdir, "errors")
    with atomic_output(path) as tmp:
        errors.save(tmp)
    return path


def persist_imc(imc: Imc, workdir):
    tpath = artifact_path(workdir, "transitions")
    spath = artifact_path(workdir, "states")
    with atomic_output(tpath) as ttmp:
        with atomic_output(spath) as stmp:
            imc.save(ttmp, stmp)
    return tpath, spath


def load_imc(workdir) -> Imc:
    return Imc.load(
        artifact_path(workdir, "transitions"), artifact_path(workdir, "states")
    )


def persist_results(bounds, certificate, q: int, workdir):
    vpath = artifact_path(workdir, "values")
    cpath = artifact_path(workdir, "certificate")
    with atomic_output(vpath) as tmp:
        save_values(bounds, q, tmp)
    with atomic_output(cpath) as tmp:
        with open(tmp, "w") as fh:
            fh.write(certificate.to_json())
    return vpath, cpath


def target_cell_ids(cfg: PipelineConfig) -> list:
    """Cells fully inside the target box, ascending."""
    return sorted(project_set(cfg.target_box(), cfg.scheme()))


def write_report(bounds, scheme, workdir) -> dict:
    """Render both value grids; no-op for schemes above 2-D."""
    if scheme.dim > 2:
        return {}
    out = {}
    for which, name in (("v_min", "heatmap_vmin"), ("v_max", "heatmap_vmax")):
        out[which] = export_heatmap(
            bounds, scheme, which, artifact_path(workdir, name)
        )
    return out


def run_pipeline(
    cfg: PipelineConfig,
    workdir,
    verbose: bool = True,
    threads: int = None,
    use_numba: bool = None,
    report: bool = True,
    reuse_dataset: bool = False,
) -> PipelineResult:
    """Execute every stage, persisting artifacts along the way."""
    echo = _echo_factory(verbose)
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    stages = _Stages(echo)
    scheme = cfg.scheme()

    data = stages.run(
        "data", lambda: obtain_dataset(cfg, workdir, reuse=reuse_dataset)
    )
    stages.run("data_persist", lambda: persist_dataset(data, workdir))

    model = stages.run("fit", lambda: fit(data, cfg.bt_kernel()))
    stages.run("fit_persist", lambda: persist_model(model, workdir))

    errors = stages.run(
        "errors", lambda: error_table(data, model, cfg.error_config())
    )
    stages.run("errors_persist", lambda: persist_errors(errors, workdir))

    targets = target_cell_ids(cfg)
    imc = stages.run(
        "abstract",
        lambda: build_imc(
            model, errors, targets, cfg.x_init, prune_threshold=cfg.prune_threshold
        ),
    )
    stages.run("abstract_persist", lambda: persist_imc(imc, workdir))

    bounds = stages.run(
        "verify",
        lambda: interval_iteration(
            imc,
            nu=cfg.nu,
            max_iters=cfg.max_iters,
            threads=threads,
            use_numba=use_numba,
        ),
    )
    certificate = certify(imc, bounds)
    stages.run(
        "verify_persist",
        lambda: persist_results(bounds, certificate, scheme.q, workdir),
    )

    if report:
        stages.run("report", lambda: write_report(bounds, scheme, workdir))

    echo("[btreach] " + certificate.summary())
    if not bounds.converged:
        echo(
            "[btreach] warning: iteration cap reached before the envelopes "
            f"met nu={bounds.nu:g} (gaps {bounds.gaps[0]:.3g}, {bounds.gaps[1]:.3g})"
        )
    return PipelineResult(
        config=cfg,
        dataset=data,
        model=model,
        errors=errors,
        imc=imc,
        bounds=bounds,
        certificate=certificate,
        timings=dict(stages.timings),
        workdir=workdir,
    )


def clean_workdir(workdir):
    """Remove every known artifact (used by tests; ignores unknown files)."""
    workdir = Path(workdir)
    if not workdir.exists():
        return
    for name in ARTIFACTS.values():
        for path in workdir.glob(name + "*"):
            if path.is_dir():
                shutil.rmtree(path)
            else:
                path.unlink()
