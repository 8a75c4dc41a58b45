"""Pipeline configuration: INI files with one section per module.

Every run is described by a single flat key-value file. Sections mirror the
library layers; values are plain scalars or space-separated vectors:

    [domain]        lower, upper
    [partition]     q, split_order (optional)
    [kernel]        weights ("uniform" or q floats)
    [data]          system | dataset, n_samples, seed, noise_std (optional)
    [error]         delta, complexity_bounds, branch, dense_cap,
                    subsample, subsample_seed
    [se_kernel]     amplitudes, lengthscales_1 .. lengthscales_n
    [reach]         target_lower, target_upper, x_init, nu, max_iters
    [abstraction]   prune_threshold

Unknown sections or keys are rejected, as are values the downstream types
refuse (delta outside (0,1), q <= 0, negative weights, a target box not
inside the domain, ...). ``--set section.key=value`` overrides from the CLI
funnel through ``apply_overrides`` before validation.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errbound import ErrorConfig
from .errors import ConfigError
from .gp import Dataset
from .kernel import BtKernel, SeKernel
from .partition import PartitionScheme, StateBox
from .systems import BenchmarkSystem, make_system

_KNOWN_KEYS = {
    "domain": {"lower", "upper"},
    "partition": {"q", "split_order"},
    "kernel": {"weights"},
    "data": {"system", "dataset", "n_samples", "seed", "noise_std"},
    "error": {
        "delta",
        "complexity_bounds",
        "branch",
        "dense_cap",
        "subsample",
        "subsample_seed",
    },
    "se_kernel": None,  # validated separately: amplitudes + lengthscales_d
    "reach": {"target_lower", "target_upper", "x_init", "nu", "max_iters"},
    "abstraction": {"prune_threshold"},
}


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.split()])
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got {text!r}") from exc


def _ints(text: str):
    try:
        return [int(tok) for tok in text.split()]
    except ValueError as exc:
        raise ConfigError(f"expected integers, got {text!r}") from exc


@dataclass
class PipelineConfig:
    """Validated description of one end-to-end run."""

    domain_lower: np.ndarray
    domain_upper: np.ndarray
    q: int
    split_order: Optional[list]
    weights: Optional[np.ndarray]
    system_name: Optional[str]
    dataset_path: Optional[str]
    n_samples: int
    seed: int
    noise_std: Optional[float]
    delta: float
    complexity_bounds: np.ndarray
    branch: str
    dense_cap: int
    subsample: int
    subsample_seed: int
    amplitudes: np.ndarray
    lengthscales: list = field(default_factory=list)
    target_lower: np.ndarray = None
    target_upper: np.ndarray = None
    x_init: np.ndarray = None
    nu: float = 1e-8
    max_iters: int = 1_000_000
    prune_threshold: float = 1e-12

    # -- builders --------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.domain_lower.size

    def domain(self) -> StateBox:
        return StateBox(self.domain_lower, self.domain_upper)

    def scheme(self) -> PartitionScheme:
        return PartitionScheme(
            domain=self.domain(), q=self.q, split_order=self.split_order
        )

    def bt_kernel(self) -> BtKernel:
        return BtKernel(self.scheme(), weights=self.weights)

    def se_kernels(self) -> list:
        return [
            SeKernel(amplitude=float(self.amplitudes[d]), lengthscales=ls)
            for d, ls in enumerate(self.lengthscales)
        ]

    def error_config(self) -> ErrorConfig:
        return ErrorConfig(
            delta=self.delta,
            complexity_bounds=self.complexity_bounds,
            true_kernels=self.se_kernels(),
            branch=self.branch,
            dense_cap=self.dense_cap,
            subsample=self.subsample if self.subsample > 0 else None,
            subsample_seed=self.subsample_seed,
        )

    def system(self) -> BenchmarkSystem:
        if self.system_name is None:
            raise ConfigError("no built-in system configured")
        return make_system(self.system_name, noise_std=self.noise_std)

    def target_box(self) -> StateBox:
        return StateBox(self.target_lower, self.target_upper)

    def load_dataset(self) -> Dataset:
        if self.dataset_path is None:
            raise ConfigError("no dataset path configured")
        if self.noise_std is None:
            raise ConfigError("noise_std is required with an external dataset")
        return Dataset.load_csv(self.dataset_path, noise_std=self.noise_std)

    # -- validation ------------------------------------------------------

    def validate(self) -> "PipelineConfig":
        n = self.dim
        if self.domain_upper.size != n:
            raise ConfigError("domain lower/upper lengths differ")
        try:
            domain = self.domain()
            scheme = self.scheme()
            self.bt_kernel()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if (self.system_name is None) == (self.dataset_path is None):
            raise ConfigError("configure exactly one of data.system / data.dataset")
        if self.system_name is not None and self.system().dim != n:
            raise ConfigError("system dimension does not match the domain")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be at least 1")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError("delta must lie in (0, 1)")
        if self.complexity_bounds.shape != (n,) or np.any(
            self.complexity_bounds <= 0
        ):
            raise ConfigError("complexity_bounds needs one positive entry per axis")
        if self.amplitudes.shape != (n,):
            raise ConfigError("amplitudes needs one entry per output dimension")
        if len(self.lengthscales) != n:
            raise ConfigError("one lengthscales_<d> line per output dimension")
        try:
            self.se_kernels()
            self.error_config()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("target_lower", "target_upper", "x_init"):
            arr = getattr(self, name)
            if arr is None or np.asarray(arr).shape != (n,):
                raise ConfigError(f"reach.{name} needs one entry per axis")
        try:
            target = self.target_box()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not domain.contains_box(target):
            raise ConfigError("target box must lie inside the domain")
        if not domain.contains(self.x_init):
            raise ConfigError("x_init must lie inside the domain")
        if not (self.nu > 0):
            raise ConfigError("nu must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if self.prune_threshold < 0:
            raise ConfigError("prune_threshold must be nonnegative")
        if self.noise_std is not None and not (self.noise_std > 0):
            raise ConfigError("noise_std must be positive")
        if self.split_order is not None and len(self.split_order) != self.q:
            raise ConfigError("split_order must list q axes")
        _ = scheme
        return self


def _check_keys(parser: configparser.ConfigParser):
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        known = _KNOWN_KEYS[section]
        for key in parser[section]:
            if section == "se_kernel":
                if key == "amplitudes" or (
                    key.startswith("lengthscales_") and key[13:].isdigit()
                ):
                    continue
                raise ConfigError(f"unknown key {key!r} in [se_kernel]")
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    for required in ("domain", "partition", "data", "error", "se_kernel", "reach"):
        if required not in parser:
            raise ConfigError(f"missing config section [{required}]")


def _parse(parser: configparser.ConfigParser) -> PipelineConfig:
    _check_keys(parser)
    dom = parser["domain"]
    part = parser["partition"]
    data = parser["data"]
    err = parser["error"]
    se = parser["se_kernel"]
    reach = parser["reach"]
    absn = parser["abstraction"] if "abstraction" in parser else {}
    kern = parser["kernel"] if "kernel" in parser else {}

    lower = _floats(dom.get("lower", ""))
    n = lower.size
    if n == 0:
        raise ConfigError("domain.lower must not be empty")

    weights_txt = kern.get("weights", "uniform").strip()
    weights = None if weights_txt == "uniform" else _floats(weights_txt)

    split_txt = part.get("split_order", "").strip()
    split_order = _ints(split_txt) if split_txt else None

    lengthscales = []
    for d in range(1, n + 1):
        key = f"lengthscales_{d}"
        if key not in se:
            raise ConfigError(f"[se_kernel] is missing {key}")
        lengthscales.append(_floats(se[key]))

    def _get_float(section, key, default=None):
        txt = section.get(key, None)
        if txt is None:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        try:
            return float(txt)
        except ValueError as exc:
            raise ConfigError(f"{key} must be a number, got {txt!r}") from exc

    def _get_int(section, key, default=None):
        txt = section.get(key, None)
        if txt is None:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        try:
            return int(txt)
        except ValueError as exc:
            raise ConfigError(f"{key} must be an integer, got {txt!r}") from exc

    noise_txt = data.get("noise_std", None)
    cfg = PipelineConfig(
        domain_lower=lower,
        domain_upper=_floats(dom.get("upper", "")),
        q=_get_int(part, "q"),
        split_order=split_order,
        weights=weights,
        system_name=data.get("system", None),
        dataset_path=data.get("dataset", None),
        n_samples=_get_int(data, "n_samples", 1),
        seed=_get_int(data, "seed", 0),
        noise_std=float(noise_txt) if noise_txt is not None else None,
        delta=_get_float(err, "delta"),
        complexity_bounds=_floats(err.get("complexity_bounds", "")),
        branch=err.get("branch", "min"),
        dense_cap=_get_int(err, "dense_cap", 20000),
        subsample=_get_int(err, "subsample", 0),
        subsample_seed=_get_int(err, "subsample_seed", 0),
        amplitudes=_floats(se.get("amplitudes", "")),
        lengthscales=lengthscales,
        target_lower=_floats(reach.get("target_lower", "")),
        target_upper=_floats(reach.get("target_upper", "")),
        x_init=_floats(reach.get("x_init", "")),
        nu=_get_float(reach, "nu", 1e-8),
        max_iters=_get_int(reach, "max_iters", 1_000_000),
        prune_threshold=_get_float(absn, "prune_threshold", 1e-12),
    )
    return cfg.validate()


def load_config(path, overrides=None) -> PipelineConfig:
    """Parse and validate a config file, applying key=value overrides first."""
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#", ";"), interpolation=None
    )
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if overrides:
        apply_overrides(parser, overrides)
    return _parse(parser)


def apply_overrides(parser: configparser.ConfigParser, overrides):
    """Apply ``section.key=value`` strings on top of a parsed file."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        target, value = item.split("=", 1)
        if "." not in target:
            raise ConfigError(f"override {item!r} is missing the section prefix")
        section, key = target.split(".", 1)
        section = section.strip()
        key = key.strip()
        if section not in parser:
            parser.add_section(section)
        parser[section][key] = value.strip()
