"""GP regression with the binary-tree kernel, exact per-cell data aggregation.

The posterior of a zero-mean GP with a piecewise-constant kernel is itself
piecewise constant, so it is stored as one mean value per output dimension
and one variance value per cell. Because kernel values only depend on cells,
observations sharing a cell can be averaged exactly: replacing the points of
cell s by their mean with heteroscedastic noise sigma_v^2 / m_s reproduces
the full-data posterior identically while capping the Gram size at the
number of occupied cells.

Posterior at cell s, for output dimension d:

    mu_d(s)    = k_N(s)^T (K + Lambda)^-1 ybar_d      Lambda = diag(sigma_v^2 / m_s)
    sigma^2(s) = k(s, s) - k_N(s)^T (K + Lambda)^-1 k_N(s)

The variance is shared across output dimensions (same kernel, inputs, and
noise for every d).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NumericalFailureError
from .kernel import BtKernel
from .partition import (
    PartitionScheme,
    StateBox,
    cell_centers,
    encode_points,
    int_to_bits,
)

_VAR_FLOOR = 1e-15


@dataclass
class Dataset:
    """One-step transition samples: y_i = f(x_i) + noise, rows of x in the domain."""

    x: np.ndarray
    y: np.ndarray
    noise_std: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 2 or self.x.shape != self.y.shape:
            raise ValueError("x and y must both have shape (N, n)")
        if self.x.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if not (self.noise_std >= 0):
            raise ValueError("noise_std must be nonnegative")

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def save_csv(self, path):
        n = self.dim
        header = ",".join([f"x{d+1}" for d in range(n)] + [f"y{d+1}" for d in range(n)])
        data = np.hstack([self.x, self.y])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def load_csv(cls, path, noise_std: float) -> "Dataset":
        with open(path) as fh:
            header = fh.readline().strip()
        cols = header.split(",")
        if len(cols) % 2 != 0 or not cols[0].startswith("x"):
            raise ValueError(f"unexpected dataset header {header!r}")
        n = len(cols) // 2
        expect = [f"x{d+1}" for d in range(n)] + [f"y{d+1}" for d in range(n)]
        if cols != expect:
            raise ValueError(f"unexpected dataset columns {cols}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(x=data[:, :n], y=data[:, n:], noise_std=noise_std)


@dataclass
class AggregatedDataset:
    """Per-cell sufficient statistics of a dataset under a partition scheme."""

    cells: np.ndarray      # occupied cell ids, ascending
    x_reps: np.ndarray     # cell centers used as representative states, (m, n)
    y_mean: np.ndarray     # per-cell output means, (m, n)
    mult: np.ndarray       # per-cell sample counts, (m,)
    n_total: int
    sort_idx: np.ndarray = field(repr=False)   # dataset rows sorted by cell
    starts: np.ndarray = field(repr=False)     # group start offsets into sort_idx

    @property
    def n_occupied(self) -> int:
        return self.cells.size


def aggregate(data: Dataset, scheme: PartitionScheme) -> AggregatedDataset:
    """Group samples by cell; means, multiplicities, and center representatives."""
    point_cells = encode_points(data.x, scheme)
    sort_idx = np.argsort(point_cells, kind="stable")
    sorted_cells = point_cells[sort_idx]
    cells, starts, mult = np.unique(
        sorted_cells, return_index=True, return_counts=True
    )
    y_sorted = data.y[sort_idx]
    y_sum = np.add.reduceat(y_sorted, starts, axis=0)
    y_mean = y_sum / mult[:, None]
    centers = cell_centers(scheme)[cells]
    return AggregatedDataset(
        cells=cells,
        x_reps=centers,
        y_mean=y_mean,
        mult=mult,
        n_total=data.n_samples,
        sort_idx=sort_idx,
        starts=starts,
    )


class _FitCache:
    """Factorizations shared between fitting and the error-radius module."""

    def __init__(self, agg, chol, cross, solved):
        self.agg = agg                  # AggregatedDataset
        self.chol = chol                # cho_factor of K_occ + Lambda
        self.cross = cross              # kernel between occupied cells and all cells, (m, S)
        self.solved = solved            # (K_occ + Lambda)^-1 cross, (m, S)


def _factorize(kernel: BtKernel, agg: AggregatedDataset, noise_std: float, jitter=1e-10):
    K = kernel.gram_cells(agg.cells)
    C = K + np.diag(noise_std**2 / agg.mult)
    try:
        chol = sla.cho_factor(C, lower=True)
    except np.linalg.LinAlgError:
        try:
            chol = sla.cho_factor(C + jitter * np.eye(C.shape[0]), lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError(
                "Cholesky of the regularized Gram failed after jitter retry"
            ) from exc
    return K, chol


@dataclass
class BtgpModel:
    """Piecewise-constant GP posterior over the cells of a partition scheme."""

    kernel: BtKernel
    noise_std: float
    mean_table: np.ndarray   # (2**q, n)
    var_table: np.ndarray    # (2**q,)
    cache: _FitCache = field(default=None, repr=False)

    @property
    def scheme(self) -> PartitionScheme:
        return self.kernel.scheme

    @property
    def dim(self) -> int:
        return self.mean_table.shape[1]

    def mean(self, s: int, d: int) -> float:
        return float(self.mean_table[s, d])

    def variance(self, s: int, d: int = 0) -> float:
        # shared across output dimensions; d kept for interface symmetry
        return float(self.var_table[s])

    def predictive_density_params(self, s: int, d: int, include_noise: bool = False):
        """(mean, variance) of the posterior at cell s for output dimension d.

        ``include_noise`` adds the observation noise variance, for simulation
        and diagnostics; the abstraction consumes the noise-free variance.
        """
        var = self.var_table[s] + (self.noise_std**2 if include_noise else 0.0)
        return float(self.mean_table[s, d]), float(var)

    def predict_points(self, X) -> tuple:
        """Posterior (means, variances) at arbitrary domain points, shapes (M, n)."""
        cells = encode_points(np.asarray(X, dtype=float), self.scheme)
        means = self.mean_table[cells]
        var = np.repeat(self.var_table[cells][:, None], self.dim, axis=1)
        return means, var

    # -- serialization ------------------------------------------------------

    def to_payload(self) -> dict:
        scheme = self.scheme
        rows = []
        for s in range(scheme.n_cells):
            rows.append(
                {
                    "cell": int(s),
                    "bits": int_to_bits(s, scheme.q),
                    "mu": [float(v) for v in self.mean_table[s]],
                    "var": [float(self.var_table[s])] * self.dim,
                }
            )
        return {
            "format": "btgp-model-v1",
            "domain_lower": scheme.domain.lower.tolist(),
            "domain_upper": scheme.domain.upper.tolist(),
            "q": scheme.q,
            "split_order": list(scheme.split_order),
            "weights": self.kernel.weights.tolist(),
            "noise_std": float(self.noise_std),
            "cells": rows,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_payload(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_payload(cls, payload: dict) -> "BtgpModel":
        if payload.get("format") != "btgp-model-v1":
            raise ValueError("not a btgp model payload")
        scheme = PartitionScheme(
            domain=StateBox(payload["domain_lower"], payload["domain_upper"]),
            q=int(payload["q"]),
            split_order=tuple(payload["split_order"]),
        )
        kern = BtKernel(scheme, weights=payload["weights"])
        rows = payload["cells"]
        if len(rows) != scheme.n_cells:
            raise ValueError("model payload has wrong number of cells")
        n = len(rows[0]["mu"])
        mean = np.zeros((scheme.n_cells, n))
        var = np.zeros(scheme.n_cells)
        for row in rows:
            s = int(row["cell"])
            mean[s] = row["mu"]
            var[s] = row["var"][0]
        return cls(
            kernel=kern,
            noise_std=float(payload["noise_std"]),
            mean_table=mean,
            var_table=var,
        )

    @classmethod
    def load(cls, path) -> "BtgpModel":
        with open(path) as fh:
            return cls.from_payload(json.load(fh))


def fit(data: Dataset, kernel: BtKernel) -> BtgpModel:
    """Fit the aggregated GP posterior; all 2**q cells get a table entry.

    Cells with no kernel overlap with the data fall back to the prior
    (mean 0, variance 1) automatically since their cross-kernel vector is zero.
    """
    scheme = kernel.scheme
    if data.dim != scheme.dim:
        raise ValueError("dataset dimension does not match the partition scheme")
    if not (data.noise_std > 0):
        raise ValueError("fitting requires a positive noise level")
    agg = aggregate(data, scheme)
    _, chol = _factorize(kernel, agg, data.noise_std)
    all_cells = np.arange(scheme.n_cells, dtype=np.int64)
    cross = kernel.cross(agg.cells, all_cells)          # (m, S)
    solved = sla.cho_solve(chol, cross)                 # (m, S)
    mean_table = solved.T @ agg.y_mean                  # (S, n)
    var_table = 1.0 - np.einsum("ij,ij->j", cross, solved)
    var_table = np.maximum(var_table, _VAR_FLOOR)
    return BtgpModel(
        kernel=kernel,
        noise_std=data.noise_std,
        mean_table=mean_table,
        var_table=var_table,
        cache=_FitCache(agg, chol, cross, solved),
    )
