"""High-probability radii on the deviation between posterior means and the
unknown dynamics.

For each cell s and output dimension d the table bounds
|mu_d(s) - f_d(x)| uniformly over x in the cell, with probability at least
1 - kappa * n * delta over the sampled data (kappa = 2 when both eps1
branches are combined by a minimum, else 1). The radius splits into three
parts:

  eps1  noise propagated through the regularized Gram inverse; the minimum of
        a direct norm branch,
            ||C^-1 k(s)|| * sqrt(N + 2 sqrt(N ln(1/delta)) + 2 ln(1/delta)),
        and a spectral branch,
            (sigma(s)/sigma_v) * sqrt(tr S + 2 sqrt(tr S^2 ln(1/delta))
                                       + 2 ||S|| ln(1/delta)),
        where S = K C^-1 has eigenvalues lam_i / (lam_i + sigma_v^2).
  eps2  in-cell variation of any function admitted by the true-kernel
        complexity bound: B_d * sqrt(2 |c_d^2 - inf_cell k_d(x_s, .)|).
  eps3  surrogate-vs-true kernel mismatch at the representative state:
        B_d * sqrt(|k(s)^T C^-1 (K_true C^-1 k(s) - 2 k_true(x_s)) + c_d^2|).

Everything is computed at the aggregated (per-cell) scale. The direct-branch
norm, the spectrum of K C^-1, and the eps3 quadratic form are reduced
exactly from the N-point formulation through the cell membership matrix, so
no N x N surrogate-kernel matrix is ever built. The true-kernel Gram in eps3
does require O(N^2) kernel evaluations; those are streamed in row blocks and
group-summed, and a seeded uniform subsample (flagged heuristic) is the
fallback past ``dense_cap``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DataTooLargeError, InconsistentSchemeError
from .gp import AggregatedDataset, BtgpModel, Dataset, _FitCache, _factorize, aggregate
from .kernel import SeKernel, se_cell_inf
from .partition import cell_box, cell_centers, int_to_bits

_BRANCHES = ("term_a", "term_b", "min")


@dataclass
class ErrorConfig:
    """Inputs for the radius computation.

    ``complexity_bounds[d]`` bounds the true-kernel RKHS norm of f_d;
    ``true_kernels[d]`` is the SE kernel assumed to admit f_d.
    """

    delta: float
    complexity_bounds: np.ndarray
    true_kernels: list
    branch: str = "min"
    dense_cap: int = 20000
    subsample: int = None
    subsample_seed: int = 0

    def __post_init__(self):
        if not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")
        self.complexity_bounds = np.atleast_1d(
            np.asarray(self.complexity_bounds, dtype=float)
        )
        if np.any(self.complexity_bounds <= 0):
            raise ValueError("complexity bounds must be positive")
        if self.branch not in _BRANCHES:
            raise ValueError(f"branch must be one of {_BRANCHES}")
        if len(self.true_kernels) != self.complexity_bounds.size:
            raise ValueError("one true kernel per output dimension required")
        for k in self.true_kernels:
            if not isinstance(k, SeKernel):
                raise TypeError("true kernels must be SeKernel instances")

    @property
    def confidence(self) -> float:
        kappa = 2 if self.branch == "min" else 1
        n = self.complexity_bounds.size
        return max(0.0, 1.0 - kappa * n * self.delta)


@dataclass
class ErrorTable:
    """Per-cell, per-dimension radii; eps = eps1 + eps2 + eps3 row-wise."""

    eps1: np.ndarray
    eps2: np.ndarray
    eps3: np.ndarray
    delta: float
    branch: str
    confidence: float
    heuristic: bool = False

    @property
    def eps(self) -> np.ndarray:
        return self.eps1 + self.eps2 + self.eps3

    @property
    def n_cells(self) -> int:
        return self.eps1.shape[0]

    def save(self, path, q: int = None):
        if q is None:
            q = int(round(math.log2(self.n_cells)))
        rows = []
        for s in range(self.n_cells):
            rows.append(
                {
                    "cell": int(s),
                    "bits": int_to_bits(s, q),
                    "eps1": [float(v) for v in self.eps1[s]],
                    "eps2": [float(v) for v in self.eps2[s]],
                    "eps3": [float(v) for v in self.eps3[s]],
                    "eps": [float(v) for v in self.eps[s]],
                }
            )
        payload = {
            "format": "error-table-v1",
            "delta": self.delta,
            "branch": self.branch,
            "confidence": self.confidence,
            "heuristic": self.heuristic,
            "cells": rows,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ErrorTable":
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("format") != "error-table-v1":
            raise ValueError("not an error-table payload")
        rows = payload["cells"]
        S = len(rows)
        n = len(rows[0]["eps1"])
        e1 = np.zeros((S, n))
        e2 = np.zeros((S, n))
        e3 = np.zeros((S, n))
        for row in rows:
            s = int(row["cell"])
            e1[s] = row["eps1"]
            e2[s] = row["eps2"]
            e3[s] = row["eps3"]
        return cls(
            eps1=e1,
            eps2=e2,
            eps3=e3,
            delta=float(payload["delta"]),
            branch=payload["branch"],
            confidence=float(payload["confidence"]),
            heuristic=bool(payload["heuristic"]),
        )


def noise_norm_radical(n_samples: int, delta: float) -> float:
    """sqrt(N + 2 sqrt(N ln(1/delta)) + 2 ln(1/delta)): chi-square style tail."""
    t = math.log(1.0 / delta)
    return math.sqrt(n_samples + 2.0 * math.sqrt(n_samples * t) + 2.0 * t)


def trace_radical(tr: float, tr2: float, op: float, delta: float) -> float:
    """sqrt(tr + 2 sqrt(tr2 ln(1/delta)) + 2 op ln(1/delta)) for the spectral branch."""
    t = math.log(1.0 / delta)
    return math.sqrt(tr + 2.0 * math.sqrt(tr2 * t) + 2.0 * op * t)


def _ensure_cache(data: Dataset, model: BtgpModel) -> _FitCache:
    cache = model.cache
    if cache is not None and cache.agg.n_total == data.n_samples:
        return cache
    agg = aggregate(data, model.scheme)
    _, chol = _factorize(model.kernel, agg, data.noise_std)
    all_cells = np.arange(model.scheme.n_cells, dtype=np.int64)
    cross = model.kernel.cross(agg.cells, all_cells)
    solved = sla.cho_solve(chol, cross)
    cache = _FitCache(agg, chol, cross, solved)
    model.cache = cache
    return cache


def spectrum_stats(kernel, agg: AggregatedDataset, noise_std: float) -> tuple:
    """(tr S, tr S^2, ||S||) for S = K_N (K_N + sigma_v^2 I)^-1 at the cell scale.

    The N-point Gram is P K_occ P^T for the membership matrix P, so its
    nonzero eigenvalues are those of M^(1/2) K_occ M^(1/2) with
    M = diag(multiplicities); zero eigenvalues contribute nothing to S.
    """
    K = kernel.gram_cells(agg.cells)
    scale = np.sqrt(agg.mult.astype(float))
    lam = np.linalg.eigvalsh(K * np.outer(scale, scale))
    lam = np.clip(lam, 0.0, None)
    e = lam / (lam + noise_std**2)
    return float(e.sum()), float(np.dot(e, e)), float(e.max(initial=0.0))


def _eps1_branches(data: Dataset, model: BtgpModel, config: ErrorConfig):
    """Both eps1 branches for every cell; each is output-dimension independent."""
    cache = _ensure_cache(data, model)
    agg = cache.agg
    N = agg.n_total
    # term A: || C_N^-1 khat_N(s) || reduces to || M^(-1/2) C^-1 k(s) ||
    # through the membership push-through identity.
    solved = cache.solved
    colnorm2 = np.einsum("ij,ij->j", solved, solved / agg.mult[:, None])
    term_a = np.sqrt(np.maximum(colnorm2, 0.0)) * noise_norm_radical(N, config.delta)
    tr, tr2, op = spectrum_stats(model.kernel, agg, data.noise_std)
    sigma = np.sqrt(model.var_table)
    term_b = (sigma / data.noise_std) * trace_radical(tr, tr2, op, config.delta)
    return term_a, term_b


def eps1_table(data: Dataset, model: BtgpModel, config: ErrorConfig) -> np.ndarray:
    term_a, term_b = _eps1_branches(data, model, config)
    if config.branch == "term_a":
        col = term_a
    elif config.branch == "term_b":
        col = term_b
    else:
        col = np.minimum(term_a, term_b)
    return np.repeat(col[:, None], model.dim, axis=1)


def eps2_table(model: BtgpModel, config: ErrorConfig) -> np.ndarray:
    """In-cell variation term; constant across cells on the uniform grid."""
    scheme = model.scheme
    box = cell_box(0, scheme)
    center = box.center
    out = np.zeros((scheme.n_cells, model.dim))
    for d, kern in enumerate(config.true_kernels):
        k_inf = se_cell_inf(center, box, kern)
        gap = abs(kern.amplitude**2 - k_inf)
        out[:, d] = config.complexity_bounds[d] * math.sqrt(2.0 * gap)
    return out


def _grouped_true_gram(X_sorted, starts, kern, block=1024) -> np.ndarray:
    """P^T K_true P without materializing the full N x N Gram."""
    N = X_sorted.shape[0]
    m = starts.size
    counts = np.diff(np.append(starts, N))
    group_of_row = np.repeat(np.arange(m), counts)
    G = np.zeros((m, m))
    for b0 in range(0, N, block):
        b1 = min(b0 + block, N)
        Kb = kern.cross(X_sorted[b0:b1], X_sorted)
        Kb = np.add.reduceat(Kb, starts, axis=1)
        rows = group_of_row[b0:b1]
        local = np.flatnonzero(np.diff(rows, prepend=-1))
        G[rows[local]] += np.add.reduceat(Kb, local, axis=0)
    return G


def _grouped_true_cross(X_sorted, starts, centers, kern, block=1024) -> np.ndarray:
    """P^T k_true(X, centers), shape (m, n_centers)."""
    N = X_sorted.shape[0]
    out = np.zeros((starts.size, centers.shape[0]))
    counts = np.diff(np.append(starts, N))
    group_of_row = np.repeat(np.arange(starts.size), counts)
    for b0 in range(0, N, block):
        b1 = min(b0 + block, N)
        Kb = kern.cross(X_sorted[b0:b1], centers)
        rows = group_of_row[b0:b1]
        local = np.flatnonzero(np.diff(rows, prepend=-1))
        out[rows[local]] += np.add.reduceat(Kb, local, axis=0)
    return out


def eps3_table(data: Dataset, model: BtgpModel, config: ErrorConfig) -> tuple:
    """Kernel-mismatch term for every cell and dimension.

    Returns (table, heuristic_flag); the flag is set when the quadratic form
    was evaluated on a subsample because N exceeded the dense cap.
    """
    heuristic = False
    if data.n_samples > config.dense_cap:
        if config.subsample is None:
            raise DataTooLargeError(
                f"N={data.n_samples} exceeds dense_cap={config.dense_cap}; "
                "configure a subsample size to enable the heuristic fallback"
            )
        rng = np.random.default_rng(config.subsample_seed)
        pick = rng.choice(data.n_samples, size=config.subsample, replace=False)
        data = Dataset(x=data.x[pick], y=data.y[pick], noise_std=data.noise_std)
        heuristic = True
        agg = aggregate(data, model.scheme)
        _, chol = _factorize(model.kernel, agg, data.noise_std)
        all_cells = np.arange(model.scheme.n_cells, dtype=np.int64)
        solved = sla.cho_solve(chol, model.kernel.cross(agg.cells, all_cells))
    else:
        cache = _ensure_cache(data, model)
        agg, solved = cache.agg, cache.solved

    X_sorted = data.x[agg.sort_idx]
    centers = cell_centers(model.scheme)
    W = solved / agg.mult[:, None]          # (m, S): C_N^-1 khat(s) grouped by cell
    out = np.zeros((model.scheme.n_cells, model.dim))
    for d, kern in enumerate(config.true_kernels):
        G = _grouped_true_gram(X_sorted, agg.starts, kern)
        T = _grouped_true_cross(X_sorted, agg.starts, centers, kern)
        quad = (
            np.einsum("ij,ij->j", W, G @ W)
            - 2.0 * np.einsum("ij,ij->j", W, T)
            + kern.amplitude**2
        )
        out[:, d] = config.complexity_bounds[d] * np.sqrt(np.abs(quad))
    return out, heuristic


def error_table(data: Dataset, model: BtgpModel, config: ErrorConfig) -> ErrorTable:
    """Assemble the full radius table; see the module docstring for the parts."""
    if config.complexity_bounds.size != model.dim:
        raise InconsistentSchemeError(
            "error config dimension does not match the fitted model"
        )
    e1 = eps1_table(data, model, config)
    e2 = eps2_table(model, config)
    e3, heuristic = eps3_table(data, model, config)
    return ErrorTable(
        eps1=e1,
        eps2=e2,
        eps3=e3,
        delta=config.delta,
        branch=config.branch,
        confidence=config.confidence,
        heuristic=heuristic,
    )


# -- scalar conveniences (table lookups; used by tests and diagnostics) ------


def eps1(s: int, d: int, data: Dataset, model: BtgpModel, config: ErrorConfig) -> float:
    return float(eps1_table(data, model, config)[s, d])


def eps2(s: int, d: int, model: BtgpModel, config: ErrorConfig) -> float:
    return float(eps2_table(model, config)[s, d])


def eps3(s: int, d: int, data: Dataset, model: BtgpModel, config: ErrorConfig) -> float:
    table, _ = eps3_table(data, model, config)
    return float(table[s, d])
