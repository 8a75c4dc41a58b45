"""Interval Markov chain abstraction of the learned surrogate.

Each cell of the partition becomes an abstract state. From source cell s the
surrogate's next state is Gaussian per axis with mean mu_d(s) + e_d and
standard deviation sigma(s), where e_d ranges over the learning-error
interval [-eps_d(s), +eps_d(s)]. Transition probability bounds to a
destination box maximize/minimize the Gaussian mass over that interval:

  * the mass of slice [a, b] is maximized by centering the mean as close to
    (a + b)/2 as the interval allows;
  * it is unimodal in the mean, so the minimum sits at one of the interval's
    endpoints.

Per-axis bounds multiply into box bounds, exactly because the optimization
separates per axis. Mass escaping the domain is never enumerated; it shows
up in the loss bounds through row (in)consistency:

  r_low = sum of t_low over target cells            r_up  = t_up sum + pruned
  l_up  = 1 - sum of stored t_low                   l_low = max(0, 1 - t_up sum)

Destinations with t_up below the prune threshold are dropped; their summed
upper mass is folded into r_up and l_low, so the verifier's worst case
(pruned mass entering the target) stays covered and every stored row keeps
a nonempty distribution family containing the true row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.special import ndtr

from .errbound import ErrorTable
from .errors import InconsistentSchemeError, OutOfDomainError
from .gp import BtgpModel, Dataset
from .kernel import SeKernel
from .partition import PartitionScheme, StateBox, cell_box, encode

_FMT = "%.17g"


@dataclass(frozen=True)
class TransitionQuery:
    """One source-to-destination bound request.

    ``mean``, ``var``, ``eps`` are per-axis posterior mean, variance, and
    error radius at the source cell; ``dest_box`` is the destination region.
    """

    dest_box: StateBox
    mean: np.ndarray
    var: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        for name in ("mean", "var", "eps"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape != (self.dest_box.dim,):
                raise ValueError(f"{name} must have one entry per axis")
            object.__setattr__(self, name, arr)
        if np.any(self.var <= 0):
            raise ValueError("variances must be positive")
        if np.any(self.eps < 0):
            raise ValueError("error radii must be nonnegative")


def gauss_box_prob(box: StateBox, mean, var) -> float:
    """Probability that an axis-independent Gaussian lands in a box."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    sd = np.sqrt(np.atleast_1d(np.asarray(var, dtype=float)))
    hi = ndtr((box.upper - mean) / sd)
    lo = ndtr((box.lower - mean) / sd)
    return float(np.prod(hi - lo))


def _axis_bounds(edges: np.ndarray, mu: float, sigma: float, eps: float):
    """(lower, upper) slice-probability bounds along one axis.

    ``edges`` holds K+1 slice boundaries; returns two arrays of length K.
    """
    a = edges[:-1]
    b = edges[1:]
    mid = 0.5 * (a + b)
    best = np.clip(mid, mu - eps, mu + eps)
    up = ndtr((b - best) / sigma) - ndtr((a - best) / sigma)
    left = ndtr((b - (mu - eps)) / sigma) - ndtr((a - (mu - eps)) / sigma)
    right = ndtr((b - (mu + eps)) / sigma) - ndtr((a - (mu + eps)) / sigma)
    lo = np.minimum(left, right)
    return lo, up


def transition_bounds(query: TransitionQuery) -> tuple:
    """Closed-form (t_low, t_up) for one destination box."""
    lo = 1.0
    up = 1.0
    sd = np.sqrt(query.var)
    for d in range(query.dest_box.dim):
        edges = np.array([query.dest_box.lower[d], query.dest_box.upper[d]])
        alo, aup = _axis_bounds(edges, query.mean[d], sd[d], query.eps[d])
        lo *= alo[0]
        up *= aup[0]
    return float(lo), float(up)


@dataclass
class Imc:
    """Interval Markov chain over the 2**q cells, CSR-stored kept transitions."""

    q: int
    s_init: int
    indptr: np.ndarray
    indices: np.ndarray
    t_low: np.ndarray
    t_up: np.ndarray
    r_low: np.ndarray
    r_up: np.ndarray
    l_low: np.ndarray
    l_up: np.ndarray
    pruned: np.ndarray
    target_cells: np.ndarray
    prune_threshold: float
    confidence: float

    @property
    def n_states(self) -> int:
        return 1 << self.q

    def row(self, s: int) -> tuple:
        """(destinations, t_low, t_up) of one source row."""
        sl = slice(self.indptr[s], self.indptr[s + 1])
        return self.indices[sl], self.t_low[sl], self.t_up[sl]

    @property
    def target_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[self.target_cells] = True
        return mask

    # -- text round-trip -----------------------------------------------------

    def save(self, transitions_path, states_path):
        meta = (
            f"# imc-v1 q={self.q} s_init={self.s_init} "
            f"prune_threshold={self.prune_threshold:.17g} "
            f"confidence={self.confidence:.17g}\n"
            f"# target={','.join(str(c) for c in self.target_cells.tolist())}\n"
        )
        with open(transitions_path, "w") as fh:
            fh.write(meta)
            fh.write("# columns: src_cell dst_cell t_lower t_upper\n")
            for s in range(self.n_states):
                beg, end = self.indptr[s], self.indptr[s + 1]
                for j in range(beg, end):
                    fh.write(
                        f"{s} {self.indices[j]} "
                        f"{self.t_low[j]:.17g} {self.t_up[j]:.17g}\n"
                    )
        with open(states_path, "w") as fh:
            fh.write(meta)
            fh.write("# columns: cell r_lower r_upper l_lower l_upper pruned_mass\n")
            for s in range(self.n_states):
                fh.write(
                    f"{s} {self.r_low[s]:.17g} {self.r_up[s]:.17g} "
                    f"{self.l_low[s]:.17g} {self.l_up[s]:.17g} {self.pruned[s]:.17g}\n"
                )

    @classmethod
    def load(cls, transitions_path, states_path) -> "Imc":
        def parse_meta(path):
            meta = {}
            with open(path) as fh:
                for line in fh:
                    if not line.startswith("#"):
                        break
                    body = line[1:].strip()
                    for tok in body.split():
                        if "=" in tok:
                            k, v = tok.split("=", 1)
                            meta[k] = v
            return meta

        meta = parse_meta(transitions_path)
        q = int(meta["q"])
        n_states = 1 << q
        target_txt = meta.get("target", "")
        target = np.array(
            sorted(int(c) for c in target_txt.split(",") if c != ""), dtype=np.int64
        )
        trips = np.loadtxt(transitions_path, comments="#", ndmin=2)
        states = np.loadtxt(states_path, comments="#", ndmin=2)
        if states.shape[0] != n_states:
            raise ValueError("per-state table has wrong number of rows")
        if trips.size:
            src = trips[:, 0].astype(np.int64)
            order = np.argsort(src, kind="stable")
            trips = trips[order]
            src = src[order]
            indices = trips[:, 1].astype(np.int64)
            t_low = trips[:, 2].copy()
            t_up = trips[:, 3].copy()
        else:
            src = np.zeros(0, dtype=np.int64)
            indices = np.zeros(0, dtype=np.int64)
            t_low = np.zeros(0)
            t_up = np.zeros(0)
        indptr = np.zeros(n_states + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(
            q=q,
            s_init=int(meta["s_init"]),
            indptr=indptr,
            indices=indices,
            t_low=t_low,
            t_up=t_up,
            r_low=states[:, 1].copy(),
            r_up=states[:, 2].copy(),
            l_low=states[:, 3].copy(),
            l_up=states[:, 4].copy(),
            pruned=states[:, 5].copy(),
            target_cells=target,
            prune_threshold=float(meta["prune_threshold"]),
            confidence=float(meta["confidence"]),
        )


def _assemble(scheme, row_iter, target_mask, s_init, prune_threshold, confidence):
    """Shared row -> CSR assembly for both abstraction builders."""
    S = scheme.n_cells
    idx_chunks = []
    lo_chunks = []
    up_chunks = []
    counts = np.zeros(S, dtype=np.int64)
    r_low = np.zeros(S)
    r_up = np.zeros(S)
    l_low = np.zeros(S)
    l_up = np.zeros(S)
    pruned = np.zeros(S)
    all_ids = np.arange(S, dtype=np.int64)
    for s, (row_lo, row_up) in enumerate(row_iter):
        keep = row_up >= prune_threshold
        dropped = float(row_up[~keep].sum())
        kept_lo = row_lo[keep]
        kept_up = row_up[keep]
        pruned[s] = dropped
        r_low[s] = float(row_lo[target_mask].sum())
        r_up[s] = min(float(row_up[keep & target_mask].sum()) + dropped, 1.0)
        l_up[s] = 1.0 - float(kept_lo.sum())
        l_low[s] = max(0.0, 1.0 - float(kept_up.sum()) - dropped)
        counts[s] = kept_lo.size
        idx_chunks.append(all_ids[keep])
        lo_chunks.append(kept_lo)
        up_chunks.append(kept_up)
    indptr = np.zeros(S + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    target_cells = all_ids[target_mask]
    return Imc(
        q=scheme.q,
        s_init=s_init,
        indptr=indptr,
        indices=np.concatenate(idx_chunks) if idx_chunks else np.zeros(0, np.int64),
        t_low=np.concatenate(lo_chunks) if lo_chunks else np.zeros(0),
        t_up=np.concatenate(up_chunks) if up_chunks else np.zeros(0),
        r_low=r_low,
        r_up=r_up,
        l_low=l_low,
        l_up=l_up,
        pruned=pruned,
        target_cells=target_cells,
        prune_threshold=prune_threshold,
        confidence=confidence,
    )


def _check_inputs(scheme: PartitionScheme, errors: ErrorTable, target_cells, x_init):
    if errors.n_cells != scheme.n_cells:
        raise InconsistentSchemeError("error table size does not match the scheme")
    target = np.asarray(sorted(int(c) for c in target_cells), dtype=np.int64)
    if target.size == 0:
        raise ValueError("target cell set is empty")
    if target.min() < 0 or target.max() >= scheme.n_cells:
        raise ValueError("target cell ids out of range")
    x_init = np.asarray(x_init, dtype=float)
    if not scheme.domain.contains(x_init):
        raise OutOfDomainError("x_init lies outside the domain")
    mask = np.zeros(scheme.n_cells, dtype=bool)
    mask[target] = True
    return mask, encode(x_init, scheme)


def build_imc(
    model: BtgpModel,
    errors: ErrorTable,
    target_cells,
    x_init,
    prune_threshold: float = 1e-12,
) -> Imc:
    """Abstract the piecewise-constant posterior into an IMC.

    Exploits that the posterior is constant per cell: one set of per-axis
    slice bounds covers all destinations of a source row.
    """
    scheme = model.scheme
    target_mask, s_init = _check_inputs(scheme, errors, target_cells, x_init)
    axis_edges = [scheme.axis_edges(d) for d in range(scheme.dim)]
    axis_idx = scheme.axis_slice_indices
    eps = errors.eps
    sd = np.sqrt(model.var_table)

    def rows():
        for s in range(scheme.n_cells):
            row_lo = 1.0
            row_up = 1.0
            for d in range(scheme.dim):
                alo, aup = _axis_bounds(
                    axis_edges[d], model.mean_table[s, d], sd[s], eps[s, d]
                )
                row_lo = row_lo * alo[axis_idx[d]]
                row_up = row_up * aup[axis_idx[d]]
            yield row_lo, row_up

    return _assemble(
        scheme, rows(), target_mask, s_init, prune_threshold, errors.confidence
    )


def build_imc_continuous_reference(
    posterior,
    errors: ErrorTable,
    target_cells,
    x_init,
    scheme: PartitionScheme,
    grid: int = 5,
    prune_threshold: float = 1e-12,
) -> Imc:
    """Abstraction baseline for posteriors that vary within a cell.

    ``posterior`` exposes ``predict(X) -> (means, vars)``. Within each source
    cell the per-axis bounds are evaluated on a ``grid x ... x grid`` lattice
    of in-cell points; slice upper bounds take the max over the lattice and
    lower bounds the min, an outer approximation of the in-cell optimum. With
    a posterior that is constant over each cell this reduces to
    :func:`build_imc` exactly.
    """
    target_mask, s_init = _check_inputs(scheme, errors, target_cells, x_init)
    axis_edges = [scheme.axis_edges(d) for d in range(scheme.dim)]
    axis_idx = scheme.axis_slice_indices
    offsets = (np.arange(grid) + 0.5) / grid

    def rows():
        for s in range(scheme.n_cells):
            box = cell_box(s, scheme)
            axes = [box.lower[d] + offsets * box.widths[d] for d in range(scheme.dim)]
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=1)
            means, variances = posterior.predict(pts)
            sds = np.sqrt(variances)
            row_lo = None
            row_up = None
            for g in range(pts.shape[0]):
                pt_lo = 1.0
                pt_up = 1.0
                for d in range(scheme.dim):
                    alo, aup = _axis_bounds(
                        axis_edges[d], means[g, d], sds[g, d], errors.eps[s, d]
                    )
                    pt_lo = pt_lo * alo[axis_idx[d]]
                    pt_up = pt_up * aup[axis_idx[d]]
                row_lo = pt_lo if row_lo is None else np.minimum(row_lo, pt_lo)
                row_up = pt_up if row_up is None else np.maximum(row_up, pt_up)
            yield row_lo, row_up

    return _assemble(
        scheme, rows(), target_mask, s_init, prune_threshold, errors.confidence
    )


class SeGpPosterior:
    """Exact SE-kernel GP posterior on the raw data, one kernel per output dim."""

    def __init__(self, data: Dataset, kernels, noise_std: float = None):
        if len(kernels) != data.dim:
            raise ValueError("one SE kernel per output dimension required")
        for k in kernels:
            if not isinstance(k, SeKernel):
                raise TypeError("kernels must be SeKernel instances")
        self.kernels = list(kernels)
        self.x = data.x
        sigma = data.noise_std if noise_std is None else noise_std
        self._chols = []
        self._alphas = []
        for d, kern in enumerate(self.kernels):
            C = kern.cross(data.x, data.x) + sigma**2 * np.eye(data.n_samples)
            chol = sla.cho_factor(C, lower=True)
            self._chols.append(chol)
            self._alphas.append(sla.cho_solve(chol, data.y[:, d]))

    def predict(self, X) -> tuple:
        X = np.asarray(X, dtype=float)
        means = np.zeros((X.shape[0], len(self.kernels)))
        variances = np.zeros_like(means)
        for d, kern in enumerate(self.kernels):
            Kx = kern.cross(X, self.x)
            means[:, d] = Kx @ self._alphas[d]
            quad = np.einsum("ij,ij->i", Kx, sla.cho_solve(self._chols[d], Kx.T).T)
            variances[:, d] = np.maximum(kern.amplitude**2 - quad, 1e-12)
        return means, variances


class PiecewisePosterior:
    """Adapter exposing a fitted cell-constant model via the predict interface."""

    def __init__(self, model: BtgpModel):
        self.model = model

    def predict(self, X) -> tuple:
        return self.model.predict_points(X)
