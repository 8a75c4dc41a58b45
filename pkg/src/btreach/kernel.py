"""Kernels: the piecewise-constant binary-tree kernel and squared-exponential kernels.

The binary-tree kernel over a partition scheme is

    k(x, x') = sum_{i=1..q} w_i * 1(prefix_i(x) == prefix_i(x'))

with nonnegative level weights summing to one. It is a valid kernel: it is
the dot product of the (finite) feature map whose (level i, string s) entry
is sqrt(w_i) * 1(x in cell_i(s)). Kernel values therefore only depend on the
length of the longest common prefix of the two cells, which makes Gram
matrices cheap: an XOR plus a bit-length lookup per pair.

Level weights are renormalized to sum to one and the cumulative sums are
precomputed with exact (fsum) accumulation of the squared stored square
roots, so kernel evaluations agree bit-for-bit with feature-map dot products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .partition import PartitionScheme, StateBox, encode, encode_points


class BtKernel:
    """Binary-tree kernel over a partition scheme.

    Parameters
    ----------
    scheme : PartitionScheme
        Partition defining the cell prefixes.
    weights : array-like of length q, optional
        Nonnegative level weights; renormalized to sum to one. Defaults to
        uniform 1/q.
    """

    def __init__(self, scheme: PartitionScheme, weights=None):
        self.scheme = scheme
        q = scheme.q
        if weights is None:
            w = np.full(q, 1.0 / q)
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (q,):
                raise ValueError(f"weights must have length q={q}")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            total = w.sum()
            if total <= 0:
                raise ValueError("weights must not all be zero")
            w = w / total
        self.weights = w
        # store sqrt first; levels contribute fl(sqrt(w)^2) so kernel values
        # match feature dot products exactly
        self._level_sqrt = np.sqrt(w)
        self._level_w = self._level_sqrt * self._level_sqrt
        self._cumw = np.array(
            [math.fsum(self._level_w[:j]) for j in range(q + 1)]
        )
        self._pow2 = 1 << np.arange(q, dtype=np.int64)

    @property
    def q(self) -> int:
        return self.scheme.q

    @property
    def feature_dim(self) -> int:
        return int(2 ** (self.q + 1) - 2)

    def common_prefix_len(self, cell_a: int, cell_b: int) -> int:
        x = int(cell_a) ^ int(cell_b)
        return self.q - x.bit_length()

    def eval_cells(self, cell_a: int, cell_b: int) -> float:
        return float(self._cumw[self.common_prefix_len(cell_a, cell_b)])

    def eval(self, x, xp) -> float:
        a = encode(x, self.scheme)
        b = encode(xp, self.scheme)
        return self.eval_cells(a, b)

    def cross(self, cells_a, cells_b) -> np.ndarray:
        """Kernel matrix between two cell-id arrays, shape (len(a), len(b))."""
        a = np.asarray(cells_a, dtype=np.int64)
        b = np.asarray(cells_b, dtype=np.int64)
        x = a[:, None] ^ b[None, :]
        # bit_length via count of powers of two <= x
        blen = np.searchsorted(self._pow2, x.ravel(), side="right")
        return self._cumw[self.q - blen].reshape(x.shape)

    def gram_cells(self, cells) -> np.ndarray:
        return self.cross(cells, cells)

    def feature_map_cell(self, cell: int) -> np.ndarray:
        """Feature vector of a cell: one sqrt(w_i) entry per level prefix."""
        phi = np.zeros(self.feature_dim)
        offset = 0
        for i in range(1, self.q + 1):
            prefix = cell >> (self.q - i)
            phi[offset + prefix] = self._level_sqrt[i - 1]
            offset += 1 << i
        return phi

    def feature_map(self, x) -> np.ndarray:
        return self.feature_map_cell(encode(x, self.scheme))


@dataclass(frozen=True)
class SeKernel:
    """Squared-exponential kernel with per-axis lengthscales.

    k(x, x') = amplitude^2 * exp(-0.5 * sum_d (x_d - x'_d)^2 / lengthscales_d^2)
    """

    amplitude: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if self.amplitude <= 0 or np.any(ls <= 0):
            raise ValueError("amplitude and lengthscales must be positive")
        object.__setattr__(self, "lengthscales", ls)

    def eval(self, x, xp) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        xp = np.atleast_1d(np.asarray(xp, dtype=float))
        z = (x - xp) / self.lengthscales
        return self.amplitude**2 * float(np.exp(-0.5 * np.dot(z, z)))

    def cross(self, X, Xp) -> np.ndarray:
        X = np.asarray(X, dtype=float) / self.lengthscales
        Xp = np.asarray(Xp, dtype=float) / self.lengthscales
        # squared distances via symmetric elementwise differences
        d2 = np.zeros((X.shape[0], Xp.shape[0]))
        for d in range(X.shape[1]):
            diff = X[:, d, None] - Xp[None, :, d]
            d2 += diff * diff
        return self.amplitude**2 * np.exp(-0.5 * d2)


def bt_eval(x, xp, kernel: BtKernel) -> float:
    """Binary-tree kernel value at two domain points."""
    return kernel.eval(x, xp)


def bt_feature_map(x, kernel: BtKernel) -> np.ndarray:
    """Explicit feature vector realizing the binary-tree kernel.

    Entries are indexed by (level i, length-i prefix), levels concatenated in
    order; exactly q entries are nonzero, equal to sqrt(w_i). Dot products of
    two feature vectors reproduce kernel values exactly.
    """
    return kernel.feature_map(x)


def rkhs_norm_bound(coefficients, kernel: BtKernel) -> float:
    """Norm bound sqrt(sum_i w_i sum_s y_s^2) for a level-weighted expansion.

    ``coefficients`` are the y_s in f(x) = sum_i w_i sum_s y_s 1(x in cell_i(s)),
    i.e. the per-level pieces *after* multiplying by the level weight; given
    either as a sequence of q arrays (lengths 2, 4, ..., 2**q) or one flat
    array. For that convention the value dominates the exact RKHS norm of f
    (decompose f across the scaled indicator kernels and sum their norms).
    """
    q = kernel.q
    if isinstance(coefficients, np.ndarray) and coefficients.ndim == 1:
        flat = np.asarray(coefficients, dtype=float)
        if flat.size != kernel.feature_dim:
            raise ValueError("flat coefficient vector has wrong length")
        levels = []
        offset = 0
        for i in range(1, q + 1):
            levels.append(flat[offset : offset + (1 << i)])
            offset += 1 << i
    else:
        levels = [np.asarray(c, dtype=float) for c in coefficients]
        if len(levels) != q or any(
            lv.shape != ((1 << (i + 1)),) for i, lv in enumerate(levels)
        ):
            raise ValueError("expected q per-level arrays of lengths 2, 4, ..., 2**q")
    total = 0.0
    for i, lv in enumerate(levels):
        total += kernel._level_w[i] * float(np.dot(lv, lv))
    return math.sqrt(total)


def se_eval(x, xp, kernel: SeKernel) -> float:
    """Squared-exponential kernel value."""
    return kernel.eval(x, xp)


def se_cell_inf(x_s: np.ndarray, cell: StateBox, kernel: SeKernel) -> float:
    """Infimum of k(x_s, .) over a cell box.

    The SE kernel decreases with scaled distance, so the infimum sits at the
    corner maximizing the per-axis distance from x_s.
    """
    x_s = np.asarray(x_s, dtype=float)
    dist = np.maximum(np.abs(x_s - cell.lower), np.abs(x_s - cell.upper))
    z = dist / kernel.lengthscales
    return kernel.amplitude**2 * float(np.exp(-0.5 * np.dot(z, z)))


def gram(points, kernel) -> np.ndarray:
    """Gram matrix of a kernel on an (N, n) array of points."""
    points = np.asarray(points, dtype=float)
    if isinstance(kernel, BtKernel):
        cells = encode_points(points, kernel.scheme)
        return kernel.gram_cells(cells)
    if isinstance(kernel, SeKernel):
        return kernel.cross(points, points)
    raise TypeError(f"unsupported kernel type {type(kernel).__name__}")
