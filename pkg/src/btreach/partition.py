"""Axis-aligned binary partitioning of a box-shaped state space.

A partition scheme splits a box domain ``q`` times, each split halving one
axis at its midpoint. Split ``i`` acts on axis ``split_order[i]`` (cyclic by
default), so a cell is addressed by a length-``q`` bit string: bit ``i`` is 0
for the lower half of that split, 1 for the upper half. Bit strings are
stored as plain integers (first split = most significant bit); helpers
convert to the string form for IO.

Cells are half-open ``[a, b)`` along every split, except that the topmost
slice of each axis keeps its upper face, so the cells tile the closed domain
exactly and every domain point maps to exactly one cell.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import EmptyProjectionWarning, OutOfDomainError


@dataclass(frozen=True)
class StateBox:
    """Closed axis-aligned box with positive width on every axis."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError("box must have lower < upper on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def contains_box(self, other: "StateBox") -> bool:
        return bool(
            np.all(self.lower <= other.lower) and np.all(other.upper <= self.upper)
        )

    def intersects_interior(self, other: "StateBox") -> bool:
        # touching faces do not count as overlap
        return bool(
            np.all(self.lower < other.upper) and np.all(other.lower < self.upper)
        )


@dataclass(frozen=True)
class PartitionScheme:
    """Domain box plus split schedule; addresses 2**q cells."""

    domain: StateBox
    q: int
    split_order: tuple = field(default=None)

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("precision q must be >= 1")
        n = self.domain.dim
        order = self.split_order
        if order is None:
            order = tuple(i % n for i in range(self.q))
        else:
            order = tuple(int(d) for d in order)
            if len(order) != self.q:
                raise ValueError("split_order must have length q")
            if any(d < 0 or d >= n for d in order):
                raise ValueError("split_order entries must be valid axis indices")
        object.__setattr__(self, "split_order", order)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_cells(self) -> int:
        return 1 << self.q

    @cached_property
    def axis_counts(self) -> tuple:
        """Number of splits applied to each axis."""
        counts = [0] * self.dim
        for d in self.split_order:
            counts[d] += 1
        return tuple(counts)

    @cached_property
    def _axis_positions(self) -> tuple:
        """For each axis, the split indices (bit positions) acting on it."""
        pos = [[] for _ in range(self.dim)]
        for i, d in enumerate(self.split_order):
            pos[d].append(i)
        return tuple(tuple(p) for p in pos)

    def axis_slice_count(self, d: int) -> int:
        return 1 << self.axis_counts[d]

    def axis_edges(self, d: int) -> np.ndarray:
        """Slice edge coordinates along axis d (length 2**c_d + 1)."""
        k = self.axis_slice_count(d)
        return np.linspace(self.domain.lower[d], self.domain.upper[d], k + 1)

    @cached_property
    def axis_slice_indices(self) -> tuple:
        """Per axis: the slice index of every cell, as an int array of length 2**q.

        The slice index along axis d collects the bits of that axis's splits,
        coarsest split most significant.
        """
        cells = np.arange(self.n_cells, dtype=np.int64)
        out = []
        for d in range(self.dim):
            idx = np.zeros(self.n_cells, dtype=np.int64)
            for p in self._axis_positions[d]:
                bit = (cells >> (self.q - 1 - p)) & 1
                idx = (idx << 1) | bit
            out.append(idx)
        return tuple(out)

    def __eq__(self, other):
        return (
            isinstance(other, PartitionScheme)
            and self.q == other.q
            and self.split_order == other.split_order
            and np.array_equal(self.domain.lower, other.domain.lower)
            and np.array_equal(self.domain.upper, other.domain.upper)
        )


def bits_to_int(bits: str) -> int:
    if bits == "":
        return 0
    return int(bits, 2)


def int_to_bits(cell: int, length: int) -> str:
    return format(cell, "b").zfill(length)


def encode(x, scheme: PartitionScheme) -> int:
    """Map one domain point to its cell id.

    Each split sends ``x_d < mid`` to the 0 half and ``x_d >= mid`` to the 1
    half, which realizes the half-open cell convention (domain-boundary points
    on the top face land in the closed topmost slice).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (scheme.dim,):
        raise ValueError(f"point must have shape ({scheme.dim},)")
    if not scheme.domain.contains(x):
        raise OutOfDomainError(f"point {x.tolist()} outside domain")
    lo = scheme.domain.lower.copy()
    hi = scheme.domain.upper.copy()
    cell = 0
    for d in scheme.split_order:
        mid = 0.5 * (lo[d] + hi[d])
        if x[d] >= mid:
            cell = (cell << 1) | 1
            lo[d] = mid
        else:
            cell = cell << 1
            hi[d] = mid
    return cell


def encode_points(X, scheme: PartitionScheme) -> np.ndarray:
    """Vectorized :func:`encode` for an (N, n) array of domain points."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != scheme.dim:
        raise ValueError(f"points must have shape (N, {scheme.dim})")
    inside = (X >= scheme.domain.lower) & (X <= scheme.domain.upper)
    if not inside.all():
        bad = int(np.argmin(inside.all(axis=1)))
        raise OutOfDomainError(f"point at row {bad} outside domain")
    n_pts = X.shape[0]
    lo = np.tile(scheme.domain.lower, (n_pts, 1))
    hi = np.tile(scheme.domain.upper, (n_pts, 1))
    cells = np.zeros(n_pts, dtype=np.int64)
    for d in scheme.split_order:
        mid = 0.5 * (lo[:, d] + hi[:, d])
        right = X[:, d] >= mid
        cells = (cells << 1) | right
        lo[right, d] = mid[right]
        hi[~right, d] = mid[~right]
    return cells


def _prefix_box(scheme: PartitionScheme, prefix: int, length: int) -> tuple:
    lo = scheme.domain.lower.copy()
    hi = scheme.domain.upper.copy()
    for i in range(length):
        d = scheme.split_order[i]
        mid = 0.5 * (lo[d] + hi[d])
        if (prefix >> (length - 1 - i)) & 1:
            lo[d] = mid
        else:
            hi[d] = mid
    return lo, hi


def cell_box(s, scheme: PartitionScheme) -> StateBox:
    """Closed box of a cell or cell prefix.

    ``s`` is a bit string of length <= q, or an int meaning a full-precision
    (length-q) cell id.
    """
    if isinstance(s, str):
        if len(s) > scheme.q or any(c not in "01" for c in s):
            raise ValueError(f"invalid cell bits {s!r}")
        prefix, length = bits_to_int(s), len(s)
    else:
        prefix, length = int(s), scheme.q
        if prefix < 0 or prefix >= scheme.n_cells:
            raise ValueError(f"cell id {prefix} out of range for q={scheme.q}")
    lo, hi = _prefix_box(scheme, prefix, length)
    return StateBox(lo, hi)


def cell_center(s, scheme: PartitionScheme) -> np.ndarray:
    return cell_box(s, scheme).center


def cell_centers(scheme: PartitionScheme) -> np.ndarray:
    """Centers of all 2**q cells, ordered by cell id; shape (2**q, n)."""
    out = np.empty((scheme.n_cells, scheme.dim))
    for d in range(scheme.dim):
        edges = scheme.axis_edges(d)
        mids = 0.5 * (edges[:-1] + edges[1:])
        out[:, d] = mids[scheme.axis_slice_indices[d]]
    return out


def project_set(region: StateBox, scheme: PartitionScheme) -> set:
    """Cells whose closed box is fully contained in ``region`` (under-approximation).

    Descends the split tree, pruning subtrees whose box does not overlap the
    region's interior. Warns when the projection is empty.
    """
    if region.dim != scheme.dim:
        raise ValueError("region dimension does not match scheme")
    if not region.intersects_interior(scheme.domain):
        raise ValueError("region does not intersect the domain")
    found: set = set()

    def descend(prefix: int, length: int, lo: np.ndarray, hi: np.ndarray):
        box = StateBox(lo, hi)
        if region.contains_box(box):
            shift = scheme.q - length
            base = prefix << shift
            found.update(range(base, base + (1 << shift)))
            return
        if length == scheme.q or not region.intersects_interior(box):
            return
        d = scheme.split_order[length]
        mid = 0.5 * (lo[d] + hi[d])
        left_hi = hi.copy()
        left_hi[d] = mid
        right_lo = lo.copy()
        right_lo[d] = mid
        descend(prefix << 1, length + 1, lo, left_hi)
        descend((prefix << 1) | 1, length + 1, right_lo, hi)

    descend(0, 0, scheme.domain.lower.copy(), scheme.domain.upper.copy())
    if not found:
        warnings.warn(
            "region contains no full cell at this precision",
            EmptyProjectionWarning,
            stacklevel=2,
        )
    return found
