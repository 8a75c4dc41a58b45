"""Result export: dense value grids as CSV, PGM, and rendered PNG.

The per-cell bounds live on the partition's regular grid, so a 1-D or 2-D
run exports directly as an image: columns follow the first axis ascending
and rows the second axis descending (row 0 is the top of the domain). Each
export writes three files from the same grid:

  * ``<base>.csv``: comma-separated values at full precision;
  * ``<base>.pgm``: plain (P2) 8-bit graymap, 0 -> 0 and 1 -> 255;
  * ``<base>.png``: matplotlib rendering with axes in state-space units.
"""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .ioutil import atomic_output  # noqa: E402
from .partition import PartitionScheme  # noqa: E402
from .verify import ValueBounds  # noqa: E402


def values_to_grid(values: np.ndarray, scheme: PartitionScheme) -> np.ndarray:
    """Arrange per-cell values on the partition grid.

    Returns shape (1, 2**q) for 1-D schemes and
    (2**c_2, 2**c_1) for 2-D schemes, rows along axis 2 descending.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (scheme.n_cells,):
        raise ValueError("need one value per cell")
    idx = scheme.axis_slice_indices
    if scheme.dim == 1:
        grid = np.empty((1, scheme.axis_slice_count(0)))
        grid[0, idx[0]] = values
        return grid
    if scheme.dim == 2:
        grid = np.empty((scheme.axis_slice_count(1), scheme.axis_slice_count(0)))
        grid[idx[1], idx[0]] = values
        return grid[::-1, :]
    raise ValueError("grid export supports 1-D and 2-D schemes only")


def _write_pgm(grid: np.ndarray, path):
    pixels = np.rint(np.clip(grid, 0.0, 1.0) * 255.0).astype(np.int64)
    h, w = pixels.shape
    with atomic_output(path) as tmp:
        with open(tmp, "w") as fh:
            fh.write(f"P2\n{w} {h}\n255\n")
            for row in pixels:
                fh.write(" ".join(str(p) for p in row) + "\n")


def _write_png(grid: np.ndarray, scheme: PartitionScheme, label: str, path):
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    if scheme.dim == 2:
        extent = (
            scheme.domain.lower[0],
            scheme.domain.upper[0],
            scheme.domain.lower[1],
            scheme.domain.upper[1],
        )
        im = ax.imshow(
            grid, origin="upper", extent=extent, vmin=0.0, vmax=1.0,
            cmap="viridis", aspect="auto", interpolation="nearest",
        )
        ax.set_ylabel("x2")
    else:
        extent = (
            scheme.domain.lower[0],
            scheme.domain.upper[0],
            0.0,
            1.0,
        )
        im = ax.imshow(
            grid, origin="upper", extent=extent, vmin=0.0, vmax=1.0,
            cmap="viridis", aspect="auto", interpolation="nearest",
        )
        ax.set_yticks([])
    ax.set_xlabel("x1")
    ax.set_title(label)
    fig.colorbar(im, ax=ax, label=label)
    fig.tight_layout()
    with atomic_output(path) as tmp:
        fig.savefig(tmp, format="png", dpi=150)
    plt.close(fig)


def export_heatmap(
    bounds: ValueBounds, scheme: PartitionScheme, which: str, base_path
) -> dict:
    """Write ``<base>.csv/.pgm/.png`` for one side of the bounds.

    ``which`` selects ``v_min`` or ``v_max``; returns the written paths.
    """
    if which not in ("v_min", "v_max"):
        raise ValueError("which must be 'v_min' or 'v_max'")
    values = bounds.v_min if which == "v_min" else bounds.v_max
    grid = values_to_grid(values, scheme)
    base = str(base_path)
    paths = {
        "csv": base + ".csv",
        "pgm": base + ".pgm",
        "png": base + ".png",
    }
    with atomic_output(paths["csv"]) as tmp:
        np.savetxt(tmp, grid, delimiter=",", fmt="%.17g")
    _write_pgm(grid, paths["pgm"])
    _write_png(grid, scheme, which, paths["png"])
    return paths
