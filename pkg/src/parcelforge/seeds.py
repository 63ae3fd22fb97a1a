"""Greedy radius-constrained seed picking on IC spatial maps."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .core_data import VolumeGrid
from .errors import ParameterError, ShapeError

DEFAULT_RADIUS = 6.0
SEEDS_MULTI_SUBJECT = 15
SEEDS_SINGLE_SUBJECT = 30


@dataclass(frozen=True, eq=False)
class SeedSet:
    voxel_rows: np.ndarray
    map_values: np.ndarray
    source_map: str
    R: float
    exhausted: bool = False

    def __len__(self):
        return len(self.voxel_rows)


def select_seeds(ic_map, grid: VolumeGrid, R: float = DEFAULT_RADIUS, n_seeds: int = SEEDS_MULTI_SUBJECT,
                 source_map: str = "map") -> SeedSet:
    """Pick up to ``n_seeds`` peaks of ``|ic_map|`` at least ``R`` voxels apart.

    Each step takes the largest remaining ``|value|`` among voxels whose
    Euclidean grid distance to every earlier seed is ``>= R``; ties go to the
    lower row.  If the grid runs out of admissible voxels the set is returned
    short with ``exhausted=True``.

    Parameters
    ----------
    ic_map : array_like, shape (V,)
    grid : VolumeGrid
        Supplies voxel coordinates; distances are in voxel units.
    R : float
    n_seeds : int
    source_map : str
        Label carried into the result and the CSV export.

    Returns
    -------
    SeedSet
    """
    values = np.asarray(ic_map, dtype=float)
    if values.shape != (grid.n_voxels,):
        raise ShapeError(f"map has shape {values.shape}, grid has {grid.n_voxels} voxels")
    if n_seeds < 1:
        raise ParameterError("n_seeds must be >= 1")
    if not R > 0:
        raise ParameterError("R must be positive")
    order = np.argsort(-np.abs(values), kind="stable")
    rows = _kernels.greedy_seeds(order, grid.coords(), float(R) ** 2, n_seeds)
    return SeedSet(rows, values[rows], source_map, float(R), exhausted=len(rows) < n_seeds)


def write_seeds_csv(path, seed_sets: Sequence[SeedSet], grid: VolumeGrid) -> None:
    coords = grid.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["map_id", "rank", "x", "y", "z", "row", "map_value"])
        for s in seed_sets:
            for rank, (row, val) in enumerate(zip(s.voxel_rows, s.map_values)):
                x, y, z = coords[row]
                w.writerow([s.source_map, rank, int(x), int(y), int(z), int(row), repr(float(val))])


def read_seeds_csv(path, R: float = DEFAULT_RADIUS) -> list[SeedSet]:
    groups: dict[str, list[tuple[int, int, float]]] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            groups.setdefault(rec["map_id"], []).append(
                (int(rec["rank"]), int(rec["row"]), float(rec["map_value"])))
    out = []
    for name, items in groups.items():
        items.sort()
        out.append(SeedSet(np.array([r for _, r, _ in items], dtype=np.int64),
                           np.array([v for _, _, v in items]), name, R))
    return out
