"""Volume geometry, masked time-series matrices and row preprocessing.

Voxel rows are always ordered by ascending column-major linear grid index
(x varies fastest), so artifacts written by different runs line up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DesignError, EmptyMaskError, InvariantError, ShapeError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VolumeGrid:
    """A 3-D grid plus the boolean mask selecting analysed voxels.

    Parameters
    ----------
    dims : tuple of int
        Voxels per axis ``(nx, ny, nz)``.
    mask : np.ndarray
        Boolean array of shape ``dims``.
    """

    dims: tuple[int, int, int]
    mask: np.ndarray
    cells: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ShapeError(f"grid dims must be 3 positive integers, got {self.dims}")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != dims:
            raise ShapeError(f"mask shape {mask.shape} does not match dims {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "mask", _frozen(mask))
        cells = np.flatnonzero(mask.ravel(order="F"))
        object.__setattr__(self, "cells", _frozen(cells))

    @classmethod
    def full(cls, dims: Sequence[int]) -> "VolumeGrid":
        return cls(tuple(dims), np.ones(tuple(dims), dtype=bool))

    @property
    def n_voxels(self) -> int:
        return int(self.cells.size)

    def coords(self) -> np.ndarray:
        """Integer grid coordinates of the masked voxels, shape ``(V, 3)``."""
        return np.stack(np.unravel_index(self.cells, self.dims, order="F"), axis=1)

    def row_lookup(self) -> np.ndarray:
        """Map from linear grid index to row (``-1`` outside the mask)."""
        lut = np.full(int(np.prod(self.dims)), -1, dtype=np.int64)
        lut[self.cells] = np.arange(self.n_voxels)
        return lut

    def row_of(self, x: int, y: int, z: int) -> int:
        lin = int(np.ravel_multi_index((x, y, z), self.dims, order="F"))
        row = int(self.row_lookup()[lin])
        if row < 0:
            raise IndexError(f"cell {(x, y, z)} is outside the mask")
        return row

    def scatter(self, values: np.ndarray, fill=0.0) -> np.ndarray:
        """Place per-row values (``V`` or ``V x T``) back onto the grid."""
        values = np.asarray(values)
        if values.shape[0] != self.n_voxels:
            raise ShapeError(f"expected {self.n_voxels} rows, got {values.shape[0]}")
        extra = values.shape[1:]
        flat = np.full((int(np.prod(self.dims)),) + extra, fill, dtype=values.dtype)
        flat[self.cells] = values
        return flat.reshape(self.dims + extra, order="F")

    def __eq__(self, other):
        if not isinstance(other, VolumeGrid):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.mask, other.mask)


@dataclass(frozen=True, eq=False)
class BoldDataset:
    """Masked voxel-by-time matrix with its grid and repetition time."""

    grid: VolumeGrid
    X: np.ndarray
    tr_seconds: float = 3.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise ShapeError("X must be a V x T matrix")
        if X.shape[0] != self.grid.n_voxels:
            raise ShapeError(f"X has {X.shape[0]} rows but the mask has {self.grid.n_voxels} voxels")
        if X.shape[1] < 3:
            raise InvariantError(f"need at least 3 time points, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise InvariantError("X contains non-finite entries")
        if not self.tr_seconds > 0:
            raise InvariantError("tr_seconds must be positive")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "tr_seconds", float(self.tr_seconds))

    @property
    def n_voxels(self) -> int:
        return self.X.shape[0]

    @property
    def n_timepoints(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Task regressors, one column per regressor (``T x N_r``)."""

    Y: np.ndarray
    regressor_names: tuple[str, ...]

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        names = tuple(str(n) for n in self.regressor_names)
        if len(names) != Y.shape[1]:
            raise ShapeError(f"{Y.shape[1]} columns but {len(names)} regressor names")
        if np.any(Y.std(axis=0) <= 0):
            bad = [names[k] for k in np.flatnonzero(Y.std(axis=0) <= 0)]
            raise DesignError(f"constant regressor(s): {bad}")
        object.__setattr__(self, "Y", _frozen(Y))
        object.__setattr__(self, "regressor_names", names)

    @property
    def n_regressors(self) -> int:
        return self.Y.shape[1]

    def column(self, k: int) -> "DesignMatrix":
        return DesignMatrix(self.Y[:, [k]], (self.regressor_names[k],))


def mask_and_flatten(volume4d: np.ndarray, mask="nonzero_variance", tr_seconds: float = 3.0) -> BoldDataset:
    """Select voxels and flatten a 4-D volume into a ``V x T`` dataset.

    Parameters
    ----------
    volume4d : array_like, shape (X, Y, Z, T)
    mask : {"nonzero_variance"} or ndarray of bool, shape (X, Y, Z)
        The string rule drops voxels whose series is constant.
    tr_seconds : float

    Returns
    -------
    BoldDataset
        Rows follow column-major order of the masked cells.

    Raises
    ------
    EmptyMaskError
        No voxel survives the mask.
    """
    vol = np.asarray(volume4d, dtype=np.float64)
    if vol.ndim != 4:
        raise ShapeError(f"expected a 4-D volume, got {vol.ndim} dimensions")
    if vol.shape[3] < 3:
        raise InvariantError(f"need at least 3 time frames, got {vol.shape[3]}")
    dims = vol.shape[:3]
    if isinstance(mask, str):
        if mask != "nonzero_variance":
            raise ValueError(f"unknown mask rule {mask!r}")
        m = np.ptp(vol, axis=3) > 0
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != dims:
            raise ShapeError(f"mask shape {m.shape} does not match volume {dims}")
    if not m.any():
        raise EmptyMaskError("mask selects no voxels")
    grid = VolumeGrid(dims, m)
    flat = vol.reshape(-1, vol.shape[3], order="F")
    return BoldDataset(grid, flat[grid.cells], tr_seconds)


def center_rows(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X - X.mean(axis=1, keepdims=True)


def unit_normalize_rows(Xc: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Scale every row to unit Euclidean norm.

    Returns the normalised matrix and the indices of all-zero rows, which are
    left as zeros.
    """
    Xc = np.asarray(Xc, dtype=np.float64)
    norms = np.linalg.norm(Xc, axis=1)
    zero = norms == 0
    out = np.zeros_like(Xc)
    out[~zero] = Xc[~zero] / norms[~zero, None]
    return out, [int(i) for i in np.flatnonzero(zero)]
