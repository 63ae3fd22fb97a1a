"""On-disk formats: the dataset directory, raw f64 matrices and small CSVs.

A dataset directory holds ``grid.json`` (dims, run-length encoded mask,
``tr_seconds``), ``X.f64`` (row-major little-endian float64, ``V x T``) and
optionally ``design.csv`` whose header row names the regressors.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .core_data import BoldDataset, DesignMatrix, VolumeGrid
from .errors import FormatError


def rle_encode(mask: np.ndarray) -> dict:
    flat = np.asarray(mask, dtype=bool).ravel(order="F")
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    return {"start": bool(flat[0]), "runs": [int(n) for n in np.diff(bounds)]}


def rle_decode(rle: dict, dims) -> np.ndarray:
    runs = [int(n) for n in rle["runs"]]
    total = int(np.prod(dims))
    if sum(runs) != total or any(n <= 0 for n in runs):
        raise FormatError(f"mask runs sum to {sum(runs)}, grid has {total} cells", field="mask")
    vals = np.zeros(len(runs), dtype=bool)
    vals[0::2] = bool(rle["start"])
    vals[1::2] = not bool(rle["start"])
    return np.repeat(vals, runs).reshape(tuple(dims), order="F")


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_f64(path, M: np.ndarray) -> None:
    np.ascontiguousarray(M, dtype="<f8").tofile(path)


def read_f64(path, n_cols: int | None = None, n_rows: int | None = None) -> np.ndarray:
    data = np.fromfile(path, dtype="<f8")
    if n_cols is None and n_rows is None:
        return data
    if n_cols is None:
        if data.size % n_rows:
            raise FormatError(f"{path}: {data.size} values not divisible into {n_rows} rows", field=str(path))
        n_cols = data.size // n_rows
    if data.size % n_cols or (n_rows is not None and data.size != n_rows * n_cols):
        raise FormatError(f"{path}: {data.size} values do not form a matrix with {n_cols} columns",
                          field=str(path))
    return data.reshape(-1, n_cols)


def write_design(path, design: DesignMatrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(design.regressor_names)
        for row in design.Y:
            w.writerow([repr(float(v)) for v in row])


def read_design(path) -> DesignMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path} is empty", field="design.csv")
    try:
        Y = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}", field="design.csv") from None
    return DesignMatrix(Y.reshape(len(rows) - 1, len(rows[0])), tuple(rows[0]))


def write_dataset(directory, dataset: BoldDataset, design: DesignMatrix | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    dump_json(d / "grid.json", {
        "dims": list(dataset.grid.dims),
        "mask": rle_encode(dataset.grid.mask),
        "tr_seconds": dataset.tr_seconds,
        "n_timepoints": dataset.n_timepoints,
    })
    write_f64(d / "X.f64", dataset.X)
    if design is not None:
        write_design(d / "design.csv", design)
    return d


def read_grid(directory) -> tuple[VolumeGrid, dict]:
    path = Path(directory) / "grid.json"
    try:
        meta = json.loads(path.read_text())
        dims = tuple(int(v) for v in meta["dims"])
        mask = rle_decode(meta["mask"], dims)
    except FileNotFoundError:
        raise FormatError(f"missing {path}", field="grid.json") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed ({exc})", field="grid.json") from None
    return VolumeGrid(dims, mask), meta


def read_dataset(directory) -> tuple[BoldDataset, DesignMatrix | None]:
    d = Path(directory)
    grid, meta = read_grid(d)
    if not (d / "X.f64").exists():
        raise FormatError(f"missing {d / 'X.f64'}", field="X.f64")
    X = read_f64(d / "X.f64", n_rows=grid.n_voxels)
    dataset = BoldDataset(grid, X, float(meta.get("tr_seconds", 3.0)))
    design = read_design(d / "design.csv") if (d / "design.csv").exists() else None
    return dataset, design


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_array(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


def write_label_volume(directory, grid: VolumeGrid, labels: np.ndarray) -> list[Path]:
    """Per-voxel labels in the dataset layout, as a single ``V x 1`` frame."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    dump_json(d / "grid.json", {"dims": list(grid.dims), "mask": rle_encode(grid.mask), "n_timepoints": 1})
    write_f64(d / "X.f64", np.asarray(labels, dtype=float)[:, None])
    return [d / "grid.json", d / "X.f64"]
