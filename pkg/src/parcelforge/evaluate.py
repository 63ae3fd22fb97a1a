"""Voxelwise t-maps, intra-parcel functional variance and agreement scores."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core_data import DesignMatrix
from .errors import DesignError, DomainError, ShapeError
from .io import dump_json, write_f64
from .pls_core import pls_fit, whiten_scores

T_CAP = 1e12
R_CLIP = 1.0 - 1e-12
GLM_THRESHOLD = 2.0
PLS_THRESHOLD = 3.0


@dataclass(frozen=True, eq=False)
class StatMap:
    """``V x N_r`` t-values with their degrees of freedom.

    ``saturated`` marks entries that were capped (zero residual, or a
    correlation on the +-1 boundary).
    """

    t: np.ndarray
    kind: str
    dof: int
    saturated: np.ndarray = field(repr=False, default=None)

    @property
    def n_saturated(self) -> int:
        return 0 if self.saturated is None else int(self.saturated.sum())


def glm_tvalues(X: np.ndarray, design: DesignMatrix) -> StatMap:
    """Ordinary least squares per voxel with an intercept appended to the design.

    Parameters
    ----------
    X : ndarray, shape (V, T)
    design : DesignMatrix
        ``N_r`` regressors; needs ``T > N_r + 1``.

    Returns
    -------
    StatMap
        ``t`` is ``V x N_r``.  Exact fits are reported as ``+-1e12`` and
        flagged in ``saturated``.
    """
    X = np.asarray(X, dtype=float)
    T = X.shape[1]
    Y = design.Y
    if Y.shape[0] != T:
        raise ShapeError(f"design has {Y.shape[0]} rows, data have {T} time points")
    n_r = Y.shape[1]
    if T <= n_r + 1:
        raise DesignError(f"need T > N_r + 1 (T={T}, N_r={n_r})")
    A = np.column_stack([Y, np.ones(T)])
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise DesignError("design (with intercept) is rank deficient")
    AtA_inv = np.linalg.inv(A.T @ A)
    beta = AtA_inv @ A.T @ X.T
    resid = X.T - A @ beta
    dof = T - n_r - 1
    rss = (resid**2).sum(axis=0)
    ss = ((X - X.mean(axis=1, keepdims=True)) ** 2).sum(axis=1)
    exact = rss <= 1e-24 * np.maximum(ss, np.finfo(float).tiny)
    se = np.sqrt(np.outer(np.diag(AtA_inv)[:n_r], rss / dof))
    b = beta[:n_r]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = b / se
        t[:, exact] = np.where(b[:, exact] == 0, 0.0, np.sign(b[:, exact]) * np.inf)
    saturated = ~np.isfinite(t) | (np.abs(t) > T_CAP)
    t = np.clip(np.nan_to_num(t, nan=0.0, posinf=T_CAP, neginf=-T_CAP), -T_CAP, T_CAP)
    return StatMap(t.T.copy(), "GLM", dof, saturated.T.copy())


def pls_tvalue(r: float, T: int, literal: bool = False) -> float:
    """Correlation-to-t transform with ``T - 2`` degrees of freedom.

    ``literal=True`` uses ``1 - r**2`` in the denominator instead of its
    square root.
    """
    if not abs(r) < 1:
        raise DomainError(f"|r| must be < 1, got {r}")
    if T < 3:
        raise DomainError(f"T must be >= 3, got {T}")
    den = 1 - r * r
    return float(r * np.sqrt(T - 2) / (den if literal else np.sqrt(den)))


def pls_tvalues(r: np.ndarray, T: int, literal: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`pls_tvalue`; ``|r|`` is clipped to ``1 - 1e-12`` and flagged."""
    r = np.asarray(r, dtype=float)
    sat = np.abs(r) > R_CLIP
    r = np.clip(r, -R_CLIP, R_CLIP)
    den = 1 - r * r
    t = r * np.sqrt(T - 2) / (den if literal else np.sqrt(den))
    return np.clip(t, -T_CAP, T_CAP), sat


def pls_tmap(X0: np.ndarray, design: DesignMatrix, scores: np.ndarray, literal: bool = False) -> StatMap:
    """For each regressor, correlate voxels with the first PLS latent it induces.

    The scores are whitened first, so the latent is the regressor's
    normalised projection onto the score span.
    """
    X0 = np.asarray(X0, dtype=float)
    T = X0.shape[1]
    basis = whiten_scores(scores)
    cols, sats = [], []
    for k in range(design.n_regressors):
        t1 = pls_fit(basis, design.Y[:, k], K=1).T_pls[:, 0]
        t, sat = pls_tvalues(X0 @ t1, T, literal)
        cols.append(t)
        sats.append(sat)
    return StatMap(np.stack(cols, axis=1), "PLS", T - 2, np.stack(sats, axis=1))


def quartiles(values) -> tuple[float, float, float]:
    q = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q[0]), float(q[1]), float(q[2])


@dataclass(frozen=True, eq=False)
class ParcelVarianceReport:
    v: np.ndarray
    quartiles: tuple[float, float, float]
    method_tag: str
    n_singletons: int = 0

    @property
    def mean(self) -> float:
        return float(self.v.mean())


def intra_parcel_variance(stat: StatMap, parc, method_tag: str = "") -> ParcelVarianceReport:
    """Functional variance per parcel: root of the summed per-regressor sample variances."""
    labels = np.asarray(getattr(parc, "labels", parc))
    f = stat.t
    if labels.shape[0] != f.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {f.shape[0]} voxels")
    ids = np.unique(labels)
    v = np.zeros(ids.size)
    singletons = 0
    for n, p in enumerate(ids):
        block = f[labels == p]
        if len(block) < 2:
            singletons += 1
            continue
        v[n] = np.sqrt((block.std(axis=0, ddof=1) ** 2).sum())
    return ParcelVarianceReport(v, quartiles(v), method_tag, singletons)


def adjusted_rand(labels_a, labels_b) -> float:
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ShapeError(f"label vectors differ in length: {a.shape} vs {b.shape}")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)

    def pairs(x):
        return (x * (x - 1) / 2).sum()

    index = pairs(table)
    pa, pb = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = pa * pb / total if total else 0.0
    max_index = (pa + pb) / 2
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def compare_methods(reports: Sequence[ParcelVarianceReport]) -> list[dict]:
    return [{"method": r.method_tag, "mean": r.mean, "q1": r.quartiles[0], "q3": r.quartiles[2]}
            for r in reports]


def active_parcels(stat: StatMap, parc, column: int, threshold: float) -> list[int]:
    """Parcels whose mean t-value for one regressor exceeds ``threshold``."""
    labels = np.asarray(getattr(parc, "labels", parc))
    return [int(p) for p in np.unique(labels) if stat.t[labels == p, column].mean() > threshold]


def write_comparison_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "mean", "q1", "q3"])
        for r in rows:
            w.writerow([r["method"], repr(r["mean"]), repr(r["q1"]), repr(r["q3"])])


def write_reports_csv(path, reports: Sequence[ParcelVarianceReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "parcel", "v"])
        for r in reports:
            for p, val in enumerate(r.v):
                w.writerow([r.method_tag, p, repr(float(val))])


def write_statmap(directory, stat: StatMap, regressor_names) -> Path:
    d = Path(directory)
    path = d / f"tmap_{stat.kind.lower()}.f64"
    write_f64(path, stat.t)
    dump_json(d / f"tmap_{stat.kind.lower()}.json", {
        "kind": stat.kind, "dof": stat.dof, "shape": list(stat.t.shape),
        "regressors": list(regressor_names), "n_saturated": stat.n_saturated,
    })
    return path
