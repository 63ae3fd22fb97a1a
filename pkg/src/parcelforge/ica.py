"""Temporal FastICA on PCA-whitened data, plus IC import/export."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core_data import BoldDataset, center_rows
from .errors import ConvergenceError, FormatError, InvariantError, ParameterError
from .io import read_f64, write_f64

log = logging.getLogger(__name__)

MAX_DEFAULT_COMPONENTS = 60


@dataclass(frozen=True, eq=False)
class ICDecomposition:
    """Independent components of one subject.

    ``timecourses`` is ``T x N`` (one column per IC) and ``maps`` is ``N x V``.
    """

    subject_id: int
    timecourses: np.ndarray
    maps: np.ndarray

    def __post_init__(self):
        tc = np.asarray(self.timecourses, dtype=np.float64)
        mp = np.asarray(self.maps, dtype=np.float64)
        if tc.ndim != 2 or mp.ndim != 2:
            raise FormatError("timecourses and maps must be 2-D", field="shape")
        T, N = tc.shape
        if mp.shape[0] != N:
            raise FormatError(f"{N} time courses but {mp.shape[0]} maps", field="maps")
        if N > min(T, mp.shape[1]):
            raise InvariantError(f"N={N} exceeds min(T={T}, V={mp.shape[1]})")
        flat = np.flatnonzero(tc.std(axis=0) <= 0)
        if flat.size:
            raise InvariantError(f"subject {self.subject_id}: constant time course(s) {flat.tolist()}")
        object.__setattr__(self, "timecourses", tc)
        object.__setattr__(self, "maps", mp)

    @property
    def n_components(self) -> int:
        return self.timecourses.shape[1]


def _sym_decorrelate(W):
    s, u = np.linalg.eigh(W @ W.T)
    s = np.clip(s, np.finfo(float).tiny, None)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ W


def default_n_components(X: np.ndarray, coverage: float = 0.95) -> int:
    Xc = center_rows(X)
    s = np.linalg.svd(Xc, compute_uv=False)
    frac = np.cumsum(s**2) / np.sum(s**2)
    n = int(np.searchsorted(frac, coverage) + 1)
    upper = min(Xc.shape[1] - 1, Xc.shape[0], MAX_DEFAULT_COMPONENTS)
    return int(np.clip(n, 2, upper))


def fastica(dataset: BoldDataset, n_components: int | None = None, rng_seed: int = 0,
            max_iter: int = 500, tol: float = 1e-6, subject_id: int = 0) -> ICDecomposition:
    """Temporal ICA with the log-cosh contrast and symmetric decorrelation.

    The data are reduced to ``n_components`` principal time courses, whitened,
    and rotated to maximise non-Gaussianity.  Time courses have unit variance
    and each is flipped so that its largest-magnitude sample is positive.  Maps
    are the least-squares weights of every voxel on the time courses.
    Components are ordered by decreasing map energy.

    Parameters
    ----------
    dataset : BoldDataset
    n_components : int, optional
        Between 2 and ``min(T - 1, V)``.  ``None`` keeps enough principal
        components for 95% of the variance.
    rng_seed : int
        Seeds the initial unmixing matrix.
    max_iter, tol : int, float
        Stop when every row of the unmixing matrix turns by less than
        ``tol`` (``| |<w_new, w_old>| - 1 |``).
    subject_id : int

    Returns
    -------
    ICDecomposition

    Raises
    ------
    ParameterError
        ``n_components`` out of range or above the data rank.
    ConvergenceError
        ``max_iter`` reached; ``.iterations`` holds the count.
    """
    X = dataset.X
    V, T = X.shape
    if n_components is None:
        n_components = default_n_components(X)
    n = int(n_components)
    if not 2 <= n <= min(T - 1, V):
        raise ParameterError(f"n_components={n} outside [2, min(T-1={T - 1}, V={V})]")

    Xc = center_rows(X)
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    if s[n - 1] <= s[0] * 1e-12:
        raise ParameterError(f"data rank is below n_components={n}")
    Z = vt[:n] * np.sqrt(T - 1)

    rng = np.random.default_rng(rng_seed)
    W = _sym_decorrelate(rng.standard_normal((n, n)))
    for it in range(1, max_iter + 1):
        G = np.tanh(W @ Z)
        W_new = _sym_decorrelate(G @ Z.T / T - np.diag((1.0 - G**2).mean(axis=1)) @ W)
        lim = np.max(np.abs(np.abs(np.einsum("ij,ij->i", W_new, W)) - 1.0))
        W = W_new
        if lim < tol:
            break
    else:
        raise ConvergenceError(f"FastICA did not converge in {max_iter} iterations (last change {lim:.2e})",
                               iterations=max_iter)
    log.debug("fastica converged after %d iterations", it)

    S = W @ Z
    peak = S[np.arange(n), np.argmax(np.abs(S), axis=1)]
    S *= np.sign(peak)[:, None]
    maps = S @ Xc.T / (T - 1)
    order = np.argsort(-(maps**2).sum(axis=1), kind="stable")
    return ICDecomposition(int(subject_id), S[order].T.copy(), maps[order].copy())


def export_ics(ics: ICDecomposition, directory) -> tuple[Path, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    tc_path = d / f"sub-{ics.subject_id:02d}_timecourses.csv"
    with open(tc_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"ic{j}" for j in range(ics.n_components)])
        for row in ics.timecourses:
            w.writerow([repr(float(v)) for v in row])
    maps_path = d / f"sub-{ics.subject_id:02d}_maps.f64"
    write_f64(maps_path, ics.maps)
    return tc_path, maps_path


def import_ics(timecourses_csv, maps_f64, subject_id: int, n_voxels: int | None = None) -> ICDecomposition:
    """Load externally computed ICs (CSV time courses, row-major f64 maps).

    The CSV may carry a header row.  When ``n_voxels`` is given the map file
    must hold exactly ``N x n_voxels`` values.
    """
    with open(timecourses_csv, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows:
        try:
            [float(v) for v in rows[0]]
        except ValueError:
            rows = rows[1:]
    try:
        tc = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{timecourses_csv}: {exc}", field="timecourses") from None
    if tc.ndim != 2 or tc.size == 0:
        raise FormatError(f"{timecourses_csv}: ragged or empty table", field="timecourses")
    N = tc.shape[1]
    flat = read_f64(maps_f64)
    if n_voxels is not None and flat.size != N * n_voxels:
        raise FormatError(f"maps hold {flat.size} values, expected {N} x {n_voxels}", field="maps")
    if flat.size % N:
        raise FormatError(f"maps hold {flat.size} values, not divisible into {N} rows", field="maps")
    return ICDecomposition(int(subject_id), tc, flat.reshape(N, -1))
