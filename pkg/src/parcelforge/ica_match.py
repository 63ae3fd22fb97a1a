"""Cross-subject IC similarity, Ward grouping and task-cluster selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .core_data import DesignMatrix
from .errors import DataError, DegenerateInputError, ParameterError
from .ica import ICDecomposition

MODES = ("absolute", "signed")


def ic_correlation(a, b) -> float:
    """Pearson correlation of two time courses."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DataError(f"time courses differ in length: {a.shape} vs {b.shape}")
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(da @ da), np.sqrt(db @ db)
    if na == 0 or nb == 0:
        raise DegenerateInputError("zero-variance time course")
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def normalize_correlations(rho) -> np.ndarray:
    """z-score a vector of correlations (sample std, divisor ``n - 1``)."""
    rho = np.asarray(rho, dtype=float)
    if rho.size < 2:
        raise DegenerateInputError("need at least two correlations to normalise")
    sd = rho.std(ddof=1)
    if not sd > 1e-15 * max(1.0, np.abs(rho).max()):
        raise DegenerateInputError("all correlations are equal; standard deviation is zero")
    return (rho - rho.mean()) / sd


def _standardize(tc: np.ndarray) -> np.ndarray:
    z = tc - tc.mean(axis=0)
    norms = np.linalg.norm(z, axis=0)
    if np.any(norms == 0):
        raise DegenerateInputError("zero-variance time course")
    return z / norms


def normalized_correlation(ic, against: np.ndarray, mode: str = "signed") -> np.ndarray:
    """Correlations of one IC with every column of ``against``, z-scored across those columns."""
    z_ic = _standardize(np.asarray(ic, float)[:, None])[:, 0]
    rho = np.clip(z_ic @ _standardize(np.asarray(against, float)), -1, 1)
    if mode == "absolute":
        rho = np.abs(rho)
    return normalize_correlations(rho)


@dataclass(frozen=True, eq=False)
class ICSimilarity:
    S: np.ndarray
    owner: np.ndarray

    @property
    def n_ics(self) -> int:
        return self.S.shape[0]


def pooled_timecourses(cohort_ics: Sequence[ICDecomposition]) -> tuple[np.ndarray, np.ndarray]:
    Ts = {ic.timecourses.shape[0] for ic in cohort_ics}
    if len(Ts) != 1:
        raise DataError(f"subjects have different time-course lengths: {sorted(Ts)}")
    tc = np.concatenate([ic.timecourses for ic in cohort_ics], axis=1)
    owner = np.concatenate([np.full(ic.n_components, ic.subject_id) for ic in cohort_ics])
    return tc, owner


def similarity_matrix(cohort_ics: Sequence[ICDecomposition], correlation_mode: str = "absolute") -> ICSimilarity:
    """Pairwise IC similarity: the smaller of the two directional z-scored correlations.

    Pairs from the same subject get 0.
    """
    if correlation_mode not in MODES:
        raise ParameterError(f"correlation_mode must be one of {MODES}")
    if len(cohort_ics) < 2:
        raise ParameterError("need at least two subjects")
    for ic in cohort_ics:
        if ic.n_components < 2:
            raise ParameterError(f"subject {ic.subject_id} has fewer than 2 ICs")
    tc, owner = pooled_timecourses(cohort_ics)
    Z = _standardize(tc)
    R = np.clip(Z.T @ Z, -1.0, 1.0)
    if correlation_mode == "absolute":
        R = np.abs(R)

    bounds = np.cumsum([0] + [ic.n_components for ic in cohort_ics])
    M = tc.shape[1]
    S = np.zeros((M, M))
    for a in range(len(cohort_ics)):
        for b in range(a + 1, len(cohort_ics)):
            ia = slice(bounds[a], bounds[a + 1])
            ib = slice(bounds[b], bounds[b + 1])
            block = R[ia, ib]
            fwd = _zscore_rows(block, bounds[a], cohort_ics[b].subject_id)
            bwd = _zscore_rows(block.T, bounds[b], cohort_ics[a].subject_id).T
            S[ia, ib] = np.minimum(fwd, bwd)
            S[ib, ia] = S[ia, ib].T
    return ICSimilarity(S, owner)


def _zscore_rows(block: np.ndarray, first_index: int, other_subject) -> np.ndarray:
    mean = block.mean(axis=1, keepdims=True)
    sd = block.std(axis=1, ddof=1, keepdims=True)
    scale = 1e-15 * np.maximum(1.0, np.abs(block).max(axis=1, keepdims=True))
    bad = np.flatnonzero(~(sd > scale))
    if bad.size:
        raise DegenerateInputError(
            f"pooled IC {first_index + int(bad[0])} has identical correlations with every IC "
            f"of subject {other_subject}"
        )
    return (block - mean) / sd


def write_similarity_csv(path, sim: ICSimilarity) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ic"] + [str(j) for j in range(sim.n_ics)])
        for i, row in enumerate(sim.S):
            w.writerow([str(i)] + [repr(float(v)) for v in row])


@dataclass(frozen=True, eq=False)
class ICClustering:
    labels: np.ndarray
    n_clusters: int
    cluster_task_scores: np.ndarray | None = None

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def similarity_to_distance(S: np.ndarray) -> np.ndarray:
    d = S.max() - S
    np.fill_diagonal(d, 0.0)
    return d


def ward_cluster(sim: ICSimilarity, n_clusters: int = 3) -> ICClustering:
    """Ward agglomeration of the pooled ICs on ``max(S) - S``.

    Equal merge costs resolve to the pair with the smallest indices.  Cluster
    ids are numbered by their smallest member.
    """
    M = sim.n_ics
    if not 1 <= n_clusters <= M:
        raise ParameterError(f"n_clusters={n_clusters} outside [1, {M}]")
    merges, _ = _kernels.ward_merges(similarity_to_distance(sim.S), M - n_clusters)
    parent = np.arange(M)
    for i, j in merges:
        parent[parent == j] = i
    _, labels = np.unique(parent, return_inverse=True)
    return ICClustering(labels.astype(np.int64), int(n_clusters))


def cluster_task_scores(clustering: ICClustering, ics: Sequence[ICDecomposition],
                        design: DesignMatrix) -> np.ndarray:
    """``n_clusters x N_r`` mean |correlation| of member ICs with each regressor."""
    tc, _ = pooled_timecourses(ics)
    if tc.shape[0] != design.Y.shape[0]:
        raise DataError(f"IC length {tc.shape[0]} does not match design length {design.Y.shape[0]}")
    corr = np.abs(_standardize(tc).T @ _standardize(design.Y))
    scores = np.zeros((clustering.n_clusters, design.n_regressors))
    for c in range(clustering.n_clusters):
        scores[c] = corr[clustering.labels == c].mean(axis=0)
    return scores


def select_task_clusters(clustering: ICClustering, ics: Sequence[ICDecomposition], design: DesignMatrix,
                         n_select: int = 2) -> tuple[list[int], ICClustering]:
    """Rank clusters by their best regressor match and keep the top ``n_select``.

    Returns the selected ids (best first, ties to the lower id) and the
    clustering with its task scores filled in.
    """
    if not 1 <= n_select <= clustering.n_clusters:
        raise ParameterError(f"n_select={n_select} outside [1, {clustering.n_clusters}]")
    scores = cluster_task_scores(clustering, ics, design)
    best = scores.max(axis=1)
    order = sorted(range(clustering.n_clusters), key=lambda c: (-best[c], c))
    return order[:n_select], replace(clustering, cluster_task_scores=scores)


def ics_for_subject(subject_id, clustering: ICClustering, sim: ICSimilarity,
                    selected_clusters: Sequence[int]) -> list[tuple[int, int]]:
    """One pooled IC per selected cluster for this subject.

    A member IC is chosen by its mean similarity to the other members; a
    subject with no member contributes the IC closest (by mean similarity) to
    the cluster.
    """
    if len(selected_clusters) == 0:
        raise ParameterError("no clusters selected")
    own = np.flatnonzero(sim.owner == subject_id)
    if own.size == 0:
        raise DataError(f"subject {subject_id} has no ICs in the pooled set")
    out = []
    for c in selected_clusters:
        members = clustering.members(c)
        mine = np.intersect1d(own, members)
        if mine.size:
            scores = []
            for i in mine:
                others = members[members != i]
                scores.append(sim.S[i, others].mean() if others.size else 0.0)
            pick = int(mine[int(np.argmax(scores))])
        else:
            pick = int(own[int(np.argmax(sim.S[np.ix_(own, members)].mean(axis=1)))])
        out.append((int(c), pick))
    return out


def pick_ics_by_design(ics: ICDecomposition, design: DesignMatrix) -> list[int]:
    """Single-subject IC choice: for each regressor, the IC it correlates with best.

    Stands in for picking by eye; an IC already taken by an earlier regressor
    is skipped.
    """
    corr = np.abs(_standardize(ics.timecourses).T @ _standardize(design.Y))
    chosen: list[int] = []
    for k in range(design.n_regressors):
        for j in np.argsort(-corr[:, k], kind="stable"):
            if int(j) not in chosen:
                chosen.append(int(j))
                break
    return chosen
