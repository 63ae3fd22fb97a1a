"""PCA denoising and PLS latent time courses used as the parcellation feature space."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core_data import BoldDataset, center_rows
from .errors import DegenerateInputError, ParameterError, PLSRankError, PolicyError, SeedIndexError, ShapeError

log = logging.getLogger(__name__)

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class PCAModel:
    """``Xc = P @ scores``; rows of ``scores`` are component time courses."""

    P: np.ndarray
    scores: np.ndarray
    variances: np.ndarray

    @property
    def n_components(self) -> int:
        return self.scores.shape[0]


def pca_decompose(Xc: np.ndarray) -> PCAModel:
    """Thin SVD of the row-centred data.

    Variances are ``s**2 / (T - 1)``; each score row is flipped so its
    largest-magnitude entry is positive (with the loading column flipped to
    match).
    """
    Xc = np.asarray(Xc, dtype=float)
    T = Xc.shape[1]
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise DegenerateInputError("data matrix has rank 0")
    scores = s[:, None] * Vt
    sign = np.sign(scores[np.arange(len(s)), np.argmax(np.abs(scores), axis=1)])
    sign[sign == 0] = 1.0
    return PCAModel(U * sign, scores * sign[:, None], s**2 / (T - 1))


@dataclass(frozen=True)
class TruncationPolicy:
    """Which principal components to discard as noise."""

    drop_leading: int = 2
    drop_trailing: int = 0
    variance_floor_fraction: float = 1e-4

    def __post_init__(self):
        if self.drop_leading < 0 or self.drop_trailing < 0:
            raise PolicyError("drop counts must be nonnegative")
        if not 0 <= self.variance_floor_fraction < 1:
            raise PolicyError("variance_floor_fraction must lie in [0, 1)")


def kept_components(model: PCAModel, policy: TruncationPolicy) -> np.ndarray:
    C = model.n_components
    idx = np.arange(policy.drop_leading, C - policy.drop_trailing)
    floor = policy.variance_floor_fraction * model.variances.sum()
    idx = idx[model.variances[idx] >= floor] if policy.variance_floor_fraction > 0 else idx
    if idx.size == 0:
        raise PolicyError(f"truncation {policy} leaves no components out of {C}")
    return idx


def truncate(model: PCAModel, policy: TruncationPolicy) -> np.ndarray:
    return model.scores[kept_components(model, policy)]


@dataclass(frozen=True, eq=False)
class PLSModel:
    """Latent time courses ``T_pls`` (``T x K``, orthonormal columns) and weights.

    ``W`` (``C x K``) are unit-norm score-space weights with
    ``T_pls[:, i] ∝ E_i @ W[:, i]``; ``B`` holds the regression weights and
    ``C_w`` the unit-norm dependent-variable weights.
    """

    T_pls: np.ndarray
    W: np.ndarray
    B: np.ndarray
    C_w: np.ndarray
    residual: np.ndarray = field(repr=False)
    partial: bool = False

    @property
    def K(self) -> int:
        return self.T_pls.shape[1]


def dominant_singular_vector(M: np.ndarray, tol: float = 1e-12, max_iter: int = 1000) -> np.ndarray:
    """Leading left singular vector of ``M`` by power iteration on its Gram matrix.

    Iterates on whichever of ``M M'`` and ``M' M`` is smaller; the start
    vector is the normalised row sum of that Gram matrix.
    """
    use_right = M.shape[1] < M.shape[0]
    G = M.T @ M if use_right else M @ M.T
    x = G.sum(axis=1)
    if not np.linalg.norm(x) > 0:
        x = np.zeros(G.shape[0])
        x[int(np.argmax(np.diag(G)))] = 1.0
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = G @ x
        y /= np.linalg.norm(y)
        if np.linalg.norm(y - x) < tol:
            x = y
            break
        x = y
    else:
        log.warning("power iteration stopped after %d iterations without reaching tol=%g", max_iter, tol)
    if use_right:
        x = M @ x
        x /= np.linalg.norm(x)
    return x


def whiten_scores(scores: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the row space of ``scores`` (``C' x T``).

    For principal-component scores this is each row scaled to unit norm (up
    to sign).  Feeding whitened scores to :func:`pls_fit` makes the first
    latent the unit vector in the score span with maximal covariance with
    ``D``, independent of how much variance each component carries.
    """
    S = np.asarray(scores, dtype=float)
    _, s, Vt = np.linalg.svd(S, full_matrices=False)
    if s.size == 0 or not s[0] > 0:
        raise DegenerateInputError("score matrix has rank 0")
    return Vt[s > RANK_RTOL * s[0]]


def pls_fit(scores: np.ndarray, D: np.ndarray, K: int = 1, tol: float = 1e-12, max_iter: int = 1000) -> PLSModel:
    """Extract ``K`` PLS latents between component time courses and seed signals.

    With ``E = scores'`` (``T x C``), each step takes ``w`` as the dominant
    left singular vector of ``E' D``, sets ``t = E w / ||E w||`` and
    ``c = D' t``, then deflates ``E`` and ``D`` against ``t``, which keeps the
    latents orthonormal.  Signs are fixed so the largest entry of each ``c``
    is positive.

    Parameters
    ----------
    scores : ndarray, shape (C, T)
        Component time courses, one per row.  Pass
        :func:`whiten_scores` output to make the fit independent of
        component variances.
    D : ndarray, shape (T,) or (T, N_dep)
        Seed signals; centred here.
    K : int
        Number of latents, at most ``min(C, T - 1)``.

    Returns
    -------
    PLSModel

    Raises
    ------
    PLSRankError
        The score space runs out before ``K`` latents; ``.partial`` holds
        the latents found so far.
    """
    S = np.asarray(scores, dtype=float)
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    C, T = S.shape
    if D.shape[0] != T:
        raise ShapeError(f"D has {D.shape[0]} rows, scores have {T} time points")
    if not 1 <= K <= min(C, T - 1):
        raise ParameterError(f"K={K} outside [1, min(C={C}, T-1={T - 1})]")
    E = S.T.copy()
    D = D - D.mean(axis=0)
    e_ref = np.linalg.norm(E)
    m_ref = None
    lat, ws, bs, cs = [], [], [], []
    for i in range(K):
        M = E.T @ D
        m_norm = np.linalg.norm(M)
        if m_ref is None:
            m_ref = m_norm
        if not (np.linalg.norm(E) > RANK_RTOL * e_ref and m_norm > RANK_RTOL * max(m_ref, np.finfo(float).tiny)):
            partial = _assemble(lat, ws, bs, cs, E, T, C, D.shape[1], partial=True)
            raise PLSRankError(f"score space exhausted at latent {i + 1} of {K}", step=i + 1, partial=partial)
        w = dominant_singular_vector(M, tol, max_iter)
        t = E @ w
        t /= np.linalg.norm(t)
        c = D.T @ t
        if c[int(np.argmax(np.abs(c)))] < 0:
            t, w, c = -t, -w, -c
        b = np.linalg.norm(c)
        lat.append(t)
        ws.append(w)
        bs.append(b)
        cs.append(c / b)
        E = E - np.outer(t, t @ E)
        D = D - np.outer(t, t @ D)
    return _assemble(lat, ws, bs, cs, E, T, C, D.shape[1])


def _assemble(lat, ws, bs, cs, E, T, C, n_dep, partial=False) -> PLSModel:
    def stack(v, rows):
        return np.stack(v, axis=1) if v else np.zeros((rows, 0))

    return PLSModel(stack(lat, T), stack(ws, C), np.asarray(bs, float), stack(cs, n_dep), E, partial)


@dataclass(frozen=True, eq=False)
class FeatureField:
    """Per-voxel covariances with the PLS latents (``V x K``)."""

    R_feat: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.R_feat.shape[1]


def covariance_features(X0: np.ndarray, model: PLSModel, provenance: dict | None = None) -> FeatureField:
    X0 = np.asarray(X0, dtype=float)
    if X0.shape[1] != model.T_pls.shape[0]:
        raise ShapeError(f"X0 has {X0.shape[1]} time points, latents have {model.T_pls.shape[0]}")
    meta = {"kind": "PLS", "K": model.K}
    meta.update(provenance or {})
    return FeatureField(X0 @ model.T_pls, meta)


def build_seed_matrix(dataset: BoldDataset, seed_sets: Sequence) -> tuple[np.ndarray, int]:
    """Centred seed time series as columns, in seed-set order.

    A voxel appearing in more than one set is kept once; the number of dropped
    duplicates is returned alongside the matrix.
    """
    rows: list[int] = []
    dup = 0
    for s in seed_sets:
        for r in np.asarray(s.voxel_rows, dtype=np.int64):
            if not 0 <= r < dataset.n_voxels:
                raise SeedIndexError(f"seed row {int(r)} outside 0..{dataset.n_voxels - 1}")
            if int(r) in rows:
                dup += 1
            else:
                rows.append(int(r))
    if dup:
        log.warning("dropped %d duplicate seed voxel(s)", dup)
    return center_rows(dataset.X[rows]).T.copy(), dup
