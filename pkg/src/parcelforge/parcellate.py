"""Spectral parcellation: voxel graph, geodesic distances, embedding, C-means."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .core_data import VolumeGrid
from .errors import ParameterError, ShapeError
from .pls_core import FeatureField

log = logging.getLogger(__name__)

_OFFSETS = ((1, 0, 0), (0, 1, 0), (0, 0, 1))


def local_distance(fv, fw) -> float:
    fv = np.asarray(fv, dtype=float)
    fw = np.asarray(fw, dtype=float)
    if fv.shape != fw.shape:
        raise ShapeError(f"feature vectors differ in shape: {fv.shape} vs {fw.shape}")
    return float(np.linalg.norm(fv - fw))


@dataclass(frozen=True, eq=False)
class VoxelGraph:
    """Undirected weighted graph, stored as a symmetric CSR structure."""

    n_nodes: int
    edges: np.ndarray
    edge_weights: np.ndarray
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]


def graph_from_edges(n_nodes: int, edges, weights) -> VoxelGraph:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ParameterError("edge weights must be nonnegative")
    if np.any(edges[:, 0] == edges[:, 1]):
        raise ParameterError("self-edges are not allowed")
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    w = np.concatenate([weights, weights])[order]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n_nodes))]).astype(np.int64)
    return VoxelGraph(int(n_nodes), edges, weights, indptr, cols.astype(np.int64), w)


def grid_edges(grid: VolumeGrid) -> np.ndarray:
    """Face-adjacent pairs of masked voxels as ``(row_a, row_b)`` with ``a < b``."""
    coords = grid.coords()
    lut = grid.row_lookup()
    out = []
    for off in _OFFSETS:
        nb = coords + np.array(off)
        inside = np.all(nb < np.array(grid.dims), axis=1)
        src = np.flatnonzero(inside)
        lin = np.ravel_multi_index(tuple(nb[src].T), grid.dims, order="F")
        dst = lut[lin]
        keep = dst >= 0
        out.append(np.stack([src[keep], dst[keep]], axis=1))
    edges = np.concatenate(out)
    edges.sort(axis=1)
    return edges[np.lexsort((edges[:, 1], edges[:, 0]))]


def _feature_matrix(features) -> np.ndarray:
    R = features.R_feat if isinstance(features, FeatureField) else np.asarray(features, dtype=float)
    return R[:, None] if R.ndim == 1 else R


def build_graph(grid: VolumeGrid, features) -> VoxelGraph:
    """6-connected voxel graph weighted by feature-space Euclidean distance."""
    R = _feature_matrix(features)
    if R.shape[0] != grid.n_voxels:
        raise ShapeError(f"{R.shape[0]} feature rows for {grid.n_voxels} voxels")
    edges = grid_edges(grid)
    w = np.linalg.norm(R[edges[:, 0]] - R[edges[:, 1]], axis=1)
    return graph_from_edges(grid.n_voxels, edges, w)


@dataclass(frozen=True, eq=False)
class GeodesicMatrix:
    D: np.ndarray
    connected: bool
    components: np.ndarray
    surrogate: float | None = None


def geodesics(graph: VoxelGraph) -> GeodesicMatrix:
    """All-pairs shortest paths (Dijkstra from every node).

    Pairs in different connected components get a finite stand-in of ten
    times the largest finite distance; ``connected`` and ``components`` report
    the split.
    """
    if graph.n_nodes == 0:
        raise ParameterError("empty graph")
    D = _kernels.all_pairs_shortest_paths(graph.indptr, graph.indices, graph.weights)
    D = np.minimum(D, D.T)
    adj = coo_matrix((np.ones(len(graph.edges)), (graph.edges[:, 0], graph.edges[:, 1])),
                     shape=(graph.n_nodes, graph.n_nodes))
    n_comp, comp = connected_components(adj, directed=False)
    surrogate = None
    if n_comp > 1:
        finite = D[np.isfinite(D)]
        surrogate = 10.0 * float(finite.max()) if finite.max() > 0 else 1.0
        D[~np.isfinite(D)] = surrogate
        log.warning("mask splits into %d components; unreachable pairs set to %g", n_comp, surrogate)
    np.fill_diagonal(D, 0.0)
    return GeodesicMatrix(D, n_comp == 1, comp.astype(np.int64), surrogate)


def spectral_embed(delta, dims: int = 20) -> np.ndarray:
    """Coordinates from the double-centred squared distance matrix.

    ``B = -J Δ² J / 2``; the ``dims`` singular directions of ``B`` with the
    largest singular values are scaled by their square roots.  Each column is
    flipped so its largest-magnitude coordinate is positive.
    """
    D = delta.D if isinstance(delta, GeodesicMatrix) else np.asarray(delta, dtype=float)
    V = D.shape[0]
    if not 1 <= dims <= V - 1:
        raise ParameterError(f"dims={dims} outside [1, V-1={V - 1}]")
    D2 = D**2
    B = D2 - D2.mean(axis=0) - D2.mean(axis=1)[:, None] + D2.mean()
    B = -0.25 * (B + B.T)
    lam, vec = np.linalg.eigh(B)
    order = np.argsort(-np.abs(lam), kind="stable")[:dims]
    coords = vec[:, order] * np.sqrt(np.abs(lam[order]))
    idx = np.argmax(np.abs(coords), axis=0)
    sign = np.sign(coords[idx, np.arange(dims)])
    sign[sign == 0] = 1.0
    return coords * sign


@dataclass(frozen=True, eq=False)
class Parcellation:
    labels: np.ndarray
    K_p: int
    feature_provenance: str
    rng_seed: int
    wcss: float = 0.0
    info: dict = field(default_factory=dict)


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber so labels appear in order of first occurrence."""
    _, first = np.unique(labels, return_index=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    _, inv = np.unique(labels, return_inverse=True)
    return rank[inv]


def kmeans_plusplus(x: np.ndarray, k: int, rng) -> np.ndarray:
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centers[0] = x[first]
    d2 = ((x - x[first]) ** 2).sum(axis=1)
    taken = np.zeros(n, dtype=bool)
    taken[first] = True
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            pick = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            pick = min(pick, n - 1)
        else:
            free = np.flatnonzero(~taken)
            pick = int(free[rng.integers(free.size)])
        taken[pick] = True
        centers[j] = x[pick]
        d2 = np.minimum(d2, ((x - x[pick]) ** 2).sum(axis=1))
    return centers


def cmeans(coords: np.ndarray, K_p: int, rng_seed: int = 0, n_restarts: int = 10,
           max_iter: int = 300, tol: float = 1e-9, provenance: str = "coords") -> Parcellation:
    """k-means with k-means++ starts; the restart with the lowest WCSS wins.

    Restart ``i`` draws from the ``i``-th child of ``SeedSequence(rng_seed)``;
    ties in WCSS go to the earlier restart.
    """
    x = np.asarray(coords, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not 1 <= K_p <= len(x):
        raise ParameterError(f"K_p={K_p} outside [1, V={len(x)}]")
    best = None
    for child in np.random.SeedSequence(rng_seed).spawn(max(1, n_restarts)):
        rng = np.random.default_rng(child)
        labels, _, wcss, _ = _kernels.lloyd(x, kmeans_plusplus(x, K_p, rng), max_iter, tol)
        if best is None or wcss < best[1]:
            best = (labels, wcss)
    return Parcellation(canonical_labels(best[0]), int(K_p), provenance, int(rng_seed), float(best[1]))


def parcellate_pipeline(features, grid: VolumeGrid, K_p: int, dims: int = 20, rng_seed: int = 0,
                        n_restarts: int = 10, provenance: str | None = None) -> Parcellation:
    """Graph, geodesics, embedding and C-means in one call.

    Parameters
    ----------
    features : FeatureField or ndarray, shape (V, F)
        Any per-voxel feature matrix works; the GLM arm passes t-vectors.
    grid : VolumeGrid
    K_p : int
        Parcel count.  A warning is logged above ``V / 2``.
    dims : int
        Embedding dimensions, capped at ``V - 1``.
    rng_seed, n_restarts : int
        Passed to :func:`cmeans`.
    provenance : str, optional
        Tag stored on the result.

    Returns
    -------
    Parcellation
        ``info`` records the embedding size and graph connectivity.
    """
    R = _feature_matrix(features)
    if provenance is None:
        provenance = f"PLS({features.K})" if isinstance(features, FeatureField) else "custom"
    V = grid.n_voxels
    if K_p > V / 2:
        log.warning("K_p=%d is more than half the voxel count (%d)", K_p, V)
    if K_p == 1:
        return Parcellation(np.zeros(V, dtype=np.int64), 1, provenance, int(rng_seed))
    geo = geodesics(build_graph(grid, R))
    use_dims = min(dims, V - 1)
    coords = spectral_embed(geo, use_dims)
    parc = cmeans(coords, K_p, rng_seed, n_restarts, provenance=provenance)
    info = {"dims": use_dims, "connected": geo.connected,
            "n_graph_components": int(geo.components.max() + 1), "surrogate": geo.surrogate}
    return Parcellation(parc.labels, parc.K_p, provenance, int(rng_seed), parc.wcss, info)


def spatial_baseline(grid: VolumeGrid, K_p: int, rng_seed: int = 0, n_restarts: int = 10) -> Parcellation:
    """k-means on voxel coordinates alone (the spatial-clustering comparison arm)."""
    return cmeans(grid.coords().astype(float), K_p, rng_seed, n_restarts, provenance="SC")


def write_labels_csv(path, parc: Parcellation, grid: VolumeGrid) -> None:
    coords = grid.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "row", "label"])
        for row, (xyz, lab) in enumerate(zip(coords, parc.labels)):
            w.writerow([int(xyz[0]), int(xyz[1]), int(xyz[2]), row, int(lab)])
