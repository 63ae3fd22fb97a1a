"""Hot inner loops, each in a compiled and a numpy flavour.

The public dispatchers at the bottom pick one according to
:func:`parcelforge._accel.numba_enabled`; the ``*_numba`` / ``*_numpy`` names
stay importable so tests and the benchmark can run both.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _scipy_dijkstra

from ._accel import njit, numba_enabled

try:
    from numba import prange
except ImportError:  # pragma: no cover
    prange = range


# ---------------------------------------------------------------------------
# all-pairs shortest paths


@njit
def _heap_push(keys, nodes, size, key, node):
    i = size
    keys[i] = key
    nodes[i] = node
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        nodes[parent], nodes[i] = nodes[i], nodes[parent]
        i = parent
    return size + 1


@njit
def _heap_pop(keys, nodes, size):
    key = keys[0]
    node = nodes[0]
    size -= 1
    keys[0] = keys[size]
    nodes[0] = nodes[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and keys[left + 1] < keys[left]:
            child = left + 1
        if keys[i] <= keys[child]:
            break
        keys[i], keys[child] = keys[child], keys[i]
        nodes[i], nodes[child] = nodes[child], nodes[i]
        i = child
    return key, node, size


@njit
def _dijkstra_one(indptr, indices, weights, source, out):
    n = indptr.shape[0] - 1
    cap = indices.shape[0] + n + 1
    keys = np.empty(cap, dtype=np.float64)
    nodes = np.empty(cap, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    for k in range(n):
        out[k] = np.inf
    out[source] = 0.0
    size = _heap_push(keys, nodes, 0, 0.0, source)
    while size > 0:
        d, u, size = _heap_pop(keys, nodes, size)
        if done[u]:
            continue
        done[u] = True
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            nd = d + weights[e]
            if nd < out[v]:
                out[v] = nd
                size = _heap_push(keys, nodes, size, nd, v)


@njit(parallel=True)
def apsp_numba(indptr, indices, weights):
    n = indptr.shape[0] - 1
    dist = np.empty((n, n), dtype=np.float64)
    for s in prange(n):
        _dijkstra_one(indptr, indices, weights, s, dist[s])
    return dist


def apsp_numpy(indptr, indices, weights):
    n = len(indptr) - 1
    graph = csr_matrix((np.asarray(weights, float), indices, indptr), shape=(n, n))
    return _scipy_dijkstra(graph, directed=True)


# ---------------------------------------------------------------------------
# Ward agglomeration on a precomputed dissimilarity (Lance-Williams)


@njit
def ward_numba(dist, n_merges):
    m = dist.shape[0]
    d = dist.copy()
    size = np.ones(m, dtype=np.float64)
    active = np.ones(m, dtype=np.bool_)
    merges = np.empty((n_merges, 2), dtype=np.int64)
    heights = np.empty(n_merges, dtype=np.float64)
    for step in range(n_merges):
        best = np.inf
        bi = -1
        bj = -1
        for i in range(m):
            if not active[i]:
                continue
            for j in range(i + 1, m):
                if active[j] and d[i, j] < best:
                    best = d[i, j]
                    bi = i
                    bj = j
        merges[step, 0] = bi
        merges[step, 1] = bj
        heights[step] = best
        ni = size[bi]
        nj = size[bj]
        for k in range(m):
            if not active[k] or k == bi or k == bj:
                continue
            nk = size[k]
            val = ((ni + nk) * d[bi, k] + (nj + nk) * d[bj, k] - nk * best) / (ni + nj + nk)
            d[bi, k] = val
            d[k, bi] = val
        size[bi] = ni + nj
        active[bj] = False
    return merges, heights


def ward_numpy(dist, n_merges):
    m = dist.shape[0]
    d = np.array(dist, dtype=float, copy=True)
    size = np.ones(m)
    active = np.ones(m, dtype=bool)
    merges = np.empty((n_merges, 2), dtype=np.int64)
    heights = np.empty(n_merges)
    iu = np.triu_indices(m, 1)
    for step in range(n_merges):
        live = active[iu[0]] & active[iu[1]]
        vals = np.where(live, d[iu], np.inf)
        # argmin returns the first minimum; triu order is row-major so this is
        # the smallest (i, j) among ties
        p = int(np.argmin(vals))
        bi, bj = int(iu[0][p]), int(iu[1][p])
        best = vals[p]
        merges[step] = bi, bj
        heights[step] = best
        ni, nj = size[bi], size[bj]
        others = active.copy()
        others[[bi, bj]] = False
        nk = size[others]
        new = ((ni + nk) * d[bi, others] + (nj + nk) * d[bj, others] - nk * best) / (ni + nj + nk)
        d[bi, others] = new
        d[others, bi] = new
        size[bi] = ni + nj
        active[bj] = False
    return merges, heights


# ---------------------------------------------------------------------------
# Lloyd iterations


@njit
def _assign(x, centers, labels, mind):
    n, p = x.shape
    k = centers.shape[0]
    for i in range(n):
        best = np.inf
        bl = 0
        for c in range(k):
            s = 0.0
            for q in range(p):
                diff = x[i, q] - centers[c, q]
                s += diff * diff
            if s < best:
                best = s
                bl = c
        labels[i] = bl
        mind[i] = best


@njit
def _means_and_repair(x, labels, mind, k):
    n, p = x.shape
    centers = np.zeros((k, p))
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        counts[labels[i]] += 1
        for q in range(p):
            centers[labels[i], q] += x[i, q]
    for c in range(k):
        if counts[c] == 0:
            far = 0
            fd = -1.0
            for i in range(n):
                if counts[labels[i]] > 1 and mind[i] > fd:
                    fd = mind[i]
                    far = i
            old = labels[far]
            counts[old] -= 1
            for q in range(p):
                centers[old, q] -= x[far, q]
            labels[far] = c
            mind[far] = 0.0
            counts[c] = 1
            for q in range(p):
                centers[c, q] = x[far, q]
    for c in range(k):
        for q in range(p):
            centers[c, q] /= counts[c]
    return centers


@njit
def lloyd_numba(x, centers, max_iter, tol):
    n = x.shape[0]
    k = centers.shape[0]
    labels = np.empty(n, dtype=np.int64)
    mind = np.empty(n)
    c = centers.copy()
    n_iter = 0
    for it in range(max_iter):
        n_iter = it + 1
        _assign(x, c, labels, mind)
        new = _means_and_repair(x, labels, mind, k)
        shift = 0.0
        for j in range(k):
            s = 0.0
            for q in range(x.shape[1]):
                diff = new[j, q] - c[j, q]
                s += diff * diff
            if s > shift:
                shift = s
        c = new
        if np.sqrt(shift) < tol:
            break
    _assign(x, c, labels, mind)
    c = _means_and_repair(x, labels, mind, k)
    wcss = 0.0
    for i in range(n):
        for q in range(x.shape[1]):
            diff = x[i, q] - c[labels[i], q]
            wcss += diff * diff
    return labels, c, wcss, n_iter


def _assign_np(x, centers):
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(x)), labels]


def _means_and_repair_np(x, labels, mind, k):
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        donors = counts[labels] > 1
        cand = np.where(donors, mind, -1.0)
        far = int(np.argmax(cand))
        counts[labels[far]] -= 1
        labels[far] = c
        mind[far] = 0.0
        counts[c] = 1
    centers = np.zeros((k, x.shape[1]))
    np.add.at(centers, labels, x)
    return centers / counts[:, None]


def lloyd_numpy(x, centers, max_iter, tol):
    c = np.array(centers, dtype=float, copy=True)
    k = c.shape[0]
    n_iter = 0
    for it in range(max_iter):
        n_iter = it + 1
        labels, mind = _assign_np(x, c)
        new = _means_and_repair_np(x, labels, mind, k)
        shift = np.sqrt(((new - c) ** 2).sum(axis=1).max())
        c = new
        if shift < tol:
            break
    labels, mind = _assign_np(x, c)
    c = _means_and_repair_np(x, labels, mind, k)
    wcss = float(((x - c[labels]) ** 2).sum())
    return labels.astype(np.int64), c, wcss, n_iter


# ---------------------------------------------------------------------------
# greedy radius-constrained peak picking


@njit
def greedy_seeds_numba(order, coords, r2, n_seeds):
    chosen = np.empty(n_seeds, dtype=np.int64)
    n_chosen = 0
    for a in range(order.shape[0]):
        v = order[a]
        ok = True
        for b in range(n_chosen):
            u = chosen[b]
            s = 0.0
            for q in range(coords.shape[1]):
                diff = coords[v, q] - coords[u, q]
                s += diff * diff
            if s < r2:
                ok = False
                break
        if ok:
            chosen[n_chosen] = v
            n_chosen += 1
            if n_chosen == n_seeds:
                break
    return chosen[:n_chosen]


def greedy_seeds_numpy(order, coords, r2, n_seeds):
    admissible = np.ones(len(coords), dtype=bool)
    chosen = []
    pos = 0
    ordered_ok = admissible[order]
    while len(chosen) < n_seeds:
        hits = np.flatnonzero(ordered_ok[pos:])
        if hits.size == 0:
            break
        pos += int(hits[0])
        v = int(order[pos])
        chosen.append(v)
        d2 = ((coords - coords[v]) ** 2).sum(axis=1)
        admissible &= d2 >= r2
        ordered_ok = admissible[order]
    return np.asarray(chosen, dtype=np.int64)


# ---------------------------------------------------------------------------
# dispatch


def all_pairs_shortest_paths(indptr, indices, weights):
    args = (np.ascontiguousarray(indptr, np.int64), np.ascontiguousarray(indices, np.int64),
            np.ascontiguousarray(weights, np.float64))
    return apsp_numba(*args) if numba_enabled() else apsp_numpy(*args)


def ward_merges(dist, n_merges):
    dist = np.ascontiguousarray(dist, np.float64)
    return ward_numba(dist, int(n_merges)) if numba_enabled() else ward_numpy(dist, int(n_merges))


def lloyd(x, centers, max_iter=300, tol=1e-9):
    x = np.ascontiguousarray(x, np.float64)
    centers = np.ascontiguousarray(centers, np.float64)
    fn = lloyd_numba if numba_enabled() else lloyd_numpy
    labels, c, wcss, n_iter = fn(x, centers, int(max_iter), float(tol))
    return np.asarray(labels, np.int64), c, float(wcss), int(n_iter)


def greedy_seeds(order, coords, r2, n_seeds):
    order = np.ascontiguousarray(order, np.int64)
    coords = np.ascontiguousarray(coords, np.float64)
    fn = greedy_seeds_numba if numba_enabled() else greedy_seeds_numpy
    return np.asarray(fn(order, coords, float(r2), int(n_seeds)), np.int64)
