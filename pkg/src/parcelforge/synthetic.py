"""Synthetic block-design cohorts with known parcels.

Task parcels carry an HRF-convolved boxcar shifted by a parcel latency plus a
per-subject latency jitter; nuisance parcels carry a slow drift and a shared
physiological sinusoid.  Everything is drawn from one seeded generator, so a
spec maps to exactly one cohort.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gamma

from .core_data import BoldDataset, DesignMatrix, VolumeGrid
from .errors import ParameterError

HIRES_DT = 0.1


def canonical_hrf(dt: float, length: float = 32.0) -> np.ndarray:
    """Double-gamma HRF sampled every ``dt`` seconds.

    Response gamma with shape 6, undershoot gamma with shape 16, undershoot
    ratio 1/6 (unit scale), normalised to unit sum.
    """
    t = np.arange(0.0, length + dt / 2, dt)
    h = gamma.pdf(t, 6.0) - gamma.pdf(t, 16.0) / 6.0
    return h / h.sum()


def block_onsets(n_regressors: int, period: float, duration: float) -> list[np.ndarray]:
    """On-intervals ``[(start, stop), ...]`` for each condition.

    Conditions take turns: condition ``k`` is on for half a period starting at
    ``k * period`` within every cycle of ``n_regressors * period`` seconds.
    """
    cycle = n_regressors * period
    out = []
    for k in range(n_regressors):
        starts = np.arange(k * period, duration, cycle)
        out.append(np.stack([starts, starts + period / 2], axis=1))
    return out


def hrf_response(intervals: np.ndarray, times: np.ndarray, latency: float = 0.0) -> np.ndarray:
    """Boxcar over ``intervals`` convolved with the canonical HRF, read at ``times - latency``."""
    horizon = float(times.max()) + 40.0
    fine = np.arange(0.0, horizon, HIRES_DT)
    box = np.zeros_like(fine)
    for a, b in intervals:
        box[(fine >= a) & (fine < b)] = 1.0
    conv = np.convolve(box, canonical_hrf(HIRES_DT))[: fine.size]
    return np.interp(times - latency, fine, conv, left=0.0)


def task_design(n_regressors: int, T: int, tr_seconds: float, period: float) -> DesignMatrix:
    times = np.arange(T) * tr_seconds
    cols = [hrf_response(iv, times) for iv in block_onsets(n_regressors, period, T * tr_seconds)]
    Y = np.stack(cols, axis=1)
    Y = (Y - Y.mean(axis=0)) / Y.std(axis=0)
    return DesignMatrix(Y, tuple(f"task{k + 1}" for k in range(n_regressors)))


@dataclass(frozen=True)
class SyntheticCohortSpec:
    n_subjects: int = 1
    dims: tuple[int, int, int] = (16, 16, 4)
    n_true_parcels: int = 8
    T: int = 120
    tr_seconds: float = 3.0
    task_period_seconds: float = 28.8
    hrf_latency_jitter_seconds: float | tuple[float, ...] = 1.0
    noise_sigma: float = 0.5
    rng_seed: int = 0
    n_task_parcels: int | None = None
    n_regressors: int = 2
    parcel_latency_spread_seconds: float = 3.0
    task_amplitude: float = 1.0
    drift_amplitude: float = 3.0
    physio_amplitude: float = 2.0
    baseline: float = 100.0

    def __post_init__(self):
        V = int(np.prod(self.dims))
        if self.n_subjects < 1 or self.n_true_parcels < 1 or self.T < 3:
            raise ParameterError("n_subjects, n_true_parcels must be >= 1 and T >= 3")
        if self.n_true_parcels > V:
            raise ParameterError(f"n_true_parcels={self.n_true_parcels} exceeds V={V}")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be nonnegative")
        jit = self.hrf_latency_jitter_seconds
        if not np.isscalar(jit) and len(jit) != self.n_subjects:
            raise ParameterError("per-subject jitter list must have n_subjects entries")
        if np.any(np.asarray(jit) < 0):
            raise ParameterError("hrf_latency_jitter_seconds must be nonnegative")

    @property
    def task_parcels(self) -> int:
        if self.n_task_parcels is None:
            return max(1, self.n_true_parcels // 2)
        return int(self.n_task_parcels)


@dataclass
class SyntheticCohort:
    spec: SyntheticCohortSpec
    datasets: list[BoldDataset]
    truth_labels: np.ndarray
    design: DesignMatrix
    per_subject_latency: list[float]
    parcel_regressor: np.ndarray
    parcel_latency: np.ndarray
    nuisance: list[np.ndarray] = field(default_factory=list)

    @property
    def grid(self) -> VolumeGrid:
        return self.datasets[0].grid


def _split_extent(length: int, parts: int, rng) -> np.ndarray:
    minw = max(1, length // (2 * parts))
    widths = minw + rng.multinomial(length - parts * minw, np.full(parts, 1.0 / parts))
    return np.concatenate([[0], np.cumsum(widths)])


def _snake_order(dims) -> np.ndarray:
    nx, ny, nz = dims
    cells = []
    for z in range(nz):
        ys = range(ny) if z % 2 == 0 else range(ny - 1, -1, -1)
        for j, y in enumerate(ys):
            xs = range(nx) if (j + z * ny) % 2 == 0 else range(nx - 1, -1, -1)
            cells.extend((x, y, z) for x in xs)
    return np.ravel_multi_index(tuple(np.array(cells).T), dims, order="F")


def block_partition(dims, n_parcels: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Split a grid into ``n_parcels`` connected blocks with random cut points.

    Returns a label volume and a boolean per parcel marking the checkerboard
    "even" class, so alternating blocks can be given different roles.
    """
    dims = tuple(int(d) for d in dims)
    best = None
    for f in itertools.product(*(range(1, d + 1) for d in dims)):
        if int(np.prod(f)) != n_parcels:
            continue
        sides = [d / b for d, b in zip(dims, f) if d > 1]
        score = max(sides) / min(sides) if sides else 1.0
        if best is None or score < best[0]:
            best = (score, f)
    labels = np.empty(dims, dtype=np.int64)
    if best is not None:
        f = best[1]
        edges = [_split_extent(d, b, rng) for d, b in zip(dims, f)]
        even = np.zeros(n_parcels, dtype=bool)
        pid = 0
        for iz in range(f[2]):
            for iy in range(f[1]):
                for ix in range(f[0]):
                    labels[edges[0][ix]:edges[0][ix + 1], edges[1][iy]:edges[1][iy + 1],
                           edges[2][iz]:edges[2][iz + 1]] = pid
                    even[pid] = (ix + iy + iz) % 2 == 0
                    pid += 1
        return labels, even
    order = _snake_order(dims)
    chunks = np.array_split(order, n_parcels)
    flat = np.empty(order.size, dtype=np.int64)
    for pid, c in enumerate(chunks):
        flat[c] = pid
    return flat.reshape(dims, order="F"), np.arange(n_parcels) % 2 == 0


def _unit(x):
    x = x - x.mean()
    return x / x.std()


def generate_synthetic_cohort(spec: SyntheticCohortSpec) -> SyntheticCohort:
    """Draw a cohort with known parcels from ``spec``.

    Parameters
    ----------
    spec : SyntheticCohortSpec

    Returns
    -------
    SyntheticCohort
        One dataset per subject on a shared grid, the true labels, the task
        design and the injected nuisance series.  Identical specs give
        bit-identical cohorts.
    """
    rng = np.random.default_rng(spec.rng_seed)
    grid = VolumeGrid.full(spec.dims)
    label_vol, even = block_partition(spec.dims, spec.n_true_parcels, rng)
    truth = label_vol.ravel(order="F")[grid.cells]

    n_task = min(spec.task_parcels, spec.n_true_parcels)
    ranked = list(np.flatnonzero(even)) + list(np.flatnonzero(~even))
    task_ids = sorted(ranked[:n_task])
    parcel_regressor = np.full(spec.n_true_parcels, -1, dtype=np.int64)
    parcel_latency = np.zeros(spec.n_true_parcels)
    offsets = np.linspace(0.0, spec.parcel_latency_spread_seconds, n_task) if n_task > 1 else [0.0]
    for j, p in enumerate(task_ids):
        parcel_regressor[p] = j % spec.n_regressors
        parcel_latency[p] = offsets[j]

    times = np.arange(spec.T) * spec.tr_seconds
    intervals = block_onsets(spec.n_regressors, spec.task_period_seconds, spec.T * spec.tr_seconds)
    raw_design = np.stack([hrf_response(iv, times) for iv in intervals], axis=1)
    design_mean, design_sd = raw_design.mean(axis=0), raw_design.std(axis=0)
    design = DesignMatrix((raw_design - design_mean) / design_sd,
                          tuple(f"task{k + 1}" for k in range(spec.n_regressors)))

    jit = spec.hrf_latency_jitter_seconds
    if np.isscalar(jit):
        latencies = [float(rng.uniform(-jit, jit)) if jit > 0 else 0.0 for _ in range(spec.n_subjects)]
    else:
        latencies = [float(v) for v in jit]

    nuis_ids = np.flatnonzero(parcel_regressor < 0)
    drift_w = spec.drift_amplitude * rng.uniform(0.5, 1.5, spec.n_true_parcels)
    physio_w = spec.physio_amplitude * rng.uniform(0.5, 1.5, spec.n_true_parcels)

    datasets, nuisance = [], []
    for s in range(spec.n_subjects):
        X = np.full((grid.n_voxels, spec.T), spec.baseline)
        for p in task_ids:
            k = parcel_regressor[p]
            resp = hrf_response(intervals[k], times, parcel_latency[p] + latencies[s])
            X[truth == p] += spec.task_amplitude * (resp - design_mean[k]) / design_sd[k]
        slow = rng.uniform(0.002, 0.006)
        drift = _unit(times / times[-1] + np.cos(2 * np.pi * slow * times + rng.uniform(0, 2 * np.pi)))
        physio = _unit(np.sin(2 * np.pi * rng.uniform(0.05, 0.1) * times + rng.uniform(0, 2 * np.pi)))
        for p in nuis_ids:
            X[truth == p] += drift_w[p] * drift + physio_w[p] * physio
        X += spec.noise_sigma * rng.standard_normal(X.shape)
        datasets.append(BoldDataset(grid, X, spec.tr_seconds))
        nuisance.append(np.stack([drift, physio]))

    return SyntheticCohort(spec, datasets, truth, design, latencies, parcel_regressor,
                           parcel_latency, nuisance)


def synthetic_ic_cohort(n_subjects: int = 5, n_ics: int = 10, T: int = 100, tr_seconds: float = 3.0,
                        max_jitter_tr: float = 1.0, noise_sd: float = 0.2, n_voxels: int = 50,
                        rng_seed: int = 0):
    """Per-subject IC sets where one IC per subject is a jittered task copy.

    Returns ``(decompositions, task_positions, design)`` where
    ``task_positions[s]`` is the pooled index of subject ``s``'s task IC.
    """
    from .ica import ICDecomposition

    rng = np.random.default_rng(rng_seed)
    design = task_design(1, T, tr_seconds, 28.8)
    intervals = block_onsets(1, 28.8, T * tr_seconds)[0]
    times = np.arange(T) * tr_seconds
    out, positions = [], []
    offset = 0
    for s in range(n_subjects):
        tcs = np.empty((T, n_ics))
        for j in range(n_ics):
            e = rng.standard_normal(T + 20)
            ar = np.empty_like(e)
            ar[0] = e[0]
            for t in range(1, e.size):
                ar[t] = 0.5 * ar[t - 1] + e[t]
            tcs[:, j] = _unit(ar[20:])
        slot = int(rng.integers(n_ics))
        shift = rng.uniform(-max_jitter_tr, max_jitter_tr) * tr_seconds
        task = _unit(hrf_response(intervals, times, shift))
        tcs[:, slot] = task + noise_sd * rng.standard_normal(T)
        maps = rng.standard_normal((n_ics, n_voxels))
        out.append(ICDecomposition(s, tcs, maps))
        positions.append(offset + slot)
        offset += n_ics
    return out, positions, design
