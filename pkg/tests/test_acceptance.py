"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import filecmp
import itertools
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from parcelforge.config import PipelineConfig
from parcelforge.core_data import DesignMatrix, VolumeGrid, center_rows, unit_normalize_rows
from parcelforge.evaluate import glm_tvalues, pls_tmap
from parcelforge.ica_match import select_task_clusters, similarity_matrix, ward_cluster
from parcelforge.parcellate import geodesics, graph_from_edges, spectral_embed
from parcelforge.pipeline import run_pipeline, write_cohort
from parcelforge.pls_core import pca_decompose, pls_fit
from parcelforge.seeds import select_seeds
from parcelforge.synthetic import SyntheticCohortSpec, generate_synthetic_cohort, synthetic_ic_cohort


def verdict(n, ok, detail, record_property):
    record_property("detail", detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def cosine(a, b):
    return abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))


@pytest.mark.criterion(1, "PLS latent pair equals cross-covariance SVD; latents orthonormal")
def test_criterion_1_pls_oracle(record_property):
    t0 = time.perf_counter()
    worst_cos, worst_orth = 1.0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        S = rng.normal(size=(20, 200))
        D = rng.normal(size=(200, 3))
        m = pls_fit(S, D, 1)
        U, _, Vt = np.linalg.svd(S @ (D - D.mean(axis=0)))
        worst_cos = min(worst_cos, cosine(m.W[:, 0], U[:, 0]), cosine(m.C_w[:, 0], Vt[0]))
        for K in range(1, 6):
            Tp = pls_fit(S, D, K).T_pls
            worst_orth = max(worst_orth, np.abs(Tp.T @ Tp - np.eye(K)).max())
    elapsed = time.perf_counter() - t0
    ok = worst_cos >= 1 - 1e-8 and worst_orth <= 1e-8 and elapsed < 10
    assert verdict(1, ok, f"min cosine {worst_cos:.12f}, max |T'T-I| {worst_orth:.2e}, {elapsed:.2f}s",
                   record_property)


@pytest.mark.criterion(2, "single-regressor PLS t-map equals GLM t-map")
def test_criterion_2_pls_t_equals_glm_t(record_property):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        T = 60
        y = rng.normal(size=T)
        X = rng.normal(size=(500, T)) + rng.uniform(-1, 1, size=(500, 1)) * y
        design = DesignMatrix(y[:, None], ("task",))
        Xc = center_rows(X)
        X0, _ = unit_normalize_rows(Xc)
        plst = pls_tmap(X0, design, pca_decompose(Xc).scores).t[:, 0]
        glmt = glm_tvalues(X, design).t[:, 0]
        worst = max(worst, np.abs(plst - glmt).max())
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 10
    assert verdict(2, ok, f"max |t_PLS - t_GLM| {worst:.2e} over 5x500 voxels, {elapsed:.2f}s", record_property)


@pytest.mark.criterion(3, "geodesic + embedding recover Euclidean distances")
def test_criterion_3_mds_oracle(record_property):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        pts = np.random.default_rng(seed).normal(size=(50, 3))
        edges = list(itertools.combinations(range(50), 2))
        w = [np.linalg.norm(pts[a] - pts[b]) for a, b in edges]
        geo = geodesics(graph_from_edges(50, edges, w))
        y = spectral_embed(geo, 3)
        true = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        got = np.linalg.norm(y[:, None] - y[None], axis=-1)
        off = ~np.eye(50, dtype=bool)
        worst = max(worst, (np.abs(got - true)[off] / true[off]).max())
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 10
    assert verdict(3, ok, f"max relative distance error {worst:.2e}, {elapsed:.2f}s", record_property)


@pytest.mark.criterion(4, "task ICs grouped by Ward and their cluster selected")
def test_criterion_4_ic_matching(record_property):
    t0 = time.perf_counter()
    n_ok, worst_members = 0, 5
    n_cohorts = 20
    for seed in range(n_cohorts):
        decomps, task_pos, design = synthetic_ic_cohort(n_subjects=5, n_ics=10, max_jitter_tr=1.0, noise_sd=0.2,
                                                        rng_seed=seed)
        sim = similarity_matrix(decomps)
        clustering = ward_cluster(sim, 3)
        task_labels = clustering.labels[np.asarray(task_pos)]
        best = int(np.bincount(task_labels).argmax())
        members = int((task_labels == best).sum())
        selected, _ = select_task_clusters(clustering, decomps, design, n_select=1)
        worst_members = min(worst_members, members)
        n_ok += members >= 4 and selected[0] == best
    elapsed = time.perf_counter() - t0
    ok = n_ok == n_cohorts and elapsed < 30
    assert verdict(4, ok, f"{n_ok}/{n_cohorts} cohorts pass (fewest task ICs together: {worst_members}/5), "
                          f"{elapsed:.2f}s", record_property)


def _run_arms(tmp_path, cohort_seed, K_p, pipeline_seed=0, tag=""):
    coh = tmp_path / f"coh{cohort_seed}"
    if not coh.exists():
        write_cohort(coh, generate_synthetic_cohort(SyntheticCohortSpec(rng_seed=cohort_seed)))
    cfg = PipelineConfig()
    cfg.input.path = str(coh)
    cfg.parcellate.K_p = K_p
    cfg.parcellate.rng_seed = pipeline_seed
    cfg.ica.rng_seed = pipeline_seed
    out = tmp_path / f"out{cohort_seed}_{K_p}_{pipeline_seed}{tag}"
    run_pipeline(cfg, out)
    return json.loads((out / "sub-00" / "summary.json").read_text())


@pytest.mark.slow
@pytest.mark.criterion(5, "PLS1 parcellation ARI >= 0.6 and above the spatial baseline")
def test_criterion_5_end_to_end(tmp_path, record_property):
    t0 = time.perf_counter()
    spec = SyntheticCohortSpec()
    assert spec.dims == (16, 16, 4) and spec.T == 120 and spec.n_true_parcels == 8 and spec.noise_sigma == 0.5
    arms = _run_arms(tmp_path, 0, 8)["arms"]
    pls, sc = arms["PLS1"]["ari_vs_truth"], arms["SC"]["ari_vs_truth"]
    # the same check on further cohorts guards against a lucky draw
    extra = []
    for cs in range(1, 5):
        a = _run_arms(tmp_path, cs, 8)["arms"]
        extra.append((a["PLS1"]["ari_vs_truth"], a["SC"]["ari_vs_truth"]))
    elapsed = time.perf_counter() - t0
    ok = pls >= 0.6 and pls > sc and all(p >= 0.6 and p > s for p, s in extra) and elapsed < 300
    detail = (f"ARI PLS1 {pls:.3f} vs SC {sc:.3f}; cohorts 1-4 PLS1 "
              f"{', '.join(f'{p:.3f}' for p, _ in extra)} vs SC max {max(s for _, s in extra):.3f}; {elapsed:.1f}s")
    assert verdict(5, ok, detail, record_property)


@pytest.mark.slow
@pytest.mark.criterion(6, "mean intra-parcel variance PLS1 <= GLM at K_p=40 in >= 8/10 seeds")
def test_criterion_6_homogeneity(tmp_path, record_property):
    t0 = time.perf_counter()

    def means(summary):
        rows = {r["method"]: r["mean"] for r in summary["comparison"]["GLM"]}
        return rows["PLS1"], rows["GLM"]

    # fixed cohort, ten pipeline seeds
    fixed = [means(_run_arms(tmp_path, 0, 40, ps)) for ps in range(10)]
    wins_fixed = sum(p <= g for p, g in fixed)
    # ten cohorts, pipeline seed tied to the cohort
    varied = [means(_run_arms(tmp_path, cs, 40, cs, "v")) for cs in range(10)]
    wins_varied = sum(p <= g for p, g in varied)
    elapsed = time.perf_counter() - t0
    ok = wins_fixed >= 8 and wins_varied >= 8 and elapsed < 1200
    detail = (f"fixed cohort {wins_fixed}/10 seeds, varied cohorts {wins_varied}/10; "
              f"mean v PLS1 {np.mean([p for p, _ in fixed]):.3f} vs GLM {np.mean([g for _, g in fixed]):.3f}; "
              f"{elapsed:.1f}s")
    assert verdict(6, ok, detail, record_property)


def brute_greedy(values, coords, R, n):
    order = sorted(range(len(values)), key=lambda i: (-abs(values[i]), i))
    out = []
    for v in order:
        if all(np.sqrt(((coords[v] - coords[u]) ** 2).sum()) >= R for u in out):
            out.append(v)
            if len(out) == n:
                break
    return out


@pytest.mark.criterion(7, "seed selection: spacing, scale invariance, brute-force agreement")
def test_criterion_7_seed_properties(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    spacing_ok = scale_ok = oracle_ok = 0
    trials = 200
    for _ in range(trials):
        dims = tuple(int(d) for d in rng.integers(1, 7, size=3))
        mask = rng.random(dims) > rng.uniform(0, 0.5)
        if not mask.any():
            mask.flat[0] = True
        grid = VolumeGrid(dims, mask)
        assert grid.n_voxels <= 200
        values = rng.normal(size=grid.n_voxels)
        if rng.random() < 0.3:
            values = np.round(values)  # force ties
        R = float(rng.uniform(0.5, 5.0))
        n = int(rng.integers(1, 25))
        s = select_seeds(values, grid, R, n)
        xyz = grid.coords()[s.voxel_rows].astype(float)
        spacing_ok += all(np.linalg.norm(xyz[a] - xyz[b]) >= R for a, b in itertools.combinations(range(len(s)), 2))
        scaled = select_seeds(values * float(rng.uniform(0.01, 100)), grid, R, n)
        scale_ok += np.array_equal(scaled.voxel_rows, s.voxel_rows)
        oracle_ok += s.voxel_rows.tolist() == brute_greedy(values, grid.coords().astype(float), R, n)
    elapsed = time.perf_counter() - t0
    ok = spacing_ok == scale_ok == oracle_ok == trials and elapsed < 30
    assert verdict(7, ok, f"spacing {spacing_ok}/{trials}, scaling {scale_ok}/{trials}, "
                          f"oracle {oracle_ok}/{trials}, {elapsed:.2f}s", record_property)


def _cli(args, cwd, stdin=None):
    return subprocess.run([sys.executable, "-m", "parcelforge.cli", *args], cwd=cwd, input=stdin,
                          capture_output=True, text=True, check=True, env={**os.environ})


def _tree(root):
    return sorted(str(p.relative_to(root)) for p in Path(root).rglob("*") if p.is_file())


@pytest.mark.slow
@pytest.mark.criterion(8, "two identical runs give byte-identical manifests and artifacts")
def test_criterion_8_determinism(tmp_path, record_property):
    outs = []
    for name in ("a", "b"):
        cwd = tmp_path / name
        cwd.mkdir()
        synth = _cli(["synth", "--seed", "7"], cwd)
        _cli(["run", "--out", "out"], cwd, stdin=synth.stdout)
        outs.append(cwd / "out")
    files_a, files_b = _tree(outs[0]), _tree(outs[1])
    same = files_a == files_b and all(filecmp.cmp(outs[0] / f, outs[1] / f, shallow=False) for f in files_a)
    manifest_same = (outs[0] / "manifest.json").read_bytes() == (outs[1] / "manifest.json").read_bytes()
    ok = same and manifest_same and len(files_a) > 10
    assert verdict(8, ok, f"{len(files_a)} files compared, manifests identical: {manifest_same}", record_property)
