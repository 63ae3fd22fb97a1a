"""End-to-end driver: ICs, seeds, PLS features, parcellations and evaluation.

Every artifact is written deterministically and listed with its SHA-256 in
``manifest.json``.  A failing stage still leaves the manifest behind, naming
the stage.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, to_ini
from .core_data import BoldDataset, DesignMatrix, center_rows, unit_normalize_rows
from .errors import DataError, ParcelforgeError, StageError
from .evaluate import (active_parcels, adjusted_rand, compare_methods, glm_tvalues, intra_parcel_variance,
                       pls_tmap, write_comparison_csv, write_reports_csv, write_statmap)
from .ica import ICDecomposition, export_ics, fastica
from .ica_match import (ics_for_subject, pick_ics_by_design, select_task_clusters, similarity_matrix,
                        ward_cluster, write_similarity_csv)
from .io import (dump_json, read_dataset, read_design, sha256_file, write_dataset, write_f64,
                 write_label_volume)
from .parcellate import Parcellation, parcellate_pipeline, spatial_baseline, write_labels_csv
from .pls_core import (TruncationPolicy, build_seed_matrix, covariance_features, kept_components,
                       pca_decompose, pls_fit, whiten_scores)
from .seeds import SEEDS_MULTI_SUBJECT, SEEDS_SINGLE_SUBJECT, select_seeds, write_seeds_csv
from .synthetic import SyntheticCohort

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# cohort directories


def write_cohort(directory, cohort: SyntheticCohort) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    subjects = []
    for s, ds in enumerate(cohort.datasets):
        name = f"sub-{s:02d}"
        write_dataset(d / name, ds, cohort.design)
        subjects.append(name)
    with open(d / "truth.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "label"])
        w.writerows([i, int(lab)] for i, lab in enumerate(cohort.truth_labels))
    spec = asdict(cohort.spec)
    dump_json(d / "cohort.json", {
        "subjects": subjects,
        "spec": spec,
        "per_subject_latency": cohort.per_subject_latency,
        "parcel_regressor": cohort.parcel_regressor.tolist(),
        "parcel_latency": cohort.parcel_latency.tolist(),
    })
    return d


def read_truth(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([int(r["label"]) for r in sorted(rows, key=lambda r: int(r["row"]))], dtype=np.int64)


def load_input(path) -> tuple[list[BoldDataset], DesignMatrix | None, np.ndarray | None]:
    """Read a cohort directory (``cohort.json``) or a single dataset directory."""
    p = Path(path)
    if (p / "cohort.json").exists():
        meta = json.loads((p / "cohort.json").read_text())
        loaded = [read_dataset(p / name) for name in meta["subjects"]]
        datasets = [ds for ds, _ in loaded]
        design = loaded[0][1]
    elif (p / "grid.json").exists():
        ds, design = read_dataset(p)
        datasets = [ds]
    else:
        raise DataError(f"{p} is neither a cohort directory nor a dataset directory")
    if (p / "design.csv").exists() and design is None:
        design = read_design(p / "design.csv")
    truth = read_truth(p / "truth.csv") if (p / "truth.csv").exists() else None
    grids = {ds.grid.dims for ds in datasets}
    if len(grids) != 1 or any(ds.grid != datasets[0].grid for ds in datasets):
        raise DataError("all subjects must share one grid and mask")
    return datasets, design, truth


# ---------------------------------------------------------------------------
# run


class _Run:
    def __init__(self, cfg: PipelineConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.stages: list[dict] = []
        self.warnings: list[str] = []
        self.results: dict = {}

    def artifact(self, path: Path) -> str:
        return str(path.relative_to(self.out))

    def stage(self, name, fn, *args):
        log.info("stage %s", name)
        try:
            files, value = fn(*args)
        except ParcelforgeError as exc:
            self.stages.append({"stage": name, "status": "failed", "error": str(exc)})
            self.write_manifest(failed=name)
            raise StageError(name, exc) from exc
        except Exception as exc:  # noqa: BLE001 - anything else is an internal error for this stage
            self.stages.append({"stage": name, "status": "failed", "error": repr(exc)})
            self.write_manifest(failed=name)
            raise StageError(name, exc) from exc
        self.stages.append({
            "stage": name, "status": "ok",
            "artifacts": {self.artifact(f): sha256_file(f) for f in sorted(files)},
        })
        return value

    def write_manifest(self, failed: str | None = None) -> Path:
        manifest = {
            "tool": "parcelforge",
            "version": __version__,
            "config": self.cfg.to_dict(),
            "interpretations": {
                "SC": "k-means on voxel coordinates alone",
                "pca_truncation": "leading/trailing components dropped as noise; counts are configurable",
                "single_subject_ics": "per regressor, the IC with the highest |correlation|",
                "pls_scores": "kept component scores are whitened before the PLS fit",
                "pls_t": "literal (1 - r^2) denominator" if self.cfg.evaluate.literal_t_denominator
                else "sqrt(1 - r^2) denominator",
            },
            "stages": self.stages,
            "warnings": self.warnings,
            "results": self.results,
            "status": "failed" if failed else "ok",
        }
        if failed:
            manifest["failed_stage"] = failed
        path = self.out / "manifest.json"
        dump_json(path, manifest)
        return path


def run_pipeline(cfg: PipelineConfig, out_dir) -> Path:
    """Execute every stage and return the path of ``manifest.json``.

    Parameters
    ----------
    cfg : PipelineConfig
        ``cfg.input.path`` is a cohort directory (``sub-XX`` folders) or a
        single dataset directory.
    out_dir : str or Path
        Created if missing.  Artifacts of completed stages stay on disk when
        a later stage fails.

    Returns
    -------
    Path

    Raises
    ------
    StageError
        Wraps the first failing stage's error; the manifest records it.
    """
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(cfg, out)
    (out / "config.ini").write_text(to_ini(cfg))

    datasets, design, truth = run.stage("load", _stage_load, cfg)
    if design is None:
        run.stages.append({"stage": "load", "status": "failed", "error": "no design.csv"})
        run.write_manifest(failed="load")
        raise StageError("load", DataError("input has no design.csv; evaluation needs the task design"))
    V = datasets[0].n_voxels
    if cfg.parcellate.K_p > V / 2:
        msg = f"K_p={cfg.parcellate.K_p} exceeds half the voxel count ({V})"
        log.warning(msg)
        run.warnings.append(msg)
    K_p = min(cfg.parcellate.K_p, V)

    ics = run.stage("ica", _stage_ica, run, datasets)
    picks = run.stage("match", _stage_match, run, ics, design)
    seed_sets = run.stage("seeds", _stage_seeds, run, datasets, ics, picks)
    for s, ds in enumerate(datasets):
        run.stage(f"sub-{s:02d}", _stage_subject, run, s, ds, design, seed_sets[s], truth, K_p)
    return run.write_manifest()


def _stage_load(cfg):
    return [], load_input(cfg.input.path)


def _stage_ica(run, datasets):
    cfg = run.cfg.ica
    d = run.out / "ics"
    files, out = [], []
    for s, ds in enumerate(datasets):
        n = cfg.n_components or None
        ic = fastica(ds, n, rng_seed=cfg.rng_seed + s, max_iter=cfg.max_iter, subject_id=s)
        files.extend(export_ics(ic, d))
        out.append(ic)
    return files, out


def _stage_match(run, ics: list[ICDecomposition], design):
    cfg = run.cfg.ica
    if cfg.ic_indices:
        picks = [[(k, int(j)) for k, j in enumerate(cfg.ic_indices)] for _ in ics]
        offsets = np.cumsum([0] + [ic.n_components for ic in ics])
        picks = [[(k, int(offsets[s] + j)) for k, j in p] for s, p in enumerate(picks)]
        mode = "manual"
        files = []
    elif len(ics) == 1:
        picks = [[(k, j) for k, j in enumerate(pick_ics_by_design(ics[0], design))]]
        mode = "best-design-match"
        files = []
    else:
        sim = similarity_matrix(ics, cfg.correlation_mode)
        clus = ward_cluster(sim, cfg.n_clusters)
        selected, clus = select_task_clusters(clus, ics, design, cfg.n_select)
        picks = [ics_for_subject(ic.subject_id, clus, sim, selected) for ic in ics]
        write_similarity_csv(run.out / "similarity.csv", sim)
        dump_json(run.out / "clusters.json", {
            "labels": clus.labels.tolist(),
            "task_scores": clus.cluster_task_scores.tolist(),
            "selected": selected,
        })
        files = [run.out / "similarity.csv", run.out / "clusters.json"]
        mode = "ward-clusters"
    run.results["ic_selection"] = {"mode": mode, "picks": picks}
    return files, picks


def _stage_seeds(run, datasets, ics, picks):
    cfg = run.cfg.seeds
    n = cfg.n_seeds or (SEEDS_SINGLE_SUBJECT if len(datasets) == 1 else SEEDS_MULTI_SUBJECT)
    offsets = np.cumsum([0] + [ic.n_components for ic in ics])
    d = run.out / "seeds"
    d.mkdir(exist_ok=True)
    files, out = [], []
    for s, (ds, ic) in enumerate(zip(datasets, ics)):
        sets = []
        for cluster, pooled in picks[s]:
            local = pooled - offsets[s]
            if not 0 <= local < ic.n_components:
                raise DataError(f"IC index {local} out of range for subject {s}")
            sets.append(select_seeds(ic.maps[local], ds.grid, cfg.radius, n, f"sub{s:02d}_ic{local}"))
            if sets[-1].exhausted:
                run.warnings.append(f"subject {s}: map ic{local} yielded only {len(sets[-1])} of {n} seeds")
        path = d / f"sub-{s:02d}_seeds.csv"
        write_seeds_csv(path, sets, ds.grid)
        files.append(path)
        out.append(sets)
    return files, out


def _stage_subject(run, s, ds: BoldDataset, design, seed_sets, truth, K_p):
    cfg = run.cfg
    d = run.out / f"sub-{s:02d}"
    d.mkdir(exist_ok=True)
    files = []
    Xc = center_rows(ds.X)
    X0, zero_rows = unit_normalize_rows(Xc)
    if zero_rows:
        run.warnings.append(f"subject {s}: {len(zero_rows)} zero-variance voxel rows")
    pca = pca_decompose(Xc)
    policy = TruncationPolicy(cfg.pca.drop_leading, cfg.pca.drop_trailing, cfg.pca.variance_floor_fraction)
    kept = kept_components(pca, policy)
    scores = pca.scores[kept]
    D, dup = build_seed_matrix(ds, seed_sets)
    if dup:
        run.warnings.append(f"subject {s}: {dup} duplicate seed voxel(s) dropped")

    glm = glm_tvalues(ds.X, design)
    plst = pls_tmap(X0, design, scores, literal=cfg.evaluate.literal_t_denominator)
    files.append(write_statmap(d, glm, design.regressor_names))
    files.append(write_statmap(d, plst, design.regressor_names))
    files.extend([d / "tmap_glm.json", d / "tmap_pls.json"])

    pc = cfg.parcellate
    arms: list[tuple[str, Parcellation]] = [("SC", spatial_baseline(ds.grid, K_p, pc.rng_seed, pc.n_restarts))]
    arms.append(("GLM", parcellate_pipeline(glm.t, ds.grid, K_p, pc.dims, pc.rng_seed, pc.n_restarts, "GLM")))
    feature_meta = {}
    for K in cfg.pls_arms():
        model = pls_fit(whiten_scores(scores), D, K)
        ff = covariance_features(X0, model, {
            "seeds": [s_.source_map for s_ in seed_sets], "n_dep": int(D.shape[1]),
            "kept_components": kept.tolist(), "truncation": policy.__dict__,
        })
        tag = f"PLS{K}"
        write_f64(d / f"features_{tag}.f64", ff.R_feat)
        dump_json(d / f"features_{tag}.json", {"K": K, "shape": list(ff.R_feat.shape), **ff.provenance})
        files.extend([d / f"features_{tag}.f64", d / f"features_{tag}.json"])
        feature_meta[tag] = {"B": model.B.tolist()}
        arms.append((tag, parcellate_pipeline(ff, ds.grid, K_p, pc.dims, pc.rng_seed, pc.n_restarts,
                                              f"PLS({K})")))

    reports = {"GLM": [], "PLS": []}
    summary = {}
    for tag, parc in arms:
        path = d / f"labels_{tag}.csv"
        write_labels_csv(path, parc, ds.grid)
        files.append(path)
        files.extend(write_label_volume(d / f"labels_{tag}", ds.grid, parc.labels))
        entry = {"wcss": parc.wcss, **parc.info}
        for kind, stat in (("GLM", glm), ("PLS", plst)):
            rep = intra_parcel_variance(stat, parc, tag)
            reports[kind].append(rep)
            thr = cfg.evaluate.glm_threshold if kind == "GLM" else cfg.evaluate.pls_threshold
            entry[f"active_{kind.lower()}"] = {name: active_parcels(stat, parc, k, thr)
                                               for k, name in enumerate(design.regressor_names)}
        if truth is not None:
            entry["ari_vs_truth"] = adjusted_rand(parc.labels, truth)
        summary[tag] = entry
    for kind in ("GLM", "PLS"):
        rp = d / f"reports_{kind.lower()}.csv"
        cp = d / f"comparison_{kind.lower()}.csv"
        write_reports_csv(rp, reports[kind])
        write_comparison_csv(cp, compare_methods(reports[kind]))
        files.extend([rp, cp])
    dump_json(d / "summary.json", {"arms": summary, "features": feature_meta,
                                   "comparison": {k: compare_methods(v) for k, v in reports.items()}})
    files.append(d / "summary.json")
    run.results[f"sub-{s:02d}"] = {tag: {"ari_vs_truth": e.get("ari_vs_truth")} for tag, e in summary.items()}
    return files, None
