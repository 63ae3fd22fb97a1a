"""``parcelforge`` command-line interface.

Exit codes: 0 success, 2 usage, 3 data/format, 4 numerical, 5 internal.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from ._accel import set_workers
from .config import PipelineConfig, load_config, to_ini
from .core_data import center_rows, mask_and_flatten, unit_normalize_rows
from .errors import DataError, ParameterError, ParcelforgeError, StageError
from .evaluate import (compare_methods, glm_tvalues, intra_parcel_variance, pls_tmap, write_comparison_csv,
                       write_reports_csv, write_statmap)
from .ica import export_ics, fastica, import_ics
from .ica_match import select_task_clusters, similarity_matrix, ward_cluster, write_similarity_csv
from .io import dump_json, read_dataset, read_design, read_f64, write_dataset, write_design, write_f64
from .nifti import load_nifti
from .parcellate import Parcellation, parcellate_pipeline, spatial_baseline, write_labels_csv
from .pipeline import run_pipeline, write_cohort
from .pls_core import (TruncationPolicy, build_seed_matrix, covariance_features, pca_decompose, pls_fit, truncate,
                       whiten_scores)
from .seeds import read_seeds_csv, select_seeds, write_seeds_csv
from .synthetic import SyntheticCohortSpec, generate_synthetic_cohort

log = logging.getLogger("parcelforge")


def _cmd_synth(a):
    spec = SyntheticCohortSpec(
        n_subjects=a.subjects, dims=tuple(a.dims), n_true_parcels=a.parcels, T=a.timepoints,
        tr_seconds=a.tr, hrf_latency_jitter_seconds=a.jitter, noise_sigma=a.noise, rng_seed=a.seed,
        n_task_parcels=a.task_parcels,
    )
    out = Path(a.out or f"synth-{a.seed}")
    write_cohort(out, generate_synthetic_cohort(spec))
    print(out)


def _cmd_ingest(a):
    vol, voxel_size = load_nifti(a.nifti)
    mask = "nonzero_variance" if a.mask == "nonzero_variance" else np.ones(vol.shape[:3], dtype=bool)
    ds = mask_and_flatten(vol, mask, a.tr)
    design = read_design(a.design) if a.design else None
    write_dataset(a.out, ds, design)
    print(f"{a.out}: V={ds.n_voxels} T={ds.n_timepoints} voxel size={voxel_size}")


def _cmd_ica(a):
    out = Path(a.out)
    if a.import_timecourses:
        n_vox = read_dataset(a.input)[0].n_voxels if a.input else None
        ics = import_ics(a.import_timecourses, a.import_maps, a.subject, n_vox)
    else:
        if not a.input:
            raise ParameterError("missing required field: --input (or --import-timecourses)")
        ds, _ = read_dataset(a.input)
        ics = fastica(ds, a.n_components or None, rng_seed=a.seed, subject_id=a.subject)
    for p in export_ics(ics, out):
        print(p)


def _load_ic_dir(directory):
    d = Path(directory)
    out = []
    for tc in sorted(d.glob("sub-*_timecourses.csv")):
        sid = int(tc.name.split("_")[0][4:])
        out.append(import_ics(tc, d / f"sub-{sid:02d}_maps.f64", sid))
    if not out:
        raise DataError(f"no sub-XX_timecourses.csv files in {d}")
    return out


def _cmd_match(a):
    ics = _load_ic_dir(a.ics_dir)
    design = read_design(a.design)
    sim = similarity_matrix(ics, a.mode)
    clus = ward_cluster(sim, a.n_clusters)
    selected, clus = select_task_clusters(clus, ics, design, a.n_select)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_similarity_csv(out / "similarity.csv", sim)
    dump_json(out / "clusters.json", {"labels": clus.labels.tolist(), "selected": selected,
                                      "task_scores": clus.cluster_task_scores.tolist()})
    print(f"selected clusters: {selected}")


def _cmd_seeds(a):
    ds, _ = read_dataset(a.input)
    ics = import_ics(Path(a.ics_dir) / f"sub-{a.subject:02d}_timecourses.csv",
                     Path(a.ics_dir) / f"sub-{a.subject:02d}_maps.f64", a.subject, ds.n_voxels)
    sets = [select_seeds(ics.maps[j], ds.grid, a.radius, a.n_seeds, f"ic{j}") for j in a.ic_index]
    write_seeds_csv(a.out, sets, ds.grid)
    for s in sets:
        print(f"{s.source_map}: {len(s)} seeds{' (exhausted)' if s.exhausted else ''}")


def _policy(a):
    return TruncationPolicy(a.drop_leading, a.drop_trailing, a.variance_floor)


def _cmd_pls(a):
    ds, _ = read_dataset(a.input)
    Xc = center_rows(ds.X)
    X0, _ = unit_normalize_rows(Xc)
    scores = truncate(pca_decompose(Xc), _policy(a))
    D, _ = build_seed_matrix(ds, read_seeds_csv(a.seeds))
    ff = covariance_features(X0, pls_fit(whiten_scores(scores), D, a.K), {"seeds_file": str(a.seeds)})
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_f64(out / "features.f64", ff.R_feat)
    dump_json(out / "features.json", {"K": ff.K, "shape": list(ff.R_feat.shape),
                                      "truncation": _policy(a).__dict__, **ff.provenance})
    print(out / "features.f64")


def _cmd_parcellate(a):
    ds, design = read_dataset(a.input)
    if a.spatial:
        parc = spatial_baseline(ds.grid, a.K_p, a.seed, a.restarts)
    elif a.glm:
        if design is None:
            raise DataError("--glm needs design.csv in the dataset directory")
        parc = parcellate_pipeline(glm_tvalues(ds.X, design).t, ds.grid, a.K_p, a.dims, a.seed, a.restarts, "GLM")
    elif a.features:
        R = read_f64(a.features, n_rows=ds.n_voxels)
        parc = parcellate_pipeline(R, ds.grid, a.K_p, a.dims, a.seed, a.restarts, f"PLS({R.shape[1]})")
    else:
        raise ParameterError("missing required field: one of --features, --glm, --spatial")
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_labels_csv(out / "labels.csv", parc, ds.grid)
    print(out / "labels.csv")


def _read_labels(path, V):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    labels = np.full(V, -1, dtype=np.int64)
    for r in rows:
        labels[int(r["row"])] = int(r["label"])
    if np.any(labels < 0):
        raise DataError(f"{path} does not label every voxel")
    return labels


def _cmd_evaluate(a):
    ds, design = read_dataset(a.input)
    if a.design:
        design = read_design(a.design)
    if design is None:
        raise ParameterError("missing required field: --design (no design.csv in dataset)")
    Xc = center_rows(ds.X)
    X0, _ = unit_normalize_rows(Xc)
    glm = glm_tvalues(ds.X, design)
    plst = pls_tmap(X0, design, truncate(pca_decompose(Xc), _policy(a)), literal=a.literal_t_denominator)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_statmap(out, glm, design.regressor_names)
    write_statmap(out, plst, design.regressor_names)
    for kind, stat in (("glm", glm), ("pls", plst)):
        reports = [intra_parcel_variance(stat, _read_labels(p, ds.n_voxels), Path(p).parent.name or Path(p).stem)
                   for p in a.labels]
        write_reports_csv(out / f"reports_{kind}.csv", reports)
        write_comparison_csv(out / f"comparison_{kind}.csv", compare_methods(reports))
    print(out)


def _cmd_run(a):
    cfg = load_config(a.config) if a.config else PipelineConfig()
    if a.input:
        cfg.input.path = a.input
    elif not cfg.input.path and not sys.stdin.isatty():
        line = sys.stdin.readline().strip()
        if line:
            cfg.input.path = line
    for key in ("K_p", "dims"):
        val = getattr(a, key)
        if val is not None:
            setattr(cfg.parcellate, key, val)
    if a.seed is not None:
        cfg.parcellate.rng_seed = a.seed
        cfg.ica.rng_seed = a.seed
    if a.literal_t_denominator:
        cfg.evaluate.literal_t_denominator = True
    if a.ic_index:
        cfg.ica.ic_indices = list(a.ic_index)
    if a.dump_config:
        Path(a.dump_config).write_text(to_ini(cfg))
        return
    cfg.validate()
    print(run_pipeline(cfg, a.out))


def _cmd_compare(a):
    by_method: dict[str, list[float]] = {}
    for path in a.reports:
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                by_method.setdefault(r["method"], []).append(float(r["v"]))
    if len(by_method) < 2:
        raise ParameterError("compare needs at least two methods")
    rows = []
    for m, vals in by_method.items():
        v = np.asarray(vals)
        q1, _, q3 = np.percentile(v, [25, 50, 75])
        rows.append({"method": m, "mean": float(v.mean()), "q1": float(q1), "q3": float(q3)})
    if a.out:
        write_comparison_csv(a.out, rows)
    w = csv.writer(sys.stdout)
    w.writerow(["method", "mean", "q1", "q3"])
    for r in rows:
        w.writerow([r["method"], f"{r['mean']:.6g}", f"{r['q1']:.6g}", f"{r['q3']:.6g}"])


def _add_policy_args(p):
    p.add_argument("--drop-leading", type=int, default=2)
    p.add_argument("--drop-trailing", type=int, default=0)
    p.add_argument("--variance-floor", type=float, default=1e-4)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parcelforge", description=__doc__.splitlines()[0])
    ap.add_argument("--workers", type=int, default=0, help="threads for the compiled kernels")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=1)
    p.add_argument("--dims", type=int, nargs=3, default=[16, 16, 4])
    p.add_argument("--parcels", type=int, default=8)
    p.add_argument("--task-parcels", type=int, default=None)
    p.add_argument("--timepoints", type=int, default=120)
    p.add_argument("--tr", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--jitter", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("ingest", help="convert a NIfTI-1 file into a dataset directory")
    p.add_argument("--nifti", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask", choices=["nonzero_variance", "all"], default="nonzero_variance")
    p.add_argument("--tr", type=float, default=3.0)
    p.add_argument("--design")
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("ica", help="run FastICA, or import external ICs")
    p.add_argument("--input")
    p.add_argument("--out", required=True)
    p.add_argument("--n-components", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subject", type=int, default=0)
    p.add_argument("--import-timecourses")
    p.add_argument("--import-maps")
    p.set_defaults(fn=_cmd_ica)

    p = sub.add_parser("match", help="cluster ICs across subjects and pick task clusters")
    p.add_argument("--ics-dir", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["absolute", "signed"], default="absolute")
    p.add_argument("--n-clusters", type=int, default=3)
    p.add_argument("--n-select", type=int, default=2)
    p.set_defaults(fn=_cmd_match)

    p = sub.add_parser("seeds", help="pick seed voxels from IC maps")
    p.add_argument("--input", required=True)
    p.add_argument("--ics-dir", required=True)
    p.add_argument("--subject", type=int, default=0)
    p.add_argument("--ic-index", type=int, action="append", required=True)
    p.add_argument("--radius", type=float, default=6.0)
    p.add_argument("--n-seeds", type=int, default=30)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_seeds)

    p = sub.add_parser("pls", help="compute the PLS feature field")
    p.add_argument("--input", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_policy_args(p)
    p.set_defaults(fn=_cmd_pls)

    p = sub.add_parser("parcellate", help="spectral parcellation of a feature field")
    p.add_argument("--input", required=True)
    p.add_argument("--features")
    p.add_argument("--glm", action="store_true", help="use GLM t-vectors as features")
    p.add_argument("--spatial", action="store_true", help="k-means on coordinates only")
    p.add_argument("--K-p", dest="K_p", type=int, default=600)
    p.add_argument("--dims", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_parcellate)

    p = sub.add_parser("evaluate", help="t-maps and intra-parcel variance for labelings")
    p.add_argument("--input", required=True)
    p.add_argument("--labels", nargs="+", required=True)
    p.add_argument("--design")
    p.add_argument("--literal-t-denominator", action="store_true")
    p.add_argument("--out", required=True)
    _add_policy_args(p)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("--config")
    p.add_argument("--input", help="cohort or dataset directory (read from stdin when piped)")
    p.add_argument("--out", default="parcelforge_out")
    p.add_argument("--K-p", dest="K_p", type=int)
    p.add_argument("--dims", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ic-index", type=int, action="append")
    p.add_argument("--literal-t-denominator", action="store_true")
    p.add_argument("--dump-config", help="write the effective config and exit")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("compare", help="mean/quartile table from report CSVs")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    set_workers(args.workers)
    try:
        args.fn(args)
    except StageError as exc:
        print(f"parcelforge: {exc}", file=sys.stderr)
        return exc.exit_code
    except ParcelforgeError as exc:
        print(f"parcelforge: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"parcelforge: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001
        print(f"parcelforge: internal error: {exc!r}", file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
