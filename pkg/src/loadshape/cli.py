"""Command-line pipeline: synth, ingest, clean, label, profile, cluster, elbow, report.

Stages hand files off through a run directory (--out) and record every output
with a sha256 digest in manifest.json. All randomness flows from --seed, and
results are independent of --threads, so reruns with identical inputs and
flags are byte-identical.

Exit status: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from loadshape import __version__, cleaning, cluster, daytype, ingest, profiles, report, synth
from loadshape.errors import LoadShapeError, MissingFileError

logger = logging.getLogger(__name__)

_MAX_SEED = (1 << 64) - 1


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value <= _MAX_SEED:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _rel(path, out_dir: Path) -> str | None:
    """Record paths relative to the run directory so identical pipelines in
    different locations produce identical manifests."""
    if path is None:
        return None
    try:
        return os.path.relpath(path, out_dir)
    except ValueError:
        return str(path)


def _update_manifest(out_dir: Path, stage: str, params: dict, outputs) -> Path:
    """Record stage params and output digests. Deliberately carries no
    timestamps or thread counts so reruns stay byte-identical."""
    path = out_dir / "manifest.json"
    if path.is_file():
        manifest = json.loads(path.read_text())
    else:
        manifest = {"run_id": out_dir.name, "version": __version__, "stages": {}, "outputs": {}}
    manifest["stages"][stage] = params
    for output in outputs:
        output = Path(output)
        manifest["outputs"][output.relative_to(out_dir).as_posix()] = _sha256(output)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _require(path: Path, producer: str) -> Path:
    if not path.is_file():
        raise MissingFileError(f"{path} not found; run `loadshape {producer}` first")
    return path


def cmd_synth(args) -> int:
    spec = synth.default_spec(
        seed=args.seed,
        days=args.days,
        noise_fraction=args.noise_pct,
        mask_day_fraction=args.mask_days,
        mask_hour_fraction=args.mask_hours,
    )
    dataset, ledger = synth.generate(spec)
    paths = synth.write_synth_csvs(dataset, ledger, args.out)
    _update_manifest(
        args.out,
        "synth",
        {"seed": args.seed, "days": args.days, "noise_pct": args.noise_pct,
         "mask_days": args.mask_days, "mask_hours": args.mask_hours},
        paths,
    )
    print(f"generated {spec.property_count} properties x {spec.days} days in {args.out / 'data'}")
    return 0


def cmd_ingest(args) -> int:
    schema_map = ingest.read_schema_map(args.config) if args.config else None
    dataset, load_report = ingest.load_dataset(args.input, schema_map=schema_map)
    paths = ingest.write_dataset(dataset, args.out)
    if load_report.merge_report.conflicts:
        print(f"warning: {len(load_report.merge_report.conflicts)} environment disagreements resolved by mean",
              file=sys.stderr)
    _update_manifest(
        args.out,
        "ingest",
        {"input_dir": _rel(args.input, args.out), "schema_map": _rel(args.config, args.out)},
        paths,
    )
    print(f"{len(dataset.property_ids)} properties, {len(dataset.day_records)} day records")
    return 0


def cmd_clean(args) -> int:
    _require(args.out / "dataset.csv", "ingest")
    dataset = ingest.read_dataset(args.out)
    labels = None
    if args.policy == "impute_by_daytype":
        labels = daytype.read_labels_csv(_require(args.out / "labels.csv", "label"))
    cleaned, validity, log = cleaning.clean(dataset, args.policy, labels)
    paths = ingest.write_dataset(cleaned, args.out, stem="dataset_clean", with_environment=False)
    report_path = args.out / "validity_report.txt"
    report_path.write_text(validity.format_table() + "\n")
    log_path = cleaning.write_imputation_log(log, args.out / "imputation_log.csv")
    _update_manifest(args.out, "clean", {"policy": args.policy}, [*paths, report_path, log_path])
    print(validity.format_table())
    print(f"retained {len(cleaned.day_records)} days ({len(log)} imputation log entries)")
    return 0


def cmd_label(args) -> int:
    _require(args.out / "dataset.csv", "ingest")
    dataset = ingest.read_dataset(args.out)
    scheme = daytype.read_scheme(args.config) if args.config else daytype.DayTypeScheme()
    if args.holidays:
        scheme = replace(scheme, holidays=daytype.read_holidays(args.holidays))
    labels = daytype.label_dataset(dataset, scheme, drop_unlabeled=args.drop_unlabeled)
    path = daytype.write_labels_csv(labels, args.out / "labels.csv")
    _update_manifest(
        args.out,
        "label",
        {"scheme": _rel(args.config, args.out),
         "holidays": _rel(args.holidays, args.out),
         "drop_unlabeled": args.drop_unlabeled},
        [path],
    )
    print(f"labeled {len(labels)} property-days across {len(set(labels.values()))} day types")
    return 0


def cmd_profile(args) -> int:
    _require(args.out / "dataset_clean.csv", "clean")
    cleaned = ingest.read_dataset(args.out, stem="dataset_clean")
    labels = None
    if args.group == "property-label":
        labels = daytype.read_labels_csv(_require(args.out / "labels.csv", "label"))
    matrix = profiles.profile_matrix(cleaned, labels=labels, mode=args.mode)
    path = profiles.write_profiles_csv(matrix, args.out / "profiles.csv")
    _update_manifest(args.out, "profile", {"group": args.group, "mode": args.mode}, [path])
    print(f"{len(matrix)} profiles ({args.mode} mode)")
    return 0


def cmd_cluster(args) -> int:
    profile_list = profiles.read_profiles_csv(_require(args.out / "profiles.csv", "profile"))
    config = cluster.KMeansConfig(k=args.k, restarts=args.restarts, seed=args.seed)
    result = cluster.kmeans_best(profile_list, config, threads=args.threads)
    path = cluster.write_result_json(result, config, args.out / "clusters.json", profile_refs=profile_list)
    _update_manifest(
        args.out, "cluster",
        {"k": args.k, "restarts": args.restarts, "seed": args.seed},
        [path],
    )
    sizes = [result.assignments.count(j) for j in range(result.k)]
    print(f"k={args.k}: total WCSS {result.total_wcss:.6g}, cluster sizes {sizes}, "
          f"winning restart {result.winning_restart}")
    return 0


def cmd_elbow(args) -> int:
    profile_list = profiles.read_profiles_csv(_require(args.out / "profiles.csv", "profile"))
    if args.kmax - args.kmin < 2:
        raise ValueError(f"--kmin {args.kmin} --kmax {args.kmax}: need at least 3 cluster counts")
    config = cluster.KMeansConfig(k=args.kmin, restarts=args.restarts, seed=args.seed)
    elbow = cluster.elbow_scan(profile_list, args.kmin, args.kmax, config, threads=args.threads)
    path = cluster.write_elbow_csv(elbow, args.out / "elbow.csv")
    _update_manifest(
        args.out, "elbow",
        {"kmin": args.kmin, "kmax": args.kmax, "restarts": args.restarts, "seed": args.seed},
        [path],
    )
    for k, w in elbow.entries:
        marker = "  <- suggested" if k == elbow.suggested_k else ""
        print(f"k={k}: wcss={w:.6g}{marker}")
    if elbow.degenerate:
        print("warning: degenerate (flat) curve")
    return 0


def cmd_report(args) -> int:
    profile_list = profiles.read_profiles_csv(_require(args.out / "profiles.csv", "profile"))
    clusters_path = _require(args.out / "clusters.json", "cluster")
    doc = json.loads(clusters_path.read_text())
    result = cluster.ClusteringResult(
        assignments=tuple(doc["assignments"]),
        centroids=tuple(
            profiles.DayProfile(tuple(values), doc["units"], f"cluster{j}", "centroid")
            for j, values in enumerate(doc["centroids"])
        ),
        per_cluster_wcss=tuple(doc["per_cluster_wcss"]),
        total_wcss=doc["total_wcss"],
        winning_restart=doc["winning_restart"],
        iterations_used=doc["iterations_used"],
    )
    run_id = args.run_id or args.out.name
    plots = args.out / "plots"
    paths = report.render_cluster_panels(result, profile_list, plots, run_id)
    if (args.out / "elbow.csv").is_file():
        elbow = cluster.read_elbow_csv(args.out / "elbow.csv")
        paths.extend(report.render_elbow(elbow, plots, run_id))
    if args.refs:
        refs = report.read_reference_csv(args.refs)
        paths.extend(report.overlay_reference(result.centroids, refs, plots, run_id))
    _update_manifest(
        args.out, "report",
        {"run_id": run_id, "refs": _rel(args.refs, args.out)},
        paths,
    )
    print(f"wrote {len(paths)} plot files to {plots}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadshape",
        description="Cluster household meter readings into representative daily load profiles.",
    )
    parser.add_argument("--version", action="version", version=f"loadshape {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, required=True, help="run directory for stage outputs")
    common.add_argument("--seed", type=_seed, default=0, help="base seed for all randomness (default 0)")
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="worker cap; results are independent of this")
    common.add_argument("--config", type=Path, default=None,
                        help="stage config file (ingest: schema map, label: day-type scheme)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset with ground truth")
    p.add_argument("--days", type=_positive_int, default=28)
    p.add_argument("--noise-pct", type=float, default=0.05, help="noise sigma as a fraction of mean amplitude")
    p.add_argument("--mask-days", type=float, default=0.1, help="fraction of days corrupted")
    p.add_argument("--mask-hours", type=float, default=0.25, help="fraction of hours removed per corrupted day")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="load per-dwelling CSVs into the run directory")
    p.add_argument("--in", dest="input", type=Path, required=True, help="directory of dwelling CSV files")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("clean", parents=[common], help="apply a missing-data policy")
    p.add_argument("--policy", choices=cleaning.POLICIES, default="omit")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("label", parents=[common], help="assign day-type labels")
    p.add_argument("--holidays", type=Path, default=None, help="holiday file, one ISO date per line")
    p.add_argument("--drop-unlabeled", action="store_true", help="drop days that cannot be labeled")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("profile", parents=[common], help="build representative profiles")
    p.add_argument("--group", choices=("property", "property-label"), default="property")
    p.add_argument("--mode", choices=profiles.SIMILARITY_MODES, default="amplitude")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("cluster", parents=[common], help="multi-restart k-means at a fixed k")
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--restarts", type=_positive_int, default=1000)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("elbow", parents=[common], help="scan a k range and suggest the elbow")
    p.add_argument("--kmin", type=_positive_int, default=2)
    p.add_argument("--kmax", type=_positive_int, default=10)
    p.add_argument("--restarts", type=_positive_int, default=1000)
    p.set_defaults(func=cmd_elbow)

    p = sub.add_parser("report", parents=[common], help="render cluster panels, elbow curve, overlays")
    p.add_argument("--refs", type=Path, default=None, help="reference profile CSV (name,h00..h23 or name,p00..p47)")
    p.add_argument("--run-id", default=None, help="prefix for plot files (default: run directory name)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LoadShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
