"""Command-line entry point.

Subcommands cover the whole pipeline: image preprocessing, normalization
statistics, synthetic data generation, head training, single-pool and
cross-condition evaluation, and report merging with rendered figures. All
randomness flows from one --seed value; where a subcommand needs several
streams it derives child seeds from consecutive draws of rng_new(seed), in
the order documented per subcommand.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import preprocess as pp
from .core import EmbeddingRecord, EmbeddingSet, rng_new, store_paths, store_read, store_write
from .evaluator import (
    DEFAULT_K,
    condition_matrix,
    cross_condition_eval,
    distance_distributions,
    error_analysis,
    evaluate,
    scenario_family,
)
from .synthetic import SyntheticConfig, make_synthetic_set
from .trainer import (
    LinearHead,
    head_forward,
    head_paths,
    load_head,
    parse_train_config,
    save_head,
    train,
)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _parse_kv_file(path, int_keys=(), float_keys=()):
    values: dict[str, object] = {}
    errors: list[str] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key in int_keys:
                values[key] = int(value)
            elif key in float_keys:
                values[key] = float(value)
            else:
                errors.append(f"line {lineno}: unknown key {key!r}")
        except ValueError:
            errors.append(f"line {lineno}: invalid value for {key!r}: {value!r}")
    if errors:
        raise ValueError("config errors:\n" + "\n".join(errors))
    return values


def cmd_preprocess(args) -> int:
    images_dir = Path(args.images)
    masks_dir = Path(args.masks)
    out_dir = Path(args.out)
    if not images_dir.is_dir():
        return _fail(f"images directory not found: {images_dir}")
    if not masks_dir.is_dir():
        return _fail(f"masks directory not found: {masks_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    cfg = pp.TransformConfig()
    crop_pad = 2
    if args.config:
        try:
            values = _parse_kv_file(
                args.config, int_keys=("target", "crop_pad"), float_keys=("pad_value",)
            )
        except ValueError as exc:
            return _fail(str(exc))
        cfg.target = int(values.get("target", cfg.target))
        cfg.pad_value = float(values.get("pad_value", cfg.pad_value))
        crop_pad = int(values.get("crop_pad", crop_pad))

    images = sorted(images_dir.glob("*.png"))
    if not images:
        return _fail(f"no PNG images in {images_dir}")

    manifest_lines = []
    failures = 0
    for image_path in images:
        mask_path = masks_dir / image_path.name
        if not mask_path.exists():
            mask_path = masks_dir / (image_path.stem + ".json")
        if not mask_path.exists():
            print(f"error: {image_path.name}: no mask found", file=sys.stderr)
            failures += 1
            continue
        try:
            img = pp.load_image(image_path)
            mask = pp.load_mask(mask_path)
            crop = pp.crop_instance(img, mask, pad=crop_pad)
            canvas = pp.resize_pad_square(crop, cfg)
        except Exception as exc:
            print(f"error: {image_path.name}: {exc}", file=sys.stderr)
            failures += 1
            continue
        canvas_path = out_dir / image_path.name
        pp.save_canvas_png(canvas, canvas_path)
        manifest_lines.append(
            json.dumps(
                {
                    "source": str(image_path),
                    "mask": str(mask_path),
                    "canvas": str(canvas_path),
                    "crop_height": crop.shape[0],
                    "crop_width": crop.shape[1],
                },
                sort_keys=True,
            )
        )
    (out_dir / "manifest.jsonl").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    if failures:
        print(f"error: {failures} image(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_stats(args) -> int:
    canvases_dir = Path(args.canvases)
    if not canvases_dir.is_dir():
        return _fail(f"canvases directory not found: {canvases_dir}")
    paths = sorted(canvases_dir.glob("*.png"))
    if not paths:
        return _fail(f"no PNG canvases in {canvases_dir}")
    try:
        mean, std = pp.compute_stats(pp.load_image(p) for p in paths)
    except ValueError as exc:
        return _fail(str(exc))
    Path(args.out).write_text(
        json.dumps({"mean": list(mean), "std": list(std)}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return 0


def cmd_synth(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_test = args.ids - args.train_ids - args.val_ids
    if n_test < 0:
        return _fail("train and val id counts exceed total ids")
    cfg = SyntheticConfig(
        n_ids=args.ids,
        instances_per_id=args.instances,
        dim=args.dim,
        latent_dim=args.latent_dim,
        nuisance_dim=args.nuisance_dim,
        flip_dim=args.flip_dim,
        noise=args.noise,
        flip_offset=args.flip_offset,
        touched_noise_scale=args.touched_noise,
        train_ids=args.train_ids,
        val_ids=args.val_ids,
        test_ids=n_test,
        seed=args.seed,
    )
    try:
        es = make_synthetic_set(cfg)
    except ValueError as exc:
        return _fail(str(exc))
    from .core import Split
    from .synthetic import split_set

    for split in Split:
        subset = split_set(es, split)
        if not subset.records:
            continue
        store_write(subset, *store_paths(out_dir / split.value))
    (out_dir / "params.json").write_text(
        json.dumps(cfg.__dict__, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return 0


def _read_store(base) -> EmbeddingSet:
    meta, blob = store_paths(base)
    if not meta.exists() or not blob.exists():
        raise FileNotFoundError(f"store not found: expected {meta} and {blob}")
    return store_read(meta, blob)


def cmd_train(args) -> int:
    try:
        cfg = parse_train_config(args.config)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    try:
        train_set = _read_store(args.train)
        val_set = _read_store(args.val)
        head, history = train(train_set, val_set, cfg)
    except (FileNotFoundError, ValueError) as exc:
        return _fail(str(exc))

    save_head(head, *head_paths(args.out_head))
    with open(args.out_history, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr", "active_triplets"])
        for row in history.rows():
            writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3]), row[4]])
    return 0


def _project_set(es: EmbeddingSet, head: LinearHead) -> EmbeddingSet:
    emb = head_forward(head, es.matrix())
    records = [
        EmbeddingRecord(
            record_id=rec.record_id,
            fish_id=rec.fish_id,
            species=rec.species,
            condition=rec.condition,
            split=rec.split,
            vector=emb[i].astype(np.float32),
        )
        for i, rec in enumerate(es.records)
    ]
    return EmbeddingSet(dim=emb.shape[1], records=records)


def _load_eval_set(store_base, head_base) -> EmbeddingSet:
    es = _read_store(store_base)
    if head_base:
        head = load_head(*head_paths(head_base))
        es = _project_set(es, head)
    return es


def _report_side_paths(out_path):
    base = Path(out_path)
    if base.suffix == ".json":
        base = base.with_suffix("")
    return (
        base.with_name(base.name + ".distances.csv"),
        base.with_name(base.name + ".kde.csv"),
    )


def cmd_eval(args) -> int:
    # child seeds: protocol uses --seed directly; the pair sampler uses the
    # first draw of rng_new(seed)
    try:
        es = _load_eval_set(args.store, args.head)
        report = evaluate(es, seed=args.seed, k=args.k)
        samples = distance_distributions(
            es, seed=rng_new(args.seed).next(), max_pairs=args.max_pairs
        )
    except (FileNotFoundError, ValueError) as exc:
        return _fail(str(exc))

    Path(args.out).write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    dist_path, kde_path = _report_side_paths(args.out)
    with open(dist_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair_type", "distance"])
        for value in samples.positive:
            writer.writerow(["positive", repr(float(value))])
        for value in samples.negative:
            writer.writerow(["negative", repr(float(value))])
    if samples.kde is not None:
        grid, pos_d, neg_d = samples.kde
        with open(kde_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "density_pos", "density_neg"])
            for x, p, n in zip(grid, pos_d, neg_d):
                writer.writerow([repr(float(x)), repr(float(p)), repr(float(n))])
    return 0


def cmd_crosseval(args) -> int:
    scenarios = condition_matrix()
    try:
        es = _load_eval_set(args.store, args.head)
        reports = cross_condition_eval(es, scenarios, seed=args.seed, k=args.k)
    except (FileNotFoundError, ValueError) as exc:
        return _fail(str(exc))

    cells = []
    for report, (qc, gc) in zip(reports, scenarios):
        _, _, confusions = error_analysis(report.per_query)
        cell = report.to_json_dict()
        cell["query_condition"] = qc.label
        cell["gallery_condition"] = gc.label
        cell["family"] = scenario_family(qc, gc)
        cell["confusions"] = confusions
        cells.append(cell)
    Path(args.out).write_text(
        json.dumps(
            {"k": args.k, "seed": args.seed, "num_cells": len(cells), "cells": cells},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return 0


def cmd_report(args) -> int:
    from . import plotting

    rows = []
    kde_curves = {}
    matrices = {}
    k_values = set()
    for report_path in args.reports:
        path = Path(report_path)
        if not path.exists():
            return _fail(f"report not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        run = path.stem
        if "cells" in data:
            matrices[run] = data["cells"]
            continue
        k_values.add(data["k"])
        rows.append(
            {
                "run": run,
                "r1": data["r1"],
                "map_at_k": data["map_at_k"],
                "k": data["k"],
                "num_queries": data["num_queries"],
                "intra_errors": data["errors"]["intra"],
                "inter_errors": data["errors"]["inter"],
            }
        )
        _, kde_path = _report_side_paths(path)
        if kde_path.exists():
            grid, pos_d, neg_d = [], [], []
            with open(kde_path, newline="", encoding="utf-8") as fh:
                for record in csv.DictReader(fh):
                    grid.append(float(record["x"]))
                    pos_d.append(float(record["density_pos"]))
                    neg_d.append(float(record["density_neg"]))
            kde_curves[run] = (np.array(grid), np.array(pos_d), np.array(neg_d))

    if len(k_values) > 1:
        return _fail(f"conflicting k values across reports: {sorted(k_values)}")
    rows.sort(key=lambda row: row["run"])

    out_base = Path(args.out)
    csv_path = out_base.with_name(out_base.name + ".csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "run",
                "r1",
                "map_at_k",
                "k",
                "num_queries",
                "intra_errors",
                "inter_errors",
            ],
        )
        writer.writeheader()
        writer.writerows(rows)

    if rows:
        plotting.save_metric_bars(rows, out_base.with_name(out_base.name + ".png"))
    if kde_curves:
        plotting.save_distance_curves(
            kde_curves, out_base.with_name(out_base.name + "_distances.png")
        )
    for run, cells in sorted(matrices.items()):
        plotting.save_condition_matrix(
            cells, out_base.with_name(f"{out_base.name}_{run}_matrix.png")
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reidkit",
        description="Metric-learning re-identification toolkit over embedding stores",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="crop, resize and pad images to square canvases")
    p.add_argument("--images", required=True, help="directory of 8-bit RGB PNGs")
    p.add_argument("--masks", required=True, help="directory of PNG or polygon-JSON masks")
    p.add_argument("--out", required=True, help="output directory for canvases + manifest")
    p.add_argument("--config", help="key = value transform config (target, pad_value, crop_pad)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("stats", help="per-channel mean/std over canvases")
    p.add_argument("--canvases", required=True)
    p.add_argument("--out", required=True, help="output JSON file")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate synthetic embedding stores")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ids", type=int, default=50)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--latent-dim", type=int, default=16)
    p.add_argument("--nuisance-dim", type=int, default=24)
    p.add_argument("--flip-dim", type=int, default=8)
    p.add_argument("--noise", type=float, default=1.4)
    p.add_argument("--flip-offset", type=float, default=0.0)
    p.add_argument("--touched-noise", type=float, default=1.0)
    p.add_argument("--train-ids", type=int, default=25)
    p.add_argument("--val-ids", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the projection head on frozen features")
    p.add_argument("--train", required=True, help="train store base path")
    p.add_argument("--val", required=True, help="validation store base path")
    p.add_argument("--config", required=True, help="key = value training config")
    p.add_argument("--out-head", required=True, help="output head base path")
    p.add_argument("--out-history", required=True, help="output history CSV")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="single-pool query/gallery evaluation")
    p.add_argument("--store", required=True, help="store base path")
    p.add_argument("--head", help="optional head base path (omit for zero-shot features)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--max-pairs", type=int, default=10_000)
    p.add_argument("--out", required=True, help="output report JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("crosseval", help="4x4 cross-condition evaluation matrix")
    p.add_argument("--store", required=True)
    p.add_argument("--head", help="optional head base path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--out", required=True, help="output matrix JSON")
    p.set_defaults(func=cmd_crosseval)

    p = sub.add_parser("report", help="merge reports into a CSV table and figures")
    p.add_argument("reports", nargs="+", help="report JSON files")
    p.add_argument("--out", required=True, help="output base path")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface anything unexpected as a diagnostic
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
