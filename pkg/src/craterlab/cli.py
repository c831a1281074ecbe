"""Command-line entry point.

Subcommands mirror the pipeline stages: simgen, ingest, tile, rasterize,
train-translator, translate, train-segmenter, evaluate, compare, and the
end-to-end experiment. Exit codes: 0 success, 1 validation error,
2 runtime failure.
"""

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from craterlab import evalmetrics, imgio, ingest, pipeline, tiling

log = logging.getLogger("craterlab")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="craterlab",
        description="Desk-scale sim-to-real lunar crater segmentation pipeline.")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_required=True):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--seed", type=int, default=None, help="global seed override")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="config override (repeatable)")
        p.add_argument("--device", choices=["cpu", "gpu"], default=None)

    p = sub.add_parser("simgen", help="generate simulated scenes with ground truth")
    add_common(p)
    p.add_argument("--count", type=int, default=1, help="number of scenes")
    p.add_argument("--domain", choices=["sim", "pseudo-real"], default="sim")
    p.add_argument("--split", default="train", choices=["train", "val", "test"])

    p = sub.add_parser("ingest", help="load a crater database and project to pixels")
    add_common(p)
    p.add_argument("--db", required=True, help="crater database CSV")
    p.add_argument("--schema", required=True,
                   help="column map, e.g. id=CRATER_ID,lat=LAT,lon=LON,radius=RAD_KM")
    p.add_argument("--mosaic", help="mosaic image (PNG/TIFF) for georeference dims")
    p.add_argument("--width-px", type=int, help="mosaic width if --mosaic omitted")
    p.add_argument("--height-px", type=int, help="mosaic height if --mosaic omitted")
    p.add_argument("--pixel-scale-m", type=float, default=100.0)
    p.add_argument("--lat-min", type=float, default=-60.0)
    p.add_argument("--lat-max", type=float, default=60.0)
    p.add_argument("--lon-min", type=float, default=0.0)
    p.add_argument("--lon-max", type=float, default=360.0)
    p.add_argument("--max-radius-km", type=float, default=16.0)

    p = sub.add_parser("tile", help="slice an image into overlapping tiles")
    add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--parent-id", default=None, help="defaults to the image stem")
    p.add_argument("--tile-px", type=int, default=tiling.TILE_PX)
    p.add_argument("--stride-px", type=int, default=tiling.STRIDE_PX)
    p.add_argument("--flush", action="store_true",
                   help="add flush tiles at the ragged right/bottom edge")

    p = sub.add_parser("rasterize", help="rasterize crater masks for a tile set")
    add_common(p)
    p.add_argument("--tiles-manifest", required=True,
                   help="tiling manifest JSON written by the tile subcommand")
    p.add_argument("--tiles-dir", default=None,
                   help="directory with the tile PNGs (defaults to the manifest dir)")
    p.add_argument("--craters", required=True,
                   help="CSV of parent-frame craters (cx_px, cy_px, r_px)")
    p.add_argument("--split", default="train")

    p = sub.add_parser("train-translator", help="train the sim-to-real translator")
    add_common(p)
    p.add_argument("--sim-tiles", required=True, help="dataset manifest or tile dir")
    p.add_argument("--real-tiles", required=True, help="dataset manifest or tile dir")

    p = sub.add_parser("translate", help="apply a trained translator to tiles")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tiles", required=True, help="dataset manifest or tile dir")

    p = sub.add_parser("train-segmenter", help="train the crater segmenter")
    add_common(p)
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--val-manifest", required=True)

    p = sub.add_parser("evaluate", help="evaluate a segmenter on a dataset")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--averaging", choices=["per_image", "pooled"], default="per_image")

    p = sub.add_parser("compare", help="compare two metric reports")
    add_common(p, out_required=False)
    p.add_argument("--report-a", help="baseline report JSON")
    p.add_argument("--report-b", help="candidate report JSON")
    p.add_argument("--label-a", default=None)
    p.add_argument("--label-b", default=None)
    p.add_argument("--fixture", action="store_true",
                   help="compare the shipped published reference reports")

    p = sub.add_parser("experiment", help="run the full two-stage experiment")
    add_common(p)

    return parser


def _load_cfg(args):
    return pipeline.load_config(
        path=args.config, overrides=args.overrides,
        seed=args.seed, device=args.device)


def _parse_schema(text):
    schema = {}
    for part in text.split(","):
        if "=" not in part:
            raise ValueError(f"schema entries must be key=column, got {part!r}")
        key, _, col = part.partition("=")
        schema[key.strip()] = col.strip()
    return schema


def _load_tiles_arg(path):
    """Accept a dataset-manifest JSON or a directory of tile PNGs."""
    p = Path(path)
    if p.is_file() and p.suffix == ".json":
        manifest = pipeline.DatasetManifest.from_json(p)
        base = p.parent
        return [imgio.load_grayscale(base / e.tile) for e in manifest.entries], manifest
    if p.is_dir():
        files = sorted(f for f in p.glob("*.png") if not f.stem.endswith("_mask"))
        if not files:
            raise ValueError(f"{path}: no tile PNGs found")
        return [imgio.load_grayscale(f) for f in files], None
    raise ValueError(f"{path}: expected a manifest JSON or a tile directory")


def cmd_simgen(args):
    cfg = _load_cfg(args)
    domain = "real" if args.domain == "pseudo-real" else "sim"
    scenes = pipeline.generate_scene_set(cfg, domain, args.split, args.count, args.out)
    for scene_id, img_path, placements in scenes:
        log.info("wrote %s (%d craters)", img_path, len(placements))
    print(f"generated {len(scenes)} {args.domain} scene(s) in {args.out}")


def cmd_ingest(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    schema = _parse_schema(args.schema)
    records, skipped = ingest.load_crater_db(args.db, schema)
    kept = ingest.filter_craters(records, args.max_radius_km)
    if args.mosaic:
        raster = ingest.load_mosaic(
            args.mosaic, pixel_scale_m=args.pixel_scale_m,
            lat_min_deg=args.lat_min, lat_max_deg=args.lat_max,
            lon_min_deg=args.lon_min, lon_max_deg=args.lon_max)
        georef = raster.georef
        imgio.save_grayscale(out / "mosaic_normalized.png", raster.pixels)
    elif args.width_px and args.height_px:
        georef = ingest.MosaicGeoref(
            width_px=args.width_px, height_px=args.height_px,
            pixel_scale_m=args.pixel_scale_m,
            lat_min_deg=args.lat_min, lat_max_deg=args.lat_max,
            lon_min_deg=args.lon_min, lon_max_deg=args.lon_max)
    else:
        raise ValueError("provide --mosaic or both --width-px and --height-px")
    n_oob = 0
    with open(out / "projected_craters.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "cx_px", "cy_px", "r_px"])
        for rec in kept:
            proj = ingest.project_to_pixel(rec, georef)
            if proj is None:
                n_oob += 1
                continue
            writer.writerow([rec.id, repr(proj[0]), repr(proj[1]), repr(proj[2])])
    summary = {
        "db": str(args.db),
        "rows_loaded": len(records),
        "rows_skipped": skipped,
        "kept_after_radius_filter": len(kept),
        "max_radius_km": args.max_radius_km,
        "out_of_bounds": n_oob,
    }
    with open(out / "ingest_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary, indent=2, sort_keys=True))


def cmd_tile(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pixels = imgio.load_grayscale(args.image)
    parent_id = args.parent_id or Path(args.image).stem
    tiles = tiling.slice_raster(pixels, args.tile_px, args.stride_px,
                                parent_id=parent_id, flush=args.flush)
    for t in tiles:
        imgio.save_grayscale(out / f"{t.tile_id}.png", t.pixels)
    tiling.write_manifest(out / f"{parent_id}_tiles.json", parent_id,
                          args.tile_px, args.stride_px, tiles)
    print(f"wrote {len(tiles)} tiles to {out}")


def cmd_rasterize(args):
    from craterlab import masks as masks_mod

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(args.tiles_manifest) as fh:
        grid = json.load(fh)
    tiles_dir = Path(args.tiles_dir) if args.tiles_dir else Path(args.tiles_manifest).parent
    craters = []
    with open(args.craters, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            craters.append((float(row["cx_px"]), float(row["cy_px"]), float(row["r_px"])))
    entries = []
    for info in grid["tiles"]:
        tile_path = tiles_dir / f"{info['tile_id']}.png"
        pixels = imgio.load_grayscale(tile_path)
        tile = tiling.Tile(pixels=pixels, origin_x=info["origin_x"],
                           origin_y=info["origin_y"], parent_id=grid["parent_id"],
                           tile_id=info["tile_id"])
        mask = masks_mod.mask_for_tile(tile, craters)
        mask_file = f"{info['tile_id']}_mask.png"
        imgio.save_mask(out / mask_file, mask.pixels)
        entries.append(pipeline.ManifestEntry(
            tile=os.path.relpath(tile_path, out),
            mask=mask_file,
            provenance=info.get("provenance", "real"),
            tile_id=info["tile_id"],
            parent_id=grid["parent_id"],
        ))
    manifest = pipeline.DatasetManifest(
        split=args.split, entries=entries, config_hash="", seed=args.seed or 0,
        filter={"source": str(args.craters)})
    manifest.to_json(out / f"manifest_{args.split}.json")
    print(f"wrote {len(entries)} masks and manifest_{args.split}.json to {out}")


def cmd_train_translator(args):
    from craterlab import translate as translate_mod

    cfg = _load_cfg(args)
    device = pipeline.torch_device(cfg.device)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sim_tiles, _ = _load_tiles_arg(args.sim_tiles)
    real_tiles, _ = _load_tiles_arg(args.real_tiles)
    state = translate_mod.train_translator(
        sim_tiles, real_tiles, cfg.translator, device=device, checkpoint_dir=str(out))
    translate_mod.save_checkpoint(state, out / "translator_final.pt")
    translate_mod.write_loss_history(out / "loss_history.csv", state.history)
    print(f"trained translator for {state.iteration} iterations; "
          f"checkpoint at {out / 'translator_final.pt'}")


def cmd_translate(args):
    from craterlab import translate as translate_mod

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state = translate_mod.load_checkpoint(args.checkpoint)
    src = Path(args.tiles)
    if src.is_file() and src.suffix == ".json":
        manifest = pipeline.translate_dataset(
            state, src, out, out / f"manifest_translated_{src.stem}.json")
        print(f"translated {len(manifest.entries)} tiles into {out}")
    else:
        tiles, _ = _load_tiles_arg(args.tiles)
        files = sorted(f for f in src.glob("*.png") if not f.stem.endswith("_mask"))
        for f, pixels in zip(files, tiles):
            imgio.save_grayscale(out / f.name, translate_mod.translate_array(state, pixels))
        print(f"translated {len(tiles)} tiles into {out}")


def cmd_train_segmenter(args):
    from craterlab import segment as segment_mod

    cfg = _load_cfg(args)
    device = pipeline.torch_device(cfg.device)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_manifest, train_pairs = pipeline.load_manifest_pairs(args.train_manifest)
    val_manifest, val_pairs = pipeline.load_manifest_pairs(args.val_manifest)
    pipeline.check_split_disjoint(train_manifest, val_manifest)
    state = segment_mod.train_segmenter(
        train_pairs, val_pairs, cfg.segmenter, device=device,
        checkpoint_path=out / "segmenter_best.pt")
    segment_mod.save_checkpoint(state, out / "segmenter_final.pt")
    segment_mod.write_loss_history(out / "loss_history.csv", state.history)
    print(f"trained segmenter for {state.epoch} epochs "
          f"(best val loss {state.best_val_loss:.4f} at epoch {state.best_epoch})")


def cmd_evaluate(args):
    from craterlab import segment as segment_mod

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state = segment_mod.load_checkpoint(args.checkpoint)
    manifest, pairs = pipeline.load_manifest_pairs(args.manifest)
    report = evalmetrics.evaluate(
        state, pairs, threshold=args.threshold,
        provenance={"dataset": str(args.manifest), "model": str(args.checkpoint)},
        averaging=args.averaging)
    report.to_json(out / "report.json")
    print(json.dumps({k: round(v, 6) for k, v in report.mean.items()}, indent=2))


def cmd_compare(args):
    if args.fixture:
        a, b = evalmetrics.reference_reports()
        label_a = args.label_a or a.provenance["label"]
        label_b = args.label_b or b.provenance["label"]
    else:
        if not (args.report_a and args.report_b):
            raise ValueError("provide --report-a and --report-b, or --fixture")
        a = evalmetrics.MetricsReport.from_json(args.report_a)
        b = evalmetrics.MetricsReport.from_json(args.report_b)
        label_a = args.label_a or "A"
        label_b = args.label_b or "B"
    table = evalmetrics.compare_reports(a, b, label_a=label_a, label_b=label_b)
    print(table.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        table.to_csv(out / "comparison.csv")
        with open(out / "comparison.txt", "w") as fh:
            fh.write(table.to_text() + "\n")


def cmd_experiment(args):
    cfg = _load_cfg(args)
    summary = pipeline.run_experiment(cfg, args.out)
    print(summary["comparison"].to_text())
    print(f"run directory: {summary['run_dir']}")


COMMANDS = {
    "simgen": cmd_simgen,
    "ingest": cmd_ingest,
    "tile": cmd_tile,
    "rasterize": cmd_rasterize,
    "train-translator": cmd_train_translator,
    "translate": cmd_translate,
    "train-segmenter": cmd_train_segmenter,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "experiment": cmd_experiment,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, KeyError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
