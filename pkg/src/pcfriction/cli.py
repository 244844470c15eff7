"""Command line entry point: ``pcfriction <subcommand>``.

Exit codes: 0 success, 2 missing input, 3 validation or data error,
4 configuration or checkpoint mismatch. Set ``PCFRICTION_LOG_LEVEL``
(e.g. ``DEBUG``) for more logging.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from . import augment, flume, metrics, xsection
from .config import ConfigError, corpus_spec, net_config, resolve, train_config
from .errors import CheckpointVersionError, PCFrictionError
from .pointcloud import read_cloud, tile_cloud
from .regressor import RegressionNet, load_checkpoint, predict_batch, save_checkpoint, train

log = logging.getLogger("pcfriction")

EXIT_OK, EXIT_MISSING, EXIT_DATA, EXIT_CONFIG = 0, 2, 3, 4


class MissingInput(Exception):
    def __init__(self, path):
        self.path = path
        super().__init__(f"missing input: {path}")


class DataError(Exception):
    pass


def _require(path):
    if path is None:
        raise ConfigError("a required path was not given")
    if not Path(path).exists():
        raise MissingInput(path)
    return Path(path)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out, command, cfg, inputs, outputs):
    """Sidecar ``<out>.manifest.json`` recording config, seed and input hashes."""
    doc = {
        "command": command,
        "version": __version__,
        "seed": cfg["seed"],
        "config": cfg,
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in sorted(inputs.items())
                   if v is not None},
        "outputs": [str(o) for o in outputs],
    }
    Path(str(out) + ".manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- subcommands ------------------------------------------------------------

def cmd_labcalc(args, cfg):
    runs_path = _require(args.runs or cfg["paths"].get("runs"))
    cal_path = args.calibration or cfg["paths"].get("calibration")
    calibration = flume.read_calibration_csv(_require(cal_path)) if cal_path else None
    if args.median:
        cfg["labcalc"]["reducer"] = "median"
    try:
        runs = flume.read_runs(runs_path, calibration)
    except FileNotFoundError as exc:
        raise MissingInput(exc.filename) from None
    if not runs:
        raise DataError(f"{runs_path}: no runs")
    regions = []
    groups = {}
    for r in runs:
        groups.setdefault(r.region_id, []).append(r)
    for rid, group in groups.items():
        try:
            regions.append(flume.reduce_region(group, cfg["labcalc"]["reducer"]))
        except PCFrictionError as exc:
            raise DataError(f"region {rid}: {exc}") from None
    out = Path(args.out or cfg["paths"].get("out") or "regions_n.csv")
    flume.write_region_csv(regions, out)
    _write_manifest(out, "labcalc", cfg, {"runs": runs_path, "calibration": cal_path}, [out])
    print(f"wrote {len(regions)} regions to {out}")


def _region_cloud(clouds_dir, rid):
    for ext in (".xyz", ".txt", ".csv", ".las"):
        p = Path(clouds_dir) / f"{rid}{ext}"
        if p.exists():
            return p
    raise MissingInput(Path(clouds_dir) / f"{rid}.xyz")


def cmd_make_dataset(args, cfg):
    if args.samples_per_region is not None:
        cfg["corpus"]["samples_per_region"] = args.samples_per_region
    if args.blend_fraction is not None:
        cfg["corpus"]["blend_fraction"] = args.blend_fraction
    if args.center_substitution:
        cfg["corpus"]["center_substitution"] = list(args.center_substitution)
    spec = corpus_spec(cfg)
    rn_path = _require(args.regions_n or cfg["paths"].get("regions_n"))
    clouds_dir = _require(args.clouds or cfg["paths"].get("clouds"))
    regions = {}
    inputs = {"regions_n": rn_path}
    for r in flume.read_region_csv(rn_path):
        path = _region_cloud(clouds_dir, r.region_id)
        inputs[f"cloud:{r.region_id}"] = path
        regions[r.region_id] = (read_cloud(path, source="handheld-scan"), r)
    if not regions:
        raise DataError(f"{rn_path}: no regions")
    samples = augment.build_corpus(regions, spec)
    out = Path(args.out or cfg["paths"].get("corpus") or "corpus.jsonl")
    augment.write_manifest(samples, out, spec, extra={"config": cfg})
    _write_manifest(out, "make-dataset", cfg, inputs, [out])
    print(f"wrote {len(samples)} samples to {out}")


def cmd_train(args, cfg):
    if args.epochs is not None:
        cfg["train"]["max_epochs"] = args.epochs
    corpus = _require(args.corpus or cfg["paths"].get("corpus"))
    nconf, tconf = net_config(cfg), train_config(cfg)
    _, samples = augment.read_manifest(corpus)
    train_s, val_s, _ = augment.split_samples(samples)
    if not train_s:
        raise DataError(f"{corpus}: no training samples")
    start_epoch = 0
    if args.resume:
        net = load_checkpoint(_require(args.resume), expected_config=nconf)
        steps_per_epoch = math.ceil(len(train_s) / tconf.batch_size)
        start_epoch = net.step_count // steps_per_epoch
    else:
        net = RegressionNet(nconf)
    out = Path(args.out or cfg["paths"].get("checkpoint") or "model.ckpt")
    log_path = Path(args.log or cfg["paths"].get("train_log") or str(out) + ".log.csv")
    net, history = train(net, train_s, val_s, tconf, start_epoch=start_epoch)
    save_checkpoint(net, out)
    with open(log_path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for h in history:
            wr.writerow([h["epoch"], repr(h["train_loss"]), repr(h["val_loss"]), repr(h["lr"])])
    _write_manifest(out, "train", cfg, {"corpus": corpus, "resume": args.resume}, [out, log_path])
    last = history[-1] if history else {"train_loss": float("nan"), "val_loss": float("nan")}
    print(f"final train_loss {last['train_loss']:.6g} val_loss {last['val_loss']:.6g} "
          f"steps {net.step_count}")


def infer_grid(net, cloud, cell_size=1.0, origin=None, seed=0, min_points=3,
               max_points=100, batch=256):
    """Tile a cloud and predict one n per tile.

    Tiles with fewer than ``min_points`` points are nodata; tiles with more
    than ``max_points`` are subsampled with a generator derived from
    ``seed`` and the tile index. Returns ``(grid, rows)`` where ``rows``
    lists ``(col, row, n_points, n)`` in tile order.
    """
    if len(cloud) == 0:
        raise DataError("empty cloud")
    if origin is None:
        lo, _ = cloud.bounds()
        origin = (float(lo[0]), float(lo[1]))
    tiles = tile_cloud(cloud, cell_size, origin)
    keys = sorted(tiles, key=lambda t: (t.row, t.col))
    values = {}
    todo, todo_keys = [], []
    for t in keys:
        xyz = tiles[t].xyz
        if len(xyz) < min_points:
            values[t] = xsection.NODATA
            continue
        if len(xyz) > max_points:
            rng = np.random.default_rng([seed, zlib.crc32(f"{t.col},{t.row}".encode())])
            xyz = xyz[np.sort(rng.choice(len(xyz), size=max_points, replace=False))]
        todo.append(xyz)
        todo_keys.append(t)
    for lo in range(0, len(todo), batch):
        preds = predict_batch(net, todo[lo:lo + batch])
        for t, n in zip(todo_keys[lo:lo + batch], preds):
            values[t] = float(n)
    grid = xsection.rasterize({t: values[t] for t in keys}, origin, cell_size)
    rows = [(t.col, t.row, len(tiles[t]), values[t]) for t in keys]
    return grid, rows


def cmd_infer(args, cfg):
    ckpt = _require(args.checkpoint or cfg["paths"].get("checkpoint"))
    cloud_path = _require(args.cloud or cfg["paths"].get("cloud"))
    if args.cell_size is not None:
        cfg["tiling"]["cell_size"] = args.cell_size
    if args.origin is not None:
        cfg["tiling"]["origin"] = list(args.origin)
    net = load_checkpoint(ckpt)
    try:
        cloud = read_cloud(cloud_path, source="airborne-lidar")
    except PCFrictionError as exc:
        raise DataError(f"{cloud_path}: {exc}") from None
    t = cfg["tiling"]
    origin = tuple(t["origin"]) if t["origin"] is not None else None
    grid, rows = infer_grid(net, cloud, t["cell_size"], origin, cfg["seed"],
                            t["min_points"], t["max_points"])
    out = Path(args.out or cfg["paths"].get("grid") or "friction.asc")
    xsection.export_grid_esri_ascii(grid, out)
    outputs = [out]
    counts = args.counts or cfg["paths"].get("counts")
    if counts:
        with open(counts, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["col", "row", "n_points", "n"])
            for c, r, k, n in rows:
                wr.writerow([c, r, k, "" if n == xsection.NODATA else f"{n:.6f}"])
        outputs.append(Path(counts))
    _write_manifest(out, "infer", cfg, {"checkpoint": ckpt, "cloud": cloud_path}, outputs)
    print(f"wrote {grid.ncols}x{grid.nrows} grid to {out}")


def cmd_compound(args, cfg):
    grid_path = _require(args.grid or cfg["paths"].get("grid"))
    sec_path = _require(args.sections or cfg["paths"].get("sections"))
    c = cfg["compound"]
    if args.max_segments is not None:
        c["max_segments"] = args.max_segments
    if args.spatial_only:
        c["spatial_only"] = True
    if args.profile_aware:
        c["profile_aware"] = True
    grid = xsection.read_friction_grid(grid_path)
    sections = xsection.read_sections(sec_path)
    done = [xsection.compound_section(s, grid, c["max_segments"], seed=cfg["seed"],
                                      spatial_only=c["spatial_only"],
                                      profile_aware=c["profile_aware"] and s.elevations is not None)
            for s in sections]
    out = Path(args.out or cfg["paths"].get("table") or "sections.csv")
    summary = Path(args.summary or cfg["paths"].get("summary") or out.with_suffix(".summary.csv"))
    xsection.export_section_table(done, out)
    xsection.export_section_summary(done, summary)
    outside = sum(s.outside_count for s in done)
    _write_manifest(out, "compound", cfg, {"grid": grid_path, "sections": sec_path}, [out, summary])
    if outside:
        print(f"warning: {outside} stations outside the grid were filled with "
              f"{xsection.NODATA_FILL}", file=sys.stderr)
    print(f"wrote {sum(len(s.segment_n) for s in done)} segments for {len(done)} sections to {out}")


def _mask(path):
    values, h = xsection.read_esri_ascii(path)
    return (values != h["nodata"]) & (values != 0)


def cmd_metrics(args, cfg):
    result = {}
    series = args.series or cfg["paths"].get("series")
    pred_mask = args.masks[0] if args.masks else cfg["paths"].get("pred_mask")
    truth_mask = args.masks[1] if args.masks else cfg["paths"].get("truth_mask")
    inputs = {}
    if series is None and pred_mask is None:
        raise ConfigError("give --series and/or --masks")
    if series is not None:
        obs, pred = metrics.read_series_csv(_require(series))
        result.update(metrics.series_metrics(obs, pred))
        result["n"] = len(obs)
        inputs["series"] = series
    if pred_mask is not None:
        a, b = _mask(_require(pred_mask)), _mask(_require(truth_mask))
        if a.shape != b.shape:
            raise DataError("mask grids differ in shape")
        iou, f1 = metrics.iou_f1(a, b)
        result.update(iou=iou, f1=f1)
        inputs.update(pred_mask=pred_mask, truth_mask=truth_mask)
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    out = args.out or cfg["paths"].get("out")
    if out:
        Path(out).write_text(text)
        _write_manifest(out, "metrics", cfg, inputs, [out])
    sys.stdout.write(text)


# -- parser -----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="pcfriction", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output path")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("labcalc", parents=[common], help="flume runs -> region n table")
    s.add_argument("--runs")
    s.add_argument("--calibration")
    s.add_argument("--median", action="store_true", help="reduce depth series by median")
    s.set_defaults(func=cmd_labcalc)

    s = sub.add_parser("make-dataset", parents=[common], help="region clouds -> JSONL corpus")
    s.add_argument("--regions-n")
    s.add_argument("--clouds", help="directory holding <region_id>.xyz|.las")
    s.add_argument("--samples-per-region", type=int)
    s.add_argument("--blend-fraction", type=float)
    s.add_argument("--center-substitution", action="append", metavar="SLAB")
    s.set_defaults(func=cmd_make_dataset)

    s = sub.add_parser("train", parents=[common], help="corpus -> checkpoint + loss log")
    s.add_argument("--corpus")
    s.add_argument("--log")
    s.add_argument("--epochs", type=int)
    s.add_argument("--resume", help="checkpoint to continue from")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", parents=[common], help="checkpoint + cloud -> ESRI ASCII grid")
    s.add_argument("--checkpoint")
    s.add_argument("--cloud")
    s.add_argument("--counts", help="optional per-tile point count CSV")
    s.add_argument("--cell-size", type=float)
    s.add_argument("--origin", type=float, nargs=2, metavar=("X", "Y"))
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("compound", parents=[common], help="grid + sections -> segment table")
    s.add_argument("--grid")
    s.add_argument("--sections", help="CSV section_id,station,x,y[,elev] or GeoJSON")
    s.add_argument("--summary", help="per-section summary CSV")
    s.add_argument("--max-segments", type=int)
    s.add_argument("--spatial-only", action="store_true")
    s.add_argument("--profile-aware", action="store_true")
    s.set_defaults(func=cmd_compound)

    s = sub.add_parser("metrics", parents=[common], help="fit statistics as JSON")
    s.add_argument("--series", help="CSV index,observed,predicted")
    s.add_argument("--masks", nargs=2, metavar=("PRED", "TRUTH"), help="two ESRI ASCII masks")
    s.set_defaults(func=cmd_metrics)
    return p


def main(argv=None):
    logging.basicConfig(level=os.environ.get("PCFRICTION_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        overrides = {"seed": args.seed} if args.seed is not None else None
        if args.config is not None and not Path(args.config).exists():
            raise MissingInput(args.config)
        cfg = resolve(overrides, args.config)
        args.func(args, cfg)
    except MissingInput as exc:
        print(f"error: missing input: {exc.path}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc.filename}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, CheckpointVersionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, PCFrictionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
