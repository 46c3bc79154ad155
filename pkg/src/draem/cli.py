"""Command-line entry point: ``draem {simulate,train,infer,eval}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import imageio
from .config import ConfigError, RunConfig, load_config, parse_override
from .imageio import DatasetError, ImageFormatError, load_image, save_image, scan_dataset
from .metrics import ImageResult, evaluate_run
from .neural import CheckpointError, NonFiniteGradientError, checkpoint_load
from .rng import derive_rng
from .simulate import AnomalySource, generate_training_sample
from .train import CHECKPOINT_NAME, NumericFailure, predict, state_from_checkpoint, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
RESULTS_HEADER = ["id", "path", "label", "eta", "map"]

log = logging.getLogger("draem")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="draem", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field; repeatable")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("simulate", help="export simulated training triplets")
    common(p)
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--category", required=True)
    p.add_argument("--count", type=int, default=16)

    p = sub.add_parser("train", help="train both sub-networks jointly")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--category", required=True)
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--max-steps", type=int)

    p = sub.add_parser("infer", help="score images with a trained checkpoint")
    common(p, config_required=False)
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="dataset root (scores the test split)")
    src.add_argument("--images", help="directory of images to score")
    p.add_argument("--category")
    p.add_argument("--baseline", choices=["ssim"], help="score with the SSIM reconstruction baseline")

    p = sub.add_parser("eval", help="compute AUROC/AP from inference results")
    p.add_argument("--results", required=True, help="directory written by 'infer'")
    p.add_argument("--data", required=True)
    p.add_argument("--category", required=True)
    p.add_argument("--out", required=True)
    return parser


def effective_config(args, base: RunConfig | None = None) -> RunConfig:
    if args.config:
        cfg_path = Path(args.config)
        cfg = load_config(cfg_path)
        src = cfg.anomaly_source
        if src.kind == "texture_dir" and not Path(src.path).is_absolute():
            cfg = cfg.with_overrides({"anomaly_source": {"texture_dir": str(cfg_path.parent / src.path)}})
    elif base is not None:
        cfg = base
    else:
        raise UsageError("--config is required")
    overrides = dict(parse_override(item) for item in args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfg.with_overrides(overrides) if overrides else cfg


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create output directory {out}: {exc}") from exc
    return out


def run_simulate(args) -> int:
    cfg = effective_config(args)
    index = scan_dataset(args.data, args.category)
    source = AnomalySource.from_spec(cfg.anomaly_source)
    images = [load_image(p, cfg.image_size) for p in index.train_good]
    out = _out_dir(args.out)
    samples = []
    for i in range(args.count):
        rng = derive_rng(cfg.seed, "simulation", i)
        src_idx = int(rng.integers(len(images)))
        t = generate_training_sample(images[src_idx], source, cfg, rng)
        sid = f"{i:05d}"
        save_image(t.original, out / f"{sid}_orig.png")
        save_image(t.augmented, out / f"{sid}_aug.png")
        save_image(t.mask, out / f"{sid}_mask.png")
        samples.append({"id": sid, "seed": cfg.seed, "stream": "simulation", "index": i,
                        "source_image": index.train_good[src_idx].name,
                        "beta": t.beta, "is_anomalous": t.is_anomalous})
    manifest = {"config": cfg.to_dict(), "samples": samples}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def run_train(args) -> int:
    state = None
    if args.checkpoint:
        ckpt = checkpoint_load(args.checkpoint)
        cfg = effective_config(args, RunConfig.from_dict(ckpt.config))
        state = state_from_checkpoint(ckpt)
        if ckpt.model.variant != cfg.variant:
            raise CheckpointError("checkpoint variant does not match the configuration")
    else:
        cfg = effective_config(args)
    index = scan_dataset(args.data, args.category)
    source = AnomalySource.from_spec(cfg.anomaly_source)
    images = [load_image(p, cfg.image_size) for p in index.train_good]
    out = _out_dir(args.out)
    (out / "config.yaml").write_text(cfg.dump())
    train(cfg, images, source, out, state=state, max_steps=args.max_steps)
    return EXIT_OK


def _infer_items(args, image_size):
    if args.data:
        if not args.category:
            raise UsageError("--category is required with --data")
        index = scan_dataset(args.data, args.category)
        return [(item.path, item.defect_label) for item in index.test_items]
    paths = imageio.list_images(args.images)
    if not paths:
        raise DatasetError(f"no images found in {args.images}")
    return [(p, "unknown") for p in paths]


def run_infer(args) -> int:
    ckpt = checkpoint_load(args.checkpoint)
    cfg = effective_config(args, RunConfig.from_dict(ckpt.config))
    items = _infer_items(args, cfg.image_size)
    images = [load_image(p, cfg.image_size) for p, _ in items]
    pred = predict(ckpt.model, images, cfg.filter_size, baseline=args.baseline)
    out = _out_dir(args.out)
    maps_dir = _out_dir(out / "maps")
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for i, ((path, label), amap, eta) in enumerate(zip(items, pred.anomaly_maps, pred.scores)):
            stem = f"{i:05d}_{label}_{Path(path).stem}"
            np.save(maps_dir / f"{stem}.npy", amap.astype(np.float32))
            save_image(amap, maps_dir / f"{stem}.png")
            w.writerow([f"{i:05d}", str(path), label, repr(float(eta)), f"maps/{stem}.npy"])
    (out / "config.yaml").write_text(cfg.dump())
    return EXIT_OK


def read_results(results_dir) -> list[ImageResult]:
    results_dir = Path(results_dir)
    table = results_dir / "results.csv"
    if not table.is_file():
        raise DatasetError(f"no results.csv in {results_dir}")
    out = []
    with open(table, newline="") as fh:
        for row in csv.DictReader(fh):
            map_path = results_dir / row["map"]
            if not map_path.is_file():
                raise DatasetError(f"missing anomaly map {map_path}")
            out.append(ImageResult(row["path"], row["label"], float(row["eta"]),
                                   np.load(map_path).astype(np.float64)))
    return out


def run_eval(args) -> int:
    results = read_results(args.results)
    index = scan_dataset(args.data, args.category)
    report = evaluate_run(results, index)
    out = _out_dir(args.out)
    report.write(out / "report.txt", out / "report.csv")
    print(report.as_text(), end="")
    return EXIT_OK


COMMANDS = {"simulate": run_simulate, "train": run_train, "infer": run_infer, "eval": run_eval}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except (UsageError, ConfigError) as exc:
        print(f"draem: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericFailure, NonFiniteGradientError) as exc:
        print(f"draem: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, ImageFormatError, CheckpointError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"draem: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
