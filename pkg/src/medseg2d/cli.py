"""Command-line entry points: preprocess, train, eval, serve."""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path


def _cmd_preprocess(args: argparse.Namespace) -> None:
    from .data_engine import CurationConfig
    from .pipeline import curate_directory

    config = CurationConfig(
        target_size=args.size, min_area_pixels=args.min_area,
        axes=tuple(args.axes), seed=args.seed)
    manifest = curate_directory(args.in_dir, args.out_dir, config, ratio=args.ratio)
    print(f"curated {len(manifest.records)} images -> {args.out_dir}")


def _cmd_train(args: argparse.Namespace) -> None:
    from .model import ModelConfig, SegModel, load_checkpoint, save_checkpoint
    from .pipeline import load_manifest, load_split_samples
    from .training import TrainConfig, run_training

    config = TrainConfig.from_json(json.loads(Path(args.config).read_text())) \
        if args.config else TrainConfig()
    manifest = load_manifest(args.manifest)
    rows = load_split_samples(manifest, Path(args.manifest).parent, "train")
    if not rows:
        raise SystemExit("manifest has no train split")
    samples = [(image, masks) for _, image, masks in rows]
    if args.resume:
        model = load_checkpoint(args.resume)
    else:
        model_cfg = ModelConfig()
        model_cfg.encoder.input_size = samples[0][0].shape[0]
        model = SegModel(model_cfg)
    run_training(samples, model, config, out_dir=args.out)
    save_checkpoint(model, Path(args.out) / "final.ckpt")
    print(f"trained {config.epochs} epochs -> {args.out}/final.ckpt")


def _cmd_eval(args: argparse.Namespace) -> None:
    from .evaluation import EvalProtocol, EvalSample, aggregate_csv, evaluate, measure_throughput
    from .model import load_checkpoint
    from .pipeline import load_manifest, load_split_samples

    model = load_checkpoint(args.ckpt)
    manifest = load_manifest(args.manifest)
    rows = load_split_samples(manifest, Path(args.manifest).parent, args.split)
    samples = []
    for record, image, masks in rows:
        for mask_id, gt in zip(record.mask_ids, masks):
            samples.append(EvalSample(image, gt, record.image_id, mask_id,
                                      record.modality, record.anatomy, record.organ))
    protocol = EvalProtocol(
        mode="bbox" if args.mode == "bbox" else "points",
        num_points=args.points, resolution=model.input_size,
        adapters=args.adapters, seed=args.seed)
    report = evaluate(model, samples, protocol)
    report.metadata["throughput"] = measure_throughput(model)
    report.save(args.out)
    for key in ("modality", "anatomy", "organ"):
        csv_path = Path(args.out).with_suffix(f".{key}.csv")
        csv_path.write_text(aggregate_csv(report, key))
    print(f"mean dice {report.mean_dice():.4f} over {len(report.rows)} masks -> {args.out}")


def _cmd_serve(args: argparse.Namespace) -> None:
    import uvicorn

    from .model import load_checkpoint
    from .service import create_app

    model = load_checkpoint(args.ckpt)
    app = create_app(model, max_sessions=args.max_sessions, ttl_seconds=args.ttl)
    uvicorn.run(app, host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medseg2d")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="curate raw volumes/images into a PNG dataset")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--min-area", type=int, default=100)
    p.add_argument("--axes", default="xyz")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio", type=float, default=0.8)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train", help="interactive fine-tuning on a curated manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="run an evaluation protocol and write reports")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--mode", choices=["bbox", "pt"], default="bbox")
    p.add_argument("--points", type=int, default=1)
    p.add_argument("--adapters", choices=["keep", "remove"], default="keep")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="session-based inference service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-sessions", type=int, default=64)
    p.add_argument("--ttl", type=float, default=3600.0)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
