"""Command-line interface: gen, train, render, eval, ablate, serve.

Config overrides use repeatable ``--config key=value`` flags; every
TrainConfig field is addressable, with TOML-style scalar literals
(true/false, integers, floats, quoted strings, [r, g, b] lists).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .dataset import load_dataset
from .errors import DynasplatError
from .service import render_png_bytes, serve
from .snapshot import load_snapshot, save_snapshot
from .synthetic import PROGRAMS, SyntheticSpec, generate_synthetic
from .training import TrainConfig, evaluate, run_ablation_suite, train


def _parse_scalar(text: str):
    text = text.strip()
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return [_parse_scalar(x) for x in inner.split(",")] if inner else []
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config(pairs) -> TrainConfig:
    base = TrainConfig()
    overrides = {}
    valid = set(base.to_dict().keys())
    for pair in pairs or []:
        if "=" not in pair:
            raise DynasplatError(f"--config expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        key = key.strip()
        if key not in valid:
            raise DynasplatError(f"unknown config key {key!r}")
        overrides[key] = _parse_scalar(value)
    d = base.to_dict()
    d.update(overrides)
    return TrainConfig.from_dict(d)


def _cmd_gen(args):
    spec = SyntheticSpec(
        program=args.program, n_static=args.n_static, n_dynamic=args.n_dynamic,
        n_train=args.frames, n_test=args.test_frames,
        width=args.size, height=args.size,
    )
    dataset, _ = generate_synthetic(spec, args.seed, args.out)
    print(json.dumps({
        "out": args.out, "program": args.program,
        "train_frames": len(dataset.train_frames()),
        "test_frames": len(dataset.test_frames()),
        "seed_points": 0 if dataset.seed_points is None else len(dataset.seed_points),
    }))
    return 0


def _cmd_train(args):
    config = parse_config(args.config)
    dataset = load_dataset(args.data, image_scale=config.image_scale)
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "train_log.jsonl")

    def progress(entry):
        if not args.quiet:
            print(json.dumps(entry), flush=True)

    scene, _ = train(dataset, config, log_path=log_path,
                     checkpoint_dir=args.out, progress=progress)
    snap_path = os.path.join(args.out, "final.snap")
    save_snapshot(scene, snap_path, config=config, iteration=config.iterations,
                  camera_meta=dataset.camera_meta())
    print(json.dumps({"snapshot": snap_path, "log": log_path}))
    return 0


def _cmd_render(args):
    scene, header = load_snapshot(args.snapshot)
    pose = [float(x) for x in args.pose.replace(",", " ").split()]
    png = render_png_bytes(scene, header, pose, args.time, args.width, args.height)
    with open(args.out, "wb") as f:
        f.write(png)
    print(json.dumps({"out": args.out, "bytes": len(png)}))
    return 0


def _cmd_eval(args):
    scene, header = load_snapshot(args.snapshot)
    cfg = header.get("train_config") or {}
    dataset = load_dataset(args.data, image_scale=cfg.get("image_scale", 1.0))
    metrics = evaluate(scene, dataset,
                       background=cfg.get("background", (1.0, 1.0, 1.0)))
    print(json.dumps(metrics.to_dict()))
    return 0


def _cmd_ablate(args):
    config = parse_config(args.config)
    dataset = load_dataset(args.data, image_scale=config.image_scale)

    def progress(entry):
        if not args.quiet:
            print(json.dumps(entry), flush=True)

    rows = run_ablation_suite(dataset, config, progress=progress)
    report = {"rows": rows}
    with open(args.out, "w") as f:
        json.dump(report, f, indent=1)
    width = max(len(r["variant"]) for r in rows)
    print(f"{'variant'.ljust(width)}  {'PSNR':>7}  {'SSIM':>7}  {'MS-SSIM':>7}")
    for r in rows:
        print(f"{r['variant'].ljust(width)}  {r['psnr']:7.2f}  "
              f"{r['ssim']:7.4f}  {r['ms_ssim']:7.4f}")
    return 0


def _cmd_serve(args):
    scene, header = load_snapshot(args.snapshot)
    serve(scene, header, port=args.port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynasplat",
        description="Dynamic-scene Gaussian splatting: generate, train, render, serve.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic benchmark dataset")
    p.add_argument("--program", choices=PROGRAMS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--test-frames", type=int, default=10)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--n-static", type=int, default=20)
    p.add_argument("--n-dynamic", type=int, default=20)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="optimize a scene on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", action="append", metavar="KEY=VALUE")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("render", help="render a snapshot to a PNG")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--pose", required=True,
                   help="16 floats, row-major world-to-camera")
    p.add_argument("--time", type=float, default=0.0)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("eval", help="evaluate a snapshot on a dataset's test split")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="train and score all ablation variants")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--config", action="append", metavar="KEY=VALUE")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("serve", help="serve /render over HTTP from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--port", type=int, default=8090)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DynasplatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
