"""Command-line entry points: datagen, train, render, eval.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
The default worker/thread count comes from STRF_THREADS when set.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import torch

from . import imgio, interp, metrics
from .config import Config, load_config
from .dataset import Dataset
from .datagen import generate_dataset, scene_from_config
from .encoding import FrequencyEncodingConfig
from .errors import DataError, NumericError, UsageError
from .field import FieldConfig
from .geometry import VIEW_NAMES, PoseSE3
from .renderer import render_image
from .trainer import TrainConfig, load_model, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_cfg(path: str | None) -> Config:
    return load_config(path) if path else Config()


def _field_config_from(cfg: Config, seed: int) -> FieldConfig:
    enc = FrequencyEncodingConfig(
        l_pos=cfg.get_int("encoding", "l_pos", 10),
        l_dir=cfg.get_int("encoding", "l_dir", 4),
        l_time=cfg.get_int("encoding", "l_time", 4),
        time_latent_dim=cfg.get_int("encoding", "time_latent_dim", 8),
        include_raw=cfg.get_bool("encoding", "include_raw", True),
    )
    return FieldConfig(
        hidden_width=cfg.get_int("field", "hidden_width", 256),
        hidden_depth=cfg.get_int("field", "hidden_depth", 8),
        skip_layer=cfg.get_int("field", "skip_layer", 5),
        view_hidden=cfg.get_int("field", "view_hidden", 128),
        use_time=cfg.get_bool("field", "use_time", True),
        encoding=enc,
        seed=seed,
    )


def _train_config_from(cfg: Config) -> TrainConfig:
    kwargs = {}
    ints = ("rays_per_step", "samples_per_ray", "decay_period", "epochs",
            "steps_per_epoch_cap", "checkpoint_every", "pose_refine_epochs", "eval_rays", "seed",
            "camera_warmup_epochs")
    floats = ("lr", "lr_floor", "decay_factor", "temporal_weight",
              "temporal_ray_fraction", "camera_lr_scale")
    bools = ("optimize_cameras", "per_frame_poses", "stratified", "white_background")
    for key in ints:
        val = cfg.get_int("train", key)
        if val is not None:
            kwargs[key] = val
    for key in floats:
        val = cfg.get_float("train", key)
        if val is not None:
            kwargs[key] = val
    for key in bools:
        val = cfg.get_bool("train", key)
        if val is not None:
            kwargs[key] = val
    for key in ("holdout", "anchor_view", "flow_method", "dtype"):
        val = cfg.get("train", key)
        if val is not None:
            kwargs[key] = None if val == "none" else val
    deltas = cfg.get_floats("train", "deltas")
    if deltas is not None:
        kwargs["deltas"] = tuple(deltas)
    try:
        return TrainConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc))


def _set_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("STRF_THREADS", "0")) or None
    if threads is not None:
        torch.set_num_threads(threads)
        return threads
    return torch.get_num_threads()


def cmd_datagen(args) -> int:
    cfg = _load_cfg(args.config)
    spec = scene_from_config(cfg, profile=args.profile)
    threads = _set_threads(args.threads)
    seed = args.seed if args.seed is not None else cfg.get_int("scene", "seed", 0)
    manifest = generate_dataset(
        spec,
        args.out,
        perturb=args.perturb_poses,
        perturb_rot_deg=cfg.get_float("scene", "perturb_rot_deg", 0.5),
        perturb_trans=cfg.get_float("scene", "perturb_trans", 0.003),
        seed=seed,
        threads=threads,
    )
    n = manifest.views * manifest.frames
    print(f"wrote {n} frames ({manifest.views} views x {manifest.frames} steps) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args.config)
    tcfg = _train_config_from(cfg)
    if args.seed is not None:
        tcfg.seed = args.seed
    if args.epochs is not None:
        tcfg.epochs = args.epochs
    if args.holdout is not None:
        tcfg.holdout = None if args.holdout == "none" else args.holdout
    for ablation in args.ablate or []:
        if ablation == "no-cam-opt":
            tcfg.optimize_cameras = False
        elif ablation == "no-temporal":
            tcfg.temporal_weight = 0.0
        # no-time is handled through the field config below
    fcfg = _field_config_from(cfg, tcfg.seed)
    if args.ablate and "no-time" in args.ablate:
        fcfg.use_time = False
    _set_threads(args.threads)
    data = Dataset(args.dataset)
    ckpt = train(data, tcfg, fcfg, out_dir=args.out, resume=args.resume,
                 log=(None if args.quiet else print))
    print(f"checkpoint: {ckpt}")
    return 0


def _parse_pose_arg(text: str) -> PoseSE3:
    vals = [float(x) for x in text.replace(",", " ").split()]
    if len(vals) != 6:
        raise UsageError(f"--pose expects 6 numbers 'rx ry rz nx ny nz', got {text!r}")
    return PoseSE3(np.array(vals[:3]), np.array(vals[3:]))


def cmd_render(args) -> int:
    field, cameras, header = load_model(args.checkpoint)
    _set_threads(args.threads)
    info = header["dataset"]
    if args.view:
        if args.view not in cameras.view_names:
            raise UsageError(f"unknown view {args.view!r}; checkpoint has {cameras.view_names}")
        idx = cameras.view_index(args.view)
        r, n = cameras.r[idx].detach(), cameras.n[idx].detach()
    elif args.pose:
        pose = _parse_pose_arg(args.pose)
        r = torch.as_tensor(pose.r, dtype=cameras.r.dtype)
        n = torch.as_tensor(pose.n, dtype=cameras.r.dtype)
    elif args.between:
        names = args.between.split(",")
        if len(names) != 2 or not all(v in cameras.view_names for v in names):
            raise UsageError(f"--between expects 'viewA,viewB' out of {cameras.view_names}")
        a, b = (cameras.view_index(v) for v in names)
        w = args.alpha
        r = ((1 - w) * cameras.r[a] + w * cameras.r[b]).detach()
        n = ((1 - w) * cameras.n[a] + w * cameras.n[b]).detach()
    else:
        raise UsageError("one of --view, --pose or --between is required")

    intr = cameras.intrinsics()
    rgb, depth = render_image(
        field, intr, (r, n), args.time, info["z_near"], info["z_far"],
        samples_per_ray=args.samples, seed=args.seed, chunk=args.chunk,
        white_background=header["train_cfg"].get("white_background", False),
        focal=cameras.focal.detach(),
    )
    ext = ".png" if args.png else ".ppm"
    imgio.write_image(args.out + ext, rgb)
    written = [args.out + ext]
    if args.depth:
        imgio.write_pfm(args.out + "_depth.pfm", depth)
        span = info["z_far"] - info["z_near"]
        imgio.write_pgm(args.out + "_depth.pgm", (depth - info["z_near"]) / span)
        written += [args.out + "_depth.pfm", args.out + "_depth.pgm"]
    print("wrote " + " ".join(written))
    return 0


def cmd_eval(args) -> int:
    if args.compare:
        a = imgio.read_image(args.compare[0])
        b = imgio.read_image(args.compare[1])
        print(f"psnr,{metrics.psnr(a, b):.4f}")
        print(f"ssim,{metrics.ssim(a, b):.6f}")
        return 0
    if not args.checkpoint or not args.dataset:
        raise UsageError("eval needs a checkpoint and a dataset (or --compare A B)")
    field, cameras, header = load_model(args.checkpoint)
    _set_threads(args.threads)
    data = Dataset(args.dataset)
    holdout = header["train_cfg"].get("holdout")
    if args.split == "holdout":
        views = [holdout] if holdout else []
        if not views:
            raise UsageError("checkpoint was trained without a holdout view")
    elif args.split == "train":
        views = [v for v in data.view_names if v != holdout]
    else:
        views = list(data.view_names)

    info = header["dataset"]
    times = data.times()
    rows = []
    print("view,frame,psnr,ssim")
    for view in views:
        idx = cameras.view_index(view)
        for t in range(data.frames):
            rgb, _ = render_image(
                field, cameras.intrinsics(), (cameras.r[idx].detach(), cameras.n[idx].detach()),
                float(times[t]), info["z_near"], info["z_far"],
                samples_per_ray=args.samples, seed=args.seed, chunk=args.chunk,
                white_background=header["train_cfg"].get("white_background", False),
                focal=cameras.focal.detach(),
            )
            target = data.image(view, t)
            p = metrics.psnr(rgb, target)
            s = metrics.ssim(rgb, target)
            rows.append((p, s))
            print(f"{view},{t},{p:.4f},{s:.6f}")
    if rows:
        mp = float(np.mean([r[0] for r in rows]))
        ms = float(np.mean([r[1] for r in rows]))
        print(f"mean,,{mp:.4f},{ms:.6f}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="strf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="render a synthetic multiscopic dataset")
    p.add_argument("--config", help="scene config file")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--profile", choices=("desk", "full"), default=None,
                   help="desk = 160x120 x 8 frames; full = 1280x720 x 24")
    p.add_argument("--perturb-poses", action="store_true",
                   help="write noisy training poses (ground truth stays in the manifest)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="train the space-time field on a dataset")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("--config", help="train/field config file")
    p.add_argument("--out", default="runs/latest", help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--holdout", default=None, help=f"view to withhold, one of {VIEW_NAMES} or 'none'")
    p.add_argument("--ablate", action="append", choices=("no-time", "no-cam-opt", "no-temporal"),
                   help="paper ablation variants; may repeat")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render a frame from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--view", default=None, help="render from a trained camera")
    p.add_argument("--pose", default=None, help="explicit pose 'rx ry rz nx ny nz'")
    p.add_argument("--between", default=None, help="interpolate two trained cameras, 'viewA,viewB'")
    p.add_argument("--alpha", type=float, default=0.5, help="blend factor for --between")
    p.add_argument("--time", type=float, default=0.0, help="normalized timestamp in [0, 1]")
    p.add_argument("--samples", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunk", type=int, default=8192)
    p.add_argument("--depth", action="store_true", help="also write the depth map")
    p.add_argument("--png", action="store_true")
    p.add_argument("-o", "--out", default="render", help="output path prefix")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="PSNR/SSIM of rendered frames against a dataset")
    p.add_argument("checkpoint", nargs="?")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--split", choices=("train", "holdout", "all"), default="all")
    p.add_argument("--samples", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunk", type=int, default=8192)
    p.add_argument("--compare", nargs=2, metavar=("A", "B"), help="one-shot metric between two images")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
