"""Joint optimization of the field, time encoder and camera parameters.

Each step samples random pixel rays over (view, frame, pixel) for the
photometric term and, when temporal supervision is on, additional rays
from one cached flow-interpolated frame at a fractional timestamp. The
total loss is L = L_mse + beta * L_temporal; gradients flow through the
compositing and ray generation into the network weights, the shared focal
length, and the per-camera se(3) parameters, which are updated directly in
axis-angle coordinates.

All per-step randomness is drawn from a stream keyed by (seed, epoch,
step), so resuming from a checkpoint replays the exact trajectory.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
import torch
from torch import nn

from . import interp
from .dataset import Dataset
from .encoding import FrequencyEncodingConfig
from .errors import DataError, NumericError
from .field import FieldConfig, RadianceField
from .geometry import VIEW_NAMES, CameraIntrinsics, PoseSE3, pixel_rays, rodrigues_to_matrix
from .metrics import psnr
from .renderer import render_rays, sample_depths

CHECKPOINT_MAGIC = b"STRFCKP1"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    rays_per_step: int = 6400
    samples_per_ray: int = 128
    lr: float = 1e-3
    lr_floor: float = 1e-5
    decay_period: int = 100
    decay_factor: float = 0.631
    epochs: int = 1200
    temporal_weight: float = 0.1
    temporal_ray_fraction: float = 0.25
    deltas: tuple = interp.DEFAULT_DELTAS
    flow_method: str = "ground-truth"
    optimize_cameras: bool = True
    camera_lr_scale: float = 1.0
    camera_warmup_epochs: int = 0
    anchor_view: str = "center"
    per_frame_poses: bool = False
    holdout: str | None = None
    seed: int = 0
    steps_per_epoch_cap: int = 200
    dtype: str = "float64"
    stratified: bool = True
    white_background: bool = False
    checkpoint_every: int = 0
    pose_refine_epochs: int = 0
    eval_rays: int = 1024

    def __post_init__(self):
        if not self.lr > self.lr_floor > 0:
            raise ValueError(f"require lr > lr_floor > 0, got {self.lr}, {self.lr_floor}")
        if not 0 < self.decay_factor < 1:
            raise ValueError(f"decay_factor must lie in (0, 1), got {self.decay_factor}")
        if self.temporal_weight < 0:
            raise ValueError(f"temporal_weight must be >= 0, got {self.temporal_weight}")
        if self.rays_per_step < 1 or self.samples_per_ray < 2:
            raise ValueError("rays_per_step >= 1 and samples_per_ray >= 2 required")
        self.deltas = tuple(self.deltas)

    def torch_dtype(self) -> torch.dtype:
        return {"float64": torch.float64, "float32": torch.float32}[self.dtype]


def mse_loss(rendered: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean of squared differences over every channel of every sample."""
    if rendered.shape != target.shape:
        raise ValueError(f"batch shapes differ: {tuple(rendered.shape)} vs {tuple(target.shape)}")
    if rendered.numel() == 0:
        raise ValueError("empty batch")
    return ((rendered - target) ** 2).mean()


def temporal_loss(rendered: torch.Tensor, interpolated: torch.Tensor) -> torch.Tensor:
    """MSE against the flow-interpolated pixels, which stay constant."""
    return mse_loss(rendered, interpolated.detach())


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Staircase exponential decay with a floor."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return max(cfg.lr * cfg.decay_factor ** (epoch // cfg.decay_period), cfg.lr_floor)


class AdamState:
    """First/second moment accumulators for one parameter group."""

    def __init__(self, params: list[torch.Tensor]):
        self.m = [torch.zeros_like(p) for p in params]
        self.v = [torch.zeros_like(p) for p in params]
        self.step = 0
        self.skipped = 0


def optimizer_update(
    params: list[torch.Tensor],
    grads: list[torch.Tensor | None],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (ADAM_BETA1, ADAM_BETA2),
    eps: float = ADAM_EPS,
) -> None:
    """One Adam step with bias correction, in place.

    A non-finite gradient anywhere skips the whole update (the skip
    counter on the state records it).
    """
    if len(params) != len(grads):
        raise ValueError("params and grads length mismatch")
    live = [(p, g) for p, g in zip(params, grads) if g is not None]
    if any(not torch.isfinite(g).all() for _, g in live):
        state.skipped += 1
        return
    state.step += 1
    b1, b2 = betas
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    with torch.no_grad():
        for i, (p, g) in enumerate(zip(params, grads)):
            if g is None:
                continue
            self_m, self_v = state.m[i], state.v[i]
            self_m.mul_(b1).add_(g, alpha=1.0 - b1)
            self_v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            denom = (self_v / corr2).sqrt_().add_(eps)
            p.addcdiv_(self_m, denom, value=-lr / corr1)


class CameraParams(nn.Module):
    """Learnable rig: per-view se(3) pose, one shared focal length.

    Optional per-frame pose offsets model slow drift; rays at fractional
    timestamps interpolate the offsets of the neighboring frames.
    """

    def __init__(
        self,
        poses: dict[str, PoseSE3],
        focal: float,
        width: int,
        height: int,
        frames: int,
        per_frame: bool = False,
        dtype: torch.dtype = torch.float64,
    ):
        super().__init__()
        self.view_names = list(poses.keys())
        self.width = width
        self.height = height
        self.frames = frames
        r = np.stack([poses[v].r for v in self.view_names])
        n = np.stack([poses[v].n for v in self.view_names])
        self.r = nn.Parameter(torch.as_tensor(r, dtype=dtype))
        self.n = nn.Parameter(torch.as_tensor(n, dtype=dtype))
        self.focal = nn.Parameter(torch.as_tensor(float(focal), dtype=dtype))
        if per_frame:
            self.r_frame = nn.Parameter(torch.zeros(len(self.view_names), frames, 3, dtype=dtype))
            self.n_frame = nn.Parameter(torch.zeros(len(self.view_names), frames, 3, dtype=dtype))
        else:
            self.r_frame = None
            self.n_frame = None

    @property
    def per_frame(self) -> bool:
        return self.r_frame is not None

    def view_index(self, name: str) -> int:
        return self.view_names.index(name)

    def _offsets(self, view_idx: int, frame_value: float):
        lo = int(math.floor(frame_value))
        lo = min(max(lo, 0), self.frames - 1)
        hi = min(lo + 1, self.frames - 1)
        w = frame_value - lo
        r_off = (1 - w) * self.r_frame[view_idx, lo] + w * self.r_frame[view_idx, hi]
        n_off = (1 - w) * self.n_frame[view_idx, lo] + w * self.n_frame[view_idx, hi]
        return r_off, n_off

    def rays(self, view_idx: int, frame_value: float | None, uv: torch.Tensor):
        """World rays through subpixel coords uv for one view."""
        r = self.r[view_idx]
        n = self.n[view_idx]
        if self.per_frame and frame_value is not None:
            r_off, n_off = self._offsets(view_idx, frame_value)
            r = r + r_off
            n = n + n_off
        return pixel_rays(r, n, self.focal, uv, self.width, self.height)

    def pose(self, view: str | int) -> PoseSE3:
        idx = view if isinstance(view, int) else self.view_index(view)
        with torch.no_grad():
            return PoseSE3(self.r[idx].numpy().copy(), self.n[idx].numpy().copy())

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(float(self.focal.detach()), self.width, self.height)


def _step_rng(seed: int, epoch: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(epoch, step)))


class Trainer:
    """Holds the dataset tensors, model, cameras and optimizer states."""

    def __init__(self, data: Dataset, cfg: TrainConfig, field_cfg: FieldConfig):
        self.data = data
        self.cfg = cfg
        self.dtype = cfg.torch_dtype()
        m = data.manifest
        self.z_near, self.z_far = m.z_near, m.z_far
        self.times = data.times()

        if cfg.holdout is not None and cfg.holdout not in data.view_names:
            raise DataError(f"holdout view {cfg.holdout!r} not in dataset views {data.view_names}")
        self.train_views = [v for v in data.view_names if v != cfg.holdout]
        if not self.train_views:
            raise DataError("holdout leaves no training views")

        imgs = data.images_array()
        self.images = torch.as_tensor(imgs, dtype=self.dtype).reshape(
            len(data.view_names), data.frames, m.height * m.width, 3
        )
        self.view_index = {v: i for i, v in enumerate(data.view_names)}

        poses, focal = data.training_poses()
        self.cameras = CameraParams(
            poses, focal, m.width, m.height, data.frames, per_frame=cfg.per_frame_poses, dtype=self.dtype
        )
        if not field_cfg.use_time:
            cfg.temporal_weight = 0.0  # a static field has no fractional-time renders to supervise
        self.field = RadianceField(field_cfg).to(self.dtype)
        self.field_cfg = field_cfg

        total_pixels = len(self.train_views) * data.frames * m.height * m.width
        self.steps_per_epoch = min(
            math.ceil(total_pixels / cfg.rays_per_step), cfg.steps_per_epoch_cap
        )
        self.global_step = 0
        self.epoch = 0

        self.field_params = [p for _, p in self.field.named_parameters()]
        self.camera_params = [p for _, p in self.cameras.named_parameters()]
        self.adam_field = AdamState(self.field_params)
        self.adam_cameras = AdamState(self.camera_params)

        self._interp_cache: dict[tuple[str, int, float], torch.Tensor] = {}
        if cfg.temporal_weight > 0 and data.frames >= 2:
            interp.precompute_interpolations(data, cfg.deltas, cfg.flow_method)

        self._holdout_eval = None
        if cfg.holdout is not None:
            rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0xE7A1,)))
            n_eval = min(cfg.eval_rays, m.height * m.width)
            pix = rng.choice(m.height * m.width, size=n_eval, replace=False)
            frames = rng.integers(0, data.frames, n_eval)
            self._holdout_eval = (pix, frames)

    # -- ray plumbing ------------------------------------------------------

    def _uv_from_pixels(self, pix: np.ndarray) -> np.ndarray:
        w = self.data.manifest.width
        return np.stack([(pix % w) + 0.5, (pix // w) + 0.5], axis=-1).astype(np.float64)

    def _render_batch(self, view_idx: np.ndarray, frame_value: np.ndarray, pix: np.ndarray, uid0: int):
        """Render rays grouped by camera; returns rgb predictions in input order.

        Groups share one pose matrix; with per-frame offsets the grouping
        key includes the frame value, since the pose then depends on it.
        """
        cfg = self.cfg
        uv_all = self._uv_from_pixels(pix)
        depths_np = sample_depths(
            self.z_near,
            self.z_far,
            cfg.samples_per_ray,
            cfg.stratified,
            cfg.seed,
            np.arange(uid0, uid0 + len(pix), dtype=np.uint64),
        )
        t_norm = frame_value / max(self.data.frames - 1, 1)
        t_latent_all = self.field.encode_time(torch.as_tensor(t_norm, dtype=self.dtype))
        if self.cameras.per_frame:
            keys = np.unique(np.stack([view_idx, frame_value], axis=1), axis=0)
            masks = [(view_idx == v) & (frame_value == f) for v, f in keys]
            group_fv = [float(f) for _, f in keys]
        else:
            views = np.unique(view_idx)
            masks = [view_idx == v for v in views]
            group_fv = [None] * len(masks)
        outputs = []
        positions = []
        for mask, fv in zip(masks, group_fv):
            v = int(view_idx[mask][0])
            uv = torch.as_tensor(uv_all[mask], dtype=self.dtype)
            o, d = self.cameras.rays(v, fv, uv)
            depths = torch.as_tensor(depths_np[mask], dtype=self.dtype)
            t_lat = t_latent_all[torch.as_tensor(np.flatnonzero(mask))] if t_latent_all is not None else None
            rgb, _ = render_rays(
                self.field, o, d, t_lat, depths, self.z_near, self.z_far, cfg.white_background
            )
            outputs.append(rgb)
            positions.append(np.flatnonzero(mask))
        inv = np.empty(len(pix), dtype=np.int64)
        inv[np.concatenate(positions)] = np.arange(len(pix))
        return torch.cat(outputs, dim=0)[torch.as_tensor(inv)]

    # -- one optimization step --------------------------------------------

    def step_loss(self, epoch: int, step: int):
        """The (total, mse, temporal) losses of one step, without updating.

        Sampling is a pure function of (seed, epoch, step) plus the current
        global step for the jitter stream, so repeated evaluation at fixed
        counters sees identical rays; that is what makes resume replay and
        finite-difference checks exact.
        """
        cfg = self.cfg
        rng = _step_rng(cfg.seed, epoch, step)
        hw = self.data.manifest.height * self.data.manifest.width
        uid0 = self.global_step * (cfg.rays_per_step * 2)

        view_lookup = np.array([self.view_index[v] for v in self.train_views])
        vi = view_lookup[rng.integers(0, len(self.train_views), cfg.rays_per_step)]
        fi = rng.integers(0, self.data.frames, cfg.rays_per_step)
        pi = rng.integers(0, hw, cfg.rays_per_step)
        target = self.images[vi, fi, pi]
        pred = self._render_batch(vi, fi.astype(np.float64), pi, uid0)
        l_mse = mse_loss(pred, target)

        l_temp = torch.zeros((), dtype=self.dtype)
        if cfg.temporal_weight > 0 and self.data.frames >= 2:
            n_t = max(1, int(round(cfg.rays_per_step * cfg.temporal_ray_fraction)))
            view = self.train_views[int(rng.integers(0, len(self.train_views)))]
            pair = int(rng.integers(0, self.data.frames - 1))
            delta = float(cfg.deltas[int(rng.integers(0, len(cfg.deltas)))])
            pix_t = rng.integers(0, hw, n_t)
            target_t = self._interp_image(view, pair, delta)[pix_t]
            vidx = np.full(n_t, self.view_index[view])
            fv = np.full(n_t, pair + delta)
            pred_t = self._render_batch(vidx, fv, pix_t, uid0 + cfg.rays_per_step)
            l_temp = temporal_loss(pred_t, target_t)

        return l_mse + cfg.temporal_weight * l_temp, l_mse, l_temp

    def train_step(self, epoch: int, step: int) -> dict[str, float]:
        cfg = self.cfg
        loss, l_mse, l_temp = self.step_loss(epoch, step)
        if not torch.isfinite(loss):
            raise NumericError(f"non-finite loss at epoch {epoch} step {step}")

        params = self.field_params + self.camera_params
        grads = torch.autograd.grad(loss, params, allow_unused=True)
        n_field = len(self.field_params)
        field_grads = list(grads[:n_field])
        cam_grads = list(grads[n_field:])

        lr = lr_schedule(epoch, cfg)
        refining = epoch >= cfg.epochs  # pose-refinement phase: field frozen
        if not refining:
            optimizer_update(self.field_params, field_grads, self.adam_field, lr)
        # cameras sit out the warmup so the field forms before poses move
        if cfg.optimize_cameras and epoch >= cfg.camera_warmup_epochs:
            self._mask_anchor(cam_grads)
            optimizer_update(self.camera_params, cam_grads, self.adam_cameras, lr * cfg.camera_lr_scale)
        self.global_step += 1
        return {
            "loss": float(loss.detach()),
            "l_mse": float(l_mse.detach()),
            "l_temporal": float(l_temp.detach()),
        }

    def _mask_anchor(self, cam_grads: list[torch.Tensor | None]) -> None:
        anchor = self.cfg.anchor_view
        if anchor is None or anchor not in self.cameras.view_names:
            return
        idx = self.cameras.view_index(anchor)
        named = [name for name, _ in self.cameras.named_parameters()]
        for name, g in zip(named, cam_grads):
            if g is None:
                continue
            if name in ("r", "n"):
                g[idx] = 0.0
            elif name in ("r_frame", "n_frame"):
                g[idx] = 0.0

    def _interp_image(self, view: str, pair: int, delta: float) -> torch.Tensor:
        key = (view, pair, delta)
        if key not in self._interp_cache:
            img = self.data.load_interp(view, pair, delta)
            self._interp_cache[key] = torch.as_tensor(img, dtype=self.dtype).reshape(-1, 3)
        return self._interp_cache[key]

    # -- evaluation ---------------------------------------------------------

    def holdout_psnr(self) -> float:
        if self._holdout_eval is None:
            return float("nan")
        pix, frames = self._holdout_eval
        vidx = self.view_index[self.cfg.holdout]
        order = np.argsort(frames, kind="stable")
        pix, frames = pix[order], frames[order]
        with torch.no_grad():
            preds = []
            for f in np.unique(frames):
                mask = frames == f
                uv = torch.as_tensor(self._uv_from_pixels(pix[mask]), dtype=self.dtype)
                o, d = self.cameras.rays(vidx, float(f), uv)
                depths = torch.as_tensor(
                    sample_depths(self.z_near, self.z_far, self.cfg.samples_per_ray, False),
                    dtype=self.dtype,
                ).expand(int(mask.sum()), -1)
                t_lat = self.field.encode_time(
                    torch.as_tensor([f / max(self.data.frames - 1, 1)], dtype=self.dtype)
                )
                if t_lat is not None:
                    t_lat = t_lat[0]
                rgb, _ = render_rays(
                    self.field, o, d, t_lat, depths, self.z_near, self.z_far, self.cfg.white_background
                )
                preds.append(rgb)
            pred = torch.cat(preds).numpy()
        target = self.images[vidx, frames, pix].numpy()
        return psnr(pred, target)


def train(
    data: Dataset,
    cfg: TrainConfig,
    field_cfg: FieldConfig | None = None,
    out_dir: str = ".",
    resume: str | None = None,
    log=None,
) -> str:
    """Full training run; writes metrics.csv and checkpoints, returns the
    final checkpoint path."""
    field_cfg = field_cfg or FieldConfig()
    os.makedirs(out_dir, exist_ok=True)
    trainer = Trainer(data, cfg, field_cfg)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    mode = "w"
    if resume is not None:
        load_into_trainer(resume, trainer)
        if os.path.exists(metrics_path):
            mode = "a"
    with open(metrics_path, mode, encoding="ascii") as mfh:
        if mode == "w":
            mfh.write("epoch,lr,l_mse,l_temporal,psnr_holdout\n")
        total_epochs = cfg.epochs + cfg.pose_refine_epochs
        for epoch in range(trainer.epoch, total_epochs):
            trainer.epoch = epoch
            sums = {"l_mse": 0.0, "l_temporal": 0.0}
            for step in range(trainer.steps_per_epoch):
                losses = trainer.train_step(epoch, step)
                sums["l_mse"] += losses["l_mse"]
                sums["l_temporal"] += losses["l_temporal"]
            n = trainer.steps_per_epoch
            hold = trainer.holdout_psnr()
            lr = lr_schedule(epoch, cfg)
            line = f"{epoch},{lr:.8g},{sums['l_mse'] / n:.8g},{sums['l_temporal'] / n:.8g},{hold:.4f}"
            mfh.write(line + "\n")
            mfh.flush()
            if log is not None:
                log(line)
            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(os.path.join(out_dir, f"ckpt_{epoch + 1:05d}.strf"), trainer)
        trainer.epoch = total_epochs
    final = os.path.join(out_dir, "checkpoint.strf")
    save_checkpoint(final, trainer)
    return final


# -- checkpoint format ------------------------------------------------------
#
# magic "STRFCKP1", u32 little-endian header length, UTF-8 JSON header, then
# raw little-endian float64 arrays (C order) in the order listed under
# "arrays". The header carries the field/train configs, dataset geometry,
# progress counters and Adam step/skip counters; arrays cover every model,
# camera and optimizer tensor, so a run resumes bit-exactly.


def _named_arrays(trainer: Trainer) -> list[tuple[str, torch.Tensor]]:
    out = [("field." + n, p) for n, p in trainer.field.named_parameters()]
    out += [("cameras." + n, p) for n, p in trainer.cameras.named_parameters()]
    for group, state, params in (
        ("field", trainer.adam_field, trainer.field_params),
        ("cameras", trainer.adam_cameras, trainer.camera_params),
    ):
        names = [n for n, _ in (trainer.field if group == "field" else trainer.cameras).named_parameters()]
        for i, name in enumerate(names):
            out.append((f"adam.{group}.{name}.m", state.m[i]))
            out.append((f"adam.{group}.{name}.v", state.v[i]))
    return out


def save_checkpoint(path: str, trainer: Trainer) -> None:
    arrays = _named_arrays(trainer)
    m = trainer.data.manifest
    header = {
        "format_version": 1,
        "field_cfg": asdict(trainer.field_cfg),
        "train_cfg": asdict(trainer.cfg),
        "dataset": {
            "width": m.width,
            "height": m.height,
            "z_near": m.z_near,
            "z_far": m.z_far,
            "frames": m.frames,
            "views": trainer.cameras.view_names,
        },
        "progress": {"epoch": trainer.epoch, "global_step": trainer.global_step},
        "adam": {
            "field": {"step": trainer.adam_field.step, "skipped": trainer.adam_field.skipped},
            "cameras": {"step": trainer.adam_cameras.step, "skipped": trainer.adam_cameras.skipped},
        },
        "arrays": [{"name": n, "shape": list(t.shape)} for n, t in arrays],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, t in arrays:
            fh.write(t.detach().to(torch.float64).numpy().astype("<f8").tobytes())


def read_checkpoint(path: str):
    """Returns (header dict, {name: float64 ndarray})."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != CHECKPOINT_MAGIC:
                raise DataError(f"{path}: not a checkpoint (magic {magic!r})")
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            arrays = {}
            for spec in header["arrays"]:
                shape = tuple(spec["shape"])
                count = int(np.prod(shape)) if shape else 1
                raw = fh.read(count * 8)
                if len(raw) != count * 8:
                    raise DataError(f"{path}: truncated array {spec['name']}")
                arrays[spec["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}")
    return header, arrays


def configs_from_header(header: dict) -> tuple[TrainConfig, FieldConfig]:
    tc = dict(header["train_cfg"])
    tc["deltas"] = tuple(tc.get("deltas", interp.DEFAULT_DELTAS))
    fc = dict(header["field_cfg"])
    fc["encoding"] = FrequencyEncodingConfig(**fc["encoding"])
    return TrainConfig(**tc), FieldConfig(**fc)


def load_into_trainer(path: str, trainer: Trainer) -> None:
    header, arrays = read_checkpoint(path)
    named = dict(_named_arrays(trainer))
    for name, data in arrays.items():
        if name not in named:
            raise DataError(f"{path}: checkpoint array {name!r} does not fit this model")
        with torch.no_grad():
            named[name].copy_(torch.as_tensor(data, dtype=named[name].dtype))
    trainer.epoch = header["progress"]["epoch"]
    trainer.global_step = header["progress"]["global_step"]
    trainer.adam_field.step = header["adam"]["field"]["step"]
    trainer.adam_field.skipped = header["adam"]["field"]["skipped"]
    trainer.adam_cameras.step = header["adam"]["cameras"]["step"]
    trainer.adam_cameras.skipped = header["adam"]["cameras"]["skipped"]


def load_model(path: str):
    """Rebuild (field, cameras, header) from a checkpoint, for rendering."""
    header, arrays = read_checkpoint(path)
    train_cfg, field_cfg = configs_from_header(header)
    dtype = train_cfg.torch_dtype()
    field = RadianceField(field_cfg).to(dtype)
    info = header["dataset"]
    poses = {v: PoseSE3(np.zeros(3), np.zeros(3)) for v in info["views"]}
    cameras = CameraParams(
        poses, 1.0, info["width"], info["height"], info["frames"],
        per_frame=train_cfg.per_frame_poses, dtype=dtype,
    )
    with torch.no_grad():
        for name, p in field.named_parameters():
            p.copy_(torch.as_tensor(arrays["field." + name], dtype=dtype))
        for name, p in cameras.named_parameters():
            p.copy_(torch.as_tensor(arrays["cameras." + name], dtype=dtype))
    return field, cameras, header
