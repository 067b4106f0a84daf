"""Procedural synthetic multiscopic dataset generator.

Renders a desk-scale scene (textured ground and back walls, a few static
primitives, and one moving sphere translating linearly from left to right)
from the five-camera rig, and writes images, ground-truth depth, exact
optical flow with occlusion masks, poses and a manifest.

The shading model is Lambertian with a constant ambient floor and a single
directional light, no shadows: a translating object keeps its exact pixel
colors, which is what makes the ground-truth flow supervision exact.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import dataset as ds
from . import imgio
from .config import Config
from .dataset import DatasetManifest
from .errors import DataError
from .geometry import (
    VIEW_NAMES,
    CameraIntrinsics,
    PoseSE3,
    pixel_rays,
    project,
    rig_layout,
    rodrigues_to_matrix,
    save_poses,
)

_EPS = 1e-9
_OCC_TOL = 1e-6


@dataclass
class SineTexture:
    """Two-band multiplicative albedo modulation over in-plane coordinates."""

    freq_u: float = 9.0
    freq_v: float = 7.0
    phase_u: float = 0.0
    phase_v: float = 0.0
    freq2_u: float = 13.0
    freq2_v: float = 11.0

    def factor(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        band1 = np.sin(self.freq_u * u + self.phase_u) * np.sin(self.freq_v * v + self.phase_v)
        band2 = np.sin(self.freq2_u * u + 1.3) * np.sin(self.freq2_v * v + 0.7)
        return 0.65 + 0.28 * band1 + 0.05 * band2


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    albedo: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)


@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray
    albedo: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)


@dataclass
class RectPlane:
    """Axis-aligned rectangle: `axis` is the normal axis, uv the other two."""

    axis: int
    coord: float
    u_range: tuple[float, float]
    v_range: tuple[float, float]
    albedo: np.ndarray
    normal_sign: float = 1.0
    texture: SineTexture | None = None

    def __post_init__(self):
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        self.uv_axes = tuple(a for a in (0, 1, 2) if a != self.axis)


@dataclass
class Mover:
    """The single moving primitive: a sphere translating start -> end."""

    radius: float
    albedo: np.ndarray
    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        self.start = np.asarray(self.start, dtype=np.float64)
        self.end = np.asarray(self.end, dtype=np.float64)

    def center(self, t: float) -> np.ndarray:
        return self.start + t * (self.end - self.start)


@dataclass
class SceneSpec:
    statics: list = field(default_factory=list)
    mover: Mover | None = None
    light_dir: np.ndarray = field(default_factory=lambda: np.array([0.3, 0.5, 0.85]))
    ambient: float = 0.25
    baseline: float = 0.12
    width: int = 1280
    height: int = 720
    focal: float = 1200.0
    frames: int = 24
    z_near: float = 0.7
    z_far: float = 3.0

    def __post_init__(self):
        self.light_dir = np.asarray(self.light_dir, dtype=np.float64)
        self.light_dir = self.light_dir / np.linalg.norm(self.light_dir)

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.focal, self.width, self.height)

    def rig(self) -> list[PoseSE3]:
        return rig_layout(self.baseline)

    def times(self) -> np.ndarray:
        return np.arange(self.frames) / max(self.frames - 1, 1)


def default_scene(profile: str = "full") -> SceneSpec:
    """The stock scene; `desk` is the low-resolution CI profile."""
    if profile == "full":
        width, height, frames = 1280, 720, 24
    elif profile == "desk":
        width, height, frames = 160, 120, 8
    else:
        raise ValueError(f"unknown profile {profile!r} (expected 'full' or 'desk')")
    statics = [
        RectPlane(1, -0.45, (-1.25, 1.25), (-2.45, -0.9), np.array([0.62, 0.58, 0.52]),
                  normal_sign=1.0, texture=SineTexture()),
        RectPlane(2, -2.45, (-1.25, 1.25), (-0.5, 0.85), np.array([0.45, 0.52, 0.62]),
                  normal_sign=1.0, texture=SineTexture(6.0, 8.0, 0.9, 2.1, 12.0, 10.0)),
        Sphere(np.array([-0.42, -0.29, -1.95]), 0.16, np.array([0.18, 0.62, 0.25])),
        Box(np.array([0.22, -0.45, -2.15]), np.array([0.54, -0.12, -1.85]), np.array([0.20, 0.32, 0.72])),
    ]
    mover = Mover(0.12, np.array([0.85, 0.10, 0.08]),
                  np.array([-0.35, -0.04, -1.55]), np.array([0.35, -0.04, -1.55]))
    return SceneSpec(statics=statics, mover=mover, width=width, height=height,
                     focal=0.9375 * width, frames=frames)


def scene_from_config(cfg: Config, profile: str | None = None) -> SceneSpec:
    """Build a SceneSpec from the [scene] section over the profile defaults."""
    spec = default_scene(profile or cfg.get("scene", "profile", "full"))
    s = "scene"
    spec.width = cfg.get_int(s, "width", spec.width)
    spec.height = cfg.get_int(s, "height", spec.height)
    spec.frames = cfg.get_int(s, "frames", spec.frames)
    spec.focal = cfg.get_float(s, "focal", 0.9375 * spec.width)
    spec.baseline = cfg.get_float(s, "baseline", spec.baseline)
    spec.z_near = cfg.get_float(s, "z_near", spec.z_near)
    spec.z_far = cfg.get_float(s, "z_far", spec.z_far)
    spec.ambient = cfg.get_float(s, "ambient", spec.ambient)
    light = cfg.get_floats(s, "light")
    if light is not None:
        spec.light_dir = np.asarray(light) / np.linalg.norm(light)
    for key in ("mover_start", "mover_end"):
        vals = cfg.get_floats(s, key)
        if vals is not None:
            setattr(spec.mover, key.split("_")[1], np.asarray(vals))
    spec.mover.radius = cfg.get_float(s, "mover_radius", spec.mover.radius)
    alb = cfg.get_floats(s, "mover_albedo")
    if alb is not None:
        spec.mover.albedo = np.asarray(alb)
    extra = []
    for line in cfg.get_all(s, "sphere"):
        v = [float(x) for x in line.split()]
        extra.append(Sphere(np.array(v[0:3]), v[3], np.array(v[4:7])))
    for line in cfg.get_all(s, "box"):
        v = [float(x) for x in line.split()]
        extra.append(Box(np.array(v[0:3]), np.array(v[3:6]), np.array(v[6:9])))
    if extra:
        spec.statics = [p for p in spec.statics if isinstance(p, RectPlane)] + extra
    return spec


def validate_scene(spec: SceneSpec) -> None:
    """Moving primitive must stay inside every camera's frustum at all times."""
    intr = spec.intrinsics()
    for name, pose in zip(VIEW_NAMES, spec.rig()):
        for t in np.linspace(0.0, 1.0, 17):
            c = spec.mover.center(t)
            u, v, dist = project(intr, pose, c)
            if not (np.isfinite(u) and np.isfinite(v)):
                raise ValueError(f"mover behind camera {name} at t={t:.2f}")
            margin = intr.focal * spec.mover.radius / max(dist - spec.mover.radius, _EPS) + 1.0
            if not (margin <= u <= spec.width - margin and margin <= v <= spec.height - margin):
                raise ValueError(f"mover leaves the frustum of camera {name} at t={t:.2f}")


def _resolve_pose(spec: SceneSpec, view) -> PoseSE3:
    if isinstance(view, PoseSE3):
        return view
    if isinstance(view, str):
        return spec.rig()[VIEW_NAMES.index(view)]
    return spec.rig()[int(view)]


def _camera_rays(spec: SceneSpec, pose: PoseSE3):
    h, w = spec.height, spec.width
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    uv = np.stack([jj.ravel() + 0.5, ii.ravel() + 0.5], axis=-1)
    o, d = pixel_rays(pose.r, pose.n, spec.focal, uv, w, h)
    return o.numpy(), d.numpy()


def _intersect_sphere(o, d, center, radius):
    oc = o - center
    b = np.einsum("ij,ij->i", oc, d)
    disc = b * b - (np.einsum("ij,ij->i", oc, oc) - radius * radius)
    ok = disc >= 0
    s = np.where(ok, -b - np.sqrt(np.where(ok, disc, 0.0)), np.inf)
    return np.where(s > _EPS, s, np.inf)


def _intersect_box(o, d, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo[None, :] - o) / d
        t2 = (hi[None, :] - o) / d
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    near = np.nanmax(tmin, axis=1)
    far = np.nanmin(tmax, axis=1)
    hit = (far >= near) & (far > _EPS) & (near > _EPS)
    axis = np.nanargmax(np.where(np.isnan(tmin), -np.inf, tmin), axis=1)
    return np.where(hit, near, np.inf), axis


def _intersect_plane(o, d, plane: RectPlane):
    a = plane.axis
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (plane.coord - o[:, a]) / d[:, a]
    s = np.where(np.isfinite(s) & (s > _EPS), s, np.inf)
    ua, va = plane.uv_axes
    pu = o[:, ua] + s * d[:, ua]
    pv = o[:, va] + s * d[:, va]
    inside = (
        (pu >= plane.u_range[0]) & (pu <= plane.u_range[1]) & (pv >= plane.v_range[0]) & (pv <= plane.v_range[1])
    )
    return np.where(inside, s, np.inf)


class _Hits(NamedTuple):
    dist: np.ndarray  # (N,) first-hit distance, inf where none
    prim: np.ndarray  # (N,) primitive index, -1 where none (mover = len(statics))
    point: np.ndarray  # (N, 3) hit points (undefined where none)
    normal: np.ndarray  # (N, 3) surface normals (undefined where none)
    albedo: np.ndarray  # (N, 3)


def _trace(spec: SceneSpec, o: np.ndarray, d: np.ndarray, t: float) -> _Hits:
    n_rays = o.shape[0]
    prims = list(spec.statics)
    mover_index = len(prims)
    mover_center = spec.mover.center(t) if spec.mover is not None else None

    best = np.full(n_rays, np.inf)
    prim = np.full(n_rays, -1, dtype=np.int64)
    box_axis = np.zeros(n_rays, dtype=np.int64)
    for idx, p in enumerate(prims):
        if isinstance(p, Sphere):
            s = _intersect_sphere(o, d, p.center, p.radius)
        elif isinstance(p, Box):
            s, axis = _intersect_box(o, d, p.lo, p.hi)
        elif isinstance(p, RectPlane):
            s = _intersect_plane(o, d, p)
        else:
            raise TypeError(f"unknown primitive {type(p)}")
        closer = s < best
        if isinstance(p, Box):
            box_axis = np.where(closer, axis, box_axis)
        best = np.where(closer, s, best)
        prim = np.where(closer, idx, prim)
    if mover_center is not None:
        s = _intersect_sphere(o, d, mover_center, spec.mover.radius)
        closer = s < best
        best = np.where(closer, s, best)
        prim = np.where(closer, mover_index, prim)

    point = o + np.where(np.isfinite(best), best, 0.0)[:, None] * d
    normal = np.zeros((n_rays, 3))
    albedo = np.zeros((n_rays, 3))
    for idx, p in enumerate(prims):
        mask = prim == idx
        if not mask.any():
            continue
        if isinstance(p, Sphere):
            normal[mask] = (point[mask] - p.center) / p.radius
            albedo[mask] = p.albedo
        elif isinstance(p, Box):
            ax = box_axis[mask]
            sign = -np.sign(d[mask, ax])
            normal[mask, ax] = sign
            albedo[mask] = p.albedo
        elif isinstance(p, RectPlane):
            normal[mask, p.axis] = p.normal_sign
            alb = np.broadcast_to(p.albedo, (int(mask.sum()), 3)).copy()
            if p.texture is not None:
                ua, va = p.uv_axes
                alb *= p.texture.factor(point[mask, ua], point[mask, va])[:, None]
            albedo[mask] = alb
    if mover_center is not None:
        mask = prim == mover_index
        if mask.any():
            normal[mask] = (point[mask] - mover_center) / spec.mover.radius
            albedo[mask] = spec.mover.albedo
    return _Hits(best, prim, point, normal, albedo)


def _shade(spec: SceneSpec, hits: _Hits) -> np.ndarray:
    # wrap diffuse: (1 + n.l)/2 instead of max(0, n.l), so shading is C^1
    # everywhere and images resample cleanly under subpixel warps
    lam = 0.5 + 0.5 * np.einsum("ij,j->i", hits.normal, spec.light_dir)
    rgb = hits.albedo * (spec.ambient + (1.0 - spec.ambient) * lam)[:, None]
    rgb[hits.prim < 0] = 0.0
    return np.clip(rgb, 0.0, 1.0)


def render_frame(spec: SceneSpec, view, t: float, aux: bool = False):
    """Render one frame: (rgb (H, W, 3), depth (H, W)) plus hit info if aux.

    Depth is the distance to the first hit along the (unit) pixel ray,
    z_far where nothing is hit; the background renders black.
    """
    pose = _resolve_pose(spec, view)
    o, d = _camera_rays(spec, pose)
    hits = _trace(spec, o, d, t)
    rgb = _shade(spec, hits).reshape(spec.height, spec.width, 3)
    depth = np.where(np.isfinite(hits.dist), hits.dist, spec.z_far)
    depth = np.minimum(depth, spec.z_far).reshape(spec.height, spec.width)
    if aux:
        return rgb, depth, hits
    return rgb, depth


class FlowPair(NamedTuple):
    fwd: np.ndarray  # (H, W, 2) flow t0 -> t1 on the t0 grid
    bwd: np.ndarray  # (H, W, 2) flow t1 -> t0 on the t1 grid
    occ_fwd: np.ndarray  # (H, W) bool, True where the t0 pixel is hidden at t1
    occ_bwd: np.ndarray  # (H, W) bool


def _occluded_at(spec: SceneSpec, pose: PoseSE3, points: np.ndarray, t: float) -> np.ndarray:
    """True where the world point is blocked from the camera at scene time t."""
    offs = points - pose.n
    dist = np.linalg.norm(offs, axis=1)
    d = offs / np.maximum(dist, _EPS)[:, None]
    o = np.broadcast_to(pose.n, points.shape)
    hits = _trace(spec, np.ascontiguousarray(o), d, t)
    return hits.dist < dist - _OCC_TOL


def _flow_one_direction(spec: SceneSpec, pose: PoseSE3, intr: CameraIntrinsics, t_src: float, t_dst: float):
    o, d = _camera_rays(spec, pose)
    hits = _trace(spec, o, d, t_src)
    mover_index = len(spec.statics)
    h, w = spec.height, spec.width

    # static and background pixels carry exactly zero flow; only surface
    # points on the mover get the projected displacement
    flow = np.zeros((h * w, 2))
    shift = spec.mover.center(t_dst) - spec.mover.center(t_src)
    on_mover = hits.prim == mover_index
    moved = hits.point.copy()
    if on_mover.any() and np.any(shift != 0.0):
        moved[on_mover] += shift
        u1, v1, _ = project(intr, pose, moved[on_mover])
        jj, ii = np.meshgrid(np.arange(w), np.arange(h))
        u0 = (jj.ravel() + 0.5)[on_mover]
        v0 = (ii.ravel() + 0.5)[on_mover]
        outside = ~((u1 >= 0) & (u1 < w) & (v1 >= 0) & (v1 < h))
        flow[on_mover] = np.nan_to_num(np.stack([u1 - u0, v1 - v0], axis=-1), nan=0.0)
    else:
        outside = np.zeros(int(on_mover.sum()), dtype=bool)

    occ = np.zeros(h * w, dtype=bool)
    hit_mask = hits.prim >= 0
    if hit_mask.any():
        occ[hit_mask] = _occluded_at(spec, pose, moved[hit_mask], t_dst)
    occ[on_mover] |= outside
    # a background pixel is covered at t_dst if anything newly intersects its ray
    bg = ~hit_mask
    if bg.any():
        hits_dst = _trace(spec, o[bg], d[bg], t_dst)
        occ[bg] = np.isfinite(hits_dst.dist)
    return flow.reshape(h, w, 2), occ.reshape(h, w)


def ground_truth_flow(spec: SceneSpec, view, t0: float, t1: float) -> FlowPair:
    """Exact optical flow between two scene times, with occlusion masks.

    Pixels on the moving primitive carry the projected displacement of the
    intersected surface point; static and background pixels get zero flow.
    """
    pose = _resolve_pose(spec, view)
    intr = spec.intrinsics()
    fwd, occ_f = _flow_one_direction(spec, pose, intr, t0, t1)
    bwd, occ_b = _flow_one_direction(spec, pose, intr, t1, t0)
    return FlowPair(fwd, bwd, occ_f, occ_b)


def perturbed_rig(spec: SceneSpec, rot_deg: float, trans: float, seed: int) -> list[PoseSE3]:
    """Rig poses with a fixed-magnitude, random-direction offset per view.

    The center view is the gauge anchor and is never perturbed. Rotation
    is exactly rot_deg about a random axis, translation exactly `trans`
    along a random direction, so the injected error levels are known.
    """
    rng = np.random.default_rng(seed)
    poses = []
    for name, pose in zip(VIEW_NAMES, spec.rig()):
        if name == "center" or (rot_deg == 0 and trans == 0):
            poses.append(pose)
            continue
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        r_noise = axis * math.radians(rot_deg)
        tdir = rng.normal(size=3)
        tdir /= np.linalg.norm(tdir)
        r_new = _compose_rotations(r_noise, pose.r)
        poses.append(PoseSE3(r_new, pose.n + trans * tdir))
    return poses


def _compose_rotations(r_left: np.ndarray, r_right: np.ndarray) -> np.ndarray:
    mat = rodrigues_to_matrix(r_left) @ rodrigues_to_matrix(r_right)
    return matrix_to_rodrigues(mat)


def matrix_to_rodrigues(mat: np.ndarray) -> np.ndarray:
    """Axis-angle log map; angles are assumed well below pi."""
    cos_t = min(1.0, max(-1.0, (np.trace(mat) - 1.0) / 2.0))
    theta = math.acos(cos_t)
    vee = 0.5 * np.array([mat[2, 1] - mat[1, 2], mat[0, 2] - mat[2, 0], mat[1, 0] - mat[0, 1]])
    if theta < 1e-8:
        return vee  # sin(t)/t ~ 1
    return vee * theta / math.sin(theta)


def generate_dataset(
    spec: SceneSpec,
    out_dir: str,
    perturb: bool = False,
    perturb_rot_deg: float = 0.5,
    perturb_trans: float = 0.003,
    seed: int = 0,
    threads: int = 1,
) -> DatasetManifest:
    """Render all frames/views and write the full dataset layout.

    With `perturb`, poses.txt (what the trainer reads) gets noisy poses
    while the manifest keeps the exact ones for evaluation.
    """
    if spec.frames < 2:
        raise ValueError(f"need at least 2 frames, got {spec.frames}")
    validate_scene(spec)
    rig = spec.rig()
    times = spec.times()
    try:
        for sub in ("rgb", "depth", "flow", "interp"):
            for name in VIEW_NAMES:
                os.makedirs(os.path.join(out_dir, sub, name), exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create dataset directory {out_dir}: {exc}")

    manifest = DatasetManifest(
        views=len(VIEW_NAMES),
        frames=spec.frames,
        width=spec.width,
        height=spec.height,
        focal=spec.focal,
        z_near=spec.z_near,
        z_far=spec.z_far,
        baseline=spec.baseline,
        perturbed=perturb,
        poses={name: pose for name, pose in zip(VIEW_NAMES, rig)},
    )

    def render_job(view_idx: int, t_idx: int):
        name = VIEW_NAMES[view_idx]
        rgb, depth = render_frame(spec, view_idx, times[t_idx])
        imgio.write_ppm(os.path.join(out_dir, ds.rgb_path(name, t_idx)), rgb)
        imgio.write_pfm(os.path.join(out_dir, ds.depth_path(name, t_idx)), depth)

    def flow_job(view_idx: int, t_idx: int):
        name = VIEW_NAMES[view_idx]
        pair = ground_truth_flow(spec, view_idx, times[t_idx], times[t_idx + 1])
        imgio.write_flow(os.path.join(out_dir, ds.flow_path(name, t_idx, "flow_fwd")), pair.fwd)
        imgio.write_flow(os.path.join(out_dir, ds.flow_path(name, t_idx, "flow_bwd")), pair.bwd)
        imgio.write_pgm(os.path.join(out_dir, ds.flow_path(name, t_idx, "occ_fwd")), pair.occ_fwd.astype(np.float64))
        imgio.write_pgm(os.path.join(out_dir, ds.flow_path(name, t_idx, "occ_bwd")), pair.occ_bwd.astype(np.float64))

    jobs = [(render_job, v, t) for v in range(len(VIEW_NAMES)) for t in range(spec.frames)]
    jobs += [(flow_job, v, t) for v in range(len(VIEW_NAMES)) for t in range(spec.frames - 1)]
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(lambda j: j[0](j[1], j[2]), jobs))
        else:
            for job, v, t in jobs:
                job(v, t)
    except OSError as exc:
        raise DataError(f"failed writing dataset under {out_dir}: {exc}")

    for name in VIEW_NAMES:
        for t in range(spec.frames):
            manifest.files[("rgb", name, t)] = ds.rgb_path(name, t)
            manifest.files[("depth", name, t)] = ds.depth_path(name, t)
        for t in range(spec.frames - 1):
            for kind in ("flow_fwd", "flow_bwd", "occ_fwd", "occ_bwd"):
                manifest.files[(kind, name, t)] = ds.flow_path(name, t, kind)

    train_rig = perturbed_rig(spec, perturb_rot_deg, perturb_trans, seed) if perturb else rig
    save_poses(os.path.join(out_dir, "poses.txt"), {n: p for n, p in zip(VIEW_NAMES, train_rig)}, spec.focal)
    ds.write_manifest(os.path.join(out_dir, "manifest.txt"), manifest)
    return manifest
