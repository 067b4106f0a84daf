"""Ray sampling and volume-rendering composition.

The pixel color is the transmittance-weighted sum over samples,
C = sum_i T_i (1 - exp(-sigma_i * delta_i)) c_i with
T_i = exp(-sum_{j<i} sigma_j delta_j); the first sample sees T_1 = 1.
The final spacing delta_Z, which the telescoping differences leave
undefined, is fixed to the mean bin width (z_far - z_near) / Z so the
quadrature stays consistent with the uniform sampling.

Stratified jitter comes from a counter-based hash of (seed, ray id, bin),
so results are independent of chunking and thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .geometry import CameraIntrinsics, PoseSE3, Ray, pixel_rays


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # uint64 wrap-around is the point
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def stratified_jitter(seed: int, ray_uids: np.ndarray, bins: int) -> np.ndarray:
    """Deterministic per-(ray, bin) uniforms in [0, 1), shape (N, bins)."""
    base = _splitmix64(np.asarray(ray_uids, dtype=np.uint64) ^ _splitmix64(np.array(seed, dtype=np.uint64)))
    with np.errstate(over="ignore"):
        keys = base[:, None] * np.uint64(0xD1342543DE82EF95) + np.arange(1, bins + 1, dtype=np.uint64)[None, :]
    return (_splitmix64(keys) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def sample_depths(
    z_near: float,
    z_far: float,
    count: int,
    stratified: bool,
    seed: int = 0,
    ray_uids: np.ndarray | None = None,
) -> np.ndarray:
    """Depths for a batch of rays: (len(ray_uids), count), ascending.

    Uniform bin edges over [z_near, z_far]; stratified draws one uniform
    per bin keyed by the ray uid, deterministic picks bin midpoints.
    """
    if count < 2:
        raise ValueError(f"need at least 2 samples per ray, got {count}")
    if ray_uids is None:
        ray_uids = np.zeros(1, dtype=np.uint64)
    width = (z_far - z_near) / count
    lower = z_near + width * np.arange(count, dtype=np.float64)
    if stratified:
        off = stratified_jitter(seed, ray_uids, count)
    else:
        off = np.full((len(ray_uids), count), 0.5)
    return lower[None, :] + off * width


def sample_along_ray(ray: Ray, count: int, stratified: bool = False, seed: int = 0, ray_uid: int = 0) -> np.ndarray:
    """Sampling depths for a single ray (see sample_depths)."""
    return sample_depths(ray.z_near, ray.z_far, count, stratified, seed, np.array([ray_uid], dtype=np.uint64))[0]


@dataclass
class RaySampleBatch:
    """Per-ray samples plus the field outputs evaluated at them.

    depths: (N, Z) ascending in [z_near, z_far]; points: (N, Z, 3);
    sigma: (N, Z); color: (N, Z, 3). The derived spacings use the mean bin
    width for the final sample.
    """

    depths: torch.Tensor
    points: torch.Tensor
    sigma: torch.Tensor
    color: torch.Tensor
    z_near: float
    z_far: float

    def deltas(self) -> torch.Tensor:
        last = torch.full_like(self.depths[:, :1], (self.z_far - self.z_near) / self.depths.shape[1])
        return torch.cat([self.depths[:, 1:] - self.depths[:, :-1], last], dim=1)


def composite_core(sigma: torch.Tensor, color: torch.Tensor, deltas: torch.Tensor):
    """Transmittance-weighted accumulation over samples.

    Returns (rgb (N, 3), weights (N, Z), transmittance (N, Z)); the ray
    composites over black, callers add a background term if they want one.
    """
    tau = sigma * deltas
    trans = torch.exp(-torch.cumsum(torch.cat([torch.zeros_like(tau[:, :1]), tau[:, :-1]], dim=1), dim=1))
    weights = trans * (1.0 - torch.exp(-tau))
    rgb = (weights[..., None] * color).sum(dim=1)
    return rgb, weights, trans


def composite(samples: RaySampleBatch):
    """Color, per-sample weights and transmittance for a sample batch."""
    return composite_core(samples.sigma, samples.color, samples.deltas())


def expected_depth_core(weights: torch.Tensor, depths: torch.Tensor, z_far: float, eps: float = 1e-10) -> torch.Tensor:
    wsum = weights.sum(dim=1)
    depth = (weights * depths).sum(dim=1) / torch.clamp(wsum, min=eps)
    return torch.where(wsum < eps, torch.full_like(depth, z_far), depth)


def expected_depth(samples: RaySampleBatch, weights: torch.Tensor | None = None) -> torch.Tensor:
    """Weight-averaged sample depth; empty rays fall back to z_far."""
    if weights is None:
        _, weights, _ = composite(samples)
    return expected_depth_core(weights, samples.depths, samples.z_far)


def render_rays(
    field,
    origins: torch.Tensor,
    dirs: torch.Tensor,
    t_latent: torch.Tensor | None,
    depths: torch.Tensor,
    z_near: float,
    z_far: float,
    white_background: bool = False,
):
    """Differentiable ray batch -> (rgb, weights). Shared by train and render.

    t_latent is (latent,) or (N, latent) or None for a field without time.
    """
    n, z = depths.shape
    points = origins[:, None, :] + depths[..., None] * dirs[:, None, :]
    if t_latent is not None and t_latent.dim() == 2:
        t_flat = t_latent[:, None, :].expand(n, z, -1).reshape(n * z, -1)
    elif t_latent is not None:
        t_flat = t_latent.expand(n * z, -1)
    else:
        t_flat = None
    d_flat = dirs[:, None, :].expand(n, z, 3).reshape(n * z, 3)
    out = field(points.reshape(n * z, 3), t_flat, d_flat)
    sigma = out.sigma.reshape(n, z)
    color = out.color.reshape(n, z, 3)
    batch = RaySampleBatch(depths, points, sigma, color, z_near, z_far)
    rgb, weights, trans = composite_core(sigma, color, batch.deltas())
    if white_background:
        rgb = rgb + (1.0 - weights.sum(dim=1, keepdim=True))
    return rgb, weights


def render_image(
    field,
    intr: CameraIntrinsics,
    pose,
    t: float,
    z_near: float,
    z_far: float,
    samples_per_ray: int = 128,
    seed: int = 0,
    stratified: bool = True,
    chunk: int = 8192,
    white_background: bool = False,
    focal=None,
):
    """Render a full frame; returns (rgb (H, W, 3), depth (H, W)) in numpy.

    pose is a PoseSE3 or an (r, n) tensor pair; focal overrides the
    intrinsics' focal when the learned scalar should be used. Jitter is
    keyed by pixel index, so any chunk size gives the identical image.
    """
    dtype = next(field.parameters()).dtype
    if isinstance(pose, PoseSE3):
        r = torch.as_tensor(pose.r, dtype=dtype)
        n = torch.as_tensor(pose.n, dtype=dtype)
    else:
        r, n = pose
    f = torch.as_tensor(intr.focal if focal is None else focal, dtype=dtype)

    h, w = intr.height, intr.width
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    uv = np.stack([jj.ravel() + 0.5, ii.ravel() + 0.5], axis=-1)
    uids = np.arange(h * w, dtype=np.uint64)

    rgb_out = np.empty((h * w, 3), dtype=np.float64)
    depth_out = np.empty(h * w, dtype=np.float64)
    with torch.no_grad():
        t_latent = field.encode_time(torch.as_tensor([t], dtype=dtype))
        if t_latent is not None:
            t_latent = t_latent[0]
        for lo in range(0, h * w, chunk):
            hi = min(lo + chunk, h * w)
            o, d = pixel_rays(r, n, f, torch.as_tensor(uv[lo:hi], dtype=dtype), w, h)
            depths = torch.as_tensor(
                sample_depths(z_near, z_far, samples_per_ray, stratified, seed, uids[lo:hi]), dtype=dtype
            )
            rgb, weights = render_rays(field, o, d, t_latent, depths, z_near, z_far, white_background)
            rgb_out[lo:hi] = rgb.numpy()
            depth_out[lo:hi] = expected_depth_core(weights, depths, z_far).numpy()
    return rgb_out.reshape(h, w, 3), depth_out.reshape(h, w)
