"""Camera geometry: axis-angle rotations, SE(3) poses, the five-view rig, rays.

Conventions, used everywhere in this package:

  * camera space is right-handed, +x right, +y up, and the camera looks
    along -z;
  * image coordinates (u, v) grow right/down, the center of the pixel at
    array position (row i, col j) is (u, v) = (j + 0.5, i + 0.5), and the
    principal point is fixed at the image center (W/2, H/2);
  * poses are camera-to-world: p_world = R @ p_cam + n, so n is the camera
    center in world coordinates;
  * rotations are stored as axis-angle vectors r (axis * radians) and
    materialized through Rodrigues' formula, which keeps optimization in
    the Lie algebra valid at every step.

The rotation/ray math lives in torch so gradients can flow from rendered
pixels back into camera parameters; every function accepts numpy input and
returns numpy when given numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

VIEW_NAMES = ("bottom", "center", "left", "right", "top")

_SMALL_ANGLE_SQ = 1e-16  # below this, sin/cos coefficient series kick in


def _wrap(value, like) -> np.ndarray | torch.Tensor:
    if isinstance(like, torch.Tensor):
        return value
    return value.detach().numpy()


def skew_matrix(r):
    """Skew-symmetric cross-product matrix of r, shape (..., 3, 3)."""
    t = torch.as_tensor(r, dtype=torch.float64) if not isinstance(r, torch.Tensor) else r
    zero = torch.zeros_like(t[..., 0])
    rows = torch.stack(
        [
            torch.stack([zero, -t[..., 2], t[..., 1]], dim=-1),
            torch.stack([t[..., 2], zero, -t[..., 0]], dim=-1),
            torch.stack([-t[..., 1], t[..., 0], zero], dim=-1),
        ],
        dim=-2,
    )
    return _wrap(rows, r)


def rodrigues_to_matrix(r):
    """Rotation matrix R = I + sin(t)/t K + (1-cos t)/t^2 K^2 for K = skew(r).

    Differentiable in r. For angles below 1e-8 the two coefficients are
    replaced by their second-order Taylor expansions so the map stays
    smooth through r = 0.
    """
    t = torch.as_tensor(r, dtype=torch.float64) if not isinstance(r, torch.Tensor) else r
    if t.shape[-1] != 3:
        raise ValueError(f"rotation vector must have 3 components, got shape {tuple(t.shape)}")
    if not torch.isfinite(t).all():
        raise ValueError("rotation vector must be finite")
    k = skew_matrix(t)
    theta_sq = (t * t).sum(dim=-1)
    # clamp keeps the sqrt branch NaN-free where the series branch is taken
    theta = torch.sqrt(torch.clamp(theta_sq, min=_SMALL_ANGLE_SQ))
    small = theta_sq < _SMALL_ANGLE_SQ
    sin_c = torch.where(small, 1.0 - theta_sq / 6.0, torch.sin(theta) / theta)
    cos_c = torch.where(small, 0.5 - theta_sq / 24.0, (1.0 - torch.cos(theta)) / theta_sq.clamp(min=_SMALL_ANGLE_SQ))
    eye = torch.eye(3, dtype=t.dtype).expand(*t.shape[:-1], 3, 3)
    mat = eye + sin_c[..., None, None] * k + cos_c[..., None, None] * (k @ k)
    return _wrap(mat, r)


@dataclass
class PoseSE3:
    """Camera-to-world rigid transform: axis-angle r plus translation n."""

    r: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64).reshape(3).copy()
        self.n = np.asarray(self.n, dtype=np.float64).reshape(3).copy()
        if not (np.isfinite(self.r).all() and np.isfinite(self.n).all()):
            raise ValueError("pose parameters must be finite")

    def rotation(self) -> np.ndarray:
        return rodrigues_to_matrix(self.r)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation()
        m[:3, 3] = self.n
        return m

    @staticmethod
    def identity() -> "PoseSE3":
        return PoseSE3(np.zeros(3), np.zeros(3))


@dataclass
class CameraIntrinsics:
    """Pinhole intrinsics; the single learnable scalar is the focal length."""

    focal: float
    width: int
    height: int

    def __post_init__(self):
        if not (math.isfinite(self.focal) and self.focal > 0):
            raise ValueError(f"focal must be positive, got {self.focal}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be at least 1x1, got {self.width}x{self.height}")

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0


@dataclass
class Ray:
    """World-space ray with unit direction and sampling bounds in meters."""

    o: np.ndarray
    d: np.ndarray
    z_near: float
    z_far: float

    def __post_init__(self):
        self.o = np.asarray(self.o, dtype=np.float64).reshape(3)
        self.d = np.asarray(self.d, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(self.d) - 1.0) > 1e-9:
            raise ValueError(f"ray direction must be unit length, |d| = {np.linalg.norm(self.d)}")
        if not 0 < self.z_near < self.z_far:
            raise ValueError(f"require 0 < z_near < z_far, got ({self.z_near}, {self.z_far})")

    def point_at(self, z) -> np.ndarray:
        return self.o + np.asarray(z)[..., None] * self.d


def pose_to_world(pose: PoseSE3, p_cam) -> np.ndarray:
    """Map a camera-space point to world space: R @ p + n."""
    p = np.asarray(p_cam, dtype=np.float64)
    return p @ pose.rotation().T + pose.n


def world_to_camera(pose: PoseSE3, p_world) -> np.ndarray:
    p = np.asarray(p_world, dtype=np.float64)
    return (p - pose.n) @ pose.rotation()


def pixel_rays(r, n, focal, uv, width: int, height: int):
    """Batched differentiable ray generation.

    Args:
        r, n: (3,) axis-angle rotation and translation tensors.
        focal: scalar tensor, pixels.
        uv: (N, 2) subpixel image coordinates.
        width, height: image dimensions fixing the principal point.

    Returns:
        (origins, dirs): (N, 3) world-space origins and unit directions.
        Camera-space direction of pixel (u, v) is
        [(u - cx)/f, -(v - cy)/f, -1] (camera looks along -z, v grows down).
    """
    r = torch.as_tensor(r, dtype=torch.float64) if not isinstance(r, torch.Tensor) else r
    n = torch.as_tensor(n, dtype=r.dtype) if not isinstance(n, torch.Tensor) else n
    focal = torch.as_tensor(focal, dtype=r.dtype) if not isinstance(focal, torch.Tensor) else focal
    uv_t = torch.as_tensor(uv, dtype=r.dtype) if not isinstance(uv, torch.Tensor) else uv
    rot = rodrigues_to_matrix(r)
    x = (uv_t[:, 0] - width / 2.0) / focal
    y = -(uv_t[:, 1] - height / 2.0) / focal
    dirs_cam = torch.stack([x, y, -torch.ones_like(x)], dim=-1)
    dirs = dirs_cam @ rot.transpose(-1, -2)
    dirs = dirs / torch.linalg.norm(dirs, dim=-1, keepdim=True)
    origins = n.expand_as(dirs)
    return origins, dirs


def generate_ray(intr: CameraIntrinsics, pose: PoseSE3, pixel, bounds) -> Ray:
    """Cast the world-space ray through one subpixel coordinate."""
    u, v = float(pixel[0]), float(pixel[1])
    if not (0.0 <= u < intr.width and 0.0 <= v < intr.height):
        raise ValueError(f"pixel ({u}, {v}) outside {intr.width}x{intr.height} image")
    o, d = pixel_rays(pose.r, pose.n, intr.focal, np.array([[u, v]]), intr.width, intr.height)
    return Ray(o[0].numpy(), d[0].numpy(), float(bounds[0]), float(bounds[1]))


def project(intr: CameraIntrinsics, pose: PoseSE3, p_world):
    """Project world points to (u, v, distance).

    Distance is Euclidean from the camera center, matching the depth
    convention used by ray sampling and the data generator. Points behind
    the camera get u = v = nan.
    """
    p = np.asarray(p_world, dtype=np.float64)
    pc = world_to_camera(pose, p)
    z_forward = -pc[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.cx + intr.focal * pc[..., 0] / z_forward
        v = intr.cy - intr.focal * pc[..., 1] / z_forward
    bad = z_forward <= 0
    u = np.where(bad, np.nan, u)
    v = np.where(bad, np.nan, v)
    dist = np.linalg.norm(p - pose.n, axis=-1)
    return u, v, dist


def unproject(intr: CameraIntrinsics, pose: PoseSE3, pixel, dist) -> np.ndarray:
    """World point at Euclidean distance `dist` along the pixel's ray."""
    o, d = pixel_rays(pose.r, pose.n, intr.focal, np.array([[pixel[0], pixel[1]]]), intr.width, intr.height)
    return (o[0] + float(dist) * d[0]).numpy()


def rig_layout(baseline: float) -> list[PoseSE3]:
    """Poses of the five-camera cross rig, order matching VIEW_NAMES.

    The center camera sits at the rig origin; top/bottom/left/right are
    offset by one baseline along the rig's vertical/horizontal axes. All
    cameras share the same orientation (parallel optical axes, looking
    along -z).
    """
    if not baseline > 0:
        raise ValueError(f"baseline must be positive, got {baseline}")
    b = float(baseline)
    offsets = {
        "bottom": (0.0, -b, 0.0),
        "center": (0.0, 0.0, 0.0),
        "left": (-b, 0.0, 0.0),
        "right": (b, 0.0, 0.0),
        "top": (0.0, b, 0.0),
    }
    return [PoseSE3(np.zeros(3), np.array(offsets[name])) for name in VIEW_NAMES]


def save_poses(path: str, poses: dict[str, PoseSE3], focal: float) -> None:
    """One camera per line: `id rx ry rz nx ny nz focal`."""
    with open(path, "w", encoding="ascii") as fh:
        for name, pose in poses.items():
            vals = " ".join(repr(float(x)) for x in (*pose.r, *pose.n, focal))
            fh.write(f"{name} {vals}\n")


def load_poses(path: str) -> tuple[dict[str, PoseSE3], float]:
    poses: dict[str, PoseSE3] = {}
    focal = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise ValueError(f"{path}:{lineno}: expected 'id rx ry rz nx ny nz focal'")
            name = parts[0]
            vals = [float(x) for x in parts[1:]]
            poses[name] = PoseSE3(np.array(vals[0:3]), np.array(vals[3:6]))
            focal = vals[6]
    if not poses:
        raise ValueError(f"{path}: no poses found")
    return poses, focal


def rotation_angle_deg(ra: np.ndarray, rb: np.ndarray) -> float:
    """Geodesic angle in degrees between two axis-angle rotations."""
    rel = rodrigues_to_matrix(ra) @ rodrigues_to_matrix(rb).T
    c = (np.trace(rel) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))
