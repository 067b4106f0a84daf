"""Dataset layout on disk and the loader used by training and evaluation.

A dataset directory contains:

    manifest.txt                key = value header, ground-truth poses,
                                and a table of every referenced file
    poses.txt                   the poses handed to the trainer (equal to
                                the ground truth unless written perturbed)
    rgb/<view>/<t>.ppm          color frames
    depth/<view>/<t>.pfm        ground-truth depth (distance along ray)
    flow/<view>/<t>_fwd.flo     flow t -> t+1 on the frame-t grid
    flow/<view>/<t>_bwd.flo     flow t+1 -> t on the frame-t+1 grid
    flow/<view>/<t>_occ_*.pgm   occlusion masks (255 = occluded)
    interp/<view>/<t>_<d>.ppm   cached interpolated frames (written lazily)

Frame k of T maps to the normalized timestamp k / (T - 1).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import imgio
from .errors import DataError
from .geometry import VIEW_NAMES, CameraIntrinsics, PoseSE3, load_poses

FILE_KINDS = ("rgb", "depth", "flow_fwd", "flow_bwd", "occ_fwd", "occ_bwd")


@dataclass
class DatasetManifest:
    views: int
    frames: int
    width: int
    height: int
    focal: float
    z_near: float
    z_far: float
    baseline: float
    perturbed: bool
    poses: dict[str, PoseSE3]
    files: dict[tuple[str, str, int], str] = field(default_factory=dict)

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.focal, self.width, self.height)

    def times(self) -> np.ndarray:
        if self.frames < 2:
            return np.zeros(self.frames)
        return np.arange(self.frames) / (self.frames - 1)


def rgb_path(view: str, t: int) -> str:
    return f"rgb/{view}/{t:04d}.ppm"


def depth_path(view: str, t: int) -> str:
    return f"depth/{view}/{t:04d}.pfm"


def flow_path(view: str, t: int, kind: str) -> str:
    suffix = {"flow_fwd": "fwd.flo", "flow_bwd": "bwd.flo", "occ_fwd": "occ_fwd.pgm", "occ_bwd": "occ_bwd.pgm"}[kind]
    return f"flow/{view}/{t:04d}_{suffix}"


def interp_path(view: str, t: int, delta: float) -> str:
    return f"interp/{view}/{t:04d}_{delta:.2f}.ppm"


def write_manifest(path: str, m: DatasetManifest) -> None:
    lines = ["# strf dataset"]
    for key in ("views", "frames", "width", "height"):
        lines.append(f"{key} = {getattr(m, key)}")
    for key in ("focal", "z_near", "z_far", "baseline"):
        lines.append(f"{key} = {getattr(m, key)!r}")
    lines.append(f"perturbed = {int(m.perturbed)}")
    lines.append("# ground-truth cameras: id rx ry rz nx ny nz focal")
    for name, pose in m.poses.items():
        vals = " ".join(repr(float(x)) for x in (*pose.r, *pose.n, m.focal))
        lines.append(f"pose {name} {vals}")
    for (kind, view, t), rel in m.files.items():
        lines.append(f"file {kind} {view} {t} {rel}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_manifest(root: str) -> DatasetManifest:
    path = os.path.join(root, "manifest.txt")
    if not os.path.isfile(path):
        raise DataError(f"missing dataset manifest: {path}")
    scalars: dict[str, str] = {}
    poses: dict[str, PoseSE3] = {}
    files: dict[tuple[str, str, int], str] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("pose "):
                parts = line.split()
                if len(parts) != 9:
                    raise DataError(f"{path}:{lineno}: malformed pose line")
                poses[parts[1]] = PoseSE3(np.array(parts[2:5], dtype=np.float64), np.array(parts[5:8], dtype=np.float64))
            elif line.startswith("file "):
                parts = line.split()
                if len(parts) != 5:
                    raise DataError(f"{path}:{lineno}: malformed file line")
                files[(parts[1], parts[2], int(parts[3]))] = parts[4]
            elif "=" in line:
                key, value = (s.strip() for s in line.split("=", 1))
                scalars[key] = value
            else:
                raise DataError(f"{path}:{lineno}: unrecognized line {line!r}")
    try:
        m = DatasetManifest(
            views=int(scalars["views"]),
            frames=int(scalars["frames"]),
            width=int(scalars["width"]),
            height=int(scalars["height"]),
            focal=float(scalars["focal"]),
            z_near=float(scalars["z_near"]),
            z_far=float(scalars["z_far"]),
            baseline=float(scalars["baseline"]),
            perturbed=bool(int(scalars.get("perturbed", "0"))),
            poses=poses,
            files=files,
        )
    except KeyError as exc:
        raise DataError(f"{path}: missing manifest key {exc}")
    if m.frames < 2:
        raise DataError(f"{path}: need at least 2 frames, got {m.frames}")
    for key, rel in m.files.items():
        full = os.path.join(root, rel)
        if not os.path.isfile(full):
            raise DataError(f"{path}: referenced file missing: {full}")
    return m


class Dataset:
    """Random access to one dataset directory, with simple caching."""

    def __init__(self, root: str):
        self.root = root
        self.manifest = load_manifest(root)
        self.view_names = [v for v in VIEW_NAMES if ("rgb", v, 0) in self.manifest.files]
        if not self.view_names:
            raise DataError(f"{root}: manifest lists no rgb frames")
        self._images: dict[tuple[str, int], np.ndarray] = {}

    @property
    def frames(self) -> int:
        return self.manifest.frames

    def times(self) -> np.ndarray:
        return self.manifest.times()

    def _file(self, kind: str, view: str, t: int) -> str:
        try:
            rel = self.manifest.files[(kind, view, t)]
        except KeyError:
            raise DataError(f"{self.root}: no {kind} entry for view {view} frame {t}")
        return os.path.join(self.root, rel)

    def image(self, view: str, t: int) -> np.ndarray:
        key = (view, t)
        if key not in self._images:
            self._images[key] = imgio.read_image(self._file("rgb", view, t))
        return self._images[key]

    def images_array(self) -> np.ndarray:
        """All frames as one (views, frames, H, W, 3) float array."""
        return np.stack(
            [np.stack([self.image(v, t) for t in range(self.frames)]) for v in self.view_names]
        )

    def depth(self, view: str, t: int) -> np.ndarray:
        return imgio.read_pfm(self._file("depth", view, t))

    def flow_pair(self, view: str, t: int):
        """(fwd, bwd, occ_fwd, occ_bwd) between frames t and t+1."""
        fwd = imgio.read_flow(self._file("flow_fwd", view, t))
        bwd = imgio.read_flow(self._file("flow_bwd", view, t))
        occ_f = imgio.read_pgm(self._file("occ_fwd", view, t)) > 0.5
        occ_b = imgio.read_pgm(self._file("occ_bwd", view, t)) > 0.5
        return fwd, bwd, occ_f, occ_b

    def training_poses(self) -> tuple[dict[str, PoseSE3], float]:
        path = os.path.join(self.root, "poses.txt")
        if not os.path.isfile(path):
            raise DataError(f"missing training poses: {path}")
        return load_poses(path)

    def interp_file(self, view: str, t: int, delta: float) -> str:
        return os.path.join(self.root, interp_path(view, t, delta))

    def has_interp(self, view: str, t: int, delta: float) -> bool:
        return os.path.isfile(self.interp_file(view, t, delta))

    def load_interp(self, view: str, t: int, delta: float) -> np.ndarray:
        path = self.interp_file(view, t, delta)
        if not os.path.isfile(path):
            raise DataError(f"missing cached interpolated frame: {path}")
        return imgio.read_ppm(path)
