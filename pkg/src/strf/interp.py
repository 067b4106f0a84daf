"""Flow-based intermediate-frame synthesis used as temporal supervision.

Given two consecutive frames and their bidirectional flows, intermediate
flows at fractional time delta are the standard quadratic blend (valid for
slow, smooth motion); both source frames are backward-warped to the
intermediate instant and aggregated with per-source visibility weights:

    I = (1/lam) * [(1-d) V0 * g(I_t, F_to_t) + d V1 * g(I_t1, F_to_t1)],
    lam = (1-d) V0 + d V1

so the result is a true convex combination wherever lam is nonzero.
Visibility comes from forward-backward flow consistency rather than a
learned network; flows come either from the dataset's exact fields or
from a coarse-to-fine variational estimator.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.ndimage import convolve, zoom

from . import dataset as ds
from . import imgio
from .errors import DataError

# variational estimator defaults: smoothness weight and per-level sweeps
HS_ALPHA = 12.0
HS_ITERS = 160
HS_LEVELS = 3

VISIBILITY_TAU = 1.0
DEFAULT_DELTAS = (0.2, 0.4, 0.6, 0.8)

_AVG_KERNEL = np.array([[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]])


def _to_gray(img: np.ndarray) -> np.ndarray:
    """Luminance rescaled to 0..255, the range the smoothness weight assumes."""
    if img.ndim == 2:
        return img.astype(np.float64) * 255.0
    return (img @ np.array([0.299, 0.587, 0.114])) * 255.0


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample img at continuous array coordinates (x = col, y = row).

    Out-of-bounds coordinates clamp to the border. Works for (H, W) and
    (H, W, C) images; x/y share any broadcastable shape.
    """
    h, w = img.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def warp(img: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward warp: output(x) = img sampled at x + flow(x)."""
    if flow.shape[:2] != img.shape[:2]:
        raise ValueError(f"flow dims {flow.shape[:2]} do not match image {img.shape[:2]}")
    h, w = img.shape[:2]
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    return bilinear_sample(img, jj + flow[..., 0], ii + flow[..., 1])


def _hs_single_level(i0: np.ndarray, i1: np.ndarray, alpha: float, iters: int, init: np.ndarray) -> np.ndarray:
    """One incremental Horn-Schunck solve, linearized around `init`."""
    i1w = warp(i1, init)
    gy0, gx0 = np.gradient(i0)
    gy1, gx1 = np.gradient(i1w)
    fx = 0.5 * (gx0 + gx1)
    fy = 0.5 * (gy0 + gy1)
    ft = i1w - i0
    u = np.zeros_like(i0)
    v = np.zeros_like(i0)
    denom = alpha**2 + fx**2 + fy**2
    for _ in range(iters):
        u_avg = convolve(u, _AVG_KERNEL)
        v_avg = convolve(v, _AVG_KERNEL)
        common = (fx * u_avg + fy * v_avg + ft) / denom
        u = u_avg - fx * common
        v = v_avg - fy * common
    return init + np.stack([u, v], axis=-1)


def horn_schunck(
    i0: np.ndarray,
    i1: np.ndarray,
    alpha: float = HS_ALPHA,
    iters: int = HS_ITERS,
    levels: int = HS_LEVELS,
) -> np.ndarray:
    """Coarse-to-fine variational flow from i0 to i1, (H, W, 2) in pixels."""
    g0 = _to_gray(i0)
    g1 = _to_gray(i1)
    pyramid = [(g0, g1)]
    for _ in range(levels - 1):
        g0 = zoom(g0, 0.5, order=1, grid_mode=True, mode="nearest")
        g1 = zoom(g1, 0.5, order=1, grid_mode=True, mode="nearest")
        if min(g0.shape) < 8:
            break
        pyramid.append((g0, g1))
    flow = np.zeros((*pyramid[-1][0].shape, 2))
    for lvl, (a, b) in enumerate(reversed(pyramid)):
        if lvl > 0:
            scale = (a.shape[0] / flow.shape[0], a.shape[1] / flow.shape[1])
            flow = np.stack(
                [zoom(flow[..., 0], scale, order=1, grid_mode=True, mode="nearest") * scale[1],
                 zoom(flow[..., 1], scale, order=1, grid_mode=True, mode="nearest") * scale[0]],
                axis=-1,
            )
        flow = _hs_single_level(a, b, alpha, iters, flow)
    return flow


def estimate_bidirectional_flow(i0: np.ndarray, i1: np.ndarray, method: str = "variational", gt=None):
    """(F_fwd, F_bwd) between two frames.

    method 'ground-truth' passes through the exact fields supplied in `gt`
    (a (fwd, bwd) pair, typically from the dataset); 'variational' runs the
    pyramidal estimator both ways.
    """
    if i0.shape != i1.shape:
        raise ValueError(f"frame shapes differ: {i0.shape} vs {i1.shape}")
    if method == "ground-truth":
        if gt is None:
            raise DataError("ground-truth flow requested but none supplied")
        return gt[0], gt[1]
    if method == "variational":
        return horn_schunck(i0, i1), horn_schunck(i1, i0)
    raise ValueError(f"unknown flow method {method!r}")


def approximate_intermediate_flow(f_fwd: np.ndarray, f_bwd: np.ndarray, delta: float):
    """Quadratic blend of the frame-to-frame flows at fractional time delta.

    Returns (F_mid_to_t, F_mid_to_t1): flows from the intermediate instant
    back to each source frame.
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    to_t = -(1.0 - delta) * delta * f_fwd + delta * delta * f_bwd
    to_t1 = (1.0 - delta) ** 2 * f_fwd - delta * (1.0 - delta) * f_bwd
    return to_t, to_t1


def visibility_maps(f_fwd: np.ndarray, f_bwd: np.ndarray, delta: float, tau: float = VISIBILITY_TAU):
    """Per-source visibility from forward-backward flow consistency.

    The consistency error of the forward flow at x is
    |F_fwd(x) + F_bwd(x + F_fwd(x))|; visibility is 1 where the error is
    at most tau and decays as exp(-(e - tau)) above. Returns
    (V_src, V_dst), both in [0, 1], on the frame-t and frame-t+1 grids.
    """
    if f_fwd.shape != f_bwd.shape:
        raise ValueError(f"flow shapes differ: {f_fwd.shape} vs {f_bwd.shape}")
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")

    def one_side(fa, fb):
        err = np.linalg.norm(fa + warp(fb, fa), axis=-1)
        return np.where(err <= tau, 1.0, np.exp(-(err - tau)))

    return one_side(f_fwd, f_bwd), one_side(f_bwd, f_fwd)


def interpolate_frame(i0: np.ndarray, i1: np.ndarray, delta: float, flows, visibilities) -> np.ndarray:
    """Aggregate the two warped sources into the intermediate frame.

    flows = (F_mid_to_t, F_mid_to_t1); visibilities = (V0, V1) are the
    per-source weights already on the intermediate grid. Where the
    normalization weight collapses the plain (1-delta)/delta blend of the
    warped frames is used instead.
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    f_to_t, f_to_t1 = flows
    v0, v1 = visibilities
    g0 = warp(i0, f_to_t)
    g1 = warp(i1, f_to_t1)
    w0 = (1.0 - delta) * v0
    w1 = delta * v1
    lam = w0 + w1
    blend = (1.0 - delta) * g0 + delta * g1
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (w0[..., None] * g0 + w1[..., None] * g1) / lam[..., None]
    out = np.where(lam[..., None] < 1e-6, blend, out)
    return np.clip(out, 0.0, 1.0)


def synthesize_intermediate(i0, i1, f_fwd, f_bwd, delta, tau=VISIBILITY_TAU):
    """Full pipeline for one delta: intermediate flows, warped visibility,
    aggregation. The source visibility maps are themselves warped to the
    intermediate grid so each warped color sample carries its own weight."""
    f_to_t, f_to_t1 = approximate_intermediate_flow(f_fwd, f_bwd, delta)
    v_src, v_dst = visibility_maps(f_fwd, f_bwd, delta, tau)
    v0 = warp(v_src, f_to_t)
    v1 = warp(v_dst, f_to_t1)
    return interpolate_frame(i0, i1, delta, (f_to_t, f_to_t1), (v0, v1))


def precompute_interpolations(
    data: ds.Dataset,
    deltas=DEFAULT_DELTAS,
    method: str = "ground-truth",
    tau: float = VISIBILITY_TAU,
    overwrite: bool = False,
) -> int:
    """Cache interpolated frames for every view/pair/delta; returns count written.

    Files land under `interp/<view>/<t>_<delta>.ppm` inside the dataset.
    """
    written = 0
    for view in data.view_names:
        os.makedirs(os.path.join(data.root, "interp", view), exist_ok=True)
        for t in range(data.frames - 1):
            todo = [d for d in deltas if overwrite or not data.has_interp(view, t, d)]
            if not todo:
                continue
            i0 = data.image(view, t)
            i1 = data.image(view, t + 1)
            gt = None
            if method == "ground-truth":
                fwd, bwd, _, _ = data.flow_pair(view, t)
                gt = (fwd, bwd)
            f_fwd, f_bwd = estimate_bidirectional_flow(i0, i1, method, gt=gt)
            for delta in todo:
                frame = synthesize_intermediate(i0, i1, f_fwd, f_bwd, delta, tau)
                imgio.write_ppm(data.interp_file(view, t, delta), frame)
                written += 1
    return written
