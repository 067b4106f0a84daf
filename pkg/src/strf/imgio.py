"""Image and flow-field file formats.

Color images are binary PPM (P6, 8-bit, written bit-exactly); depth maps
are PFM (little-endian, bottom-to-top scanlines, scale -1.0) with an 8-bit
PGM preview; flow fields use the Middlebury-style binary layout: 4-byte
magic, width, height, then row-major little-endian float32 (dx, dy) pairs.

In-memory convention: float arrays in [0, 1], shape (H, W, 3) for color,
(H, W) for scalar maps, (H, W, 2) for flows (dx = columns, dy = rows).
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DataError

FLOW_MAGIC = b"PIEH"


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] float image to uint8 (round-half-away, clipped)."""
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 255.0


def write_ppm(path: str, img: np.ndarray) -> None:
    """Write an (H, W, 3) float image in [0, 1] as binary PPM."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    h, w = img.shape[:2]
    data = to_uint8(img).tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data)


def read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = _read_token(fh, path)
        if magic != b"P6":
            raise DataError(f"{path}: not a binary PPM (magic {magic!r})")
        w, h, maxval = (int(_read_token(fh, path)) for _ in range(3))
        if maxval != 255:
            raise DataError(f"{path}: only maxval 255 supported, got {maxval}")
        raw = fh.read(w * h * 3)
    if len(raw) != w * h * 3:
        raise DataError(f"{path}: truncated pixel data")
    return from_uint8(np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3))


def write_pgm(path: str, img: np.ndarray) -> None:
    """Write an (H, W) float map in [0, 1] as binary PGM."""
    if img.ndim != 2:
        raise ValueError(f"expected (H, W) map, got {img.shape}")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(to_uint8(img).tobytes())


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = _read_token(fh, path)
        if magic != b"P5":
            raise DataError(f"{path}: not a binary PGM (magic {magic!r})")
        w, h, maxval = (int(_read_token(fh, path)) for _ in range(3))
        raw = fh.read(w * h)
    if len(raw) != w * h:
        raise DataError(f"{path}: truncated pixel data")
    return from_uint8(np.frombuffer(raw, dtype=np.uint8).reshape(h, w)) * (255.0 / maxval)


def write_pfm(path: str, data: np.ndarray) -> None:
    """Write an (H, W) float map as grayscale PFM (bottom-up scanlines)."""
    if data.ndim != 2:
        raise ValueError(f"expected (H, W) map, got {data.shape}")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(data[::-1].astype("<f4")).tobytes())


def read_pfm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = _read_token(fh, path)
        if magic != b"Pf":
            raise DataError(f"{path}: not a grayscale PFM (magic {magic!r})")
        w, h = (int(_read_token(fh, path)) for _ in range(2))
        scale = float(_read_token(fh, path))
        dtype = "<f4" if scale < 0 else ">f4"
        raw = fh.read(w * h * 4)
    if len(raw) != w * h * 4:
        raise DataError(f"{path}: truncated float data")
    return np.frombuffer(raw, dtype=dtype).reshape(h, w)[::-1].astype(np.float64)


def write_flow(path: str, flow: np.ndarray) -> None:
    """Write an (H, W, 2) pixel-displacement field."""
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"expected (H, W, 2) flow, got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(FLOW_MAGIC)
        np.array([w, h], dtype="<i4").tofile(fh)
        fh.write(np.ascontiguousarray(flow.astype("<f4")).tobytes())


def read_flow(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FLOW_MAGIC:
            raise DataError(f"{path}: not a flow file (magic {magic!r})")
        w, h = np.frombuffer(fh.read(8), dtype="<i4")
        raw = fh.read(int(w) * int(h) * 8)
    if len(raw) != w * h * 8:
        raise DataError(f"{path}: truncated flow data")
    return np.frombuffer(raw, dtype="<f4").reshape(h, w, 2).astype(np.float64)


def write_image(path: str, img: np.ndarray) -> None:
    """Dispatch on extension: .ppm native, .png via Pillow."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ppm":
        write_ppm(path, img)
    elif ext == ".png":
        from PIL import Image

        Image.fromarray(to_uint8(img)).save(path)
    else:
        raise ValueError(f"unsupported image extension {ext!r}")


def read_image(path: str) -> np.ndarray:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ppm":
        return read_ppm(path)
    if ext == ".png":
        from PIL import Image

        with Image.open(path) as im:
            return from_uint8(np.asarray(im.convert("RGB")))
    raise DataError(f"{path}: unsupported image extension {ext!r}")


def _read_token(fh, path: str) -> bytes:
    """Next whitespace-delimited header token, skipping '#' comments."""
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            if tok:
                return tok
            raise DataError(f"{path}: unexpected end of header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch
