"""Image and buffer file I/O helpers (PNG via Pillow, raw depth grids)."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

DEPTH_MAGIC = b"SFDEPTH\x00"


def load_rgb(path) -> np.ndarray:
    """Load an image file as H x W x 3 uint8."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_rgb(path, rgb: np.ndarray) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path)


def load_gray8(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def save_gray8(path, gray: np.ndarray) -> None:
    Image.fromarray(np.asarray(gray, dtype=np.uint8), mode="L").save(path)


def load_gray16(path) -> np.ndarray:
    """Load a 16-bit grayscale image as H x W uint16."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.dtype == np.uint16:
        return arr
    if arr.dtype == np.int32:  # PIL mode "I"
        if arr.min() < 0 or arr.max() > 65535:
            raise ValueError(f"{path}: values outside uint16 range")
        return arr.astype(np.uint16)
    raise ValueError(f"{path}: expected 16-bit grayscale, got dtype {arr.dtype}")


def save_gray16(path, gray: np.ndarray) -> None:
    arr = np.asarray(gray, dtype=np.uint16)
    Image.fromarray(arr).save(path)


def save_depth_raw(path, depth: np.ndarray) -> None:
    """Raw depth export: 8-byte magic, uint32 LE width/height, float32 LE grid.

    +inf is stored as-is (background sentinel).
    """
    d = np.asarray(depth, dtype="<f4")
    h, w = d.shape
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(d.tobytes())


def load_depth_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != DEPTH_MAGIC:
        raise ValueError(f"{path}: bad depth magic")
    w, h = struct.unpack("<II", data[8:16])
    grid = np.frombuffer(data[16:], dtype="<f4")
    if grid.size != w * h:
        raise ValueError(f"{path}: size mismatch ({grid.size} vs {w}x{h})")
    return grid.reshape(h, w).copy()


def depth_to_inverse16(depth: np.ndarray):
    """Normalize a metric depth buffer to 16-bit inverse depth (near = bright).

    Background (non-finite) pixels map to 0. Returns (u16 grid, d_min, d_max).
    """
    depth = np.asarray(depth, dtype=np.float64)
    finite = np.isfinite(depth) & (depth > 0)
    if not finite.any():
        return np.zeros(depth.shape, dtype=np.uint16), 0.0, 0.0
    d_min = float(depth[finite].min())
    d_max = float(depth[finite].max())
    inv = np.zeros(depth.shape, dtype=np.float64)
    if d_max > d_min:
        inv[finite] = (1.0 / depth[finite] - 1.0 / d_max) / (1.0 / d_min - 1.0 / d_max)
    else:
        inv[finite] = 1.0
    # value 0 is reserved for background: finite depths land in 1..65535
    out = np.zeros(depth.shape, dtype=np.uint16)
    out[finite] = (np.round(inv[finite] * 65534.0) + 1.0).astype(np.uint16)
    return out, d_min, d_max


def inverse16_to_depth(grid: np.ndarray, d_min: float, d_max: float) -> np.ndarray:
    """Invert depth_to_inverse16; 0-valued pixels become +inf."""
    raw = np.asarray(grid, dtype=np.float64)
    g = (raw - 1.0) / 65534.0
    depth = np.full(g.shape, np.inf)
    if d_max <= 0:
        return depth
    pos = raw > 0
    if d_max == d_min:
        depth[pos] = d_min
        return depth
    inv = g * (1.0 / d_min - 1.0 / d_max) + 1.0 / d_max
    depth[pos] = 1.0 / inv[pos]
    return depth


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True))


def read_json(path):
    return json.loads(Path(path).read_text())
