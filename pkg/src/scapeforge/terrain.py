"""Terrain ingestion: heightfield loading, grid meshing, planar UV unwrap, base texture bake."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgio
from .texturing import PaintedTexture

SIDECAR_FIELDS = ("cell_size_m", "z_min_m", "z_max_m", "origin_lat", "origin_lon", "rows", "cols")


@dataclass
class HeightField:
    """Georeferenced elevation grid. Row 0 is the northernmost row."""

    width: int
    height: int
    cell_size: float
    origin_geo: tuple  # (lat, lon) of the southwest corner
    z: np.ndarray  # (height, width) elevations in meters

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("heightfield needs at least 2x2 cells")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.z.shape != (self.height, self.width):
            raise ValueError(f"z grid shape {self.z.shape} != ({self.height}, {self.width})")
        if not np.isfinite(self.z).all():
            raise ValueError("non-finite elevation values")

    @property
    def extent_x(self) -> float:
        return (self.width - 1) * self.cell_size

    @property
    def extent_y(self) -> float:
        return (self.height - 1) * self.cell_size

    def elevation_at(self, x: float, y: float) -> float:
        """Bilinear elevation at local (x east, y north) meters."""
        fx = np.clip(x / self.cell_size, 0.0, self.width - 1)
        fy = np.clip(y / self.cell_size, 0.0, self.height - 1)
        # y grows northward, row 0 is north
        row = (self.height - 1) - fy
        c0 = int(np.floor(fx))
        r0 = int(np.floor(row))
        c1 = min(c0 + 1, self.width - 1)
        r1 = min(r0 + 1, self.height - 1)
        tx = fx - c0
        ty = row - r0
        top = self.z[r0, c0] * (1 - tx) + self.z[r0, c1] * tx
        bot = self.z[r1, c0] * (1 - tx) + self.z[r1, c1] * tx
        return float(top * (1 - ty) + bot * ty)


@dataclass
class SatelliteImage:
    """Aerial RGB basemap covering exactly the heightfield extent."""

    pixels: np.ndarray  # (H, W, 3) uint8, row 0 = north

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.size == 0:
            raise ValueError("satellite image must be nonempty H x W x 3")


@dataclass
class TerrainMesh:
    vertices: np.ndarray  # (N, 3) float64, ENU meters
    faces: np.ndarray  # (F, 3) int32
    grid_shape: tuple | None = None  # (height, width) when built from a heightfield

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int32)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")
        areas = 0.5 * np.linalg.norm(self._face_cross(), axis=1)
        if self.faces.size and (areas <= 0).any():
            raise ValueError("degenerate zero-area face")

    def _face_cross(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        return np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])

    def face_normals(self) -> np.ndarray:
        c = self._face_cross()
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return c / n

    def face_centroids(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)


@dataclass
class UvChart:
    """Per-vertex UV in [0,1]^2 plus the texture resolution it targets."""

    uv: np.ndarray  # (N, 2) float64
    tex_h: int
    tex_w: int
    extent_x: float = 0.0  # ground extents, used by the analytic inverse
    extent_y: float = 0.0

    def __post_init__(self):
        self.uv = np.asarray(self.uv, dtype=np.float64)
        if self.uv.ndim != 2 or self.uv.shape[1] != 2:
            raise ValueError("uv must be (N, 2)")

    def uv_to_ground(self, u, v):
        """Analytic inverse of the planar unwrap: uv -> local (x, y)."""
        return np.asarray(u) * self.extent_x, np.asarray(v) * self.extent_y


def load_heightfield(elevation_file, sidecar_file) -> HeightField:
    """Load a 16-bit grayscale elevation image plus its JSON sidecar.

    Dequantization: z = z_min + raw/65535 * (z_max - z_min).
    """
    meta = imgio.read_json(sidecar_file)
    missing = [k for k in SIDECAR_FIELDS if k not in meta]
    if missing:
        raise ValueError(f"sidecar missing fields: {missing}")
    raw = imgio.load_gray16(elevation_file)
    if raw.shape != (meta["rows"], meta["cols"]):
        raise ValueError(f"elevation grid {raw.shape} != sidecar ({meta['rows']}, {meta['cols']})")
    z = meta["z_min_m"] + raw.astype(np.float64) / 65535.0 * (meta["z_max_m"] - meta["z_min_m"])
    return HeightField(
        width=int(meta["cols"]),
        height=int(meta["rows"]),
        cell_size=float(meta["cell_size_m"]),
        origin_geo=(float(meta["origin_lat"]), float(meta["origin_lon"])),
        z=z,
    )


def build_mesh(hf: HeightField) -> TerrainMesh:
    """Triangulate the heightfield grid: one vertex per cell, SW-NE split quads."""
    h, w = hf.height, hf.width
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    x = jj * hf.cell_size
    y = (h - 1 - ii) * hf.cell_size  # row 0 (north) gets the largest y
    verts = np.stack([x.ravel(), y.ravel(), hf.z.ravel()], axis=1)

    faces = []
    for i in range(h - 1):
        for j in range(w - 1):
            sw = (i + 1) * w + j
            se = (i + 1) * w + (j + 1)
            ne = i * w + (j + 1)
            nw = i * w + j
            faces.append((sw, se, ne))  # CCW from above, SW-NE diagonal
            faces.append((sw, ne, nw))
    return TerrainMesh(vertices=verts, faces=np.array(faces, dtype=np.int32), grid_shape=(h, w))


def unwrap_planar(mesh: TerrainMesh, hf: HeightField, resolution=(1024, 1024)) -> UvChart:
    """Affine bijective planar parameterization of a heightfield grid mesh."""
    if mesh.grid_shape is None:
        raise ValueError("planar unwrap requires a heightfield grid mesh")
    u = mesh.vertices[:, 0] / hf.extent_x
    v = mesh.vertices[:, 1] / hf.extent_y
    return UvChart(
        uv=np.stack([u, v], axis=1),
        tex_h=int(resolution[0]),
        tex_w=int(resolution[1]),
        extent_x=hf.extent_x,
        extent_y=hf.extent_y,
    )


def bake_base_texture(mesh: TerrainMesh, uv: UvChart, sat: SatelliteImage) -> PaintedTexture:
    """Sample the satellite basemap at every texel's ground location.

    The result is the fallback color layer: the paint mask stays UNPAINTED.
    """
    th, tw = uv.tex_h, uv.tex_w
    sh, sw = sat.pixels.shape[:2]
    cols, rows = np.meshgrid(np.arange(tw), np.arange(th))
    tex_u = (cols + 0.5) / tw
    tex_v = 1.0 - (rows + 0.5) / th  # v grows northward, texture row 0 = north
    sx = tex_u * (sw - 1)
    sy = (1.0 - tex_v) * (sh - 1)
    base = _bilinear_rgb(sat.pixels, sx, sy)
    return PaintedTexture.unpainted(base)


def _bilinear_rgb(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear sample uint8 RGB at float pixel coordinates (clamped)."""
    h, w = img.shape[:2]
    x = np.clip(x, 0, w - 1)
    y = np.clip(y, 0, h - 1)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = (x - x0)[..., None]
    ty = (y - y0)[..., None]
    p = img.astype(np.float64)
    top = p[y0, x0] * (1 - tx) + p[y0, x1] * tx
    bot = p[y1, x0] * (1 - tx) + p[y1, x1] * tx
    out = top * (1 - ty) + bot * ty
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def export_obj(path, mesh: TerrainMesh, uv: UvChart | None = None) -> None:
    """ASCII OBJ export with vt records (debugging aid)."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}")
    if uv is not None:
        for t in uv.uv:
            lines.append(f"vt {t[0]:.6f} {t[1]:.6f}")
        for f in mesh.faces:
            a, b, c = (int(i) + 1 for i in f)
            lines.append(f"f {a}/{a} {b}/{b} {c}/{c}")
    else:
        for f in mesh.faces:
            a, b, c = (int(i) + 1 for i in f)
            lines.append(f"f {a} {b} {c}")
    Path(path).write_text("\n".join(lines) + "\n")
