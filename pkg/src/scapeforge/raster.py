"""Deterministic CPU rasterizer: z-buffered, perspective-correct, top-left fill rule.

One render produces the triple (depth, face-index, RGB) that painting,
inpainting and evaluation all consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Intrinsics, Pose

FACE_NONE = -1
SENTINEL = np.array([255, 0, 255], dtype=np.uint8)  # magenta: absent from landscapes


@dataclass
class RenderSettings:
    near: float = 0.1
    far: float = 1e9
    background: tuple = (255, 0, 255)
    backface_cull: bool = True
    # When True, unpainted texels render as the background sentinel instead of
    # the satellite base color; the inpaint loop uses this to expose holes.
    unpainted_as_sentinel: bool = False

    def __post_init__(self):
        if not (0 < self.near < self.far):
            raise ValueError("require 0 < near < far")


@dataclass
class RenderBuffers:
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float64, +inf where no geometry
    face_index: np.ndarray  # (H, W) int32, FACE_NONE where no geometry

    def covered(self) -> np.ndarray:
        return self.face_index != FACE_NONE


def triangle_coverage(pts: np.ndarray, grid_w: int, grid_h: int, sample_offset: float = 0.5):
    """Grid samples covered by a 2D triangle under the top-left fill rule.

    pts: (3,2) float vertex positions in grid coordinates (x right, y down).
    Samples sit at integer positions + sample_offset. Returns (cols, rows,
    bary) where bary is (n, 3) barycentric weights in the *input* vertex order.
    """
    v = np.asarray(pts, dtype=np.float64)
    area2 = (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[1, 1] - v[0, 1]) * (v[2, 0] - v[0, 0])
    order = np.array([0, 1, 2])
    if area2 == 0:
        return np.empty(0, int), np.empty(0, int), np.empty((0, 3))
    if area2 < 0:
        v = v[[0, 2, 1]]
        order = np.array([0, 2, 1])
        area2 = -area2

    lo = np.floor(v.min(axis=0) - sample_offset).astype(int)
    hi = np.ceil(v.max(axis=0) - sample_offset).astype(int)
    x0, y0 = max(lo[0], 0), max(lo[1], 0)
    x1, y1 = min(hi[0], grid_w - 1), min(hi[1], grid_h - 1)
    if x1 < x0 or y1 < y0:
        return np.empty(0, int), np.empty(0, int), np.empty((0, 3))

    xs, ys = np.meshgrid(
        np.arange(x0, x1 + 1) + sample_offset, np.arange(y0, y1 + 1) + sample_offset
    )
    inside = np.ones(xs.shape, dtype=bool)
    edges = np.empty((3,) + xs.shape)
    for i in range(3):
        a, b = v[i], v[(i + 1) % 3]
        e = (b[0] - a[0]) * (ys - a[1]) - (b[1] - a[1]) * (xs - a[0])
        dx, dy = b[0] - a[0], b[1] - a[1]
        top_left = (dy == 0 and dx > 0) or dy < 0
        inside &= (e > 0) | ((e == 0) & top_left)
        edges[i] = e
    if not inside.any():
        return np.empty(0, int), np.empty(0, int), np.empty((0, 3))

    rows, cols = np.nonzero(inside)
    # edge i is opposite vertex (i+2) mod 3
    bary_ord = np.stack(
        [edges[1][inside], edges[2][inside], edges[0][inside]], axis=1
    ) / area2
    bary = np.empty_like(bary_ord)
    bary[:, order] = bary_ord
    return cols + x0, rows + y0, bary


def render(mesh, uv, texture, K: Intrinsics, pose: Pose, settings: RenderSettings | None = None) -> RenderBuffers:
    """Z-buffered rasterization with perspective-correct UV interpolation.

    Triangles with any vertex nearer than the near plane are discarded
    (no near-plane clipping); keep cameras clear of the geometry.
    """
    settings = settings or RenderSettings()
    H, W = K.height, K.width
    rgb = np.empty((H, W, 3), dtype=np.uint8)
    rgb[:] = np.asarray(settings.background, dtype=np.uint8)
    depth = np.full((H, W), np.inf)
    face_idx = np.full((H, W), FACE_NONE, dtype=np.int32)
    ubuf = np.zeros((H, W))
    vbuf = np.zeros((H, W))

    verts = np.asarray(mesh.vertices, dtype=np.float64)
    faces = np.asarray(mesh.faces)
    R = pose.rotation()
    t = pose.translation()
    pc = verts @ R.T + t  # camera-frame vertices
    z = pc[:, 2]
    zsafe = np.where(z > 0, z, 1.0)
    px = K.cx + K.fx * pc[:, 0] / zsafe
    py = K.cy + K.fy * pc[:, 1] / zsafe

    if settings.backface_cull:
        normals = mesh.face_normals()
        to_face = mesh.face_centroids() - pose.position
        front = (normals * to_face).sum(axis=1) < 0
    else:
        front = np.ones(len(faces), dtype=bool)

    uvs = np.asarray(uv.uv, dtype=np.float64)
    for fid in range(len(faces)):
        if not front[fid]:
            continue
        idx = faces[fid]
        fz = z[idx]
        if (fz < settings.near).any() or (fz > settings.far).all():
            continue
        pts = np.stack([px[idx], py[idx]], axis=1)
        # integer coordinates are pixel centers (u = cx lands on column cx)
        cols, rows, bary = triangle_coverage(pts, W, H, sample_offset=0.0)
        if len(cols) == 0:
            continue
        inv_z = bary @ (1.0 / fz)
        zi = 1.0 / inv_z
        better = zi < depth[rows, cols]
        if not better.any():
            continue
        cols, rows, bary, zi, inv_z = cols[better], rows[better], bary[better], zi[better], inv_z[better]
        fu = uvs[idx, 0] / fz
        fv = uvs[idx, 1] / fz
        depth[rows, cols] = zi
        face_idx[rows, cols] = fid
        ubuf[rows, cols] = (bary @ fu) / inv_z
        vbuf[rows, cols] = (bary @ fv) / inv_z

    covered = face_idx != FACE_NONE
    if covered.any():
        tex_rgb = effective_texture(texture, settings)
        th, tw = tex_rgb.shape[:2]
        tx = ubuf[covered] * tw - 0.5
        ty = (1.0 - vbuf[covered]) * th - 0.5
        rgb[covered] = _bilinear(tex_rgb, tx, ty)
    return RenderBuffers(rgb=rgb, depth=depth, face_index=face_idx)


def effective_texture(texture, settings: RenderSettings) -> np.ndarray:
    """Composite a PaintedTexture into the flat RGB grid the rasterizer samples."""
    if settings.unpainted_as_sentinel:
        fallback = np.empty_like(texture.base)
        fallback[:] = np.asarray(settings.background, dtype=np.uint8)
    else:
        fallback = texture.base
    return np.where(texture.mask[..., None], texture.color, fallback)


def _bilinear(img: np.ndarray, x, y):
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


def visible_faces(buffers: RenderBuffers) -> set:
    """Distinct non-sentinel face ids present in the face-index buffer."""
    ids = np.unique(buffers.face_index)
    return set(int(i) for i in ids if i != FACE_NONE)
