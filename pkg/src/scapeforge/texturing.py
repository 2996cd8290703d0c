"""UV-space painting: occlusion-aware projection of images into the atlas,
texture superposition, background masking, and pull-push hole filling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PAINTED = True
UNPAINTED = False

SOURCE_NONE = 0
SENTINEL_RGB = (255, 0, 255)
# An incoming pixel exactly equal to the sentinel is nudged down in value so
# the rendered image never shows sentinel on painted geometry.
SENTINEL_NUDGED = (254, 0, 254)

# Depth-consistency tolerance for accepting a texel's projection against the
# rendered depth buffer: covers interpolation error across large depth ranges.
DEPTH_TOL_ABS = 0.5
DEPTH_TOL_REL = 1e-3


@dataclass
class PaintedTexture:
    """UV texture with a per-texel paint mask, base (satellite) fallback and provenance."""

    color: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray  # (H, W) bool, True = PAINTED
    base: np.ndarray  # (H, W, 3) uint8
    source: np.ndarray  # (H, W) int32 tag codes
    source_names: dict = field(default_factory=dict)  # code -> label

    def __post_init__(self):
        if self.color.shape != self.base.shape or self.color.shape[:2] != self.mask.shape:
            raise ValueError("texture layer dimensions disagree")
        if self.source.shape != self.mask.shape:
            raise ValueError("source tag dimensions disagree")

    @classmethod
    def unpainted(cls, base: np.ndarray) -> "PaintedTexture":
        base = np.asarray(base, dtype=np.uint8)
        h, w = base.shape[:2]
        return cls(
            color=base.copy(),
            mask=np.zeros((h, w), dtype=bool),
            base=base,
            source=np.zeros((h, w), dtype=np.int32),
            source_names={SOURCE_NONE: "base"},
        )

    def copy(self) -> "PaintedTexture":
        return PaintedTexture(
            self.color.copy(), self.mask.copy(), self.base.copy(),
            self.source.copy(), dict(self.source_names),
        )

    def tag_code(self, label: str) -> int:
        for code, name in self.source_names.items():
            if name == label:
                return code
        code = max(self.source_names) + 1 if self.source_names else 1
        self.source_names[code] = label
        return code

    @property
    def shape(self):
        return self.mask.shape


@dataclass
class ImageMask:
    """Binary image mask; 1 = uncolored / needs inpainting."""

    data: np.ndarray  # (H, W) bool

    def __post_init__(self):
        self.data = np.asarray(self.data).astype(bool)

    @property
    def empty(self) -> bool:
        return not self.data.any()


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized uint8 RGB -> HSV with h in degrees, s and v in [0,1]."""
    p = np.asarray(rgb, dtype=np.float64) / 255.0
    mx = p.max(axis=-1)
    mn = p.min(axis=-1)
    c = mx - mn
    r, g, b = p[..., 0], p[..., 1], p[..., 2]
    h = np.zeros_like(mx)
    nz = c > 0
    rmax = nz & (mx == r)
    gmax = nz & (mx == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    h[rmax] = ((g - b)[rmax] / c[rmax]) % 6
    h[gmax] = (b - r)[gmax] / c[gmax] + 2
    h[bmax] = (r - g)[bmax] / c[bmax] + 4
    h *= 60.0
    s = np.where(mx > 0, c / np.maximum(mx, 1e-12), 0.0)
    return np.stack([h, s, mx], axis=-1)


def background_mask(
    rgb: np.ndarray,
    sentinel=SENTINEL_RGB,
    hue_tol_deg: float = 10.0,
    sat_min: float = 0.5,
    val_min: float = 0.5,
) -> ImageMask:
    """HSV filter selecting pixels close to the background sentinel color."""
    hsv = rgb_to_hsv(rgb)
    target_h = rgb_to_hsv(np.asarray(sentinel, dtype=np.uint8).reshape(1, 1, 3))[0, 0, 0]
    dh = np.abs(hsv[..., 0] - target_h)
    dh = np.minimum(dh, 360.0 - dh)
    mask = (dh <= hue_tol_deg) & (hsv[..., 1] >= sat_min) & (hsv[..., 2] >= val_min)
    return ImageMask(mask)


def paint_view(
    tex: PaintedTexture,
    mesh,
    uv,
    image: np.ndarray,
    K,
    pose,
    buffers,
    image_valid: ImageMask | None = None,
    source_tag: str = "paint",
) -> PaintedTexture:
    """Project an image onto the UV atlas through one render's visibility.

    For every texel of every visible face: reconstruct the 3D point from uv
    barycentrics, project into the image, and accept iff the projection is
    in-bounds, lands on valid (colored) image content, passes the face-index
    or depth consistency check, and the texel is still UNPAINTED. Painted
    texels are never overwritten (first-writer-wins superposition).
    """
    from .camera import project_many
    from .raster import FACE_NONE, triangle_coverage, visible_faces

    if buffers.rgb.shape[:2] != (K.height, K.width):
        raise ValueError("render buffers do not match the camera intrinsics")
    image = np.asarray(image, dtype=np.uint8)
    if image.shape[:2] != (K.height, K.width):
        raise ValueError("image dimensions do not match the camera intrinsics")
    valid = image_valid.data if image_valid is not None else None

    out = tex.copy()
    code = out.tag_code(source_tag)
    th, tw = out.shape
    ih, iw = image.shape[:2]
    verts = np.asarray(mesh.vertices, dtype=np.float64)
    uvs = np.asarray(uv.uv, dtype=np.float64)
    faces = np.asarray(mesh.faces)

    for fid in sorted(visible_faces(buffers)):
        idx = faces[fid]
        # texel centers live at integer coordinates in (col = u*W - 0.5) space
        pts = np.stack([uvs[idx, 0] * tw - 0.5, (1.0 - uvs[idx, 1]) * th - 0.5], axis=1)
        cols, rows, bary = triangle_coverage(pts, tw, th, sample_offset=0.0)
        if len(cols) == 0:
            continue
        unpainted = ~out.mask[rows, cols]
        if not unpainted.any():
            continue
        cols, rows, bary = cols[unpainted], rows[unpainted], bary[unpainted]
        p3d = bary @ verts[idx]
        puv, z, in_front = project_many(p3d, K, pose)
        ok = in_front & (puv[:, 0] >= 0) & (puv[:, 0] <= iw - 1) & (puv[:, 1] >= 0) & (puv[:, 1] <= ih - 1)
        if not ok.any():
            continue
        cols, rows, puv, z = cols[ok], rows[ok], puv[ok], z[ok]
        nx = np.clip(np.round(puv[:, 0]).astype(int), 0, iw - 1)
        ny = np.clip(np.round(puv[:, 1]).astype(int), 0, ih - 1)
        if valid is not None:
            colored = ~valid[ny, nx]
        else:
            colored = np.ones(len(cols), dtype=bool)
        same_face = buffers.face_index[ny, nx] == fid
        bdepth = buffers.depth[ny, nx]
        depth_ok = np.abs(bdepth - z) <= np.maximum(DEPTH_TOL_ABS, DEPTH_TOL_REL * z)
        accept = colored & (same_face | depth_ok)
        if not accept.any():
            continue
        cols, rows, puv = cols[accept], rows[accept], puv[accept]
        samples = _bilinear_u8(image, puv[:, 0], puv[:, 1])
        sentinel_hit = (samples == np.asarray(SENTINEL_RGB, dtype=np.uint8)).all(axis=1)
        samples[sentinel_hit] = np.asarray(SENTINEL_NUDGED, dtype=np.uint8)
        out.color[rows, cols] = samples
        out.mask[rows, cols] = PAINTED
        out.source[rows, cols] = code
    return out


def superpose(prev: PaintedTexture, write_color: np.ndarray, write_mask: np.ndarray,
              source_tag: str = "write") -> PaintedTexture:
    """Per-texel composition: PAINTED texels keep their color, UNPAINTED texels
    with a write take the new color and flip to PAINTED."""
    if write_color.shape != prev.color.shape or write_mask.shape != prev.mask.shape:
        raise ValueError("write dimensions disagree with the texture")
    out = prev.copy()
    code = out.tag_code(source_tag)
    take = ~prev.mask & np.asarray(write_mask).astype(bool)
    out.color[take] = np.asarray(write_color, dtype=np.uint8)[take]
    out.mask[take] = PAINTED
    out.source[take] = code
    return out


def pull_push(color: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Multi-resolution hole fill: average known pixels down, fill unknowns up.

    Returns a float64 (H, W, C) image defined everywhere known pixels exist;
    fully-unknown inputs come back unchanged (all zeros contribution).
    """
    color = np.asarray(color, dtype=np.float64)
    known = np.asarray(known, dtype=bool)
    if not known.any():
        return color.copy()

    csums = [np.where(known[..., None], color, 0.0)]
    wsums = [known.astype(np.float64)]
    while csums[-1].shape[0] > 1 or csums[-1].shape[1] > 1:
        c, w = csums[-1], wsums[-1]
        h, wd = w.shape
        ph, pw = (h + 1) // 2 * 2, (wd + 1) // 2 * 2
        cp = np.zeros((ph, pw, c.shape[2]))
        wp = np.zeros((ph, pw))
        cp[:h, :wd] = c
        wp[:h, :wd] = w
        c2 = cp.reshape(ph // 2, 2, pw // 2, 2, -1).sum(axis=(1, 3))
        w2 = wp.reshape(ph // 2, 2, pw // 2, 2).sum(axis=(1, 3))
        csums.append(c2)
        wsums.append(w2)

    filled = np.where(
        wsums[-1][..., None] > 0, csums[-1] / np.maximum(wsums[-1][..., None], 1e-12), 0.0
    )
    for level in range(len(csums) - 2, -1, -1):
        c, w = csums[level], wsums[level]
        h, wd = w.shape
        up = np.repeat(np.repeat(filled, 2, axis=0), 2, axis=1)[:h, :wd]
        avg = np.where(w[..., None] > 0, c / np.maximum(w[..., None], 1e-12), 0.0)
        filled = np.where(w[..., None] > 0, avg, up)
    return filled


def postprocess_fill(tex: PaintedTexture, source_tag: str = "fill") -> PaintedTexture:
    """Fill all UNPAINTED texels by pull-push from painted ones; if the whole
    atlas is unpainted, fall back to the base color."""
    out = tex.copy()
    holes = ~out.mask
    if not holes.any():
        return out
    code = out.tag_code(source_tag)
    if out.mask.any():
        filled = pull_push(out.color, out.mask)
        vals = np.clip(np.round(filled[holes]), 0, 255).astype(np.uint8)
    else:
        vals = out.base[holes]
    out.color[holes] = vals
    out.mask[holes] = PAINTED
    out.source[holes] = code
    return out


def _bilinear_u8(img: np.ndarray, x, y):
    h, w = img.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0, w - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0, h - 1)
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
