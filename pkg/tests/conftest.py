import math
from pathlib import Path

import numpy as np
import pytest

from scapeforge import imgio
from scapeforge.camera import EARTH_RADIUS_M, Intrinsics, Pose, look_at_angles
from scapeforge.terrain import (HeightField, SatelliteImage, bake_base_texture,
                                build_mesh, unwrap_planar)
from scapeforge.texturing import PaintedTexture


def local_to_geo(x, y, origin_lat, origin_lon):
    """Inverse of geo_to_local for fixture construction."""
    lat = origin_lat + math.degrees(y / EARTH_RADIUS_M)
    lon = origin_lon + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(origin_lat))))
    return lat, lon


def make_scene(z, cell_size=50.0, tex_res=(96, 96), origin=(46.5, 8.0)):
    """In-memory terrain bundle from an elevation grid."""
    z = np.asarray(z, dtype=np.float64)
    hf = HeightField(z.shape[1], z.shape[0], cell_size, origin, z)
    mesh = build_mesh(hf)
    uv = unwrap_planar(mesh, hf, tex_res)
    rng = np.random.default_rng(5)
    sat = SatelliteImage(rng.integers(40, 200, size=(z.shape[0] * 4, z.shape[1] * 4, 3),
                                      dtype=np.uint8))
    base = bake_base_texture(mesh, uv, sat)
    return hf, mesh, uv, base


def world_texture(uv, seed=11):
    """A fully-painted 'ground truth' texture with smooth structure."""
    h, w = uv.tex_h, uv.tex_w
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    # green channel always dominates: landscape-like hues, never close to
    # the magenta background sentinel
    r = (70 + 50 * np.sin(cols / w * 4.1)).astype(np.uint8)
    g = (190 + 50 * np.cos(rows / h * 3.3)).astype(np.uint8)
    b = (70 + 50 * np.sin((cols + rows) / (h + w) * 5.7)).astype(np.uint8)
    tex = PaintedTexture.unpainted(np.stack([r, g, b], axis=-1))
    tex.mask[:] = True
    tex.color = tex.base.copy()
    return tex


def look_camera(hf, offset, K=None, target=None):
    """Camera at terrain center + offset (m), aimed at the terrain center."""
    center = np.array([hf.extent_x / 2, hf.extent_y / 2,
                       float(np.mean(hf.z))])
    pos = center + np.asarray(offset, dtype=np.float64)
    tgt = center if target is None else np.asarray(target, dtype=np.float64)
    yaw, pitch = look_at_angles(pos, tgt)
    K = K or Intrinsics(150, 150, 63.5, 47.5, 128, 96)
    return K, Pose(pos, yaw=yaw, pitch=pitch)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def hilly_scene():
    rng = np.random.default_rng(7)
    z = rng.uniform(0, 40, size=(10, 12))
    return make_scene(z)


@pytest.fixture
def flat_scene():
    return make_scene(np.zeros((6, 6)), tex_res=(128, 128))


def write_synthetic_project(root: Path, n_webcams=3, grid=(14, 14), tex_res=(96, 96),
                            traj_samples=4, seed=7):
    """Write a complete on-disk project: DEM + sidecar + satellite + webcam
    images rendered from a ground-truth world texture. Returns the
    project.json path."""
    from scapeforge.raster import RenderSettings, render

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows, cols = grid
    origin_lat, origin_lon = 46.5, 8.0
    cell = 50.0
    z_min, z_max = 0.0, 60.0
    raw = rng.integers(0, 65536, size=(rows, cols), dtype=np.uint16)
    imgio.save_gray16(root / "dem.png", raw)
    imgio.write_json(root / "dem.json", {
        "cell_size_m": cell, "z_min_m": z_min, "z_max_m": z_max,
        "origin_lat": origin_lat, "origin_lon": origin_lon,
        "rows": rows, "cols": cols,
    })
    # green-dominant noise: the HSV hole mask must never fire on base content
    sat = np.stack([
        rng.integers(30, 120, size=(rows * 4, cols * 4), dtype=np.uint8),
        rng.integers(130, 220, size=(rows * 4, cols * 4), dtype=np.uint8),
        rng.integers(30, 120, size=(rows * 4, cols * 4), dtype=np.uint8),
    ], axis=-1)
    imgio.save_rgb(root / "sat.png", sat)

    hf = HeightField(cols, rows, cell,
                     (origin_lat, origin_lon),
                     z_min + raw.astype(np.float64) / 65535.0 * (z_max - z_min))
    mesh = build_mesh(hf)
    uv = unwrap_planar(mesh, hf, tex_res)
    world = world_texture(uv)

    center = np.array([hf.extent_x / 2, hf.extent_y / 2, float(np.mean(hf.z))])
    cam_docs = []
    angles = np.linspace(0, 2 * math.pi, n_webcams, endpoint=False) + 0.4
    for i, ang in enumerate(angles):
        pos = center + np.array([math.cos(ang), math.sin(ang), 0]) * hf.extent_x * 0.42
        pos[2] = hf.elevation_at(pos[0], pos[1]) + 220.0
        yaw, pitch = look_at_angles(pos, center)
        K = Intrinsics(170, 170, 79.5, 59.5, 160, 120)
        pose = Pose(pos, yaw=yaw, pitch=pitch)
        buffers = render(mesh, uv, world, K, pose, RenderSettings(near=1.0))
        imgio.save_rgb(root / f"cam{i}.png", buffers.rgb)
        sky = (buffers.face_index == -1).astype(np.uint8) * 255
        imgio.save_gray8(root / f"cam{i}_mask.png", sky)
        lat, lon = local_to_geo(pos[0], pos[1], origin_lat, origin_lon)
        cam_docs.append({
            "id": f"cam{i}",
            "geo": {"lat": lat, "lon": lon, "alt": float(pos[2])},
            "yaw_deg": math.degrees(yaw), "pitch_deg": math.degrees(pitch),
            "fx": 170.0, "fy": 170.0, "cx": 79.5, "cy": 59.5,
            "width": 160, "height": 120,
            "timestamp": "2024-09-01T12:00:00Z",
            "image": f"cam{i}.png", "mask": f"cam{i}_mask.png",
            "trusted": True,
        })

    wp = []
    for fx, fy in ((0.3, 0.3), (0.6, 0.5), (0.4, 0.7)):
        lat, lon = local_to_geo(hf.extent_x * fx, hf.extent_y * fy, origin_lat, origin_lon)
        wp.append({"lat": lat, "lon": lon})
    doc = {
        "name": "synthetic",
        "timestamp": "2024-09-01T12:00:00Z",
        "terrain": {"dem": "dem.png", "sidecar": "dem.json", "satellite": "sat.png",
                    "texture_resolution": list(tex_res)},
        "cameras": cam_docs,
        "trajectory": {"mode": "cubic", "samples": traj_samples, "agl_m": 150.0,
                       "orientation": "look_ahead",
                       "camera": {"width": 128, "height": 96, "hfov_deg": 60.0},
                       "waypoints": wp},
        "inpaint": {"backend": "mock", "prompt": "alpine landscape", "strength": 1.0,
                    "seed": 7},
        "render": {"near": 1.0, "far": 1e9},
        "output_dir": "out",
    }
    path = root / "project.json"
    imgio.write_json(path, doc)
    return path


@pytest.fixture
def synthetic_project(tmp_path):
    return write_synthetic_project(tmp_path / "proj")
