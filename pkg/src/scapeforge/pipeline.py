"""End-to-end orchestration: paint stage over webcams, inpaint stage along the
trajectory, checkpointing/resume, and dataset export."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgio
from .camera import CameraRig, Correspondence, GeoPoint, Intrinsics, Pose, geo_to_local, load_correspondences
from .inpaint import InpaintRequest, mock_inpaint, remote_inpaint
from .raster import RenderSettings, render
from .terrain import HeightField, SatelliteImage, TerrainMesh, UvChart, bake_base_texture, build_mesh, load_heightfield, unwrap_planar
from .texturing import ImageMask, PaintedTexture, background_mask, paint_view, postprocess_fill
from .trajectory import TrajectoryConfig, Waypoint, build_trajectory

log = logging.getLogger(__name__)

CAMERA_MAST_OFFSET_M = 5.0  # added to DEM height when GPS altitude is absent


@dataclass
class FrameRecord:
    pose: Pose
    intrinsics: Intrinsics
    stage: str  # paint | inpaint | eval
    t: int
    image_path: str
    timestamp: str = ""


@dataclass
class Project:
    name: str
    root: Path
    heightfield: HeightField
    mesh: TerrainMesh
    uv: UvChart
    base_texture: PaintedTexture
    rigs: list  # ordered CameraRig list = paint order
    trajectory_config: TrajectoryConfig
    waypoints: list
    trajectory_intrinsics: Intrinsics
    render_settings: RenderSettings
    inpaint_config: dict
    timestamp: str = ""
    output_dir: Path = Path("out")

    def texture(self) -> PaintedTexture:
        return self.base_texture.copy()


def _pinhole_from_fov(width: int, height: int, hfov_deg: float) -> Intrinsics:
    f = (width / 2) / math.tan(math.radians(hfov_deg) / 2)
    return Intrinsics(f, f, (width - 1) / 2, (height - 1) / 2, width, height)


def load_project(path) -> Project:
    """Build a Project from its JSON document; paths resolve against the document's directory."""
    path = Path(path)
    doc = imgio.read_json(path)
    root = path.parent

    tcfg = doc["terrain"]
    hf = load_heightfield(root / tcfg["dem"], root / tcfg["sidecar"])
    mesh = build_mesh(hf)
    res = tcfg.get("texture_resolution", [1024, 1024])
    uv = unwrap_planar(mesh, hf, resolution=(res[0], res[1]))
    sat = SatelliteImage(imgio.load_rgb(root / tcfg["satellite"]))
    base = bake_base_texture(mesh, uv, sat)

    origin = GeoPoint(hf.origin_geo[0], hf.origin_geo[1], 0.0)
    rigs = []
    for c in doc.get("cameras", []):
        geo = c["geo"]
        if geo.get("alt") is not None:
            alt = float(geo["alt"])
        else:
            p0 = geo_to_local(GeoPoint(geo["lat"], geo["lon"], 0.0), origin)
            alt = hf.elevation_at(p0[0], p0[1]) + CAMERA_MAST_OFFSET_M
        pos = geo_to_local(GeoPoint(geo["lat"], geo["lon"], alt), origin)
        rig = CameraRig(
            id=c["id"],
            intrinsics=Intrinsics(c["fx"], c["fy"], c["cx"], c["cy"], c["width"], c["height"]),
            pose=Pose(pos, yaw=math.radians(c.get("yaw_deg", 0.0)),
                      pitch=math.radians(c.get("pitch_deg", 0.0))),
            timestamp=c.get("timestamp", doc.get("timestamp", "")),
            image_path=str(root / c["image"]) if c.get("image") else "",
            mask_path=str(root / c["mask"]) if c.get("mask") else "",
            optimized=bool(c.get("trusted", False)),
        )
        if c.get("correspondences"):
            rig.correspondences = load_correspondences(root / c["correspondences"])
        rigs.append(rig)

    tj = doc.get("trajectory", {})
    tj_config = TrajectoryConfig(
        mode=tj.get("mode", "cubic"),
        samples=int(tj.get("samples", 2)),
        default_agl_m=float(tj.get("agl_m", 200.0)),
        orientation=tj.get("orientation", "look_ahead"),
    )
    waypoints = [
        Waypoint(
            geo=GeoPoint(w["lat"], w["lon"], w.get("alt", 0.0)),
            look=GeoPoint(**w["look"]) if w.get("look") else None,
            agl_m=w.get("agl_m"),
        )
        for w in tj.get("waypoints", [])
    ]
    cam = tj.get("camera", {"width": 512, "height": 384, "hfov_deg": 60.0})
    tj_K = _pinhole_from_fov(int(cam["width"]), int(cam["height"]), float(cam["hfov_deg"]))

    rcfg = doc.get("render", {})
    settings = RenderSettings(near=float(rcfg.get("near", 0.1)), far=float(rcfg.get("far", 1e9)))

    out_dir = root / doc.get("output_dir", "out")
    return Project(
        name=doc.get("name", path.stem),
        root=root,
        heightfield=hf,
        mesh=mesh,
        uv=uv,
        base_texture=base,
        rigs=rigs,
        trajectory_config=tj_config,
        waypoints=waypoints,
        trajectory_intrinsics=tj_K,
        render_settings=settings,
        inpaint_config=doc.get("inpaint", {}),
        timestamp=doc.get("timestamp", ""),
        output_dir=out_dir,
    )


def resolve_backend(spec: str | None, default_grain: float = 0.0):
    """'mock' or an http(s) URL -> callable(InpaintRequest) -> InpaintResponse."""
    spec = spec or os.environ.get("FORGE_BACKEND_URL") or "mock"
    if spec == "mock":
        return lambda req: mock_inpaint(req, grain=default_grain)
    return lambda req: remote_inpaint(spec, req)


def _rig_image_valid(rig: CameraRig) -> ImageMask | None:
    if not rig.mask_path:
        return None
    return ImageMask(imgio.load_gray8(rig.mask_path) >= 128)


def run_paint_stage(project: Project, texture: PaintedTexture | None = None):
    """Paint all webcam rigs in manifest order; first writer wins.

    Returns (texture, frame records)."""
    tex = texture if texture is not None else project.texture()
    frames = []
    for t, rig in enumerate(project.rigs, start=1):
        if not rig.optimized:
            raise ValueError(f"rig {rig.id} is neither optimized nor trusted")
        if not rig.image_path or not Path(rig.image_path).exists():
            raise FileNotFoundError(f"rig {rig.id}: missing image {rig.image_path!r}")
        image = imgio.load_rgb(rig.image_path)
        buffers = render(project.mesh, project.uv, tex, rig.intrinsics, rig.pose,
                         project.render_settings)
        tex = paint_view(tex, project.mesh, project.uv, image, rig.intrinsics, rig.pose,
                         buffers, image_valid=_rig_image_valid(rig),
                         source_tag=f"webcam:{rig.id}")
        frames.append(FrameRecord(rig.pose, rig.intrinsics, "paint", t, rig.image_path,
                                  rig.timestamp))
    return tex, frames


def _checkpoint_paths(out_dir: Path, stage: str, t: int) -> dict:
    stem = f"texture_{stage}_{t:04d}"
    return {
        "color": out_dir / f"{stem}.png",
        "mask": out_dir / f"{stem}_mask.png",
        "source": out_dir / f"{stem}_source.png",
        "meta": out_dir / f"{stem}.json",
    }


def save_checkpoint(out_dir: Path, stage: str, t: int, tex: PaintedTexture) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    p = _checkpoint_paths(out_dir, stage, t)
    imgio.save_rgb(p["color"], tex.color)
    imgio.save_gray8(p["mask"], tex.mask.astype(np.uint8) * 255)
    imgio.save_gray16(p["source"], tex.source.astype(np.uint16))
    imgio.write_json(p["meta"], {"stage": stage, "t": t,
                                 "source_names": {str(k): v for k, v in tex.source_names.items()}})


def load_checkpoint(out_dir: Path, stage: str, t: int, base: np.ndarray) -> PaintedTexture:
    p = _checkpoint_paths(out_dir, stage, t)
    meta = imgio.read_json(p["meta"])
    return PaintedTexture(
        color=imgio.load_rgb(p["color"]),
        mask=imgio.load_gray8(p["mask"]) >= 128,
        base=base,
        source=imgio.load_gray16(p["source"]).astype(np.int32),
        source_names={int(k): v for k, v in meta["source_names"].items()},
    )


def run_inpaint_stage(project: Project, backend=None, texture: PaintedTexture | None = None,
                      resume: bool = False, max_steps: int | None = None):
    """Iterative inpainting along the trajectory (render, HSV-mask, backend
    call, paint back), with per-step checkpoints for resumability.

    Returns (texture, frame records). max_steps limits the number of steps
    executed this call (the run stays resumable)."""
    backend = backend or resolve_backend(project.inpaint_config.get("backend"))
    out_dir = Path(project.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state_path = out_dir / "inpaint_state.json"

    poses = build_trajectory(project.waypoints, project.trajectory_config, project.heightfield)
    n = len(poses)
    start_t = 1
    frames = []
    if resume and state_path.exists():
        state = imgio.read_json(state_path)
        start_t = state["completed_t"] + 1
        tex = load_checkpoint(out_dir, "inpaint", state["completed_t"], project.base_texture.base)
        frames = [
            FrameRecord(Pose(np.array(f["position"]), f["yaw"], f["pitch"], f["roll"]),
                        project.trajectory_intrinsics, f["stage"], f["t"], f["image"],
                        f["timestamp"])
            for f in state["frames"]
        ]
    else:
        tex = texture if texture is not None else project.texture()

    K = project.trajectory_intrinsics
    base_seed = int(project.inpaint_config.get("seed", 0))
    prompt = project.inpaint_config.get("prompt", "")
    strength = float(project.inpaint_config.get("strength", 1.0))
    settings = RenderSettings(
        near=project.render_settings.near, far=project.render_settings.far,
        background=project.render_settings.background,
        backface_cull=project.render_settings.backface_cull,
        unpainted_as_sentinel=True,  # expose unpainted texels to the HSV mask
    )

    executed = 0
    for t in range(start_t, n + 1):
        if max_steps is not None and executed >= max_steps:
            return tex, frames
        pose = poses[t - 1]
        buffers = render(project.mesh, project.uv, tex, K, pose, settings)
        mask = background_mask(buffers.rgb, sentinel=settings.background)
        # sky is sentinel-colored too; only holes on geometry need inpainting
        mask = ImageMask(mask.data & buffers.covered())
        if mask.empty:
            final = buffers.rgb
        else:
            depth16, dmin, dmax = imgio.depth_to_inverse16(buffers.depth)
            req = InpaintRequest(
                rgb=buffers.rgb, mask=mask.data, depth16=depth16,
                depth_min_m=dmin, depth_max_m=dmax,
                prompt=prompt, ip_image_id=_nearest_rig_id(project, pose),
                strength=strength, seed=base_seed + t,
            )
            resp = backend(req)
            final = np.where(req.mask[..., None], resp.rgb, req.rgb)
            tex = paint_view(tex, project.mesh, project.uv, final, K, pose, buffers,
                             source_tag=f"inpaint step {t}")
        frame_path = out_dir / f"frame_inpaint_{t:04d}.png"
        imgio.save_rgb(frame_path, final)
        frames.append(FrameRecord(pose, K, "inpaint", t, str(frame_path), project.timestamp))
        save_checkpoint(out_dir, "inpaint", t, tex)
        imgio.write_json(state_path, {
            "completed_t": t, "total": n,
            "frames": [_frame_dict(f) for f in frames],
        })
        executed += 1

    tex = postprocess_fill(tex)
    save_checkpoint(out_dir, "final", 0, tex)
    return tex, frames


def _frame_dict(f: FrameRecord) -> dict:
    return {
        "stage": f.stage, "t": f.t, "image": f.image_path, "timestamp": f.timestamp,
        "position": [float(v) for v in f.pose.position],
        "yaw": f.pose.yaw, "pitch": f.pose.pitch, "roll": f.pose.roll,
    }


def _nearest_rig_id(project: Project, pose: Pose) -> str | None:
    """IP-guidance reference: webcam rig nearest to the pose by ENU distance."""
    if not project.rigs:
        return None
    d = [float(np.linalg.norm(r.pose.position - pose.position)) for r in project.rigs]
    return project.rigs[int(np.argmin(d))].id


def export_dataset(project: Project, frames: list, manifest_path=None) -> dict:
    """Posed-image manifest for downstream training: per-frame intrinsics,
    world-from-camera rotation/translation, timestamps, plus terrain refs."""
    out_dir = Path(project.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = Path(manifest_path) if manifest_path else out_dir / "dataset_manifest.json"

    entries = []
    for f in frames:
        if not f.image_path or not Path(f.image_path).exists():
            raise FileNotFoundError(f"frame {f.stage}/{f.t}: missing image {f.image_path!r}")
        R_wc = f.pose.rotation().T  # world-from-camera
        entries.append({
            "image": str(f.image_path),
            "stage": f.stage,
            "t": f.t,
            "timestamp": f.timestamp,
            "intrinsics": f.intrinsics.matrix().tolist(),
            "width": f.intrinsics.width,
            "height": f.intrinsics.height,
            "rotation_world_from_camera": R_wc.tolist(),
            "translation_world_from_camera": [float(v) for v in f.pose.position],
        })
    manifest = {
        "name": project.name,
        "timestamp": project.timestamp,
        "terrain": {
            "rows": project.heightfield.height,
            "cols": project.heightfield.width,
            "cell_size_m": project.heightfield.cell_size,
            "origin": list(project.heightfield.origin_geo),
            "texture_resolution": [project.uv.tex_h, project.uv.tex_w],
        },
        "frames": entries,
    }
    imgio.write_json(manifest_path, manifest)
    return manifest


def pose_from_manifest_entry(entry: dict) -> Pose:
    """Recover a Pose from a manifest frame (inverse of export_dataset)."""
    R_wc = np.asarray(entry["rotation_world_from_camera"], dtype=np.float64)
    R = R_wc.T
    # rows of R are right, down, forward
    forward = R[2]
    pitch = math.asin(np.clip(forward[2], -1, 1))
    yaw = math.atan2(forward[0], forward[1])
    pose0 = Pose(np.array(entry["translation_world_from_camera"]), yaw=yaw, pitch=pitch)
    # recover roll from the right axis
    right0 = pose0.rotation()[0]
    right = R[0]
    down0 = pose0.rotation()[1]
    roll = math.atan2(float(np.dot(right, down0)), float(np.dot(right, right0)))
    return Pose(pose0.position, yaw=yaw, pitch=pitch, roll=roll)
