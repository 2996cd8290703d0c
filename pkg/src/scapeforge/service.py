"""Project-scoped HTTP API: rendering, correspondence CRUD, camera
optimization, and background pipeline runs. Backend for the annotation UI."""

from __future__ import annotations

import io
import logging
import math
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image

from . import imgio, pipeline
from .camera import Correspondence, Intrinsics, OptimizeConfig, Pose, optimize_camera, project as cam_project, save_correspondences
from .raster import FACE_NONE, render

log = logging.getLogger(__name__)


@dataclass
class RunHandle:
    id: str
    stage: str
    state: str = "running"  # running | done | error
    progress_t: int = 0
    progress_n: int = 0
    error: str = ""


@dataclass
class SessionProject:
    project: pipeline.Project
    lock: threading.Lock = field(default_factory=threading.Lock)
    busy: bool = False
    texture: object = None  # latest checkpointed texture for renders

    def current_texture(self):
        return self.texture if self.texture is not None else self.project.base_texture


class SessionState:
    """Loaded projects by id; one writer per project at a time."""

    def __init__(self, root: Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise ValueError(f"unreadable project root {root}")
        self._projects: dict[str, SessionProject] = {}
        self._runs: dict[str, RunHandle] = {}
        self._lock = threading.Lock()

    def project_ids(self) -> list:
        ids = set(self._projects)
        for p in sorted(self.root.iterdir()):
            if (p / "project.json").exists():
                ids.add(p.name)
        return sorted(ids)

    def get(self, pid: str) -> SessionProject:
        with self._lock:
            if pid not in self._projects:
                doc = self.root / pid / "project.json"
                if not doc.exists():
                    raise KeyError(pid)
                self._projects[pid] = SessionProject(project=pipeline.load_project(doc))
            return self._projects[pid]

    def run(self, rid: str) -> RunHandle:
        return self._runs[rid]

    def start_run(self, pid: str, stage: str, backend_spec: str | None) -> RunHandle:
        sp = self.get(pid)
        with sp.lock:
            if sp.busy:
                raise RuntimeError("project busy with another run")
            sp.busy = True
        handle = RunHandle(id=uuid.uuid4().hex[:12], stage=stage)
        self._runs[handle.id] = handle

        def work():
            try:
                proj = sp.project
                if stage == "paint":
                    handle.progress_n = len(proj.rigs)
                    tex, _ = pipeline.run_paint_stage(proj)
                    handle.progress_t = handle.progress_n
                elif stage == "inpaint":
                    painted, _ = pipeline.run_paint_stage(proj) if proj.rigs else (proj.texture(), [])
                    backend = pipeline.resolve_backend(
                        backend_spec or proj.inpaint_config.get("backend"))
                    handle.progress_n = proj.trajectory_config.samples
                    tex, _ = pipeline.run_inpaint_stage(proj, backend=backend, texture=painted)
                    handle.progress_t = handle.progress_n
                else:
                    raise ValueError(f"unknown stage {stage!r}")
                sp.texture = tex
                handle.state = "done"
            except Exception as e:  # noqa: BLE001 - surfaced via the run handle
                log.exception("run %s failed", handle.id)
                handle.state = "error"
                handle.error = str(e)
            finally:
                sp.busy = False

        threading.Thread(target=work, daemon=True).start()
        return handle


def _png_response(arr: np.ndarray, headers: dict | None = None) -> Response:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")  # mode inferred from dtype
    return Response(content=buf.getvalue(), media_type="image/png", headers=headers or {})


def _rig_doc(rig) -> dict:
    return {
        "id": rig.id,
        "fx": rig.intrinsics.fx, "fy": rig.intrinsics.fy,
        "cx": rig.intrinsics.cx, "cy": rig.intrinsics.cy,
        "width": rig.intrinsics.width, "height": rig.intrinsics.height,
        "yaw_deg": math.degrees(rig.pose.yaw), "pitch_deg": math.degrees(rig.pose.pitch),
        "position": [float(v) for v in rig.pose.position],
        "timestamp": rig.timestamp,
        "optimized": rig.optimized,
        "correspondence_count": len(rig.correspondences),
    }


def create_app(project_root, ui_dir=None) -> FastAPI:
    state = SessionState(Path(project_root))
    app = FastAPI(title="scapeforge service")
    app.state.sessions = state

    def get_project(pid: str) -> SessionProject:
        try:
            return state.get(pid)
        except KeyError:
            raise HTTPException(404, f"unknown project {pid!r}")

    def get_rig(sp: SessionProject, cid: str):
        for rig in sp.project.rigs:
            if rig.id == cid:
                return rig
        raise HTTPException(404, f"unknown camera {cid!r}")

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    @app.get("/api/projects")
    def list_projects():
        return {"projects": state.project_ids()}

    @app.get("/api/projects/{pid}")
    def get_project_doc(pid: str):
        sp = get_project(pid)
        p = sp.project
        return {
            "name": p.name,
            "timestamp": p.timestamp,
            "cameras": [r.id for r in p.rigs],
            "terrain": {"rows": p.heightfield.height, "cols": p.heightfield.width,
                        "cell_size_m": p.heightfield.cell_size},
            "busy": sp.busy,
        }

    @app.put("/api/projects/{pid}")
    def put_project_doc(pid: str, body: dict):
        sp = get_project(pid)
        with sp.lock:
            if sp.busy:
                raise HTTPException(409, "project busy")
            if "timestamp" in body:
                sp.project.timestamp = str(body["timestamp"])
        return {"ok": True}

    @app.get("/api/projects/{pid}/cameras")
    def list_cameras(pid: str):
        sp = get_project(pid)
        return {"cameras": [_rig_doc(r) for r in sp.project.rigs]}

    @app.get("/api/projects/{pid}/cameras/{cid}")
    def get_camera(pid: str, cid: str):
        return _rig_doc(get_rig(get_project(pid), cid))

    @app.put("/api/projects/{pid}/cameras/{cid}")
    def put_camera(pid: str, cid: str, body: dict):
        sp = get_project(pid)
        rig = get_rig(sp, cid)
        with sp.lock:
            if sp.busy:
                raise HTTPException(409, "project busy")
            K = rig.intrinsics
            rig.intrinsics = Intrinsics(
                float(body.get("fx", K.fx)), float(body.get("fy", K.fy)),
                float(body.get("cx", K.cx)), float(body.get("cy", K.cy)),
                K.width, K.height,
            )
            if "yaw_deg" in body:
                rig.pose.yaw = math.radians(float(body["yaw_deg"]))
            if "pitch_deg" in body:
                rig.pose.pitch = math.radians(float(body["pitch_deg"]))
            if "trusted" in body:
                rig.optimized = bool(body["trusted"])
        return _rig_doc(rig)

    @app.get("/api/projects/{pid}/cameras/{cid}/image")
    def camera_image(pid: str, cid: str):
        rig = get_rig(get_project(pid), cid)
        if not rig.image_path or not Path(rig.image_path).exists():
            raise HTTPException(404, "no image for this camera")
        return Response(content=Path(rig.image_path).read_bytes(), media_type="image/png")

    def _resolve_view(sp: SessionProject, cam: str | None, pose_str: str | None,
                      w: int | None, h: int | None):
        if cam:
            rig = get_rig(sp, cam)
            K, pose = rig.intrinsics, rig.pose
        elif pose_str:
            try:
                yaw, pitch, x, y, z = (float(v) for v in pose_str.split(","))
            except ValueError:
                raise HTTPException(422, "pose must be yaw,pitch,x,y,z")
            pose = Pose(np.array([x, y, z]), yaw=math.radians(yaw), pitch=math.radians(pitch))
            K = sp.project.trajectory_intrinsics
        else:
            raise HTTPException(422, "specify cam= or pose=")
        if w and h:
            K = K.scaled(int(w), int(h))
        return K, pose

    @app.get("/api/projects/{pid}/render")
    def render_view(pid: str, cam: str | None = None, pose: str | None = None,
                    mode: str = "rgb", w: int | None = None, h: int | None = None):
        sp = get_project(pid)
        K, view_pose = _resolve_view(sp, cam, pose, w, h)
        buffers = render(sp.project.mesh, sp.project.uv, sp.current_texture(),
                         K, view_pose, sp.project.render_settings)
        if mode == "rgb":
            return _png_response(buffers.rgb)
        if mode == "depth":
            grid, dmin, dmax = imgio.depth_to_inverse16(buffers.depth)
            return _png_response(grid,
                                 {"X-Depth-Min": str(dmin), "X-Depth-Max": str(dmax)})
        if mode == "faceidx":
            # face ids stored +1 so 0 marks background; 16-bit grid
            grid = (buffers.face_index.astype(np.int64) + 1)
            if grid.max() > 65535:
                raise HTTPException(422, "too many faces for 16-bit face-index export")
            return _png_response(grid.astype(np.uint16))
        raise HTTPException(422, f"unknown render mode {mode!r}")

    @app.post("/api/projects/{pid}/pick3d")
    def pick3d(pid: str, body: dict):
        sp = get_project(pid)
        K, view_pose = _resolve_view(sp, body.get("camera"), body.get("pose"),
                                     body.get("w"), body.get("h"))
        u, v = float(body["u"]), float(body["v"])
        col, row = int(round(u)), int(round(v))
        if not (0 <= col < K.width and 0 <= row < K.height):
            raise HTTPException(422, "pick outside image bounds")
        buffers = render(sp.project.mesh, sp.project.uv, sp.current_texture(),
                         K, view_pose, sp.project.render_settings)
        if buffers.face_index[row, col] == FACE_NONE:
            raise HTTPException(404, "sky pixel: no geometry under the pick")
        z = float(buffers.depth[row, col])
        pc = np.array([(u - K.cx) / K.fx * z, (v - K.cy) / K.fy * z, z])
        R = view_pose.rotation()
        p = R.T @ pc + view_pose.position
        return {"x": float(p[0]), "y": float(p[1]), "z": float(p[2])}

    @app.get("/api/projects/{pid}/cameras/{cid}/correspondences")
    def list_corrs(pid: str, cid: str):
        rig = get_rig(get_project(pid), cid)
        return {
            "correspondences": [
                {"index": i, "x": c.p3d[0], "y": c.p3d[1], "z": c.p3d[2],
                 "u": c.p2d[0], "v": c.p2d[1]}
                for i, c in enumerate(rig.correspondences)
            ]
        }

    @app.post("/api/projects/{pid}/cameras/{cid}/correspondences", status_code=201)
    def add_corr(pid: str, cid: str, body: dict):
        sp = get_project(pid)
        rig = get_rig(sp, cid)
        with sp.lock:
            if sp.busy:
                raise HTTPException(409, "project busy")
            c = Correspondence((body["x"], body["y"], body["z"]), (body["u"], body["v"]))
            rig.correspondences.append(c)
            _persist_corrs(sp, rig)
        return {"index": len(rig.correspondences) - 1,
                "x": c.p3d[0], "y": c.p3d[1], "z": c.p3d[2],
                "u": c.p2d[0], "v": c.p2d[1]}

    @app.delete("/api/projects/{pid}/cameras/{cid}/correspondences/{index}")
    def delete_corr(pid: str, cid: str, index: int):
        sp = get_project(pid)
        rig = get_rig(sp, cid)
        with sp.lock:
            if sp.busy:
                raise HTTPException(409, "project busy")
            if not (0 <= index < len(rig.correspondences)):
                raise HTTPException(404, "no such correspondence")
            rig.correspondences.pop(index)
            _persist_corrs(sp, rig)
        return {"ok": True, "remaining": len(rig.correspondences)}

    @app.post("/api/projects/{pid}/cameras/{cid}/optimize")
    def optimize(pid: str, cid: str, body: dict | None = None):
        sp = get_project(pid)
        rig = get_rig(sp, cid)
        body = body or {}
        config = OptimizeConfig(
            free_params=tuple(body.get("free_params", ("fx", "fy", "yaw"))),
            iters=int(body.get("iters", 200)),
        )
        with sp.lock:
            if sp.busy:
                raise HTTPException(409, "project busy")
            if not rig.correspondences:
                raise HTTPException(422, "no correspondences to optimize against")
            result = optimize_camera(rig, config)
            rig.intrinsics = result.intrinsics
            rig.pose = result.pose
            rig.optimized = True
        return {
            "fx": result.intrinsics.fx,
            "fy": result.intrinsics.fy,
            "yaw_deg": math.degrees(result.pose.yaw),
            "pitch_deg": math.degrees(result.pose.pitch),
            "loss": result.loss,
            "residuals": result.residuals,
            "loss_trace": result.loss_trace,
            "warnings": result.warnings,
        }

    @app.post("/api/projects/{pid}/runs", status_code=201)
    def start_run(pid: str, body: dict):
        get_project(pid)
        stage = body.get("stage")
        if stage not in ("paint", "inpaint"):
            raise HTTPException(422, "stage must be paint or inpaint")
        try:
            handle = state.start_run(pid, stage, body.get("backend"))
        except RuntimeError as e:
            raise HTTPException(409, str(e))
        return {"run_id": handle.id, "stage": handle.stage, "state": handle.state}

    @app.get("/api/projects/{pid}/runs/{rid}")
    def run_status(pid: str, rid: str):
        try:
            h = state.run(rid)
        except KeyError:
            raise HTTPException(404, "unknown run")
        return {"run_id": h.id, "stage": h.stage, "state": h.state,
                "progress": {"t": h.progress_t, "n": h.progress_n}, "error": h.error}

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def _persist_corrs(sp: SessionProject, rig) -> None:
    path = sp.project.root / f"correspondences_{rig.id}.txt"
    save_correspondences(path, rig.correspondences)
