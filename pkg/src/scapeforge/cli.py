"""forge: command-line entry points for the texturing pipeline and service."""

from __future__ import annotations

import math
from pathlib import Path

import click
import numpy as np

from . import imgio, pipeline


@click.group()
def main():
    """Terrain digital-twin texturing pipeline."""


@main.command()
@click.argument("project", type=click.Path(exists=True))
def paint(project):
    """Run the webcam paint stage and checkpoint the texture."""
    proj = pipeline.load_project(project)
    tex, frames = pipeline.run_paint_stage(proj)
    pipeline.save_checkpoint(Path(proj.output_dir), "paint", len(frames), tex)
    click.echo(f"painted {len(frames)} views; "
               f"{tex.mask.mean():.1%} of texels covered -> {proj.output_dir}")


@main.command()
@click.argument("project", type=click.Path(exists=True))
@click.option("--backend", default=None,
              help="mock or backend URL (default: project file, then $FORGE_BACKEND_URL)")
@click.option("--resume", is_flag=True, help="resume from the last completed step")
def inpaint(project, backend, resume):
    """Run paint + iterative inpainting along the trajectory."""
    proj = pipeline.load_project(project)
    be = pipeline.resolve_backend(backend or proj.inpaint_config.get("backend"))
    if resume:
        tex, frames = pipeline.run_inpaint_stage(proj, backend=be, resume=True)
    else:
        painted, _ = pipeline.run_paint_stage(proj) if proj.rigs else (proj.texture(), [])
        tex, frames = pipeline.run_inpaint_stage(proj, backend=be, texture=painted)
    click.echo(f"inpainted {len(frames)} steps; "
               f"{tex.mask.mean():.1%} of texels covered -> {proj.output_dir}")


@main.command()
@click.argument("project", type=click.Path(exists=True))
def export(project):
    """Export the posed-image dataset manifest from the last run."""
    proj = pipeline.load_project(project)
    frames = []
    for t, rig in enumerate(proj.rigs, start=1):
        frames.append(pipeline.FrameRecord(rig.pose, rig.intrinsics, "paint", t,
                                           rig.image_path, rig.timestamp))
    state_path = Path(proj.output_dir) / "inpaint_state.json"
    if state_path.exists():
        from .camera import Pose

        for f in imgio.read_json(state_path)["frames"]:
            frames.append(pipeline.FrameRecord(
                Pose(np.array(f["position"]), f["yaw"], f["pitch"], f["roll"]),
                proj.trajectory_intrinsics, f["stage"], f["t"], f["image"], f["timestamp"]))
    manifest = pipeline.export_dataset(proj, frames)
    click.echo(f"wrote manifest with {len(manifest['frames'])} frames")


@main.command()
@click.argument("project", type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["linear", "cubic"]), default="cubic")
@click.option("--samples", type=int, default=None)
@click.option("--agl", type=float, default=None, help="height above ground (m)")
@click.option("--out", type=click.Path(), default=None, help="write poses JSON here")
def trajectory(project, mode, samples, agl, out):
    """Sample the inpainting trajectory and print/save its poses."""
    proj = pipeline.load_project(project)
    cfg = proj.trajectory_config
    if mode:
        cfg.mode = type(cfg.mode)(mode)
    if samples:
        cfg.samples = samples
    if agl is not None:
        cfg.default_agl_m = agl
    from .trajectory import build_trajectory

    poses = build_trajectory(proj.waypoints, cfg, proj.heightfield)
    docs = [{"position": [float(v) for v in p.position],
             "yaw_deg": math.degrees(p.yaw), "pitch_deg": math.degrees(p.pitch)}
            for p in poses]
    if out:
        imgio.write_json(out, docs)
        click.echo(f"wrote {len(docs)} poses to {out}")
    else:
        for d in docs:
            click.echo(d)


@main.command("eval")
@click.argument("project", type=click.Path(exists=True))
@click.option("--heldout", multiple=True, required=True,
              help="camera id(s) to hold out and score")
@click.option("--out", type=click.Path(), default=None, help="report directory")
@click.option("--near-cutoff", type=float, default=500.0)
def eval_cmd(project, heldout, out, near_cutoff):
    """Score held-out webcam views against renders; writes JSON/CSV/figures."""
    from .evaluation import evaluate_views, write_report

    proj = pipeline.load_project(project)
    rigs = [r for r in proj.rigs if r.id in heldout]
    if not rigs:
        raise click.ClickException(f"no project cameras match {heldout}")
    paint_rigs = [r for r in proj.rigs if r.id not in heldout]
    proj.rigs = paint_rigs
    tex, _ = pipeline.run_paint_stage(proj) if paint_rigs else (proj.texture(), [])
    images = [imgio.load_rgb(r.image_path) for r in rigs]
    report, _ = evaluate_views(proj.mesh, proj.uv, tex, rigs, images,
                               near_cutoff_m=near_cutoff)
    paths = write_report(report, out or Path(proj.output_dir) / "eval", region=proj.name)
    click.echo(f"PSNR {report.mean_psnr:.2f} dB, SSIM {report.mean_ssim:.3f} "
               f"over {len(report.views)} views -> {paths['csv']}")


@main.command()
@click.option("--port", type=int, default=8080)
@click.option("--root", type=click.Path(exists=True), default="./projects")
@click.option("--ui", type=click.Path(), default=None, help="static UI bundle directory")
def serve(port, root, ui):
    """Serve the project API (and optionally the annotation UI)."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(root, ui_dir=ui), host="0.0.0.0", port=port)


@main.command("mock-backend")
@click.option("--port", type=int, default=8750)
@click.option("--grain", type=float, default=0.0)
def mock_backend(port, grain):
    """Serve the deterministic mock inpainting backend."""
    import uvicorn

    from .inpaint import create_mock_backend_app

    uvicorn.run(create_mock_backend_app(grain=grain), host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()
