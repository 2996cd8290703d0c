"""Masked image-quality metrics (PSNR, SSIM) and the held-out view evaluation harness."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from . import imgio
from .camera import CameraRig
from .raster import FACE_NONE, RenderSettings, render

PSNR_CAP_DB = 99.0
EVAL_RESOLUTION = (1024, 1536)  # rows x cols
NEAR_CUTOFF_M = 500.0

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11 x 11 window


@dataclass
class EvalMask:
    data: np.ndarray  # (H, W) bool, True = include

    def __post_init__(self):
        self.data = np.asarray(self.data).astype(bool)
        frac = self.data.mean() if self.data.size else 0.0
        if frac < 0.01:
            raise ValueError(f"eval mask includes only {frac:.2%} of pixels (< 1%)")


def to_gray601(rgb: np.ndarray) -> np.ndarray:
    """ITU-R BT.601 luma, float64 in [0, 255]."""
    p = np.asarray(rgb, dtype=np.float64)
    if p.ndim == 2:
        return p
    return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]


def psnr(a: np.ndarray, b: np.ndarray, mask: EvalMask) -> float:
    """10 log10(255^2 / MSE) over masked pixels; identical inputs cap at 99 dB."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image dimensions disagree")
    m = mask.data
    if a.ndim == 3:
        m = np.broadcast_to(m[..., None], a.shape)
    if not m.any():
        raise ValueError("empty mask")
    mse = float(((a - b) ** 2)[m].mean())
    if mse == 0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(255.0**2 / mse))


def _gaussian_kernel1d(sigma: float, radius: int) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2 * sigma**2))
    return k / k.sum()


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Local SSIM on BT.601 grayscale over 11x11 Gaussian windows.

    Returns the map for window centers where the window lies fully inside
    (shape (H - 10, W - 10))."""
    x = to_gray601(a)
    y = to_gray601(b)
    if x.shape != y.shape:
        raise ValueError("image dimensions disagree")
    k = _gaussian_kernel1d(SSIM_SIGMA, SSIM_RADIUS)

    def blur(img):
        out = correlate1d(img, k, axis=0, mode="constant")
        out = correlate1d(out, k, axis=1, mode="constant")
        r = SSIM_RADIUS
        return out[r:-r, r:-r]

    mu_x = blur(x)
    mu_y = blur(y)
    mu_xx = blur(x * x)
    mu_yy = blur(y * y)
    mu_xy = blur(x * y)
    var_x = mu_xx - mu_x**2
    var_y = mu_yy - mu_y**2
    cov = mu_xy - mu_x * mu_y
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    return ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )


def ssim(a: np.ndarray, b: np.ndarray, mask: EvalMask) -> float:
    """Mean local SSIM over windows whose centers are masked (interior only)."""
    smap = ssim_map(a, b)
    r = SSIM_RADIUS
    centers = mask.data[r:-r, r:-r]
    if not centers.any():
        raise ValueError("empty mask (no interior window centers)")
    return float(smap[centers].mean())


@dataclass
class ViewScore:
    rig_id: str
    psnr_db: float
    ssim: float
    included_frac: float


@dataclass
class EvalReport:
    views: list  # list[ViewScore]
    resolution: tuple
    near_cutoff_m: float
    lpips: float | None = None  # reserved for an external scorer

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([v.psnr_db for v in self.views]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([v.ssim for v in self.views]))

    def to_dict(self) -> dict:
        return {
            "resolution": list(self.resolution),
            "near_cutoff_m": self.near_cutoff_m,
            "view_count": len(self.views),
            "mean_psnr_db": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "lpips": self.lpips,
            "views": [
                {"id": v.rig_id, "psnr_db": v.psnr_db, "ssim": v.ssim,
                 "included_frac": v.included_frac}
                for v in self.views
            ],
        }


def auto_mask(buffers, near_cutoff_m: float = NEAR_CUTOFF_M,
              extra_include: np.ndarray | None = None) -> EvalMask:
    """Evaluation mask: drop sentinel-sky pixels and the near region."""
    include = (buffers.face_index != FACE_NONE) & (buffers.depth >= near_cutoff_m)
    if extra_include is not None:
        include &= np.asarray(extra_include).astype(bool)
    return EvalMask(include)


def evaluate_views(mesh, uv, texture, rigs: list, images: list,
                   masks: list | None = None,
                   resolution=EVAL_RESOLUTION,
                   near_cutoff_m: float = NEAR_CUTOFF_M,
                   settings: RenderSettings | None = None) -> tuple:
    """Render each held-out rig at the evaluation resolution and score
    masked PSNR/SSIM against its webcam image.

    Returns (EvalReport, list of rendered RenderBuffers)."""
    if not rigs:
        raise ValueError("no held-out rigs")
    from PIL import Image

    settings = settings or RenderSettings()
    h, w = resolution
    views = []
    renders = []
    for i, rig in enumerate(rigs):
        K = rig.intrinsics.scaled(w, h)
        buffers = render(mesh, uv, texture, K, rig.pose, settings)
        renders.append(buffers)
        img = np.asarray(images[i], dtype=np.uint8)
        if img.shape[:2] != (h, w):
            img = np.asarray(
                Image.fromarray(img).resize((w, h), Image.BILINEAR), dtype=np.uint8
            )
        extra = masks[i].data if masks is not None and masks[i] is not None else None
        emask = auto_mask(buffers, near_cutoff_m, extra)
        views.append(
            ViewScore(
                rig_id=rig.id,
                psnr_db=psnr(buffers.rgb, img, emask),
                ssim=ssim(buffers.rgb, img, emask),
                included_frac=float(emask.data.mean()),
            )
        )
    return EvalReport(views=views, resolution=resolution, near_cutoff_m=near_cutoff_m), renders


def write_report(report: EvalReport, out_dir, region: str = "scene") -> dict:
    """Write the report as JSON + plain-text table + CSV + figures.

    Returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    json_path = out_dir / "report.json"
    imgio.write_json(json_path, report.to_dict())
    paths["json"] = json_path

    lpips = f"{report.lpips:.3f}" if report.lpips is not None else "-"
    lines = [
        f"{'Region':<16}{'LPIPS':>8}{'PSNR':>8}{'SSIM':>8}{'Views':>7}",
        f"{region:<16}{lpips:>8}{report.mean_psnr:>8.2f}{report.mean_ssim:>8.3f}"
        f"{len(report.views):>7}",
    ]
    txt_path = out_dir / "report.txt"
    txt_path.write_text("\n".join(lines) + "\n")
    paths["txt"] = txt_path

    csv_path = out_dir / "report.csv"
    with open(csv_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["view", "psnr_db", "ssim", "included_frac"])
        for v in report.views:
            wr.writerow([v.rig_id, f"{v.psnr_db:.4f}", f"{v.ssim:.6f}", f"{v.included_frac:.4f}"])
        wr.writerow(["mean", f"{report.mean_psnr:.4f}", f"{report.mean_ssim:.6f}", ""])
    paths["csv"] = csv_path

    paths["figure"] = _plot_scores(report, out_dir / "scores.png")
    return paths


def _plot_scores(report: EvalReport, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ids = [v.rig_id for v in report.views]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(max(6, len(ids) * 1.2), 3.4))
    ax1.bar(ids, [v.psnr_db for v in report.views], color="#4878cf")
    ax1.axhline(report.mean_psnr, color="k", ls="--", lw=1, label="mean")
    ax1.set_ylabel("PSNR (dB)")
    ax1.legend()
    ax2.bar(ids, [v.ssim for v in report.views], color="#6acc65")
    ax2.axhline(report.mean_ssim, color="k", ls="--", lw=1, label="mean")
    ax2.set_ylabel("SSIM")
    ax2.set_ylim(0, 1.05)
    for ax in (ax1, ax2):
        ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
