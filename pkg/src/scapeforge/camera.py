"""Pinhole camera model, geo conversion, panorama splitting, and resection by reprojection loss."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

EARTH_RADIUS_M = 6_378_137.0
UNPROJECTABLE_PENALTY = 1e4  # px, repels poses that put labeled points behind the camera


@dataclass
class GeoPoint:
    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude {self.lat} out of range")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude {self.lon} out of range")


@dataclass
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1]], dtype=np.float64
        )

    def scaled(self, width: int, height: int) -> "Intrinsics":
        sx = width / self.width
        sy = height / self.height
        return Intrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)


@dataclass
class Pose:
    """Camera pose in the local ENU frame.

    position is the camera center. yaw is about +z (0 = looking north, positive
    eastward); pitch positive looks up; roll about the view axis. The camera
    frame is x right, y down, z forward.
    """

    position: np.ndarray  # (3,)
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)

    def rotation(self) -> np.ndarray:
        """World-to-camera rotation; rows are the camera axes (right, down, forward)."""
        cy, sy = math.cos(self.yaw), math.sin(self.yaw)
        cp, sp = math.cos(self.pitch), math.sin(self.pitch)
        forward = np.array([cp * sy, cp * cy, sp])
        right0 = np.array([cy, -sy, 0.0])
        down0 = np.cross(forward, right0)
        cr, sr = math.cos(self.roll), math.sin(self.roll)
        right = cr * right0 + sr * down0
        down = cr * down0 - sr * right0
        R = np.stack([right, down, forward])
        assert abs(np.linalg.det(R) - 1.0) < 1e-9
        return R

    def translation(self) -> np.ndarray:
        """t such that X_cam = R @ X_world + t."""
        return -self.rotation() @ self.position


def look_at_angles(position, target):
    """(yaw, pitch) that aim the camera at target from position."""
    d = np.asarray(target, dtype=np.float64) - np.asarray(position, dtype=np.float64)
    n = np.linalg.norm(d)
    if n == 0:
        raise ValueError("look target coincides with camera position")
    d = d / n
    yaw = math.atan2(d[0], d[1])
    pitch = math.asin(np.clip(d[2], -1.0, 1.0))
    return yaw, pitch


@dataclass
class Correspondence:
    p3d: np.ndarray  # (3,) ENU meters
    p2d: np.ndarray  # (2,) pixel target

    def __post_init__(self):
        self.p3d = np.asarray(self.p3d, dtype=np.float64).reshape(3)
        self.p2d = np.asarray(self.p2d, dtype=np.float64).reshape(2)


@dataclass
class CameraRig:
    id: str
    intrinsics: Intrinsics
    pose: Pose
    correspondences: list = field(default_factory=list)
    timestamp: str = ""
    image_path: str = ""
    mask_path: str = ""
    optimized: bool = False


def geo_to_local(p: GeoPoint, origin: GeoPoint) -> np.ndarray:
    """Equirectangular geo -> ENU, valid for small (<1 deg) latitude offsets."""
    if abs(p.lat - origin.lat) >= 1.0:
        raise ValueError("point too far from origin for local-tangent conversion")
    dlat = math.radians(p.lat - origin.lat)
    dlon = math.radians(p.lon - origin.lon)
    x = EARTH_RADIUS_M * math.cos(math.radians(origin.lat)) * dlon
    y = EARTH_RADIUS_M * dlat
    z = p.alt - origin.alt
    return np.array([x, y, z])


def project(p3d, K: Intrinsics, pose: Pose):
    """Pinhole projection. Returns ((u, v), depth) or None if behind the camera."""
    pc = pose.rotation() @ np.asarray(p3d, dtype=np.float64).reshape(3) + pose.translation()
    if pc[2] <= 0:
        return None
    u = K.cx + K.fx * pc[0] / pc[2]
    v = K.cy + K.fy * pc[1] / pc[2]
    return (u, v), float(pc[2])


def project_many(points, K: Intrinsics, pose: Pose):
    """Vectorized projection: returns (uv (N,2), depth (N,), in_front (N,) bool)."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pc = P @ pose.rotation().T + pose.translation()
    z = pc[:, 2]
    in_front = z > 0
    zsafe = np.where(in_front, z, 1.0)
    uv = np.stack(
        [K.cx + K.fx * pc[:, 0] / zsafe, K.cy + K.fy * pc[:, 1] / zsafe], axis=1
    )
    return uv, z, in_front


def reprojection_loss(corrs, K: Intrinsics, pose: Pose) -> float:
    """Mean L1 pixel distance between projections and 2D targets.

    Points behind the camera contribute a fixed large penalty."""
    if not corrs:
        raise ValueError("no correspondences")
    pts = np.stack([c.p3d for c in corrs])
    targets = np.stack([c.p2d for c in corrs])
    uv, _, in_front = project_many(pts, K, pose)
    l1 = np.abs(uv - targets).sum(axis=1)
    l1 = np.where(in_front, l1, UNPROJECTABLE_PENALTY)
    return float(l1.mean())


@dataclass
class OptimizeConfig:
    free_params: tuple = ("fx", "fy", "yaw")
    iters: int = 200
    init_step: float = 0.05  # in scaled parameter space
    fd_step: float = 1e-3  # central-difference step, scaled space


@dataclass
class OptimizeResult:
    intrinsics: Intrinsics
    pose: Pose
    loss: float
    loss_trace: list
    residuals: list  # per-correspondence dicts {u, v, pu, pv, l1}
    warnings: list


_PARAM_SET = ("fx", "fy", "yaw", "pitch")


def optimize_camera(rig: CameraRig, config: OptimizeConfig | None = None) -> OptimizeResult:
    """Resection by finite-difference gradient descent on the mean L1 reprojection loss.

    Normalized-gradient steps with multiplicative backtracking (halve on loss
    increase); returns the best-observed iterate.
    """
    config = config or OptimizeConfig()
    for p in config.free_params:
        if p not in _PARAM_SET:
            raise ValueError(f"unknown free parameter {p!r}")
    corrs = rig.correspondences
    if not corrs:
        raise ValueError("cannot optimize with zero correspondences")
    warns = []
    if len(corrs) < 3:
        warns.append(f"only {len(corrs)} correspondences; recommend >= 3")
        warnings.warn(warns[-1])

    K0, pose0 = rig.intrinsics, rig.pose
    names = list(config.free_params)
    theta0 = np.array([_get_param(K0, pose0, n) for n in names])
    # Scale focal lengths by their initial value so all coordinates move in
    # comparable units (radians for angles).
    scales = np.array([max(abs(t), 1.0) if n in ("fx", "fy") else 1.0 for n, t in zip(names, theta0)])

    def loss_at(u: np.ndarray) -> float:
        K, pose = _apply_params(K0, pose0, names, u * scales)
        val = reprojection_loss(corrs, K, pose)
        if not np.isfinite(val):
            raise RuntimeError(f"non-finite loss at parameters {dict(zip(names, u * scales))}")
        return val

    u = theta0 / scales
    f = loss_at(u)
    best_u, best_f = u.copy(), f
    trace = [f]
    # Per-parameter sign descent: each coordinate keeps its own step size,
    # grown while the gradient sign is stable and halved when it flips or the
    # loss increases. Handles the poor conditioning between focal lengths and
    # rotation without second-order machinery.
    steps = np.full(len(u), config.init_step)
    g_prev = np.zeros(len(u))
    du_prev = np.zeros(len(u))
    f_prev = f
    h = config.fd_step
    for _ in range(config.iters):
        g = np.empty_like(u)
        for i in range(len(u)):
            e = np.zeros_like(u)
            e[i] = h
            g[i] = (loss_at(u + e) - loss_at(u - e)) / (2 * h)
        du = np.empty_like(u)
        for i in range(len(u)):
            prod = g_prev[i] * g[i]
            if prod > 0:
                steps[i] *= 1.2
                du[i] = -np.sign(g[i]) * steps[i]
            elif prod < 0:
                steps[i] *= 0.5
                du[i] = -du_prev[i] if f > f_prev else 0.0  # undo the overshoot
                g[i] = 0.0
            else:
                du[i] = -np.sign(g[i]) * steps[i]
        f_prev = f
        u = u + du
        f = loss_at(u)
        g_prev, du_prev = g, du
        if f < best_f:
            best_u, best_f = u.copy(), f
        trace.append(f)
        if steps.max() < 1e-13:
            break

    K, pose = _apply_params(K0, pose0, names, best_u * scales)
    uv, _, in_front = project_many(np.stack([c.p3d for c in corrs]), K, pose)
    residuals = []
    for c, p, ok in zip(corrs, uv, in_front):
        l1 = float(abs(p[0] - c.p2d[0]) + abs(p[1] - c.p2d[1])) if ok else UNPROJECTABLE_PENALTY
        residuals.append(
            {"u": float(c.p2d[0]), "v": float(c.p2d[1]),
             "pu": float(p[0]), "pv": float(p[1]), "l1": l1}
        )
    return OptimizeResult(K, pose, best_f, trace, residuals, warns)


def _get_param(K: Intrinsics, pose: Pose, name: str) -> float:
    if name == "fx":
        return K.fx
    if name == "fy":
        return K.fy
    if name == "yaw":
        return pose.yaw
    return pose.pitch


def _apply_params(K: Intrinsics, pose: Pose, names, values):
    kw = dict(fx=K.fx, fy=K.fy)
    pw = dict(yaw=pose.yaw, pitch=pose.pitch)
    for n, v in zip(names, values):
        if n in kw:
            kw[n] = float(v)
        else:
            pw[n] = float(v)
    K2 = Intrinsics(kw["fx"], kw["fy"], K.cx, K.cy, K.width, K.height)
    pose2 = Pose(pose.position.copy(), yaw=pw["yaw"], pitch=pw["pitch"], roll=pose.roll)
    return K2, pose2


def cylindrical_to_perspective(
    pano: np.ndarray,
    count: int,
    hfov_deg: float,
    vfov_deg: float,
    out_size=(640, 480),
    pano_vfov_deg: float | None = None,
):
    """Split a 360-degree central-cylindrical panorama into pinhole sub-images.

    The panorama maps azimuth linearly to columns and tan(elevation) linearly
    to rows (row 0 = highest elevation). Returns [(image, yaw_offset_deg)].
    """
    if not (4 <= count <= 6):
        raise ValueError("sub-image count must be in 4..6")
    if hfov_deg >= 180.0:
        raise ValueError("hfov must be < 180 degrees")
    pano = np.asarray(pano, dtype=np.uint8)
    ph, pw = pano.shape[:2]
    pano_vfov = math.radians(pano_vfov_deg if pano_vfov_deg is not None else vfov_deg)
    tan_half_v_pano = math.tan(pano_vfov / 2)

    ow, oh = out_size
    fx = (ow / 2) / math.tan(math.radians(hfov_deg) / 2)
    fy = (oh / 2) / math.tan(math.radians(vfov_deg) / 2)
    cx, cy = (ow - 1) / 2, (oh - 1) / 2
    us, vs = np.meshgrid(np.arange(ow), np.arange(oh))
    xn = (us - cx) / fx
    yn = (vs - cy) / fy

    views = []
    for i in range(count):
        yaw_off = i * 360.0 / count
        az = np.arctan2(xn, 1.0) + math.radians(yaw_off)
        tan_el = -yn / np.sqrt(1.0 + xn**2)
        col = (az / (2 * math.pi)) % 1.0 * pw
        row = (ph - 1) / 2 - tan_el / tan_half_v_pano * (ph - 1) / 2
        img = _bilinear_wrap(pano, col, np.clip(row, 0, ph - 1))
        views.append((img, yaw_off))
    return views


def _bilinear_wrap(img: np.ndarray, x, y):
    """Bilinear sample with horizontal wraparound (panorama columns)."""
    h, w = img.shape[:2]
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    tx = (x - x0)[..., None]
    ty = (y - y0)[..., None]
    x0m = x0 % w
    x1m = (x0 + 1) % w
    y0 = np.clip(y0, 0, h - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    p = img.astype(np.float64)
    top = p[y0, x0m] * (1 - tx) + p[y0, x1m] * tx
    bot = p[y1, x0m] * (1 - tx) + p[y1, x1m] * tx
    out = top * (1 - ty) + bot * ty
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def load_correspondences(path) -> list:
    """Line-oriented correspondence file: `x y z u v` per record."""
    out = []
    for ln, line in enumerate(open(path), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        vals = line.split()
        if len(vals) != 5:
            raise ValueError(f"{path}:{ln}: expected 5 fields, got {len(vals)}")
        x, y, z, u, v = map(float, vals)
        out.append(Correspondence((x, y, z), (u, v)))
    return out


def save_correspondences(path, corrs) -> None:
    with open(path, "w") as f:
        for c in corrs:
            f.write(f"{c.p3d[0]} {c.p3d[1]} {c.p3d[2]} {c.p2d[0]} {c.p2d[1]}\n")
