"""Camera path generation between geographic waypoints (linear or centripetal Catmull-Rom)."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .camera import GeoPoint, Pose, geo_to_local, look_at_angles

SUBDIV_PER_SEGMENT = 64  # arc-length lookup resolution


class PathMode(str, Enum):
    LINEAR = "linear"
    CUBIC = "cubic"


class OrientationPolicy(str, Enum):
    LOOK_AHEAD = "look_ahead"
    LOOK_TARGET = "look_target"


@dataclass
class Waypoint:
    geo: GeoPoint
    look: GeoPoint | None = None
    agl_m: float | None = None  # altitude above ground

    def __post_init__(self):
        if self.agl_m is not None and self.agl_m < 0:
            raise ValueError("altitude above ground must be >= 0")


@dataclass
class TrajectoryConfig:
    mode: PathMode = PathMode.CUBIC
    samples: int = 2
    default_agl_m: float = 200.0
    orientation: OrientationPolicy = OrientationPolicy.LOOK_AHEAD

    def __post_init__(self):
        self.mode = PathMode(self.mode)
        self.orientation = OrientationPolicy(self.orientation)
        if self.samples < 2:
            raise ValueError("need at least 2 samples")


class CatmullRomXY:
    """Centripetal (alpha = 0.5) Catmull-Rom through 2D control points,
    with duplicated endpoints (clamped ends)."""

    def __init__(self, points: np.ndarray, alpha: float = 0.5):
        pts = np.asarray(points, dtype=np.float64)
        if len(pts) < 2:
            raise ValueError("need at least 2 control points")
        self.ctrl = np.vstack([pts[0], pts, pts[-1]])
        self.n_seg = len(pts) - 1
        self.alpha = alpha

    def eval_segment(self, seg: int, s):
        """Evaluate segment seg at local parameter s in [0, 1]."""
        p0, p1, p2, p3 = self.ctrl[seg : seg + 4]
        a = self.alpha

        def knot(ti, pa, pb):
            d = np.linalg.norm(pb - pa)
            return ti + max(d, 1e-12) ** a

        t0 = 0.0
        t1 = knot(t0, p0, p1)
        t2 = knot(t1, p1, p2)
        t3 = knot(t2, p2, p3)
        t = t1 + np.asarray(s, dtype=np.float64) * (t2 - t1)
        t = t[..., None]
        a1 = (t1 - t) / (t1 - t0) * p0 + (t - t0) / (t1 - t0) * p1
        a2 = (t2 - t) / (t2 - t1) * p1 + (t - t1) / (t2 - t1) * p2
        a3 = (t3 - t) / (t3 - t2) * p2 + (t - t2) / (t3 - t2) * p3
        b1 = (t2 - t) / (t2 - t0) * a1 + (t - t0) / (t2 - t0) * a2
        b2 = (t3 - t) / (t3 - t1) * a2 + (t - t1) / (t3 - t1) * a3
        return (t2 - t) / (t2 - t1) * b1 + (t - t1) / (t2 - t1) * b2

    def eval_global(self, u):
        """Evaluate at global parameter u in [0, n_seg] (integers hit waypoints)."""
        u = float(u)
        seg = min(int(np.floor(u)), self.n_seg - 1)
        return self.eval_segment(seg, np.array([u - seg]))[0]


def _dense_samples(waypoints_xy: np.ndarray, mode: PathMode):
    """Dense polyline approximation of the path plus per-vertex global parameter."""
    n_seg = len(waypoints_xy) - 1
    params = []
    pts = []
    if mode == PathMode.LINEAR:
        for i in range(n_seg):
            s = np.linspace(0, 1, SUBDIV_PER_SEGMENT, endpoint=False)
            seg_pts = waypoints_xy[i] + s[:, None] * (waypoints_xy[i + 1] - waypoints_xy[i])
            pts.append(seg_pts)
            params.append(i + s)
    else:
        spline = CatmullRomXY(waypoints_xy)
        for i in range(n_seg):
            s = np.linspace(0, 1, SUBDIV_PER_SEGMENT, endpoint=False)
            pts.append(spline.eval_segment(i, s))
            params.append(i + s)
    pts.append(waypoints_xy[-1][None])
    params.append(np.array([float(n_seg)]))
    return np.concatenate(pts), np.concatenate(params)


def sample_path_xy(waypoints_xy: np.ndarray, mode: PathMode, n: int) -> np.ndarray:
    """n positions at arc-length-uniform spacing along the path."""
    dense, _ = _dense_samples(waypoints_xy, mode)
    seglen = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    total = cum[-1]
    targets = np.linspace(0.0, total, n)
    out = np.empty((n, 2))
    j = np.searchsorted(cum, targets, side="right") - 1
    j = np.clip(j, 0, len(seglen) - 1)
    frac = np.where(seglen[j] > 0, (targets - cum[j]) / np.maximum(seglen[j], 1e-300), 0.0)
    out = dense[j] + frac[:, None] * (dense[j + 1] - dense[j])
    out[0] = dense[0]
    out[-1] = dense[-1]
    return out


def build_trajectory(waypoints: list, config: TrajectoryConfig, hf) -> list:
    """Poses along the path: z follows the DEM plus height-above-ground,
    orientation per the configured policy, roll = 0."""
    if len(waypoints) < 2:
        raise ValueError("need at least 2 waypoints")
    origin = GeoPoint(hf.origin_geo[0], hf.origin_geo[1], 0.0)
    xy = []
    agl = []
    for wp in waypoints:
        p = geo_to_local(wp.geo, origin)
        if not (0 <= p[0] <= hf.extent_x and 0 <= p[1] <= hf.extent_y):
            raise ValueError(f"waypoint {wp.geo} outside the heightfield extent")
        xy.append(p[:2])
        agl.append(wp.agl_m if wp.agl_m is not None else config.default_agl_m)
    xy = np.asarray(xy)
    agl = np.asarray(agl, dtype=np.float64)

    pos_xy = sample_path_xy(xy, config.mode, config.samples)
    # height-above-ground interpolates with the nearest path progress
    wp_prog = _waypoint_progress(xy, config.mode)
    prog = _point_progress(pos_xy, xy, config.mode)
    sample_agl = np.interp(prog, wp_prog, agl)

    positions = np.empty((config.samples, 3))
    for i, (x, y) in enumerate(pos_xy):
        positions[i] = (x, y, hf.elevation_at(x, y) + sample_agl[i])

    look_pts = None
    if config.orientation == OrientationPolicy.LOOK_TARGET:
        looks = [wp.look for wp in waypoints]
        if any(l is None for l in looks):
            raise ValueError("LOOK_TARGET requires a look target on every waypoint")
        lp = np.array([geo_to_local(l, origin) for l in looks])
        look_pts = np.stack(
            [np.interp(prog, wp_prog, lp[:, k]) for k in range(3)], axis=1
        )

    poses = []
    prev_dir = None
    for i in range(config.samples):
        if config.orientation == OrientationPolicy.LOOK_TARGET:
            target = look_pts[i]
        else:
            if i + 1 < config.samples:
                target = positions[i + 1]
                prev_dir = target - positions[i]
            else:
                target = positions[i] + (prev_dir if prev_dir is not None else np.array([0, 1, 0]))
        yaw, pitch = look_at_angles(positions[i], target)
        poses.append(Pose(position=positions[i].copy(), yaw=yaw, pitch=pitch, roll=0.0))
    return poses


def _waypoint_progress(xy: np.ndarray, mode: PathMode) -> np.ndarray:
    dense, params = _dense_samples(xy, mode)
    seglen = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    out = []
    for i in range(len(xy)):
        k = int(np.argmin(np.abs(params - i)))
        out.append(cum[k] / cum[-1] if cum[-1] > 0 else 0.0)
    return np.asarray(out)


def _point_progress(pts: np.ndarray, xy: np.ndarray, mode: PathMode) -> np.ndarray:
    dense, _ = _dense_samples(xy, mode)
    seglen = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    total = cum[-1] if cum[-1] > 0 else 1.0
    # pts were produced by arc-length-uniform sampling, so progress is linear
    return np.linspace(0.0, 1.0, len(pts))
