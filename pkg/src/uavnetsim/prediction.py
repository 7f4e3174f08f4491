"""Iterative trajectory prediction from mobility-control knowledge.

Each iteration picks the most precise estimator that is still available:

* steering vector, first step only;
* line of sight towards the current waypoint, while waypoints remain;
* average finite-difference velocity over the last ``N_e`` known positions,
  where already-predicted positions count as known.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .geometry import Vec3
from .mobility import MobilityInfo

STEERING = "steering"
WAYPOINT = "waypoint"
EXTRAPOLATION = "extrapolation"


class NoPredictionError(ValueError):
    """Raised when too few positions are known to extrapolate."""


@dataclass(frozen=True)
class PredictionConfig:
    horizon_steps: int = 15
    extrapolation_window: int = 5
    step_interval: float = 0.25

    def __post_init__(self):
        if self.horizon_steps < 0:
            raise ValueError("horizon_steps must be >= 0")
        if self.extrapolation_window < 2:
            raise ValueError("extrapolation_window must be >= 2")
        if not self.step_interval > 0:
            raise ValueError("step_interval must be > 0")


@dataclass(frozen=True)
class PredictedTrajectory:
    origin: Vec3
    positions: tuple[tuple[float, Vec3], ...]
    methods_used: tuple[str, ...]

    @property
    def endpoint(self) -> Vec3:
        """Position at the horizon, or the start position for an empty horizon."""
        return self.positions[-1][1] if self.positions else self.origin

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "x", "y", "z", "method"])
            for (t, p), m in zip(self.positions, self.methods_used):
                w.writerow([repr(t), repr(p.x), repr(p.y), repr(p.z), m])


def predict_step_steering(p: Vec3, sigma: Vec3, dt: float, dt_u: float) -> Vec3:
    if not dt_u > 0:
        raise ValueError("update interval must be > 0")
    return p + sigma * (dt / dt_u)


def predict_step_waypoint(p: Vec3, w: Vec3, v: float, dt: float) -> Vec3:
    """Advance ``dt * v`` towards ``w``; hold position if already on top of it."""
    dx, dy, dz = w.x - p.x, w.y - p.y, w.z - p.z
    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
    if dist == 0.0:
        return p
    k = dt * v / dist
    return Vec3(p.x + dx * k, p.y + dy * k, p.z + dz * k)


def _extrapolate(points: Sequence[tuple[float, float, float, float]], dt: float, n_e: int):
    m = min(n_e, len(points))
    if m < 2:
        raise NoPredictionError("need at least two timestamped positions")
    sx = sy = sz = 0.0
    last = len(points) - 1
    for j in range(m - 1):
        t1, x1, y1, z1 = points[last - j]
        t0, x0, y0, z0 = points[last - j - 1]
        h = t1 - t0
        sx += (x1 - x0) / h
        sy += (y1 - y0) / h
        sz += (z1 - z0) / h
    k = dt / (m - 1)
    _, x, y, z = points[last]
    return x + k * sx, y + k * sy, z + k * sz


def predict_step_extrapolation(history: Sequence[tuple[float, Vec3]], dt: float, n_e: int) -> Vec3:
    """Extrapolate from the newest ``min(n_e, len(history))`` entries."""
    pts = [(t, p.x, p.y, p.z) for t, p in history]
    return Vec3(*_extrapolate(pts, dt, n_e))


def predict_points(info: MobilityInfo, cfg: PredictionConfig):
    """Float-only core of :func:`predict_trajectory`.

    Returns ``([(t, x, y, z), ...], [method, ...])``.
    """
    n_p = cfg.horizon_steps
    if n_p == 0:
        return [], []
    dt = cfg.step_interval
    origin = info.position
    known = [(t, p.x, p.y, p.z) for t, p in info.history[-cfg.extrapolation_window:]]
    t = known[-1][0] if known else 0.0
    x, y, z = origin.x, origin.y, origin.z
    if known:
        known[-1] = (t, x, y, z)
    else:
        known.append((t, x, y, z))

    wps = info.waypoints
    wi = 0
    r_w = info.waypoint_radius
    v = info.velocity_mag
    n_e = cfg.extrapolation_window
    # running sum over the newest n_e - 1 finite-difference velocities
    diffs = deque()
    sx = sy = sz = 0.0
    for (t0, x0, y0, z0), (t1, x1, y1, z1) in zip(known, known[1:]):
        h = t1 - t0
        d = ((x1 - x0) / h, (y1 - y0) / h, (z1 - z0) / h)
        diffs.append(d)
        sx += d[0]
        sy += d[1]
        sz += d[2]
    methods = []
    first = len(known)
    for i in range(n_p):
        px, py, pz = x, y, z
        if i == 0 and info.steering is not None:
            k = dt / info.update_interval
            s = info.steering
            x, y, z = x + s.x * k, y + s.y * k, z + s.z * k
            method = STEERING
        else:
            while wi < len(wps):
                w = wps[wi]
                dx, dy, dz = w.x - x, w.y - y, w.z - z
                dist = math.sqrt(dx * dx + dy * dy + dz * dz)
                if dist >= r_w:
                    break
                # reached; move on if another waypoint exists
                wi += 1
            if wi < len(wps):
                k = dt * v / dist
                x, y, z = x + dx * k, y + dy * k, z + dz * k
                method = WAYPOINT
            else:
                if diffs:
                    k = dt / len(diffs)
                    x, y, z = x + k * sx, y + k * sy, z + k * sz
                method = EXTRAPOLATION
        t += dt
        known.append((t, x, y, z))
        methods.append(method)
        d = ((x - px) / dt, (y - py) / dt, (z - pz) / dt)
        diffs.append(d)
        sx += d[0]
        sy += d[1]
        sz += d[2]
        if len(diffs) > n_e - 1:
            o = diffs.popleft()
            sx -= o[0]
            sy -= o[1]
            sz -= o[2]
    return known[first:], methods


def predict_trajectory(info: MobilityInfo, cfg: PredictionConfig) -> PredictedTrajectory:
    points, methods = predict_points(info, cfg)
    positions = tuple((t, Vec3(x, y, z)) for t, x, y, z in points)
    return PredictedTrajectory(info.position, positions, tuple(methods))
