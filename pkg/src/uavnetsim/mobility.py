"""Ground-truth agent motion and the mobility snapshot handed to the predictor.

Four motion models are provided. Random walk and controlled waypoint follow the
usual textbook definitions. The swarm-exploration and dispersion-mesh models are
simplified potential-field stand-ins: they reproduce the qualitative structure
(a chain towards the base station, resp. a dense mesh around it) rather than any
particular published controller.

Step functions mutate the given ``AgentState`` in place and return it.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import ZERO, Box, Vec3

DEFAULT_AREA = Box(500.0, 500.0, 250.0)


@dataclass
class AgentState:
    id: int
    position: Vec3
    velocity_mag: float
    waypoints: tuple[Vec3, ...] = ()
    steering: Vec3 | None = None
    history_size: int = 5
    last_positions: deque = None
    update_interval: float = 0.25
    area: Box = DEFAULT_AREA
    # random walk: current heading and when it is redrawn
    heading: Vec3 | None = None
    heading_until: float = -math.inf
    clock: float = 0.0
    popped: list = field(default_factory=list)

    def __post_init__(self):
        if self.velocity_mag < 0:
            raise ValueError("velocity_mag must be >= 0")
        if self.last_positions is None:
            self.last_positions = deque(maxlen=max(self.history_size, 2))

    def record(self, t: float) -> None:
        """Append the current position to the bounded history ring."""
        if self.last_positions and self.last_positions[-1][0] >= t:
            self.last_positions[-1] = (t, self.position)
        else:
            self.last_positions.append((t, self.position))


@dataclass(frozen=True)
class MobilityInfo:
    position: Vec3
    steering: Vec3 | None
    waypoints: tuple[Vec3, ...]
    velocity_mag: float
    update_interval: float
    waypoint_radius: float
    history: tuple[tuple[float, Vec3], ...] = ()

    def __post_init__(self):
        if not self.update_interval > 0:
            raise ValueError("update_interval must be > 0")
        if not self.waypoint_radius > 0:
            raise ValueError("waypoint_radius must be > 0")
        for (t0, _), (t1, _) in zip(self.history, self.history[1:]):
            if not t1 > t0:
                raise ValueError("history timestamps must be strictly increasing")


@dataclass(frozen=True)
class SwarmParams:
    w_explore: float = 1.0
    w_avoid: float = 1.5
    w_cohere: float = 1.0
    avoid_radius: float = 25.0
    chain_spacing: float = 60.0

    def __post_init__(self):
        if min(self.w_explore, self.w_avoid, self.w_cohere) < 0:
            raise ValueError("swarm weights must be >= 0")


@dataclass(frozen=True)
class DispersionParams:
    mesh_spacing: float = 80.0
    interaction_radius: float = 240.0
    w_spacing: float = 1.0
    w_noise: float = 0.5

    def __post_init__(self):
        if self.mesh_spacing <= 0 or self.interaction_radius <= 0:
            raise ValueError("mesh_spacing and interaction_radius must be > 0")
        if self.w_spacing < 0 or self.w_noise < 0:
            raise ValueError("dispersion weights must be >= 0")


def random_unit(rng: np.random.Generator) -> Vec3:
    """Direction drawn uniformly on the unit sphere."""
    while True:
        x, y, z = rng.standard_normal(3)
        n = math.sqrt(x * x + y * y + z * z)
        if n > 1e-12:
            return Vec3(x / n, y / n, z / n)


def _pos(n) -> Vec3:
    return n.position if isinstance(n, AgentState) else n


def _advance(state: AgentState, steering: Vec3, dt: float) -> AgentState:
    """Move along ``steering`` by at most one speed-limited step and clamp."""
    state.steering = steering
    length = steering.norm()
    cap = state.velocity_mag * dt
    if length > 0 and cap > 0:
        state.position = state.area.clamp(state.position + steering * (min(length, cap) / length))
    state.clock += dt
    return state


def step_random_walk(state: AgentState, dt: float, rng: np.random.Generator,
                     redraw_attempts: int = 8) -> AgentState:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    step = state.velocity_mag * dt
    if state.heading is None or state.clock >= state.heading_until - 1e-12:
        heading = random_unit(rng)
        # redraw headings that would leave the area, clamp as a last resort
        for _ in range(redraw_attempts):
            if state.area.contains(state.position + heading * step):
                break
            heading = random_unit(rng)
        state.heading = heading
        state.heading_until = state.clock + state.update_interval
    state.steering = state.heading * (state.velocity_mag * state.update_interval)
    if step > 0:
        state.position = state.area.clamp(state.position + state.heading * step)
    state.clock += dt
    return state


def step_waypoint(state: AgentState, dt: float, waypoint_radius: float = 10.0) -> AgentState:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    while state.waypoints and state.position.distance(state.waypoints[0]) < waypoint_radius:
        state.popped.append(state.waypoints[0])
        state.waypoints = state.waypoints[1:]
    if not state.waypoints:
        state.steering = ZERO
        state.clock += dt
        return state
    target = state.waypoints[0]
    offset = target - state.position
    dist = offset.norm()
    travel = min(state.velocity_mag * dt, dist)
    moved = offset * (travel / dist) if dist > 0 else ZERO
    state.position = state.area.clamp(state.position + moved)
    state.steering = moved * (state.update_interval / dt)
    state.clock += dt
    return state


def swarm_steering(state: AgentState, neighbors: Sequence, base: Vec3,
                   params: SwarmParams) -> Vec3:
    """Superposition of exploration, collision avoidance and chain coherence."""
    p = state.position
    unit_step = state.velocity_mag * state.update_interval
    explore = ZERO
    if state.waypoints:
        explore = (state.waypoints[0] - p).unit() * unit_step

    px, py, pz = p.x, p.y, p.z
    pts = [_pos(n) for n in neighbors]
    ax = ay = az = 0.0
    for q in pts:
        dx, dy, dz = px - q.x, py - q.y, pz - q.z
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        if 0 < d < params.avoid_radius:
            k = (1 - d / params.avoid_radius) * unit_step / d
            ax += dx * k
            ay += dy * k
            az += dz * k
    avoid = Vec3(ax, ay, az)

    # pull towards the nearest node that is closer to the base, or the base itself
    own = p.distance(base)
    upstream, gap = base, own
    for q in pts:
        if q.distance(base) < own:
            d = p.distance(q)
            if d < gap:
                upstream, gap = q, d
    cohere = ZERO
    if gap > params.chain_spacing:
        pull = min(1.0, (gap - params.chain_spacing) / params.chain_spacing)
        cohere = (upstream - p).unit() * (pull * unit_step)

    return explore * params.w_explore + avoid * params.w_avoid + cohere * params.w_cohere


def step_swarm(state: AgentState, neighbors: Sequence, base: Vec3, params: SwarmParams,
               dt: float, rng: np.random.Generator | None = None) -> AgentState:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return _advance(state, swarm_steering(state, neighbors, base, params), dt)


def dispersion_steering(state: AgentState, neighbors: Sequence, params: DispersionParams,
                        rng: np.random.Generator | None, anchor: Vec3 | None = None) -> Vec3:
    p = state.position
    unit_step = state.velocity_mag * state.update_interval
    px, py, pz = p.x, p.y, p.z
    sx = sy = sz = 0.0
    targets = [_pos(n) for n in neighbors]
    ranged = []
    for q in targets:
        dx, dy, dz = q.x - px, q.y - py, q.z - pz
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        if d <= params.interaction_radius:
            ranged.append((dx, dy, dz, d))
    if anchor is not None:
        # the base is always known, so it anchors the mesh regardless of range
        dx, dy, dz = anchor.x - px, anchor.y - py, anchor.z - pz
        ranged.append((dx, dy, dz, math.sqrt(dx * dx + dy * dy + dz * dz)))
    for dx, dy, dz, d in ranged:
        if d == 0:
            continue
        k = (d - params.mesh_spacing) / params.mesh_spacing / d * unit_step
        sx += dx * k
        sy += dy * k
        sz += dz * k
    steer = Vec3(sx, sy, sz)
    steer = steer * params.w_spacing
    if rng is not None and params.w_noise > 0:
        steer = steer + random_unit(rng) * (params.w_noise * unit_step)
    return steer


def step_dispersion(state: AgentState, neighbors: Sequence, params: DispersionParams,
                    dt: float, rng: np.random.Generator | None = None,
                    anchor: Vec3 | None = None) -> AgentState:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return _advance(state, dispersion_steering(state, neighbors, params, rng, anchor), dt)


class GnssErrorModel:
    """Bounded position error, redrawn once per resample slot and agent.

    The magnitude is uniform in ``[0, max_error]`` and the direction uniform on
    the sphere. Samples are cached per (agent, slot) so that querying the same
    timestamp twice returns the same perturbation.
    """

    def __init__(self, max_error: float = 0.0, resample_interval: float = 0.25,
                 rng: np.random.Generator | None = None, keep_slots: int = 64):
        if max_error < 0:
            raise ValueError("max_error must be >= 0")
        if resample_interval <= 0:
            raise ValueError("resample_interval must be > 0")
        self.max_error = max_error
        self.resample_interval = resample_interval
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.keep_slots = keep_slots
        self._cache: dict[int, dict[int, Vec3]] = {}

    def slot(self, t: float) -> int:
        return int(math.floor(t / self.resample_interval + 1e-9))

    def offset(self, agent_id: int, t: float) -> Vec3:
        if self.max_error == 0:
            return ZERO
        cache = self._cache.setdefault(agent_id, {})
        k = self.slot(t)
        off = cache.get(k)
        if off is None:
            off = random_unit(self.rng) * (self.rng.uniform(0.0, self.max_error))
            cache[k] = off
            if len(cache) > 2 * self.keep_slots:
                for old in [s for s in cache if s < k - self.keep_slots]:
                    del cache[old]
        return off

    def perturb(self, agent_id: int, t: float, p: Vec3) -> Vec3:
        if self.max_error == 0:
            return p
        return p + self.offset(agent_id, t)


def mobility_info(state: AgentState, gnss: GnssErrorModel, now: float, *,
                  waypoint_radius: float = 10.0, use_steering: bool = True,
                  use_waypoints: bool = True) -> MobilityInfo:
    """Snapshot of what the agent's control software knows about itself."""
    history = tuple((t, gnss.perturb(state.id, t, p)) for t, p in state.last_positions)
    if history and history[-1][0] == now:
        position = history[-1][1]
    else:
        position = gnss.perturb(state.id, now, state.position)
    return MobilityInfo(
        position=position,
        steering=state.steering if use_steering else None,
        waypoints=state.waypoints if use_waypoints else (),
        velocity_mag=state.velocity_mag,
        update_interval=state.update_interval,
        waypoint_radius=waypoint_radius,
        history=history,
    )


def random_waypoints(rng: np.random.Generator, area: Box, start: Vec3, path_length: float,
                     min_count: int = 2) -> tuple[Vec3, ...]:
    """Uniform random waypoints until their chained length exceeds ``path_length``."""
    out = []
    total, prev = 0.0, start
    while total <= path_length or len(out) < min_count:
        w = Vec3(*(rng.uniform(0.0, 1.0, 3) * (area.x, area.y, area.z)))
        total += prev.distance(w)
        out.append(w)
        prev = w
    return tuple(out)


def write_trajectory_csv(rows: Iterable[tuple[float, int, Vec3]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "agent_id", "x", "y", "z"])
        for t, agent_id, p in rows:
            w.writerow([f"{t:.6f}", agent_id, repr(p.x), repr(p.y), repr(p.z)])
