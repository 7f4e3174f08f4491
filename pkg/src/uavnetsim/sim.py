"""Deterministic discrete-event simulation of one scenario run.

Node 0 is the base station (static, traffic sink); nodes 1..N are agents.
Randomness is split into named substreams derived from the run seed, so that
e.g. enabling channel fading never changes the mobility draws.

Ground-truth positions advance once per mobility update; channel decisions
use ground truth, routing metrics use the (possibly GNSS-perturbed) reported
positions. Hop latency (serialization only) is far below the mobility update
interval, so data packets are walked hop by hop inside the event that sends
them, and OGM floods originated during one mobility interval are propagated
together at its end, before any update phase closes. Forwarding decisions only
change when a phase closes, so deferring the floods to that point is
unobservable by the data plane.
"""
from __future__ import annotations

import heapq
import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from itertools import count

import numpy as np

from . import mobility as mob
from .channel import LinkBudget
from .config import ScenarioConfig, channel_params, validate
from .geometry import Box, Vec3
from .prediction import PredictionConfig, predict_points
from .routing import (MetricParams, RouterNode, flood_batch, link_score_from_distances,
                      make_tables, pairwise_distance)

MOBILITY_UPDATE = "mobility-update"
OGM_TIMER = "ogm-timer"
PHASE_TIMER = "phase-timer"
TELEMETRY_TIMER = "telemetry-timer"
APP_PACKET = "app-packet"
PACKET_ARRIVAL = "packet-arrival"

DELIVERED = "delivered"
DROP_NO_ROUTE = "no-route"
DROP_CHANNEL = "channel"
DROP_TTL = "ttl"

BASE = 0


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named source of randomness."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(name.encode()),))
    return np.random.default_rng(ss)


@dataclass(order=True)
class Event:
    time: float
    seq: int
    kind: str = field(compare=False)
    payload: object = field(compare=False, default=None)


class EventQueue:
    """Min-heap ordered by (time, insertion sequence)."""

    def __init__(self):
        self._heap: list[Event] = []
        self._counter = count()

    def push(self, time: float, kind: str, payload=None) -> None:
        heapq.heappush(self._heap, Event(time, next(self._counter), kind, payload))

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def __len__(self):
        return len(self._heap)

    def peek_time(self) -> float:
        return self._heap[0].time if self._heap else math.inf


@dataclass
class RunResult:
    seed: int
    protocol: str
    pdr_series: list
    mean_pdr: float
    packets_sent: int
    packets_delivered: int
    packets_dropped_no_route: int
    packets_dropped_channel: int
    packets_dropped_ttl: int = 0
    source: int = 0
    config_digest: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> RunResult:
        data = json.loads(text)
        data["pdr_series"] = [tuple(x) for x in data["pdr_series"]]
        return cls(**data)

    def series_csv(self) -> str:
        lines = ["time_s,pdr"]
        lines += [f"{t!r},{p!r}" for t, p in self.pdr_series]
        return "\n".join(lines) + "\n"


def pdr_window(records, window: float = 1.0) -> list[tuple[float, float]]:
    """Tumbling-window delivery ratio from (send_time, delivered) records.

    Windows are ``[k*window, (k+1)*window)`` keyed by their end time; windows
    without sent packets are omitted.
    """
    if window <= 0:
        raise ValueError("window must be > 0")
    sent: dict[int, int] = {}
    ok: dict[int, int] = {}
    for t, delivered in records:
        k = int(math.floor(t / window + 1e-9))
        sent[k] = sent.get(k, 0) + 1
        if delivered:
            ok[k] = ok.get(k, 0) + 1
    return [((k + 1) * window, ok.get(k, 0) / sent[k]) for k in sorted(sent)]


class Simulation:
    def __init__(self, cfg: ScenarioConfig, seed: int):
        validate(cfg)
        self.cfg = cfg
        self.seed = seed
        self.rng_mobility = substream(seed, "mobility")
        self.rng_fading = substream(seed, "fading")
        self.rng_telemetry = substream(seed, "telemetry")
        self.rng_gnss = substream(seed, "gnss")
        self.rng_traffic = substream(seed, "traffic")
        self.rng_routing = substream(seed, "routing")

        self.area = Box(cfg.area.x, cfg.area.y, cfg.area.z)
        self.base = Vec3.of(cfg.base_position) if cfg.base_position else self.area.center_ground
        self.n = cfg.agents + 1
        self.dt_u = cfg.mobility.update_interval
        self.velocity = cfg.mobility.velocity
        self.channel = channel_params(cfg)
        self.budget = LinkBudget(self.channel)
        self.pred_cfg = PredictionConfig(cfg.prediction.horizon_steps,
                                         cfg.prediction.extrapolation_window, cfg.step_interval)
        self.metric = MetricParams(
            alpha=cfg.routing.alpha, d_max=self.budget.d_max, p_trend_max=cfg.routing.p_trend_max,
            d_step=self.velocity * cfg.step_interval, horizon_steps=cfg.prediction.horizon_steps,
            trend_sign=cfg.routing.trend_sign)
        self.gnss = mob.GnssErrorModel(cfg.gnss.max_error, cfg.gnss_resample, self.rng_gnss)
        self.protocol = cfg.routing.protocol
        self.tables = make_tables(self.protocol, self.n, cfg.routing.buffer_size)
        self.routers = [RouterNode(i, self.tables, self.metric, cfg.routing.ttl,
                                   cfg.routing.echo_suppression) for i in range(self.n)]
        self.seqs = [-1] * self.n
        self.pending: list[tuple[int, int]] = []

        self.swarm_params = mob.SwarmParams(cfg.mobility.w_explore, cfg.mobility.w_avoid,
                                            cfg.mobility.w_cohere, cfg.mobility.avoid_radius,
                                            cfg.mobility.chain_spacing)
        self.disp_params = mob.DispersionParams(cfg.mobility.mesh_spacing,
                                                cfg.mobility.interaction_radius,
                                                cfg.mobility.w_spacing, cfg.mobility.w_noise)
        self.agents = self._place_agents()
        self.centroid_wp: Vec3 | None = None
        # last telemetry each agent received from each other agent: known[r][s] = position
        self.known: list[dict[int, Vec3]] = [dict() for _ in range(self.n)]

        self.true_pos = np.zeros((self.n, 3))
        self.reported = np.zeros((self.n, 3))
        self.predicted = np.zeros((self.n, 3))
        self.trajectories = None
        self.thresholds = np.zeros((self.n, self.n))
        self.link = None
        self.tick = 0
        self.now = 0.0
        self.records: list[tuple[float, bool]] = []
        self.counts = {DELIVERED: 0, DROP_NO_ROUTE: 0, DROP_CHANNEL: 0, DROP_TTL: 0}
        self.trace: list[tuple[float, int, Vec3]] | None = None
        if cfg.traffic.source:
            self.source = cfg.traffic.source
        else:
            self.source = int(self.rng_traffic.integers(1, self.n))

    # -- setup ---------------------------------------------------------------

    def _place_agents(self) -> list[mob.AgentState]:
        cfg = self.cfg
        model = cfg.mobility.model
        history = max(cfg.prediction.extrapolation_window, 2)
        agents = []
        for i in range(1, self.n):
            if model == "static":
                p = Vec3.of(cfg.mobility.positions[i - 1])
                v = 0.0
            else:
                p = Vec3(*(self.rng_mobility.uniform(0.0, 1.0, 3) * (self.area.x, self.area.y, self.area.z)))
                v = self.velocity
            a = mob.AgentState(id=i, position=p, velocity_mag=v, history_size=history,
                               update_interval=self.dt_u, area=self.area)
            if model == "waypoint":
                a.waypoints = mob.random_waypoints(self.rng_mobility, self.area, p,
                                                   v * cfg.duration + self.area.diagonal())
            agents.append(a)
        return agents

    # -- mobility ------------------------------------------------------------

    def _centroid_waypoint(self) -> Vec3:
        centroid = Vec3(*np.mean([a.position.as_tuple() for a in self.agents], axis=0))
        if self.centroid_wp is None or centroid.distance(self.centroid_wp) < self.cfg.mobility.centroid_radius:
            self.centroid_wp = Vec3(*(self.rng_mobility.uniform(0.0, 1.0, 3)
                                      * (self.area.x, self.area.y, self.area.z)))
        return self.centroid_wp

    def _move_agents(self) -> None:
        model = self.cfg.mobility.model
        dt = self.dt_u
        if model == "waypoint":
            for a in self.agents:
                mob.step_waypoint(a, dt, self.cfg.mobility.waypoint_radius)
        elif model == "random-walk":
            for a in self.agents:
                mob.step_random_walk(a, dt, self.rng_mobility)
        elif model == "swarm":
            wp = self._centroid_waypoint()
            for a in self.agents:
                a.waypoints = (wp,)
            for a in self.agents:
                nbrs = list(self.known[a.id].values())
                mob.step_swarm(a, nbrs, self.base, self.swarm_params, dt, self.rng_mobility)
        elif model == "dispersion":
            for a in self.agents:
                nbrs = list(self.known[a.id].values())
                mob.step_dispersion(a, nbrs, self.disp_params, dt, self.rng_mobility, anchor=self.base)
        elif model == "static":
            for a in self.agents:
                a.steering = Vec3()

    def _refresh_knowledge(self) -> None:
        """Reported positions, predictions and per-link quantities for this tick."""
        t = self.now
        p = self.cfg.prediction
        r_w = self.cfg.mobility.waypoint_radius
        n_p = p.horizon_steps
        min_mode = self.cfg.routing.pred_distance == "min" and n_p > 0
        base = self.base.as_tuple()
        self.true_pos[0] = base
        self.reported[0] = base
        self.predicted[0] = base
        if min_mode:
            self.trajectories = np.empty((self.n, n_p, 3))
            self.trajectories[0] = base
        for a in self.agents:
            i = a.id
            self.true_pos[i] = a.position.as_tuple()
            info = mob.mobility_info(a, self.gnss, t, waypoint_radius=r_w,
                                     use_steering=p.use_steering, use_waypoints=p.use_waypoints)
            here = info.position.as_tuple()
            self.reported[i] = here
            points, _ = predict_points(info, self.pred_cfg)
            end = points[-1][1:] if points else here
            self.predicted[i] = end
            self.routers[i].position = info.position
            self.routers[i].predicted_position = Vec3(*end)
            if min_mode:
                self.trajectories[i] = [q[1:] for q in points]
        self.routers[0].position = self.base
        self.routers[0].predicted_position = self.base

        self.thresholds = self.budget.thresholds(pairwise_distance(self.true_pos, self.true_pos))
        if self.protocol == "batmobile":
            d = pairwise_distance(self.reported, self.reported)
            if min_mode:
                diff = self.trajectories[:, None, :, :] - self.trajectories[None, :, :, :]
                d_pred = np.sqrt((diff ** 2).sum(axis=-1)).min(axis=-1)
            else:
                d_pred = pairwise_distance(self.predicted, self.predicted)
            self.link = link_score_from_distances(d, d_pred, self.metric)

    def _on_mobility(self) -> None:
        self._resolve_floods()
        if self.tick > 0:
            self._move_agents()
        for a in self.agents:
            a.record(self.now)
            if self.trace is not None:
                self.trace.append((self.now, a.id, a.position))
        self._refresh_knowledge()

    # -- network -------------------------------------------------------------

    def _deliver(self, senders: np.ndarray) -> np.ndarray:
        return self.budget.draw(self.thresholds[senders], self.rng_fading)

    def _on_ogm(self, node: int) -> None:
        self.seqs[node] += 1
        self.routers[node].seq = self.seqs[node]
        self.pending.append((node, self.seqs[node]))

    def _resolve_floods(self) -> None:
        while self.pending:
            batch, rest, seen = [], [], set()
            for node, seq in self.pending:
                (rest if node in seen else batch).append((node, seq))
                seen.add(node)
            self.pending = rest
            flood_batch(self.tables, [b[0] for b in batch], [b[1] for b in batch],
                        self.cfg.routing.ttl, self.link, self._deliver,
                        self.cfg.routing.echo_suppression)

    def _on_telemetry(self) -> None:
        ids = np.arange(1, self.n)
        heard = self.budget.draw(self.thresholds[np.ix_(ids, ids)], self.rng_telemetry)
        for si, s in enumerate(ids):
            pos = Vec3(*self.reported[s])
            for ri in np.flatnonzero(heard[:, si]):
                r = ids[ri]
                if r != s:
                    self.known[r][s] = pos

    def _on_app_packet(self) -> None:
        node = self.source
        ttl = self.cfg.routing.ttl
        outcome = DELIVERED
        while node != BASE:
            nh = self.tables.next_hop(node, BASE)
            if nh is None:
                outcome = DROP_NO_ROUTE
                break
            if ttl == 0:
                outcome = DROP_TTL
                break
            if not self.budget.draw_one(self.thresholds[nh, node], self.rng_fading):
                outcome = DROP_CHANNEL
                break
            node = nh
            ttl -= 1
        self.counts[outcome] += 1
        self.records.append((self.now, outcome == DELIVERED))

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        end = cfg.duration
        q = EventQueue()
        if end > 0:
            q.push(0.0, MOBILITY_UPDATE, 0)
            q.push(cfg.routing.update_phase, PHASE_TIMER, 1)
            q.push(0.0, TELEMETRY_TIMER, 0)
            offsets = self.rng_routing.uniform(0.0, cfg.routing.ogm_interval, self.n)
            for node in range(self.n):
                q.push(float(offsets[node]), OGM_TIMER, (node, 0))
            if cfg.traffic.start < end:
                q.push(cfg.traffic.start, APP_PACKET, 0)

        packet_dt = cfg.traffic.packet_interval
        while q and q.peek_time() < end:
            ev = q.pop()
            self.now = ev.time
            kind = ev.kind
            if kind == MOBILITY_UPDATE:
                self.tick = ev.payload
                self._on_mobility()
                q.push((ev.payload + 1) * self.dt_u, MOBILITY_UPDATE, ev.payload + 1)
            elif kind == OGM_TIMER:
                node, k = ev.payload
                self._on_ogm(node)
                q.push(float(offsets[node]) + (k + 1) * cfg.routing.ogm_interval, OGM_TIMER, (node, k + 1))
            elif kind == PHASE_TIMER:
                self._resolve_floods()
                self.tables.flush()
                q.push((ev.payload + 1) * cfg.routing.update_phase, PHASE_TIMER, ev.payload + 1)
            elif kind == TELEMETRY_TIMER:
                self._on_telemetry()
                q.push((ev.payload + 1) * cfg.traffic.telemetry_interval, TELEMETRY_TIMER, ev.payload + 1)
            elif kind == APP_PACKET:
                self._on_app_packet()
                q.push(cfg.traffic.start + (ev.payload + 1) * packet_dt, APP_PACKET, ev.payload + 1)

        sent = len(self.records)
        delivered = self.counts[DELIVERED]
        return RunResult(
            seed=self.seed,
            protocol=self.protocol,
            pdr_series=pdr_window(self.records, cfg.traffic.pdr_window),
            mean_pdr=delivered / sent if sent else 1.0,
            packets_sent=sent,
            packets_delivered=delivered,
            packets_dropped_no_route=self.counts[DROP_NO_ROUTE],
            packets_dropped_channel=self.counts[DROP_CHANNEL],
            packets_dropped_ttl=self.counts[DROP_TTL],
            source=self.source,
            config_digest=cfg.digest(),
        )


def run(scenario: ScenarioConfig, seed: int) -> RunResult:
    return Simulation(scenario, seed).run()
