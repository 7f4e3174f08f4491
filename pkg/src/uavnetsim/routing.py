"""Score-based predictive routing on top of a B.A.T.M.A.N.-style OGM flood.

Per-node routing state lives in dense ``[receiver, originator, neighbor]``
arrays owned by a routing table object, so that a whole broadcast wave can be
absorbed by all receivers at once. ``RouterNode`` is the per-node view that
exposes the message handlers one OGM at a time.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import Vec3

PROTOCOLS = ("batmobile", "batman-baseline")


@dataclass(frozen=True)
class Ogm:
    originator: int
    seq: int
    ttl: int
    forwarder_pos: Vec3
    forwarder_pred_pos: Vec3
    path_score: float = 1.0
    forwarder: int = -1
    prev_sender: int = -1

    def __post_init__(self):
        if not 0.0 <= self.path_score <= 1.0:
            raise ValueError(f"path_score out of [0, 1]: {self.path_score}")


@dataclass(frozen=True)
class MetricParams:
    alpha: float = 7.0
    d_max: float = 1000.0
    p_trend_max: float = 0.1
    d_step: float = 50.0 / 3.6 * 0.25
    horizon_steps: int = 15
    trend_sign: int = 1

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if not self.d_max > 0:
            raise ValueError("d_max must be > 0")
        if not 0 <= self.p_trend_max < 1:
            raise ValueError("p_trend_max must be in [0, 1)")
        # zero step width only arises for static agents; the trend term is then off
        if self.d_step < 0:
            raise ValueError("d_step must be >= 0")
        if self.horizon_steps < 0:
            raise ValueError("horizon_steps must be >= 0")
        if self.trend_sign not in (1, -1):
            raise ValueError("trend_sign must be +1 or -1")


def trend_term(d, d_pred, params: MetricParams):
    if params.horizon_steps == 0 or params.d_step == 0:
        return 0.0 * (d_pred - d)
    scale = params.trend_sign * params.p_trend_max / (2.0 * params.d_step * params.horizon_steps)
    return (d_pred - d) * scale


def link_score_from_distances(d, d_pred, params: MetricParams):
    """Link score for current and predicted forwarder distances (scalars or arrays)."""
    a = params.alpha
    now = 1.0 - (np.asarray(d, dtype=float) / params.d_max) ** a
    later = 1.0 - (np.asarray(d_pred, dtype=float) / params.d_max) ** a
    s = np.minimum(now, later) + trend_term(np.asarray(d, float), np.asarray(d_pred, float), params)
    s = np.clip(s, 0.0, 1.0)
    return float(s) if s.ndim == 0 else s


def link_score(receiver_pos: Vec3, receiver_pred_pos: Vec3, ogm: Ogm, params: MetricParams) -> float:
    d = receiver_pos.distance(ogm.forwarder_pos)
    d_pred = receiver_pred_pos.distance(ogm.forwarder_pred_pos)
    return link_score_from_distances(d, d_pred, params)


def pairwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``out[i, j] = |a[i] - b[j]|`` for point arrays of shape (n, 3) and (m, 3)."""
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def link_score_matrix(pos: np.ndarray, pred: np.ndarray, params: MetricParams,
                      pred_distance: np.ndarray | None = None) -> np.ndarray:
    """``S_L[r, f]`` for receiver ``r`` hearing an OGM last forwarded by ``f``."""
    d = pairwise_distance(pos, pos)
    d_pred = pairwise_distance(pred, pred) if pred_distance is None else pred_distance
    return link_score_from_distances(d, d_pred, params)


def path_score_update(received: float, link: float) -> float:
    return received * link


class ScoreBuffer:
    """Fixed-size FIFO of per-phase score candidates; the score is their mean."""

    def __init__(self, size: int = 8):
        if size < 1:
            raise ValueError("buffer size must be >= 1")
        self._ring = deque(maxlen=size)

    def push(self, value: float) -> None:
        self._ring.append(value)

    @property
    def contents(self) -> tuple[float, ...]:
        return tuple(self._ring)

    @property
    def score(self) -> float:
        return sum(self._ring) / len(self._ring) if self._ring else 0.0

    def __len__(self):
        return len(self._ring)


@dataclass
class NeighborEntry:
    neighbor: int
    score_candidate: float = 0.0
    buffer: tuple[float, ...] = ()
    score: float = 0.0
    last_seq_seen: int = -1


def _best_neighbor(metric: np.ndarray) -> np.ndarray:
    """``[node, destination]`` argmax over neighbors of an ``[o, j, r]`` metric.

    Ties go to the lowest neighbor id; -1 when the best value is not positive.
    """
    best = metric.argmax(axis=1)
    peak = np.take_along_axis(metric, best[:, None, :], axis=1)[:, 0, :]
    return np.where(peak > 0, best, -1).T


class RoutingTables:
    """Routing state of every node in a network.

    Arrays are indexed ``[originator, neighbor, receiving node]`` so that one
    broadcast is a single row update.
    """

    protocol = ""

    def __init__(self, n_nodes: int, buffer_size: int = 8):
        if buffer_size < 1:
            raise ValueError("buffer_size must be >= 1")
        self.n = n_nodes
        self.buffer_size = buffer_size
        self.last_seq = np.full((n_nodes, n_nodes, n_nodes), -1, dtype=np.int64)
        self.next_hop_table = np.full((n_nodes, n_nodes), -1, dtype=np.int64)
        self.slot = 0
        self.phases = 0

    @property
    def exists(self) -> np.ndarray:
        return self.last_seq >= 0

    def absorb(self, origins: np.ndarray, seqs: np.ndarray, forwarders: np.ndarray,
               cand: np.ndarray, heard: np.ndarray) -> None:
        """Apply a set of broadcasts. Row ``m`` is a copy of ``origins[m]``'s OGM
        sent by ``forwarders[m]``; ``heard[m, r]`` marks reception at node ``r``
        and ``cand[m, r]`` is the path score ``r`` computed for it. The
        (origin, forwarder) pairs must be distinct."""
        seen = self.last_seq[origins, forwarders]
        self.last_seq[origins, forwarders] = np.where(heard, seqs[:, None], seen)

    def flush(self) -> None:
        """End of an update phase for every node."""
        raise NotImplementedError

    def metric(self) -> np.ndarray:
        raise NotImplementedError

    def _refresh_next_hops(self) -> None:
        self.next_hop_table = _best_neighbor(self.metric())

    def next_hop(self, node: int, destination: int) -> int | None:
        nh = int(self.next_hop_table[node, destination])
        return None if nh < 0 else nh

    def ranking(self, node: int, destination: int) -> list[NeighborEntry]:
        raise NotImplementedError


class BatMobileTables(RoutingTables):
    """Best path score per phase, committed to a per-neighbor FIFO buffer."""

    protocol = "batmobile"

    def __init__(self, n_nodes: int, buffer_size: int = 8):
        super().__init__(n_nodes, buffer_size)
        shape = (n_nodes, n_nodes, n_nodes)
        self.candidate = np.zeros(shape)
        self.buffer = np.zeros((buffer_size,) + shape)
        self.fill = np.zeros(shape, dtype=np.int64)
        self.score = np.zeros(shape)

    def absorb(self, origins, seqs, forwarders, cand, heard):
        super().absorb(origins, seqs, forwarders, cand, heard)
        cur = self.candidate[origins, forwarders]
        self.candidate[origins, forwarders] = np.maximum(cur, np.where(heard, cand, 0.0))

    def flush(self) -> None:
        exists = self.exists
        self.buffer[self.slot] = np.where(exists, self.candidate, 0.0)
        self.fill = np.where(exists, np.minimum(self.fill + 1, self.buffer_size), 0)
        self.score = self.buffer.sum(axis=0) / np.maximum(self.fill, 1)
        self.candidate[...] = 0.0
        self.slot = (self.slot + 1) % self.buffer_size
        self.phases += 1
        self._refresh_next_hops()

    def metric(self):
        return self.score

    def buffer_contents(self, node: int, origin: int, neighbor: int) -> tuple[float, ...]:
        """Oldest first."""
        k = int(self.fill[origin, neighbor, node])
        slots = [(self.slot - k + i) % self.buffer_size for i in range(k)]
        return tuple(float(self.buffer[s, origin, neighbor, node]) for s in slots)

    def ranking(self, node, destination):
        entries = [
            NeighborEntry(
                neighbor=int(j),
                score_candidate=float(self.candidate[destination, j, node]),
                buffer=self.buffer_contents(node, destination, j),
                score=float(self.score[destination, j, node]),
                last_seq_seen=int(self.last_seq[destination, j, node]),
            )
            for j in np.flatnonzero(self.last_seq[destination, :, node] >= 0)
        ]
        entries.sort(key=lambda e: (-e.score, e.neighbor))
        return entries


class BatmanTables(RoutingTables):
    """Baseline: the neighbor that relayed the most distinct OGMs of the
    destination during the last ``buffer_size`` update phases."""

    protocol = "batman-baseline"

    def __init__(self, n_nodes: int, buffer_size: int = 8):
        super().__init__(n_nodes, buffer_size)
        shape = (n_nodes, n_nodes, n_nodes)
        self.current = np.zeros(shape, dtype=np.int64)
        self.window = np.zeros((buffer_size,) + shape, dtype=np.int64)
        self.count = np.zeros(shape, dtype=np.int64)

    def absorb(self, origins, seqs, forwarders, cand, heard):
        # count each sequence number at most once per (originator, neighbor)
        fresh = heard & (self.last_seq[origins, forwarders] < seqs[:, None])
        super().absorb(origins, seqs, forwarders, cand, heard)
        self.current[origins, forwarders] += fresh

    def flush(self) -> None:
        self.window[self.slot] = self.current
        self.count = self.window.sum(axis=0)
        self.current[...] = 0
        self.slot = (self.slot + 1) % self.buffer_size
        self.phases += 1
        self._refresh_next_hops()

    def metric(self):
        return self.count

    def ranking(self, node, destination):
        entries = [
            NeighborEntry(neighbor=int(j), score=float(self.count[destination, j, node]),
                          last_seq_seen=int(self.last_seq[destination, j, node]))
            for j in np.flatnonzero(self.last_seq[destination, :, node] >= 0)
        ]
        entries.sort(key=lambda e: (-e.score, e.neighbor))
        return entries


def make_tables(protocol: str, n_nodes: int, buffer_size: int = 8) -> RoutingTables:
    if protocol == "batmobile":
        return BatMobileTables(n_nodes, buffer_size)
    if protocol == "batman-baseline":
        return BatmanTables(n_nodes, buffer_size)
    raise ValueError(f"unknown protocol {protocol!r}, expected one of {PROTOCOLS}")


@dataclass
class RouterNode:
    """One node's view of the routing tables plus its own position knowledge."""

    id: int
    tables: RoutingTables
    metric: MetricParams
    ttl: int = 10
    echo_suppression: bool = True
    position: Vec3 = field(default_factory=Vec3)
    predicted_position: Vec3 = field(default_factory=Vec3)
    seq: int = -1
    _latest: dict = field(default_factory=dict)

    def originate_ogm(self, now: float = 0.0) -> Ogm:
        self.seq += 1
        self._latest[self.id] = self.seq
        return Ogm(self.id, self.seq, self.ttl, self.position, self.predicted_position,
                   1.0, self.id, -1)

    def on_ogm(self, ogm: Ogm, now: float = 0.0) -> Ogm | None:
        """Absorb a received OGM; return the copy to rebroadcast, if any."""
        if ogm.originator == self.id or ogm.forwarder == self.id:
            return None
        if self.echo_suppression and ogm.prev_sender == self.id:
            return None
        latest = self._latest.get(ogm.originator, -1)
        if ogm.seq < latest:
            return None
        score = path_score_update(ogm.path_score,
                                  link_score(self.position, self.predicted_position, ogm, self.metric))
        n = self.tables.n
        cand = np.zeros((1, n))
        heard = np.zeros((1, n), dtype=bool)
        cand[0, self.id] = score
        heard[0, self.id] = True
        self.tables.absorb(np.array([ogm.originator]), np.array([ogm.seq]),
                           np.array([ogm.forwarder]), cand, heard)
        if ogm.seq == latest:
            return None
        self._latest[ogm.originator] = ogm.seq
        if ogm.ttl <= 1:
            return None
        return replace(ogm, ttl=ogm.ttl - 1, path_score=score, forwarder=self.id,
                       prev_sender=ogm.forwarder, forwarder_pos=self.position,
                       forwarder_pred_pos=self.predicted_position)

    def flush_update_phase(self, now: float = 0.0) -> None:
        """Commit score candidates. Tables are shared, so this ends the phase
        for every node backed by the same tables."""
        self.tables.flush()

    def select_next_hop(self, destination: int) -> int | None:
        return self.tables.next_hop(self.id, destination)

    def ranking(self, destination: int) -> list[NeighborEntry]:
        return self.tables.ranking(self.id, destination)


def baseline_select_next_hop(tables: BatmanTables, node: int, destination: int) -> int | None:
    return tables.next_hop(node, destination)


def flood_batch(tables: RoutingTables, origins, seqs, ttl: int, link: np.ndarray | None,
                deliver: Callable[[np.ndarray], np.ndarray], echo_suppression: bool = True,
                ) -> list[list[tuple[int, int]]]:
    """Propagate several OGMs (one per originator) through the network.

    Broadcasts happen in waves. ``deliver(senders)`` returns the reception
    matrix ``[transmission, receiver]`` for one wave, and ``link[r, f]`` is the
    link score receiver ``r`` assigns to a copy sent by ``f`` (unused when
    None). A node rebroadcasts only the first copy it receives of each OGM,
    earlier transmissions in a wave winning ties. With ``echo_suppression`` a
    node disregards copies that a neighbor relayed on its behalf.

    Returns the (originator, sender) pairs of every wave.
    """
    n = tables.n
    origins = np.asarray(origins, dtype=np.int64)
    seqs = np.asarray(seqs, dtype=np.int64)
    k_count = origins.size
    reached = np.zeros((k_count, n), dtype=bool)
    reached[np.arange(k_count), origins] = True
    link_t = None if link is None else np.ascontiguousarray(link.T)

    flood_of = np.arange(k_count)
    senders = origins.copy()
    carried = np.ones(k_count)
    parent = np.full(k_count, -1)
    waves = []
    while senders.size and ttl > 0:
        m = senders.size
        rows = np.arange(m)
        waves.append(list(zip(origins[flood_of].tolist(), senders.tolist())))
        heard = np.array(deliver(senders), dtype=bool)
        heard[rows, senders] = False
        heard[rows, origins[flood_of]] = False
        if echo_suppression:
            has_parent = parent >= 0
            heard[rows[has_parent], parent[has_parent]] = False
        if link_t is None:
            cand = np.zeros((m, n))
        else:
            cand = link_t[senders] * carried[:, None]
        tables.absorb(origins[flood_of], seqs[flood_of], senders, cand, heard)
        if ttl <= 1:
            break
        tx, rx = np.nonzero(heard)
        keep = ~reached[flood_of[tx], rx]
        tx, rx = tx[keep], rx[keep]
        if tx.size == 0:
            break
        # np.nonzero is row-major, so the first hit per (flood, receiver) is the earliest sender
        _, first = np.unique(flood_of[tx] * n + rx, return_index=True)
        tx, rx = tx[first], rx[first]
        order = np.lexsort((rx, tx))
        tx, rx = tx[order], rx[order]
        reached[flood_of[tx], rx] = True
        carried = cand[tx, rx]
        parent = senders[tx]
        flood_of = flood_of[tx]
        senders = rx
        ttl -= 1
    return waves


def flood(tables: RoutingTables, origin: int, seq: int, ttl: int, link: np.ndarray | None,
          deliver: Callable[[np.ndarray], np.ndarray], echo_suppression: bool = True):
    """Single-originator form of :func:`flood_batch`."""
    return flood_batch(tables, [origin], [seq], ttl, link, deliver, echo_suppression)


def score_bounds_ok(tables: RoutingTables) -> bool:
    if isinstance(tables, BatMobileTables):
        arrays = (tables.candidate, tables.buffer, tables.score)
        return all(bool(((a >= 0) & (a <= 1)).all()) for a in arrays)
    return True


def table_rows(tables: RoutingTables, node: int) -> list[tuple]:
    """Routing table dump rows: (destination, neighbor, score, buffer contents)."""
    rows = []
    for dest in range(tables.n):
        if dest == node:
            continue
        for e in tables.ranking(node, dest):
            rows.append((dest, e.neighbor, e.score, " ".join(f"{v:.6g}" for v in e.buffer)))
    return rows
