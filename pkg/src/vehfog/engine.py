"""Discrete-event core.

Time is kept in integer nanoseconds so event order never depends on float
rounding. Every radio frame goes through a simplified 802.11p broadcast MAC:
one frame at a time per node, random backoff from a doubling contention
window, deferral while the medium is sensed busy, no RTS/CTS and no ACKs.
A frame is lost at a receiver when another audible frame overlaps it there,
or when the receiver is itself transmitting.

Per-hop delay is split into transmission, queuing, contention, processing and
propagation parts whose sum is exactly the time between the previous hop's
arrival and this hop's arrival.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import math
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .geometry import ObstacleMap
from .mobility import VehicleTrace
from .radio import AttenuationParams, LinkBudget
from . import protocols

NS = 1_000_000_000
SPEED_OF_LIGHT = 2.998e8

DELIVERED = "delivered"
COLLIDED = "collided"
DROPPED_SHADOW = "dropped_shadow"
OUT_OF_RANGE = "out_of_range"
# an undelivered pair keeps the most specific failure it saw
_FAILURE_RANK = {OUT_OF_RANGE: 0, DROPPED_SHADOW: 1, COLLIDED: 2}


class ConfigError(ValueError):
    pass


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS))


@dataclass(frozen=True)
class Message:
    id: int
    origin: int
    size: int = 256
    created_at: float = 0.0

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("message size must be positive")


class HopDelay(NamedTuple):
    """Delay components of one hop, integer nanoseconds."""

    t_trans: int = 0
    t_q: int = 0
    t_cont: int = 0
    t_proc: int = 0
    t_prop: int = 0

    @property
    def total(self) -> int:
        return self.t_trans + self.t_q + self.t_cont + self.t_proc + self.t_prop


def transmission_delay(size: int, rate: float) -> float:
    if size <= 0 or not rate > 0:
        raise ValueError(f"need positive size and rate (size={size}, rate={rate})")
    return size * 8 / rate


def propagation_delay(d: float) -> float:
    if d < 0:
        raise ValueError("distance must be non-negative")
    return d / SPEED_OF_LIGHT


def backoff_slots(attempt: int, rng: random.Random, cw_min: int = 31, cw_max: int = 1023) -> int:
    if attempt < 0:
        raise ValueError("attempt index must be non-negative")
    window = min((cw_min + 1) * 2 ** attempt - 1, cw_max)
    return rng.randint(0, window)


def contention_delay(attempt: int, rng: random.Random, cw_min: int = 31, cw_max: int = 1023,
                     slot_time: float = 13e-6) -> float:
    return backoff_slots(attempt, rng, cw_min, cw_max) * slot_time


def hop_delay(t_trans: float = 0.0, t_q: float = 0.0, t_cont: float = 0.0,
              t_proc: float = 0.0, t_prop: float = 0.0) -> HopDelay:
    """Build a :class:`HopDelay` from components given in seconds."""
    parts = (t_trans, t_q, t_cont, t_proc, t_prop)
    if any(p < 0 for p in parts):
        raise ValueError("delay components must be non-negative")
    return HopDelay(*(to_ns(p) for p in parts))


@dataclass(frozen=True)
class MacParams:
    data_rate: float = 2e6        # bit/s
    cw_min: int = 31
    cw_max: int = 1023
    slot_time: float = 13e-6      # s
    max_attempts: int = 3
    contention: bool = True
    collisions: bool = True
    proc_relay: float = 1e-4      # s
    beacon_interval: float = 0.0  # s, 0 disables background beacons
    beacon_size: int = 300        # bytes


@dataclass
class Scenario:
    obstacles: ObstacleMap
    trace: VehicleTrace
    messages: Sequence[Message]
    protocol: str = "hybrid_vehfog"
    decision_rule: str = "per_receiver_shadowing"
    link: LinkBudget = field(default_factory=LinkBudget)
    attenuation: AttenuationParams = field(default_factory=AttenuationParams)
    mac: MacParams = field(default_factory=MacParams)
    trans_range: float = 300.0
    fog_nodes: Sequence[protocols.FogNode] = ()
    seed: int = 0
    dmax: float = 0.1
    cloud_rtt: float = 0.05
    gateway_fraction: float = 0.3
    fog_backhaul: float = 5e-4
    flood_jitter: float = 5e-3
    duration: float = 0.0  # beacon horizon; messages always run to completion


# ---------------------------------------------------------------------------
# event log

@dataclass(frozen=True)
class Record:
    msg_id: int
    receiver: int
    outcome: str
    time: int                      # ns; arrival time, or last failure event
    hops: tuple[HopDelay, ...] = ()

    @property
    def delay(self) -> int:
        return sum(h.total for h in self.hops)


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    start: int        # ns
    sender: int
    msg_id: int
    attempt: int
    n_receivers: int
    collided: bool


def node_label(node: int) -> str:
    return str(node) if node >= 0 else f"F{-node - 1}"


def parse_node(label: str) -> int:
    return -int(label[1:]) - 1 if label.startswith("F") else int(label)


def _sec(ns: int) -> str:
    sign = "-" if ns < 0 else ""
    q, r = divmod(abs(ns), NS)
    return f"{sign}{q}.{r:09d}"


def _ns(text: str) -> int:
    sign = -1 if text.startswith("-") else 1
    whole, _, frac = text.lstrip("-").partition(".")
    return sign * (int(whole) * NS + int((frac + "000000000")[:9]))


OUTCOME_HEADER = ["msg_id", "receiver", "outcome", "t_delivered", "hops", "delay_total"]
HOP_HEADER = ["msg_id", "receiver", "hop", "t_trans", "t_q", "t_cont", "t_proc", "t_prop", "total"]
FRAME_HEADER = ["frame_id", "t_start", "sender", "msg_id", "attempt", "n_receivers", "collided"]


@dataclass
class EventLog:
    records: list[Record] = field(default_factory=list)
    frames: list[FrameRecord] = field(default_factory=list)
    notices: list[str] = field(default_factory=list)

    def outcomes_csv(self) -> str:
        rows = []
        for r in self.records:
            ok = r.outcome == DELIVERED
            rows.append([r.msg_id, r.receiver, r.outcome, _sec(r.time) if ok else "",
                         len(r.hops), _sec(r.delay) if ok else ""])
        return _csv(OUTCOME_HEADER, rows)

    def hops_csv(self) -> str:
        rows = []
        for r in self.records:
            for k, h in enumerate(r.hops, start=1):
                rows.append([r.msg_id, r.receiver, k, *(_sec(v) for v in h), _sec(h.total)])
        return _csv(HOP_HEADER, rows)

    def frames_csv(self) -> str:
        rows = [[f.frame_id, _sec(f.start), node_label(f.sender), f.msg_id, f.attempt,
                 f.n_receivers, int(f.collided)] for f in self.frames]
        return _csv(FRAME_HEADER, rows)

    def write(self, out_dir: str | Path, prefix: str = "events") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for suffix, text in (("", self.outcomes_csv()), ("_hops", self.hops_csv()),
                             ("_frames", self.frames_csv())):
            p = out / f"{prefix}{suffix}.csv"
            p.write_text(text)
            paths.append(p)
        return paths

    @classmethod
    def from_csv(cls, outcomes: str, hops: str, frames: str) -> "EventLog":
        per_pair: dict[tuple[int, int], list[HopDelay]] = {}
        for row in _rows(hops, HOP_HEADER):
            key = (int(row[0]), int(row[1]))
            per_pair.setdefault(key, []).append(HopDelay(*(_ns(v) for v in row[3:8])))
        records = []
        for row in _rows(outcomes, OUTCOME_HEADER):
            key = (int(row[0]), int(row[1]))
            t = _ns(row[3]) if row[3] else 0
            records.append(Record(key[0], key[1], row[2], t, tuple(per_pair.get(key, ()))))
        frame_records = [FrameRecord(int(r[0]), _ns(r[1]), parse_node(r[2]), int(r[3]), int(r[4]),
                                     int(r[5]), r[6] == "1") for r in _rows(frames, FRAME_HEADER)]
        return cls(records, frame_records)

    @classmethod
    def read(cls, out_dir: str | Path, prefix: str = "events") -> "EventLog":
        out = Path(out_dir)
        return cls.from_csv(*((out / f"{prefix}{s}.csv").read_text() for s in ("", "_hops", "_frames")))


def _csv(header: list[str], rows: Iterable[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _rows(text: str, header: list[str]) -> list[list[str]]:
    reader = csv.reader(io.StringIO(text))
    got = next(reader, None)
    if got != header:
        raise ValueError(f"unexpected header {got}, want {header}")
    return [row for row in reader if row]


# ---------------------------------------------------------------------------
# simulator

@dataclass(eq=False)
class TxEvent:
    """One frame on the air (or waiting for the medium)."""

    fid: int
    sender: int
    msg: Message | None
    receivers: tuple[int, ...]
    size: int
    step: protocols.Step | None = None
    chain: tuple[HopDelay, ...] = ()
    hop_start: int = 0   # arrival time of the message at the sender
    proc: int = 0
    attempt: int = 0
    cont: int = 0        # backoff accumulated over this hop
    time: int = -1       # on-air start
    end: int = -1
    hearers: dict[int, int] = field(default_factory=dict)   # node -> propagation ns
    corrupted: set[int] = field(default_factory=set)


class _Node:
    __slots__ = ("id", "queue", "current", "tx_start", "tx_end", "rx")

    def __init__(self, node_id: int):
        self.id = node_id
        self.queue: deque[TxEvent] = deque()
        self.current: TxEvent | None = None
        self.tx_start = -1
        self.tx_end = -1
        self.rx: list[tuple[int, int, TxEvent]] = []


_CREATE, _ENQUEUE, _ACCESS, _TX_END, _RESOLVE, _WIRE, _BEACON = range(7)


class Simulator:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.now = 0
        self.log = EventLog()
        self._heap: list = []
        self._seq = itertools.count()
        self._fid = itertools.count()
        self._nodes: dict[int, _Node] = {}
        self._rngs: dict[int, random.Random] = {}
        self._ctx: dict[int, protocols.DisseminationContext] = {}
        self._active: list[TxEvent] = []
        self.has: set[tuple[int, int]] = set()
        self.messages: dict[int, Message] = {}
        self.intended: dict[tuple[int, int], None] = {}
        self.delivered: dict[tuple[int, int], Record] = {}
        self.reasons: dict[tuple[int, int], tuple[str, int]] = {}
        self.plans: dict[int, protocols.Plan] = {}
        mac = scenario.mac
        self._slot = to_ns(mac.slot_time)
        self._gateways = protocols.pick_gateways(
            {s.id for snap in scenario.trace.snapshots for s in snap},
            scenario.gateway_fraction, scenario.seed)
        self.agent = protocols.make_agent(scenario.protocol)

    # -- helpers used by protocol agents -----------------------------------
    def rng(self, node: int) -> random.Random:
        if node not in self._rngs:
            self._rngs[node] = random.Random(f"{self.sc.seed}:{node}")
        return self._rngs[node]

    def ctx_at(self, t_ns: int) -> protocols.DisseminationContext:
        k = self.sc.trace.index_at(t_ns / NS)
        if k not in self._ctx:
            sc = self.sc
            self._ctx[k] = protocols.DisseminationContext(
                sc.obstacles, sc.trace.snapshots[k], sc.link, sc.attenuation, sc.fog_nodes,
                sc.trans_range, sc.decision_rule, gateways=self._gateways,
                relay_proc=sc.mac.proc_relay, cloud_rtt=sc.cloud_rtt, backhaul=sc.fog_backhaul,
                dmax=sc.dmax, data_rate=sc.mac.data_rate)
        return self._ctx[k]

    def execute(self, step: protocols.Step, msg: Message, chain: tuple[HopDelay, ...],
                t: int, extra: int = 0) -> None:
        """Carry out ``step`` for a message that reached ``step.sender`` at ``t``."""
        proc = to_ns(step.proc)
        if step.kind == "wire":
            hop = HopDelay(t_q=extra, t_proc=proc + to_ns(step.latency))
            for dest in step.receivers:
                self._push(t + hop.total, _WIRE, (dest, msg, step, chain + (hop,)))
            return
        tx = TxEvent(next(self._fid), step.sender, msg, tuple(step.receivers), msg.size,
                     step, chain, hop_start=t, proc=proc)
        self._push(max(t + proc + extra, self.now), _ENQUEUE, tx)

    def mark(self, msg_id: int, targets: Iterable[int], reason: str) -> None:
        for target in targets:
            key = (msg_id, target)
            if key not in self.intended or key in self.delivered:
                continue
            old = self.reasons.get(key)
            if old is None or _FAILURE_RANK[reason] >= _FAILURE_RANK[old[0]]:
                self.reasons[key] = (reason, self.now)

    # -- event plumbing ----------------------------------------------------
    def _push(self, t: int, kind: int, payload) -> None:
        heapq.heappush(self._heap, (t, next(self._seq), kind, payload))

    def _node(self, node_id: int) -> _Node:
        n = self._nodes.get(node_id)
        if n is None:
            n = self._nodes[node_id] = _Node(node_id)
        return n

    def run(self) -> EventLog:
        sc = self.sc
        for msg in sorted(sc.messages, key=lambda m: (m.created_at, m.id)):
            self._push(to_ns(msg.created_at), _CREATE, msg)
        if sc.mac.beacon_interval > 0:
            period = to_ns(sc.mac.beacon_interval)
            for s in sc.trace.snapshots[0]:
                self._push(self.rng(s.id).randrange(period), _BEACON, s.id)
        handlers = {_CREATE: self._create, _ENQUEUE: self._enqueue, _ACCESS: self._access,
                    _TX_END: self._tx_end, _RESOLVE: self._resolve, _WIRE: self._wire,
                    _BEACON: self._beacon}
        while self._heap:
            t, _, kind, payload = heapq.heappop(self._heap)
            self.now = t
            handlers[kind](payload)
        return self._finish()

    def _create(self, msg: Message) -> None:
        ctx = self.ctx_at(self.now)
        if msg.origin not in ctx.index.pos:
            raise ConfigError(f"message {msg.id}: sender {msg.origin} not present at "
                              f"t={msg.created_at}")
        self.messages[msg.id] = msg
        self.has.add((msg.id, msg.origin))
        for r in ctx.neighbors(msg.origin):
            self.intended[(msg.id, r)] = None
        self.agent.start(self, msg)

    def _beacon(self, vid: int) -> None:
        ctx = self.ctx_at(self.now)
        if vid in ctx.index.pos:
            tx = TxEvent(next(self._fid), vid, None, (), self.sc.mac.beacon_size, hop_start=self.now)
            self._enqueue(tx)
        nxt = self.now + to_ns(self.sc.mac.beacon_interval)
        if nxt <= to_ns(self.sc.duration):
            self._push(nxt, _BEACON, vid)

    def _enqueue(self, tx: TxEvent, front: bool = False) -> None:
        node = self._node(tx.sender)
        if front:
            node.queue.appendleft(tx)
        else:
            node.queue.append(tx)
        self._kick(node)

    def _kick(self, node: _Node) -> None:
        if node.current is not None or not node.queue:
            return
        tx = node.queue.popleft()
        node.current = tx
        self._backoff(node, tx, self.now)

    def _backoff(self, node: _Node, tx: TxEvent, base: int) -> None:
        mac = self.sc.mac
        wait = 0
        if mac.contention:
            wait = backoff_slots(tx.attempt, self.rng(node.id), mac.cw_min, mac.cw_max) * self._slot
        tx.cont += wait
        self._push(base + wait, _ACCESS, node.id)

    def _busy_until(self, node_id: int, ctx: protocols.DisseminationContext) -> int:
        busy = -1
        keep = []
        for g in self._active:
            if g.end + max(g.hearers.values(), default=0) <= self.now:
                continue
            keep.append(g)
            if g.sender == node_id:
                continue
            gctx = self.ctx_at(g.time)
            if node_id not in gctx.node_pos or not gctx.senses(node_id, g.sender):
                continue
            p = to_ns(propagation_delay(gctx.distance(node_id, g.sender)))
            if g.time + p <= self.now < g.end + p:
                busy = max(busy, g.end + p)
        self._active = keep
        return busy

    def _access(self, node_id: int) -> None:
        node = self._nodes[node_id]
        tx = node.current
        ctx = self.ctx_at(self.now)
        busy = self._busy_until(node_id, ctx)
        if busy > self.now:
            self._backoff(node, tx, busy)
            return
        mac = self.sc.mac
        start = self.now
        end = start + to_ns(transmission_delay(tx.size, mac.data_rate))
        tx.time, tx.end = start, end
        if tx.sender in ctx.node_pos:
            tx.hearers = {r: to_ns(propagation_delay(d)) for r, d in ctx.hearers(tx.sender)}
        collide = mac.collisions
        for r, p in tx.hearers.items():
            rnode = self._node(r)
            a, b = start + p, end + p
            rnode.rx = [e for e in rnode.rx if e[1] > start]
            if collide:
                for s, e, other in rnode.rx:
                    if s < b and a < e:
                        other.corrupted.add(r)
                        tx.corrupted.add(r)
                if rnode.tx_start < b and a < rnode.tx_end:
                    tx.corrupted.add(r)
            rnode.rx.append((a, b, tx))
        if collide:
            for s, e, other in node.rx:
                if s < end and start < e:
                    other.corrupted.add(node_id)
        node.tx_start, node.tx_end = start, end
        self._active.append(tx)
        self._push(end, _TX_END, node_id)
        self._push(end + max(tx.hearers.values(), default=0), _RESOLVE, tx)

    def _tx_end(self, node_id: int) -> None:
        node = self._nodes[node_id]
        node.current = None
        self._kick(node)

    def _resolve(self, tx: TxEvent) -> None:
        msg = tx.msg
        if msg is None:
            return
        collided = any(r in tx.corrupted for r in tx.receivers)
        self.log.frames.append(FrameRecord(tx.fid, tx.time, tx.sender, msg.id, tx.attempt,
                                           len(tx.receivers), collided))
        ctx = self.ctx_at(tx.time)
        step = tx.step
        retry = []
        for r in tx.receivers:
            downstream = step.downstream.get(r, (r,)) if step else (r,)
            if r in tx.hearers:
                if r in tx.corrupted:
                    if (msg.id, r) not in self.has or (step and step.children.get(r)):
                        retry.append(r)
                    else:
                        self.mark(msg.id, downstream, COLLIDED)
                    continue
                p = tx.hearers[r]
                trans = tx.end - tx.time
                q = tx.time - tx.hop_start - tx.proc - tx.cont
                hop = HopDelay(trans, q, tx.cont, tx.proc, p)
                self._arrive(r, msg, step, tx.chain + (hop,), tx.end + p)
            else:
                reason = DROPPED_SHADOW if ctx.in_range(tx.sender, r) else OUT_OF_RANGE
                self.mark(msg.id, downstream, reason)
        if not retry:
            return
        if tx.attempt + 1 < self.sc.mac.max_attempts:
            again = TxEvent(next(self._fid), tx.sender, msg, tuple(retry), tx.size, step,
                            tx.chain, tx.hop_start, tx.proc, tx.attempt + 1, tx.cont)
            self._enqueue(again, front=True)
        else:
            for r in retry:
                self.mark(msg.id, step.downstream.get(r, (r,)) if step else (r,), COLLIDED)

    def _wire(self, payload) -> None:
        dest, msg, step, chain = payload
        self._arrive(dest, msg, step, chain, self.now)

    def _arrive(self, node: int, msg: Message, step, chain: tuple[HopDelay, ...], t: int) -> None:
        key = (msg.id, node)
        first = key not in self.has
        self.has.add(key)
        if key in self.intended and key not in self.delivered:
            self.delivered[key] = Record(msg.id, node, DELIVERED, t, chain)
        self.agent.on_receive(self, node, msg, step, chain, t, first)

    def _finish(self) -> EventLog:
        records = list(self.delivered.values())
        for key in self.intended:
            if key in self.delivered:
                continue
            reason, t = self.reasons.get(key, (OUT_OF_RANGE, to_ns(self.messages[key[0]].created_at)))
            records.append(Record(key[0], key[1], reason, t))
        records.sort(key=lambda r: (r.time, r.msg_id, r.receiver))
        self.log.records = records
        for plan in self.plans.values():
            self.log.notices.extend(plan.notices)
        return self.log


def check_bounds(scenario: Scenario) -> None:
    bounds = scenario.obstacles.bounds
    for t, snap in zip(scenario.trace.times, scenario.trace.snapshots):
        for s in snap:
            if not bounds.contains(s.pos):
                raise ConfigError(f"vehicle {s.id} at t={t} {s.pos} lies outside map bounds {tuple(bounds)}")
    for f in scenario.fog_nodes:
        if not bounds.contains(f.pos):
            raise ConfigError(f"fog node {f.id} at {f.pos} lies outside map bounds")


def run_simulation(scenario: Scenario) -> EventLog:
    if scenario.protocol not in protocols.PROTOCOLS:
        raise ConfigError(f"unknown protocol {scenario.protocol!r}")
    if scenario.decision_rule not in protocols.DECISION_RULES:
        raise ConfigError(f"unknown decision rule {scenario.decision_rule!r}")
    if scenario.protocol in ("hybrid_vehfog", "fog_only") and not scenario.fog_nodes:
        raise ConfigError(f"protocol {scenario.protocol} needs at least one fog node")
    if len({m.id for m in scenario.messages}) != len(scenario.messages):
        raise ConfigError("message ids must be unique")
    check_bounds(scenario)
    return Simulator(scenario).run()
