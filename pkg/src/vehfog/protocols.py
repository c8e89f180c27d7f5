"""Dissemination protocols.

Planned protocols turn a message into a tree of :class:`Step` objects at the
moment it is created: each step is either a radio frame from one node to a set
of addressed receivers, or a wired/cellular hand-off with fixed latency.
``children[r]`` lists what receiver ``r`` does once it has the message from
that step. The engine executes the tree, so MAC contention, collisions and
retries stay in one place.

Protocols:

``hybrid_vehfog``   clear receivers over greedy multi-hop, shadowed ones through
                    the fog layer (or one global mode chosen by the success-rate
                    threshold when ``decision_rule = eq6_threshold``)
``relay_multihop``  greedy geographic forwarding that ignores shadowing
``cloud_relay``     sender -> gateway vehicle -> cloud -> gateway -> receivers
``fog_only``        every receiver through the fog layer
``flooding``        every first-time recipient rebroadcasts once
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

from .geometry import ObstacleMap, Point
from .mobility import SpatialIndex, VehicleState
from .radio import AttenuationParams, LinkBudget, ReceiverClass, classify_receiver, fspl_db

if TYPE_CHECKING:
    from .engine import Message, Simulator

PROTOCOLS = ("hybrid_vehfog", "flooding", "relay_multihop", "cloud_relay", "fog_only")
DECISION_RULES = ("per_receiver_shadowing", "eq6_threshold")
MULTI_HOP = "multi_hop"
FOG = "fog"
CLOUD = "cloud"
NO_NEIGHBOURS = "no nearby vehicles were located"
NEAR_FIELD_M = 1.0  # closer nodes are treated as co-located: clear, loss taken at 1 m


@dataclass(frozen=True)
class FogNode:
    id: int
    pos: Point
    coverage: float = 600.0
    proc_delay: float = 1e-3

    def __post_init__(self):
        if not self.coverage > 0:
            raise ValueError("fog coverage radius must be positive")

    @property
    def node(self) -> int:
        """Engine node key; fog nodes live on the negative integers."""
        return -self.id - 1


def fog_along_road(road_length: float, y: float, spacing: float = 1000.0,
                   coverage: float = 600.0, proc_delay: float = 1e-3,
                   x0: float = 0.0) -> list[FogNode]:
    """One fog node per ``spacing`` metres of road, centred in its stretch.

    The last stretch may be shorter than ``spacing``; its node sits at the
    middle of what is left so every node stays on the road.
    """
    if not spacing > 0:
        raise ValueError("fog spacing must be positive")
    count = max(1, int(math.ceil(road_length / spacing - 1e-9)))
    nodes = []
    for k in range(count):
        lo, hi = k * spacing, min((k + 1) * spacing, road_length)
        nodes.append(FogNode(k, (x0 + (lo + max(hi, lo)) / 2, y), coverage, proc_delay))
    return nodes


def pick_gateways(vehicle_ids: Iterable[int], fraction: float, seed: int) -> frozenset[int]:
    """Vehicles with a cellular interface; fixed per (seed, vehicle)."""
    return frozenset(v for v in vehicle_ids
                     if random.Random(f"{seed}:gateway:{v}").random() < fraction)


class DisseminationContext:
    """Everything a protocol may look at for one trace snapshot."""

    def __init__(self, obstacles: ObstacleMap, states: Sequence[VehicleState], link: LinkBudget,
                 attenuation: AttenuationParams, fog_nodes: Sequence[FogNode] = (),
                 trans_range: float = 300.0, decision_rule: str = "per_receiver_shadowing",
                 gateways: frozenset[int] = frozenset(), relay_proc: float = 1e-4,
                 cloud_rtt: float = 0.05, backhaul: float = 5e-4, dmax: float = 0.1,
                 data_rate: float = 2e6):
        if decision_rule not in DECISION_RULES:
            raise ValueError(f"unknown decision rule {decision_rule!r}")
        self.obstacles = obstacles
        self.link_budget = link
        self.attenuation = attenuation
        self.fog_nodes = tuple(sorted(fog_nodes, key=lambda f: f.id))
        self.trans_range = trans_range
        self.decision_rule = decision_rule
        self.gateways = gateways
        self.relay_proc = relay_proc
        self.cloud_rtt = cloud_rtt
        self.backhaul = backhaul
        self.dmax = dmax
        self.data_rate = data_rate
        self.index = SpatialIndex(states)
        self._fog = {f.node: f for f in self.fog_nodes}
        self.node_pos: dict[int, Point] = dict(self.index.pos)
        self.node_pos.update({f.node: f.pos for f in self.fog_nodes})
        self._links: dict[tuple[int, int], ReceiverClass] = {}
        self._nbrs: dict[int, list[int]] = {}

    def distance(self, a: int, b: int) -> float:
        return math.dist(self.node_pos[a], self.node_pos[b])

    def is_fog(self, node: int) -> bool:
        return node in self._fog

    def neighbors(self, vid: int) -> list[int]:
        if vid not in self._nbrs:
            self._nbrs[vid] = self.index.neighbors(vid, self.trans_range)
        return self._nbrs[vid]

    def link(self, a: int, b: int) -> ReceiverClass:
        key = (a, b)
        if key not in self._links and self.distance(a, b) < NEAR_FIELD_M:
            lb = self.link_budget
            loss = fspl_db(NEAR_FIELD_M, lb.f_mhz)
            self._links[key] = ReceiverClass(0, lb.P_t + lb.G_t + lb.G_r - loss,
                                             self.distance(a, b), path_loss=loss)
        if key not in self._links:
            self._links[key] = classify_receiver(self.obstacles, self.link_budget, self.attenuation,
                                                 self.node_pos[a], self.node_pos[b])
        return self._links[key]

    def loc(self, a: int, b: int) -> int:
        return self.link(a, b).loc

    def in_range(self, a: int, b: int) -> bool:
        if a not in self.node_pos or b not in self.node_pos:
            return False
        fa, fb = self._fog.get(a), self._fog.get(b)
        if fa and fb:
            return False
        if fa or fb:
            return self.distance(a, b) <= (fa or fb).coverage
        return self.distance(a, b) <= self.trans_range

    def feasible(self, a: int, b: int) -> bool:
        """Would a lone frame from ``a`` be decoded at ``b``?"""
        if not self.in_range(a, b):
            return False
        if self.is_fog(a) or self.is_fog(b):
            return True  # elevated infrastructure, no building loss
        return self.link(a, b).decodable(self.link_budget)

    def senses(self, node: int, sender: int) -> bool:
        return self.in_range(sender, node)

    def hearers(self, sender: int) -> list[tuple[int, float]]:
        """Nodes able to decode a frame from ``sender``, with distances."""
        pos = self.node_pos[sender]
        out = []
        if self.is_fog(sender):
            cands = self.index.within(pos, self._fog[sender].coverage)
        else:
            cands = self.index.neighbors(sender, self.trans_range)
            cands += [f.node for f in self.fog_nodes if math.dist(pos, f.pos) <= f.coverage]
        for r in cands:
            if r != sender and self.feasible(sender, r):
                out.append((r, self.distance(sender, r)))
        return out

    def covering_fogs(self, node: int) -> list[FogNode]:
        """Fog nodes covering ``node``, nearest first, ties to the lower id."""
        pos = self.node_pos[node]
        hits = [(math.dist(pos, f.pos), f.id, f) for f in self.fog_nodes
                if math.dist(pos, f.pos) <= f.coverage]
        return [f for _, _, f in sorted(hits, key=lambda h: (h[0], h[1]))]


@dataclass(eq=False)
class Step:
    sender: int
    receivers: list[int] = field(default_factory=list)
    proc: float = 0.0
    kind: str = "radio"
    latency: float = 0.0
    downstream: dict[int, tuple[int, ...]] = field(default_factory=dict)
    children: dict[int, list["Step"]] = field(default_factory=dict)

    def add(self, receiver: int, targets: Iterable[int] = ()) -> None:
        if receiver not in self.receivers:
            self.receivers.append(receiver)
            self.receivers.sort()
        merged = set(self.downstream.get(receiver, ())) | set(targets)
        self.downstream[receiver] = tuple(sorted(merged))

    def walk(self) -> Iterable["Step"]:
        yield self
        for r in sorted(self.children):
            for child in self.children[r]:
                yield from child.walk()


@dataclass
class Plan:
    sender: int
    root: list[Step] = field(default_factory=list)
    modes: dict[int, str] = field(default_factory=dict)
    failed: dict[int, str] = field(default_factory=dict)
    notices: list[str] = field(default_factory=list)

    def radio_root(self, proc: float = 0.0) -> Step:
        for s in self.root:
            if s.kind == "radio" and s.sender == self.sender:
                return s
        s = Step(self.sender, proc=proc)
        self.root.insert(0, s)
        return s

    def merge(self, other: "Plan") -> "Plan":
        for s in other.root:
            if s.kind == "radio" and s.sender == self.sender:
                mine = self.radio_root()
                for r in s.receivers:
                    mine.add(r, s.downstream.get(r, ()))
                for r, kids in s.children.items():
                    mine.children.setdefault(r, []).extend(kids)
            else:
                self.root.append(s)
        self.modes.update(other.modes)
        self.failed.update(other.failed)
        self.notices.extend(other.notices)
        return self

    def steps(self) -> list[Step]:
        return [s for root in self.root for s in root.walk()]

    def route(self, target: int) -> list[int] | None:
        """Node sequence from the sender to ``target`` (first route found)."""
        def search(step: Step, path: list[int]) -> list[int] | None:
            for r in step.receivers:
                nxt = path + [r]
                if r == target:
                    return nxt
                for child in step.children.get(r, ()):
                    found = search(child, nxt)
                    if found:
                        return found
            return None

        for root in self.root:
            found = search(root, [self.sender])
            if found:
                return found
        return None

    def hops(self, target: int) -> int | None:
        path = self.route(target)
        return None if path is None else len(path) - 1


# ---------------------------------------------------------------------------
# planners

def greedy_path(ctx: DisseminationContext, src: int, dst: int,
                shadow_aware: bool = True) -> list[int] | None:
    """Greedy geographic route: each hop goes to the in-range neighbour closest
    to ``dst`` that makes strict progress. ``None`` when stuck."""
    path = [src]
    u = src
    while u != dst:
        du = ctx.distance(u, dst)
        best = None
        for v in ctx.neighbors(u):
            if shadow_aware and ctx.loc(u, v) != 0:
                continue
            dv = ctx.distance(v, dst)
            if dv < du and (best is None or (dv, v) < best):
                best = (dv, v)
        if best is None:
            return None
        u = best[1]
        path.append(u)
    return path


def multi_hop_send(ctx: DisseminationContext, msg: Message, targets: Iterable[int],
                   sender: int | None = None, shadow_aware: bool = True) -> Plan:
    sender = msg.origin if sender is None else sender
    plan = Plan(sender)
    for t in sorted(targets):
        plan.modes[t] = MULTI_HOP
        path = greedy_path(ctx, sender, t, shadow_aware)
        if path is None:
            plan.failed[t] = "out_of_range"
            continue
        step = plan.radio_root()
        for i, (u, v) in enumerate(zip(path, path[1:])):
            if i:
                kids = step.children.setdefault(u, [])
                if not kids:
                    kids.append(Step(u, proc=ctx.relay_proc))
                step = kids[0]
            step.add(v, (t,))
    return plan


def fog_layer_send(ctx: DisseminationContext, msg: Message, targets: Iterable[int],
                   sender: int | None = None) -> Plan:
    sender = msg.origin if sender is None else sender
    plan = Plan(sender)
    targets = sorted(targets)
    for t in targets:
        plan.modes[t] = FOG
    if not targets:
        return plan
    ups = ctx.covering_fogs(sender)
    if not ups:
        plan.failed.update({t: "dropped_shadow" for t in targets})
        return plan
    up = ups[0]
    served: dict[int, list[int]] = {}
    for t in targets:
        fogs = ctx.covering_fogs(t)
        if not fogs:
            plan.failed[t] = "dropped_shadow"
            continue
        f = up if up in fogs else fogs[0]
        served.setdefault(f.id, []).append(t)
    if not served:
        return plan
    root = plan.radio_root()
    root.add(up.node, [t for ts in served.values() for t in ts])
    kids = root.children.setdefault(up.node, [])
    by_id = {f.id: f for f in ctx.fog_nodes}
    for fid in sorted(served):
        f = by_id[fid]
        downs = [Step(f.node, [t], proc=f.proc_delay, downstream={t: (t,)}) for t in served[fid]]
        if f is up:
            kids.extend(downs)
        else:
            wire = Step(up.node, [f.node], kind="wire", latency=ctx.backhaul,
                        downstream={f.node: tuple(served[fid])}, children={f.node: downs})
            kids.append(wire)
    return plan


def decide_mode_eq6(P_msg: float, D_norm: float, N_users: int) -> str:
    """Threshold the message success rate ``P_msg * D_norm / N_users``.

    ``[0.5, 1]`` selects multi-hop, ``[0, 0.5)`` the fog layer.
    """
    if not 0.0 <= P_msg <= 1.0:
        raise ValueError(f"P_msg must be a probability, got {P_msg}")
    if N_users < 1 or D_norm < 0:
        raise ValueError("need N_users >= 1 and D_norm >= 0")
    m = min(1.0, max(0.0, P_msg * D_norm / N_users))
    return MULTI_HOP if m >= 0.5 else FOG


def hybrid_vehfog_disseminate(ctx: DisseminationContext, msg: Message, sender: int | None = None,
                              known: Iterable[int] = ()) -> Plan:
    """Route each receiver in range by its shadowing class.

    ``known`` lists receivers already handled; re-running with it after a new
    vehicle shows up plans only the newcomers.
    """
    sender = msg.origin if sender is None else sender
    skip = set(known)
    nbrs = [v for v in ctx.neighbors(sender) if v not in skip]
    plan = Plan(sender)
    if not nbrs:
        plan.notices.append(f"msg {msg.id}: {NO_NEIGHBOURS}")
        return plan
    if ctx.decision_rule == "eq6_threshold":
        clear = [v for v in nbrs if ctx.loc(sender, v) == 0]
        farthest = max(ctx.distance(sender, v) for v in nbrs)
        d_pred = msg.size * 8 / ctx.data_rate + farthest / 2.998e8
        mode = decide_mode_eq6(len(clear) / len(nbrs), d_pred / ctx.dmax, len(nbrs))
        if mode == MULTI_HOP:
            return plan.merge(multi_hop_send(ctx, msg, nbrs, sender))
        return plan.merge(fog_layer_send(ctx, msg, nbrs, sender))
    clear = [v for v in nbrs if ctx.loc(sender, v) == 0]
    shadowed = [v for v in nbrs if ctx.loc(sender, v) == 1]
    plan.merge(multi_hop_send(ctx, msg, clear, sender))
    plan.merge(fog_layer_send(ctx, msg, shadowed, sender))
    return plan


def relay_multihop_disseminate(ctx: DisseminationContext, msg: Message,
                               sender: int | None = None) -> Plan:
    sender = msg.origin if sender is None else sender
    return multi_hop_send(ctx, msg, ctx.neighbors(sender), sender, shadow_aware=False)


def fog_only_disseminate(ctx: DisseminationContext, msg: Message,
                         sender: int | None = None) -> Plan:
    sender = msg.origin if sender is None else sender
    return fog_layer_send(ctx, msg, ctx.neighbors(sender), sender)


def _nearest_gateway(ctx: DisseminationContext, vid: int) -> int | None:
    best = None
    for g in ctx.neighbors(vid):
        if g in ctx.gateways and ctx.feasible(g, vid):
            key = (ctx.distance(vid, g), g)
            if best is None or key < best:
                best = key
    return None if best is None else best[1]


def cloud_relay_disseminate(ctx: DisseminationContext, msg: Message,
                            sender: int | None = None) -> Plan:
    sender = msg.origin if sender is None else sender
    targets = ctx.neighbors(sender)
    plan = Plan(sender, modes={t: CLOUD for t in targets})
    if not targets:
        return plan
    if sender in ctx.gateways:
        up = sender
    else:
        up = _nearest_gateway(ctx, sender)
        if up is None:
            plan.failed.update({t: "out_of_range" for t in targets})
            return plan
    downlinks: dict[int, list[int]] = {}
    for t in targets:
        if t in ctx.gateways:
            downlinks.setdefault(t, [])
            continue
        g = _nearest_gateway(ctx, t)
        if g is None:
            plan.failed[t] = "dropped_shadow"
        else:
            downlinks.setdefault(g, []).append(t)
    wires = []
    for g in sorted(downlinks):
        served = tuple(sorted(set(downlinks[g]) | ({g} if g in targets else set())))
        wire = Step(up, [g], kind="wire", latency=ctx.cloud_rtt, downstream={g: served})
        if downlinks[g]:
            radio = Step(g, proc=ctx.relay_proc)
            for t in downlinks[g]:
                radio.add(t, (t,))
            wire.children[g] = [radio]
        wires.append(wire)
    if up == sender:
        plan.root.extend(wires)
    else:
        root = plan.radio_root()
        root.add(up, [t for t in targets if t not in plan.failed])
        root.children[up] = wires
    return plan


def flooding_disseminate(ctx: DisseminationContext, msg: Message, sender: int | None = None,
                         proc: float = 0.0) -> Plan:
    """One broadcast addressed to every vehicle in range of ``sender``.

    Relaying is reactive: the engine agent calls this again for each
    first-time recipient.
    """
    sender = msg.origin if sender is None else sender
    plan = Plan(sender)
    nbrs = ctx.neighbors(sender)
    if nbrs:
        step = plan.radio_root(proc)
        for v in nbrs:
            step.add(v, (v,))
    return plan


PLANNERS = {
    "hybrid_vehfog": hybrid_vehfog_disseminate,
    "relay_multihop": relay_multihop_disseminate,
    "cloud_relay": cloud_relay_disseminate,
    "fog_only": fog_only_disseminate,
}


# ---------------------------------------------------------------------------
# runtime agents driven by the engine

class PlannedAgent:
    def __init__(self, planner):
        self.planner = planner

    def start(self, sim: Simulator, msg: Message) -> None:
        t = sim.now
        plan = self.planner(sim.ctx_at(t), msg, msg.origin)
        sim.plans[msg.id] = plan
        for target, reason in plan.failed.items():
            sim.mark(msg.id, (target,), reason)
        for step in plan.root:
            sim.execute(step, msg, (), t)

    def on_receive(self, sim: Simulator, node: int, msg: Message, step: Step | None,
                   chain, t: int, first: bool) -> None:
        if step is None:
            return
        for child in step.children.get(node, ()):
            sim.execute(child, msg, chain, t)


class FloodingAgent:
    def start(self, sim: Simulator, msg: Message) -> None:
        plan = flooding_disseminate(sim.ctx_at(sim.now), msg)
        sim.plans[msg.id] = plan
        for step in plan.root:
            sim.execute(step, msg, (), sim.now)

    def on_receive(self, sim: Simulator, node: int, msg: Message, step: Step | None,
                   chain, t: int, first: bool) -> None:
        if not first or node < 0:
            return
        ctx = sim.ctx_at(t)
        if node not in ctx.index.pos:
            return
        plan = flooding_disseminate(ctx, msg, node, proc=ctx.relay_proc)
        jitter = sim.rng(node).randint(0, int(round(sim.sc.flood_jitter * 1e9)))
        for s in plan.root:
            sim.execute(s, msg, chain, t, extra=jitter)


def make_agent(protocol: str):
    if protocol == "flooding":
        return FloodingAgent()
    if protocol not in PLANNERS:
        raise ValueError(f"unknown protocol {protocol!r}")
    return PlannedAgent(PLANNERS[protocol])
