import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bfs_hops, power_graph
from scenarios import QUIET, scenario
from vehfog.engine import DELIVERED, DROPPED_SHADOW, MacParams, Message, run_simulation, to_ns
from vehfog.geometry import ObstacleMap, Rect
from vehfog.mobility import VehicleState
from vehfog.protocols import (CLOUD, FOG, MULTI_HOP, DisseminationContext, FogNode,
                              cloud_relay_disseminate, decide_mode_eq6, fog_along_road,
                              fog_layer_send, hybrid_vehfog_disseminate, multi_hop_send,
                              pick_gateways, relay_multihop_disseminate)
from vehfog.radio import AttenuationParams, LinkBudget

LINK, ATT = LinkBudget(), AttenuationParams()


def ctx_for(points, buildings=(), fogs=(), bounds=(-2000, -2000, 12000, 2000), **kw):
    states = [VehicleState(i, tuple(map(float, p)), 0.0) for i, p in enumerate(points)]
    obstacles = ObstacleMap(tuple(Rect(*b) for b in buildings), Rect(*bounds))
    return DisseminationContext(obstacles, states, LINK, ATT, fogs, **kw)


# V1 on a street south of a block; V2-V4 along the same street, V5/V6 north of it.
FIG4_POINTS = [(50, 10), (150, 10), (250, 10), (-100, 10), (140, 110), (200, 110)]
FIG4_BLOCK = [(100, 20, 180, 100)]
FIG4_FOG = [FogNode(0, (100, 0))]


def test_fig4_plan():
    ctx = ctx_for(FIG4_POINTS, FIG4_BLOCK, FIG4_FOG)
    assert [ctx.loc(0, v) for v in range(1, 6)] == [0, 0, 0, 1, 1]
    plan = hybrid_vehfog_disseminate(ctx, Message(0, 0))
    assert plan.modes == {1: MULTI_HOP, 2: MULTI_HOP, 3: MULTI_HOP, 4: FOG, 5: FOG}
    assert plan.failed == {}
    assert plan.route(4) == [0, FOG_NODE, 4]
    assert plan.route(5) == [0, FOG_NODE, 5]


FOG_NODE = FIG4_FOG[0].node


def test_fig4_run_delivers_everyone():
    sc = scenario(FIG4_POINTS, FIG4_BLOCK, fog_nodes=FIG4_FOG, protocol="hybrid_vehfog")
    log = run_simulation(sc)
    assert {r.receiver: r.outcome for r in log.records} == {v: DELIVERED for v in range(1, 6)}
    assert {r.receiver: len(r.hops) for r in log.records} == {1: 1, 2: 1, 3: 1, 4: 2, 5: 2}


def test_empty_map_hybrid_matches_relay_plan():
    rng = random.Random(4)
    pts = [(rng.uniform(0, 2000), rng.choice([10, 13.5, 17])) for _ in range(60)]
    ctx = ctx_for(pts, fogs=fog_along_road(2000, 13.5))
    for sender in range(0, 60, 5):
        msg = Message(0, sender)
        hyb = hybrid_vehfog_disseminate(ctx, msg)
        rel = relay_multihop_disseminate(ctx, msg)
        assert set(hyb.modes.values()) <= {MULTI_HOP}
        assert hyb.modes == rel.modes
        assert {t: hyb.route(t) for t in hyb.modes} == {t: rel.route(t) for t in rel.modes}


def test_all_shadowed_routed_via_fog():
    pts = [(500, 10)] + [(400 + 50 * k, 110) for k in range(5)]
    ctx = ctx_for(pts, [(0, 20, 1000, 100)], [FogNode(0, (500, 0))])
    plan = hybrid_vehfog_disseminate(ctx, Message(0, 0))
    assert plan.modes == {v: FOG for v in range(1, 6)}


# -- multi-hop

def test_direct_target_one_hop():
    ctx = ctx_for([(0, 0), (200, 0)])
    assert multi_hop_send(ctx, Message(0, 0), [1]).hops(1) == 1


def test_two_hops_via_relay():
    ctx = ctx_for([(0, 0), (280, 0), (500, 0)])
    plan = multi_hop_send(ctx, Message(0, 0), [2])
    assert plan.route(2) == [0, 1, 2]


def test_unreachable_target_fails_out_of_range():
    ctx = ctx_for([(0, 0), (900, 0)])
    assert multi_hop_send(ctx, Message(0, 0), [1]).failed == {1: "out_of_range"}


@pytest.mark.parametrize("seed", range(5))
def test_line_hops_match_bfs(seed):
    rng = random.Random(seed)
    pts = [(rng.uniform(0, 4000), 0.0) for _ in range(50)]
    # a thin wall at x=2000 shadows only the longer links across it
    ctx = ctx_for(pts, [(2000, -5, 2003, 5)])
    positions = dict(enumerate(pts))
    graph = power_graph(positions, 300, lambda a, b: ctx.loc(a, b) == 0)
    for src in range(0, 50, 7):
        dist = bfs_hops(graph, src)
        plan = multi_hop_send(ctx, Message(0, src), [t for t in range(50) if t != src])
        for t in range(50):
            if t == src:
                continue
            assert plan.hops(t) == dist.get(t), (src, t)


# -- fog layer

def test_fog_path_delay_composition():
    pts = [(500, 10), (600, 110)]
    fog = FogNode(0, (500, 0), proc_delay=1e-3)
    sc = scenario(pts, [(0, 20, 1000, 100)], fog_nodes=[fog], protocol="fog_only", mac=QUIET)
    (rec,) = run_simulation(sc).records
    up = to_ns(1.024e-3) + to_ns(10 / 2.998e8)
    down = to_ns(1.024e-3) + to_ns(1e-3) + to_ns(math.dist((500, 0), (600, 110)) / 2.998e8)
    assert rec.outcome == DELIVERED
    assert [h.total for h in rec.hops] == [up, down]
    assert rec.delay == up + down


def test_target_outside_coverage_dropped():
    ctx = ctx_for([(0, 0), (250, 0)], fogs=[FogNode(0, (0, 10), coverage=100)])
    plan = fog_layer_send(ctx, Message(0, 0), [1])
    assert plan.failed == {1: "dropped_shadow"}


def test_equidistant_fogs_pick_lower_id():
    fogs = [FogNode(3, (100, 0)), FogNode(1, (-100, 0))]
    ctx = ctx_for([(0, 0), (50, 0)], fogs=fogs)
    plan = fog_layer_send(ctx, Message(0, 0), [1])
    assert plan.route(1)[1] == FogNode(1, (0, 0)).node


def test_target_served_by_other_fog_over_backhaul():
    fogs = [FogNode(0, (0, 0), coverage=150), FogNode(1, (300, 0), coverage=150)]
    ctx = ctx_for([(0, 0), (290, 0)], fogs=fogs, backhaul=5e-4)
    plan = fog_layer_send(ctx, Message(0, 0), [1])
    assert plan.route(1) == [0, fogs[0].node, fogs[1].node, 1]
    assert any(s.kind == "wire" and s.latency == 5e-4 for s in plan.steps())


# -- flooding

def test_flooding_chain():
    sc = scenario([(0, 0), (250, 0), (500, 0)], protocol="flooding", mac=QUIET)
    log = run_simulation(sc)
    assert [r.outcome for r in log.records] == [DELIVERED]
    assert sorted(f.sender for f in log.frames) == [0, 1, 2]


@pytest.mark.parametrize("k", [2, 5, 9])
def test_flooding_clique(k):
    pts = [(10 * i, 0) for i in range(k)]
    log = run_simulation(scenario(pts, protocol="flooding", mac=QUIET))
    relays = [f for f in log.frames if f.sender != 0]
    assert len(relays) == k - 1 and len({f.sender for f in relays}) == k - 1
    assert all(r.outcome == DELIVERED for r in log.records)


@pytest.mark.parametrize("seed", range(4))
def test_flooding_reaches_bfs_component(seed):
    rng = random.Random(seed)
    pts = [(rng.uniform(0, 1500), rng.uniform(0, 300)) for _ in range(40)]
    blocks = [(200, 100, 400, 200), (700, 50, 900, 250), (1100, 120, 1300, 180)]
    sc = scenario(pts, blocks, protocol="flooding", mac=QUIET)
    log = run_simulation(sc)
    ctx = ctx_for(pts, blocks)
    graph = power_graph(dict(enumerate(pts)), 300, lambda a, b: ctx.feasible(a, b))
    reach = set(bfs_hops(graph, 0))
    got = {r.receiver for r in log.records if r.outcome == DELIVERED}
    assert got == {r.receiver for r in log.records} & reach
    assert {f.sender for f in log.frames} == reach  # every reached vehicle relays once
    assert len(log.frames) == len(reach)


# -- baselines

def test_relay_multihop_matches_multi_hop_on_clear_chain():
    pts = [(0, 0), (250, 0), (500, 0)]
    ctx = ctx_for(pts)
    msg = Message(0, 0)
    a = relay_multihop_disseminate(ctx, msg)
    b = multi_hop_send(ctx, msg, ctx.neighbors(0))
    assert {t: a.route(t) for t in a.modes} == {t: b.route(t) for t in b.modes}


def test_cloud_single_receiver_delay_floor():
    pts = [(0, 0), (200, 0)]
    sc = scenario(pts, protocol="cloud_relay", gateway_fraction=1.0, mac=QUIET)
    (rec,) = run_simulation(sc).records
    assert rec.outcome == DELIVERED and rec.delay >= to_ns(0.05)


def test_cloud_without_gateways_fails():
    ctx = ctx_for([(0, 0), (200, 0)], gateways=frozenset())
    plan = cloud_relay_disseminate(ctx, Message(0, 0))
    assert plan.modes == {1: CLOUD} and plan.failed == {1: "out_of_range"}


def test_gateway_choice_is_per_vehicle():
    a = pick_gateways(range(100), 0.3, 1)
    b = pick_gateways(range(200), 0.3, 1)
    assert a == {v for v in b if v < 100}
    assert 15 < len(b) < 45 * 2


@pytest.mark.parametrize("seed", range(3))
def test_fog_only_full_coverage_delivers(seed):
    rng = random.Random(seed)
    pts = [(rng.uniform(0, 1000), rng.uniform(0, 300)) for _ in range(30)]
    sc = scenario(pts, [(300, 100, 500, 200)], fog_nodes=[FogNode(0, (500, 150), coverage=2000)],
                  protocol="fog_only", mac=MacParams(collisions=False))
    log = run_simulation(sc)
    assert log.records and all(r.outcome == DELIVERED for r in log.records)


# -- threshold mode rule

def test_eq6_examples():
    assert decide_mode_eq6(1, 1, 2) == MULTI_HOP
    assert decide_mode_eq6(0.999, 1, 2) == FOG
    assert decide_mode_eq6(0, 1, 5) == FOG
    assert decide_mode_eq6(1, 1, 1) == MULTI_HOP
    assert decide_mode_eq6(1, 50, 1) == MULTI_HOP  # clamped
    for bad in ((-0.1, 1, 1), (1.1, 1, 1), (0.5, 1, 0), (0.5, -1, 1)):
        with pytest.raises(ValueError):
            decide_mode_eq6(*bad)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 10), st.integers(1, 300))
def test_eq6_monotone_in_p(p1, p2, d, n):
    lo, hi = sorted((p1, p2))
    if decide_mode_eq6(lo, d, n) == MULTI_HOP:
        assert decide_mode_eq6(hi, d, n) == MULTI_HOP


def test_eq6_rule_picks_one_branch_for_all():
    ctx = ctx_for(FIG4_POINTS, FIG4_BLOCK, FIG4_FOG, decision_rule="eq6_threshold")
    plan = hybrid_vehfog_disseminate(ctx, Message(0, 0))
    assert len(set(plan.modes.values())) == 1


# -- properties

street_y = st.sampled_from([10.0, 110.0, 210.0])
vehicles = st.lists(st.tuples(st.floats(0, 1000), street_y), min_size=2, max_size=25)
GRID = [(20 + 100 * i, 20 + 100 * j, 100 + 100 * i, 100 + 100 * j) for i in range(10) for j in range(2)]


@settings(max_examples=30, deadline=None)
@given(vehicles, st.tuples(st.floats(0, 1000), street_y))
def test_new_vehicle_keeps_earlier_decisions(pts, extra):
    fogs = fog_along_road(1000, 110, spacing=500)
    before = hybrid_vehfog_disseminate(ctx_for(pts, GRID, fogs), Message(0, 0))
    ctx2 = ctx_for(pts + [extra], GRID, fogs)
    after = hybrid_vehfog_disseminate(ctx2, Message(0, 0))
    for v, mode in before.modes.items():
        assert after.modes[v] == mode
    rerun = hybrid_vehfog_disseminate(ctx2, Message(0, 0), known=before.modes)
    assert set(rerun.modes) <= {len(pts)}


@settings(max_examples=20, deadline=None)
@given(vehicles)
def test_shadowed_all_delivered_with_coverage(pts):
    fogs = [FogNode(0, (500, 110), coverage=2000)]
    sc = scenario(pts, GRID, fog_nodes=fogs, protocol="hybrid_vehfog",
                  mac=MacParams(collisions=False))
    log = run_simulation(sc)
    ctx = ctx_for(pts, GRID, fogs)
    for r in log.records:
        if ctx.loc(0, r.receiver) == 1:
            assert r.outcome == DELIVERED
    if all(ctx.loc(0, v) == 1 for v in ctx.neighbors(0)):
        assert all(r.outcome == DELIVERED for r in log.records)


def test_no_fog_coverage_records_dropped_shadow():
    pts = [(500, 10), (600, 110)]
    sc = scenario(pts, [(0, 20, 1000, 100)], fog_nodes=[FogNode(0, (5000, 0), coverage=100)],
                  protocol="hybrid_vehfog")
    (rec,) = run_simulation(sc).records
    assert rec.outcome == DROPPED_SHADOW
