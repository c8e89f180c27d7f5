import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vehfog.mobility import (MPH, SpatialIndex, TraceError, VehicleState, generate_trace,
                             load_trace, neighbors_in_range)


def test_mph_conversion():
    assert round(30 * MPH, 2) == 13.41
    assert round(50 * MPH, 2) == 22.35


def test_constant_speed_kinematics():
    tr = generate_trace(1, speed_range=(15, 15), dt=1, duration=2, seed=3)
    xs = [snap[0].pos[0] for snap in tr.snapshots]
    assert len(xs) == 3
    assert xs[1] - xs[0] == pytest.approx(15) or xs[1] < xs[0]  # may wrap
    assert all(s[0].speed == 15 for s in tr.snapshots)


def test_advances_15m_without_wrap():
    tr = generate_trace(1, road_length=1e9, speed_range=(15, 15), dt=1, duration=2, seed=0)
    xs = [snap[0].pos[0] for snap in tr.snapshots]
    assert xs[1] - xs[0] == pytest.approx(15) and xs[2] - xs[1] == pytest.approx(15)


def test_full_scale_trace():
    tr = generate_trace(300, road_length=10_000, lanes=3, seed=5)
    for snap in tr.snapshots:
        assert len(snap) == 300
        assert all(0 <= v.pos[0] < 10_000 for v in snap)
        assert {v.lane for v in snap} <= {0, 1, 2}
        assert sorted(v.id for v in snap) == list(range(300))


def test_wrap_around():
    tr = generate_trace(20, road_length=100, speed_range=(40, 60), duration=10, seed=2)
    assert all(0 <= v.pos[0] < 100 for snap in tr.snapshots for v in snap)


def test_same_seed_same_bytes():
    assert generate_trace(50, seed=9).dumps() == generate_trace(50, seed=9).dumps()
    assert generate_trace(50, seed=9).dumps() != generate_trace(50, seed=10).dumps()


@pytest.mark.parametrize("kwargs", [dict(n_vehicles=0), dict(n_vehicles=3, duration=0),
                                    dict(n_vehicles=3, dt=-1), dict(n_vehicles=3, lanes=0)])
def test_generator_domain(kwargs):
    with pytest.raises(ValueError):
        generate_trace(**kwargs)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 60), st.floats(0, 30), st.floats(0, 30), st.integers(0, 1000))
def test_speeds_in_range(n, a, b, seed):
    lo, hi = sorted((a, b))
    tr = generate_trace(n, speed_range=(lo, hi), duration=2, seed=seed)
    assert all(lo <= v.speed <= hi for v in tr.snapshots[0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(0, 1000))
def test_round_trip(n, seed):
    tr = generate_trace(n, duration=3, seed=seed)
    again = load_trace(tr.dumps())
    assert again.snapshots == tr.snapshots
    assert again.times == tr.times


def test_load_two_snapshots():
    text = "t,id,x,y,speed,lane\n0,1,0,0,10,0\n0,2,5,0,10,0\n1,1,10,0,10,0\n1,2,15,0,10,0\n"
    tr = load_trace(text)
    assert len(tr.snapshots) == 2 and all(len(s) == 2 for s in tr.snapshots)
    assert tr.at(0.5)[0].pos == (0.0, 0.0)
    assert tr.at(7)[1].pos == (15.0, 0.0)


@pytest.mark.parametrize("text, line", [
    ("t,id,x,y,speed,lane\n1,1,0,0,10,0\n0,1,0,0,10,0\n", 3),
    ("t,id,x,y,speed,lane\n0,1,0,0,10,0\n0,1,4,0,10,0\n", 3),
    ("t,id,x,y,speed,lane\n0,1,0,0,10\n", 2),
    ("t,id,x,y,speed,lane\n0,a,0,0,10,0\n", 2),
    ("t,id,x,y,speed,lane\n0,1,0,0,-1,0\n", 2),
    ("time,id,x,y\n", 1),
])
def test_load_errors(text, line):
    with pytest.raises(TraceError) as err:
        load_trace(text)
    assert err.value.line == line


def test_decreasing_time_message():
    with pytest.raises(TraceError, match="backwards"):
        load_trace("t,id,x,y,speed,lane\n1,1,0,0,10,0\n0,1,0,0,10,0\n")


def states(points):
    return [VehicleState(i, p, 10.0) for i, p in enumerate(points)]


def test_neighbors_examples():
    assert neighbors_in_range(states([(0, 0)]), 0, 300) == []
    assert neighbors_in_range(states([(0, 0), (300, 0), (301, 0)]), 0, 300) == [1]
    with pytest.raises(KeyError):
        neighbors_in_range(states([(0, 0)]), 7, 300)
    with pytest.raises(ValueError):
        neighbors_in_range(states([(0, 0)]), 0, 0)


def test_neighbors_brute_force():
    rng = random.Random(11)
    pts = [(rng.uniform(0, 3000), rng.uniform(0, 20)) for _ in range(300)]
    st_ = states(pts)
    idx = SpatialIndex(st_)
    for sender in range(0, 300, 7):
        want = sorted(j for j in range(300)
                      if j != sender and math.dist(pts[sender], pts[j]) <= 300)
        assert neighbors_in_range(st_, sender, 300) == want
        assert idx.neighbors(sender, 300) == want


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1000), st.floats(0, 50)), min_size=2, max_size=40),
       st.floats(1, 500))
def test_neighbors_symmetric(pts, r):
    st_ = states(pts)
    nb = {i: set(neighbors_in_range(st_, i, r)) for i in range(len(pts))}
    for a in nb:
        for b in nb[a]:
            assert a in nb[b]
