"""Vehicle traces: synthetic multi-lane road generator, CSV import, neighbour scan.

The generator is a stand-in for a microscopic traffic simulator. Vehicles keep
a constant speed and lane and wrap around at the end of the road. Lane ``k``
runs along ``y = lane_y0 + k * lane_spacing``; with a spacing equal to a city
block pitch the lanes become parallel avenues of a Manhattan grid.

Speeds are often quoted in mph: 30-50 mph is 13.41-22.35 m/s.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

MPH = 0.44704  # m/s


class TraceError(ValueError):
    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class VehicleState:
    id: int
    pos: tuple[float, float]
    speed: float
    lane: int = 0


@dataclass(frozen=True)
class VehicleTrace:
    dt: float
    times: tuple[float, ...]
    snapshots: tuple[tuple[VehicleState, ...], ...]

    def __post_init__(self):
        if len(self.times) != len(self.snapshots) or not self.times:
            raise TraceError("trace needs one time stamp per snapshot and at least one snapshot")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise TraceError("snapshot times must be strictly increasing")

    def index_at(self, t: float) -> int:
        """Snapshot in force at time ``t`` (last one at or before it)."""
        return max(0, bisect.bisect_right(self.times, t) - 1)

    def at(self, t: float) -> tuple[VehicleState, ...]:
        return self.snapshots[self.index_at(t)]

    def dumps(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "id", "x", "y", "speed", "lane"])
        for t, snap in zip(self.times, self.snapshots):
            for v in snap:
                w.writerow([repr(t), v.id, repr(v.pos[0]), repr(v.pos[1]), repr(v.speed), v.lane])
        return buf.getvalue()


def generate_trace(n_vehicles: int, road_length: float = 10_000.0, lanes: int = 3,
                   speed_range: tuple[float, float] = (30 * MPH, 50 * MPH),
                   duration: float = 10.0, dt: float = 1.0, seed: int = 0,
                   lane_y0: float = 10.0, lane_spacing: float = 3.5) -> VehicleTrace:
    if n_vehicles < 1:
        raise ValueError("need at least one vehicle")
    if not duration > 0 or not dt > 0:
        raise ValueError("duration and dt must be positive")
    if lanes < 1 or not road_length > 0:
        raise ValueError("need at least one lane and a positive road length")
    lo, hi = speed_range
    if not 0 <= lo <= hi:
        raise ValueError(f"bad speed range {speed_range}")
    rng = random.Random(seed)
    start = []
    for vid in range(n_vehicles):
        lane = rng.randrange(lanes)
        x0 = rng.uniform(0.0, road_length)
        speed = rng.uniform(lo, hi)
        start.append((vid, lane, x0, speed))
    steps = int(round(duration / dt))
    times, snaps = [], []
    for k in range(steps + 1):
        t = k * dt
        snap = []
        for vid, lane, x0, speed in start:
            x = math.fmod(x0 + speed * t, road_length)
            snap.append(VehicleState(vid, (x, lane_y0 + lane * lane_spacing), speed, lane))
        times.append(t)
        snaps.append(tuple(snap))
    return VehicleTrace(dt, tuple(times), tuple(snaps))


def load_trace(text: str) -> VehicleTrace:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None or [h.strip() for h in header] != ["t", "id", "x", "y", "speed", "lane"]:
        raise TraceError("header must be t,id,x,y,speed,lane", 1)
    times: list[float] = []
    snaps: list[list[VehicleState]] = []
    seen: set[int] = set()
    for ln, row in enumerate(rows, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 6:
            raise TraceError(f"expected 6 fields, got {len(row)}", ln)
        try:
            t = float(row[0])
            state = VehicleState(int(row[1]), (float(row[2]), float(row[3])),
                                 float(row[4]), int(row[5]))
        except ValueError as exc:
            raise TraceError(str(exc), ln) from None
        if state.speed < 0 or state.lane < 0:
            raise TraceError("speed and lane must be non-negative", ln)
        if not times or t > times[-1]:
            times.append(t)
            snaps.append([])
            seen = set()
        elif t < times[-1]:
            raise TraceError(f"time {t} goes backwards (previous {times[-1]})", ln)
        if state.id in seen:
            raise TraceError(f"vehicle {state.id} appears twice at t={t}", ln)
        seen.add(state.id)
        snaps[-1].append(state)
    if not times:
        raise TraceError("trace has no rows")
    dt = times[1] - times[0] if len(times) > 1 else 0.0
    return VehicleTrace(dt, tuple(times), tuple(tuple(s) for s in snaps))


def neighbors_in_range(states: Sequence[VehicleState], sender: int, r: float) -> list[int]:
    """Ids of all other vehicles within ``r`` metres of ``sender`` (inclusive)."""
    if not r > 0:
        raise ValueError("range must be positive")
    by_id = {s.id: s for s in states}
    if sender not in by_id:
        raise KeyError(f"unknown sender {sender}")
    origin = by_id[sender].pos
    return sorted(s.id for s in states
                  if s.id != sender and math.dist(origin, s.pos) <= r)


class SpatialIndex:
    """Vehicles of one snapshot sorted by x for fast range queries."""

    def __init__(self, states: Iterable[VehicleState]):
        self.pos = {s.id: s.pos for s in states}
        order = sorted(self.pos.items(), key=lambda kv: (kv[1][0], kv[0]))
        self._xs = [p[0] for _, p in order]
        self._ids = [vid for vid, _ in order]

    def within(self, p: tuple[float, float], r: float) -> list[int]:
        lo = bisect.bisect_left(self._xs, p[0] - r)
        hi = bisect.bisect_right(self._xs, p[0] + r)
        return sorted(vid for vid in self._ids[lo:hi] if math.dist(p, self.pos[vid]) <= r)

    def neighbors(self, vid: int, r: float) -> list[int]:
        return [v for v in self.within(self.pos[vid], r) if v != vid]
