"""Obstacle maps and exact line-of-sight obstruction.

Buildings are axis-aligned rectangles. A radio path between two points is a
straight segment; for every building it crosses we count wall crossings and
the length travelled through the open interior. Both quantities are computed
in closed form with Liang-Barsky clipping, so there is no sampling error.

Map file format::

    # comment
    bounds 0 0 10000 220
    20 20 100 100
    120 20 200 100
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

Point = tuple[float, float]


class MapError(ValueError):
    """Malformed or invalid obstacle map. ``line`` is 1-based, 0 if unknown."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class Rect(NamedTuple):
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains_strict(self, p: Point) -> bool:
        return self.x_min < p[0] < self.x_max and self.y_min < p[1] < self.y_max

    def contains(self, p: Point) -> bool:
        return self.x_min <= p[0] <= self.x_max and self.y_min <= p[1] <= self.y_max

    def encloses(self, other: "Rect") -> bool:
        return (self.x_min <= other.x_min and self.y_min <= other.y_min
                and other.x_max <= self.x_max and other.y_max <= self.y_max)

    def interiors_overlap(self, other: "Rect") -> bool:
        return (self.x_min < other.x_max and other.x_min < self.x_max
                and self.y_min < other.y_max and other.y_min < self.y_max)


class Obstruction(NamedTuple):
    n: int
    l_obs: float


@dataclass(frozen=True)
class RegionAreas:
    T_base: float
    R1: float
    R2: float


@dataclass(frozen=True)
class ObstacleMap:
    """Validated, immutable set of rectangular buildings inside ``bounds``."""

    buildings: tuple[Rect, ...]
    bounds: Rect
    _by_xmin: tuple[Rect, ...] = field(init=False, repr=False, compare=False)
    _xmins: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _max_width: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(Rect(*map(float, b)) for b in self.buildings))
        object.__setattr__(self, "bounds", Rect(*map(float, self.bounds)))
        validate(self.buildings, self.bounds)
        ordered = tuple(sorted(self.buildings))
        object.__setattr__(self, "_by_xmin", ordered)
        object.__setattr__(self, "_xmins", tuple(b.x_min for b in ordered))
        object.__setattr__(
            self, "_max_width", max((b.x_max - b.x_min for b in ordered), default=0.0))

    @classmethod
    def empty(cls, bounds: Sequence[float]) -> "ObstacleMap":
        return cls((), Rect(*bounds))

    def candidates(self, x_lo: float, x_hi: float) -> Iterable[Rect]:
        """Buildings whose x-extent may overlap ``[x_lo, x_hi]``."""
        lo = bisect.bisect_left(self._xmins, x_lo - self._max_width)
        hi = bisect.bisect_right(self._xmins, x_hi)
        for b in self._by_xmin[lo:hi]:
            if b.x_max >= x_lo:
                yield b

    def dumps(self) -> str:
        lines = ["bounds " + " ".join(_fmt(v) for v in self.bounds)]
        lines += [" ".join(_fmt(v) for v in b) for b in self.buildings]
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


def validate(buildings: Sequence[Rect], bounds: Rect, lines: Sequence[int] | None = None) -> None:
    if not (bounds.x_min < bounds.x_max and bounds.y_min < bounds.y_max):
        raise MapError("degenerate bounds")
    lines = lines or [0] * len(buildings)
    for b, ln in zip(buildings, lines):
        if not (b.x_min < b.x_max and b.y_min < b.y_max):
            raise MapError("degenerate rectangle", ln)
        if not bounds.encloses(b):
            raise MapError("building out of bounds", ln)
    # sweep over x to find interior overlaps without the full O(n^2) scan
    order = sorted(range(len(buildings)), key=lambda i: buildings[i].x_min)
    active: list[int] = []
    for i in order:
        b = buildings[i]
        active = [j for j in active if buildings[j].x_max > b.x_min]
        for j in active:
            if b.interiors_overlap(buildings[j]):
                first, second = sorted((lines[i], lines[j]))
                raise MapError(f"overlap with building on line {first}", second)
        active.append(i)


def load_map(text: str) -> ObstacleMap:
    bounds: Rect | None = None
    buildings: list[Rect] = []
    lines: list[int] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if bounds is None:
            if parts[0] != "bounds" or len(parts) != 5:
                raise MapError("expected 'bounds x_min y_min x_max y_max'", ln)
            parts = parts[1:]
        elif len(parts) != 4:
            raise MapError(f"expected 4 numbers, got {len(parts)} fields", ln)
        try:
            rect = Rect(*(float(p) for p in parts))
        except ValueError as exc:
            raise MapError(f"not a number: {exc}", ln) from None
        if not all(math.isfinite(v) for v in rect):
            raise MapError("non-finite coordinate", ln)
        if bounds is None:
            bounds = rect
        else:
            buildings.append(rect)
            lines.append(ln)
    if bounds is None:
        raise MapError("missing bounds line")
    validate(buildings, bounds, lines)
    return ObstacleMap(tuple(buildings), bounds)


def manhattan_grid(cols: int, rows: int, block: float, street: float,
                   inset: float = 0.0, origin: Point = (0.0, 0.0),
                   bounds: Sequence[float] | None = None) -> ObstacleMap:
    """Grid of ``cols`` x ``rows`` square blocks separated by streets.

    Streets run along every block edge, so the first street occupies
    ``[origin, origin + street]`` on each axis and street centre-lines sit at
    ``origin + street/2 + k*(block + street)``.
    """
    if cols < 0 or rows < 0:
        raise MapError("grid size must be non-negative")
    if block <= 0 or street < 0 or inset < 0 or 2 * inset >= block:
        raise MapError("need block > 0, street >= 0 and 0 <= inset < block/2")
    pitch = block + street
    ox, oy = origin
    buildings = [
        Rect(ox + street + i * pitch + inset, oy + street + j * pitch + inset,
             ox + (i + 1) * pitch - inset, oy + (j + 1) * pitch - inset)
        for j in range(rows) for i in range(cols)
    ]
    if bounds is None:
        bounds = (ox, oy, ox + cols * pitch + street, oy + rows * pitch + street)
    return ObstacleMap(tuple(buildings), Rect(*bounds))


def _clip(b: Rect, x0: float, y0: float, dx: float, dy: float) -> tuple[float, float] | None:
    """Liang-Barsky: parameter range of the segment inside the closed rect."""
    u0, u1 = 0.0, 1.0
    for p, q in ((-dx, x0 - b.x_min), (dx, b.x_max - x0),
                 (-dy, y0 - b.y_min), (dy, b.y_max - y0)):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        r = q / p
        if p < 0.0:
            if r > u1:
                return None
            if r > u0:
                u0 = r
        else:
            if r < u0:
                return None
            if r < u1:
                u1 = r
    return u0, u1


def segment_rect(b: Rect, p1: Point, p2: Point) -> Obstruction:
    """Wall crossings and interior length of one building.

    Grazing a wall or corner without entering the open interior is not an
    obstruction. An endpoint lying inside the building is not a crossing.
    """
    x0, y0 = p1
    dx, dy = p2[0] - x0, p2[1] - y0
    span = _clip(b, x0, y0, dx, dy)
    if span is None or span[1] <= span[0]:
        return Obstruction(0, 0.0)
    u0, u1 = span
    um = 0.5 * (u0 + u1)
    if not b.contains_strict((x0 + um * dx, y0 + um * dy)):
        return Obstruction(0, 0.0)
    n = (not b.contains_strict(p1)) + (not b.contains_strict(p2))
    return Obstruction(n, (u1 - u0) * math.hypot(dx, dy))


def los_obstruction(obstacles: ObstacleMap, p1: Point, p2: Point) -> Obstruction:
    n = 0
    l_obs = 0.0
    y_lo, y_hi = min(p1[1], p2[1]), max(p1[1], p2[1])
    for b in obstacles.candidates(min(p1[0], p2[0]), max(p1[0], p2[0])):
        if b.y_min > y_hi or b.y_max < y_lo:
            continue
        o = segment_rect(b, p1, p2)
        n += o.n
        l_obs += o.l_obs
    return Obstruction(n, l_obs)


def region_areas(r: float, d: float) -> RegionAreas:
    """Split the disc of radius ``r`` into clear and shadowed areas."""
    if not r > 0:
        raise ValueError(f"transmission radius must be positive, got {r}")
    if not 0 <= d <= r:
        raise ValueError(f"shadow distance must lie in [0, r], got d={d}, r={r}")
    t_base = math.pi * r * r
    r2 = math.pi * d * d
    return RegionAreas(t_base, t_base - r2, r2)
