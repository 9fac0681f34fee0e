"""Static world geometry: rectangles, ray casting, collision tests, the canonical map."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

INF = math.inf


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle [x0, x1] x [y0, y1]."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate rectangle {self}")

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def contains_strictly(self, x: float, y: float) -> bool:
        return self.x0 < x < self.x1 and self.y0 < y < self.y1

    def distance_to(self, x: float, y: float) -> float:
        """Euclidean distance from a point to the rectangle (0 inside)."""
        dx = max(self.x0 - x, 0.0, x - self.x1)
        dy = max(self.y0 - y, 0.0, y - self.y1)
        return math.hypot(dx, dy)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)


def segment_hits_rect(ax: float, ay: float, bx: float, by: float, rect: Rect) -> bool:
    """True if the closed segment (ax,ay)-(bx,by) touches the closed rectangle.

    Slab clipping without early exits so that vectorized re-implementations
    (evaluation batch rollouts) can reproduce the exact same booleans.
    """
    dx = bx - ax
    dy = by - ay
    if dx != 0.0:
        t1 = (rect.x0 - ax) / dx
        t2 = (rect.x1 - ax) / dx
        tx0, tx1 = (t1, t2) if t1 <= t2 else (t2, t1)
    elif rect.x0 <= ax <= rect.x1:
        tx0, tx1 = -INF, INF
    else:
        return False
    if dy != 0.0:
        t1 = (rect.y0 - ay) / dy
        t2 = (rect.y1 - ay) / dy
        ty0, ty1 = (t1, t2) if t1 <= t2 else (t2, t1)
    elif rect.y0 <= ay <= rect.y1:
        ty0, ty1 = -INF, INF
    else:
        return False
    u1 = max(tx0, ty0, 0.0)
    u2 = min(tx1, ty1, 1.0)
    return u1 <= u2


def ray_rect_distance(ox: float, oy: float, dx: float, dy: float, rect: Rect) -> float:
    """Distance along the unit ray (dx,dy) from (ox,oy) to the rectangle, inf on miss."""
    if dx != 0.0:
        t1 = (rect.x0 - ox) / dx
        t2 = (rect.x1 - ox) / dx
        tx0, tx1 = (t1, t2) if t1 <= t2 else (t2, t1)
    elif rect.x0 <= ox <= rect.x1:
        tx0, tx1 = -INF, INF
    else:
        return INF
    if dy != 0.0:
        t1 = (rect.y0 - oy) / dy
        t2 = (rect.y1 - oy) / dy
        ty0, ty1 = (t1, t2) if t1 <= t2 else (t2, t1)
    elif rect.y0 <= oy <= rect.y1:
        ty0, ty1 = -INF, INF
    else:
        return INF
    tnear = max(tx0, ty0)
    tfar = min(tx1, ty1)
    if tfar < tnear or tfar < 0.0:
        return INF
    return max(tnear, 0.0)


@dataclass(frozen=True)
class WorldMap:
    """Static environment: bounds, obstacles, feature regions and the target disk.

    ``extra_regions`` adds one binary sensed channel per rectangle beyond the
    four canonical ones (obstacle / light / rough / target); they exist for
    scaling experiments and are empty by default.
    """

    width: float = 30.0
    height: float = 30.0
    obstacles: tuple[Rect, ...] = ()
    light_region: Rect = Rect(25.0, 9.0, 30.0, 15.0)
    rough_region: Rect = Rect(1.0, 23.0, 7.0, 29.0)
    target_center: tuple[float, float] = (26.0, 26.0)
    target_radius: float = 2.0
    extra_regions: tuple[Rect, ...] = ()

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("map bounds must be positive")
        if self.target_radius <= 0:
            raise ValueError("target_radius must be positive")
        for r in (*self.obstacles, self.light_region, self.rough_region, *self.extra_regions):
            if r.x0 < 0 or r.y0 < 0 or r.x1 > self.width or r.y1 > self.height:
                raise ValueError(f"region {r} outside map bounds")
        tx, ty = self.target_center
        if not (0 <= tx <= self.width and 0 <= ty <= self.height):
            raise ValueError("target_center outside map bounds")

    @property
    def n_env_features(self) -> int:
        return 4 + len(self.extra_regions)

    def in_bounds(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width and 0.0 <= y <= self.height

    def in_obstacle(self, x: float, y: float) -> bool:
        return any(r.contains(x, y) for r in self.obstacles)

    def strictly_in_obstacle(self, x: float, y: float) -> bool:
        return any(r.contains_strictly(x, y) for r in self.obstacles)

    def nearest_obstacle_distance(self, x: float, y: float) -> float:
        return min((r.distance_to(x, y) for r in self.obstacles), default=INF)

    def segment_blocked(self, ax: float, ay: float, bx: float, by: float) -> bool:
        return any(segment_hits_rect(ax, ay, bx, by, r) for r in self.obstacles)

    def raycast(self, ox: float, oy: float, dx: float, dy: float, max_range: float) -> float:
        """Nearest obstacle hit along a unit ray, inf if none within max_range."""
        d = min((ray_rect_distance(ox, oy, dx, dy, r) for r in self.obstacles), default=INF)
        return d if d <= max_range else INF

    def in_target(self, x: float, y: float) -> bool:
        tx, ty = self.target_center
        return (x - tx) ** 2 + (y - ty) ** 2 <= self.target_radius**2


def canonical_map() -> WorldMap:
    """Default 30x30 arena. The target sits in the upper-right quadrant behind
    a wall spanning most of the approach from below, so southern starts must
    detour around either end (puddle-world flavor); a light strip lies on the
    right edge, a rough patch at the top left with a bar clipping its southern
    edge, and a free-standing block sits in the lower-left quadrant."""
    return WorldMap(
        width=30.0,
        height=30.0,
        obstacles=(
            Rect(15.0, 18.0, 27.0, 19.5),  # wall below the target
            Rect(1.0, 21.5, 5.0, 23.5),    # bar clipping the rough patch
            Rect(8.0, 6.0, 11.0, 9.0),     # free-standing block
        ),
        light_region=Rect(25.0, 9.0, 30.0, 15.0),
        rough_region=Rect(1.0, 23.0, 7.0, 29.0),
        target_center=(22.0, 22.0),
        target_radius=2.0,
    )
