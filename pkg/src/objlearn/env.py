"""Agent kinematics, noisy sensing and binary feature extraction.

The agent lives in a continuous 30x30 world, moves in one of 8 compass
directions (or holds) at 8 units/s in 200 ms ticks, and carries three range
sensors fanned 72 degrees apart plus light / roughness / target detectors.
Sensed scalars get 5% additive Gaussian noise before binarization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .world import INF, WorldMap, ray_rect_distance

SPEED = 8.0          # units/s
TICK = 0.2           # s per action
STEP_LENGTH = SPEED * TICK  # 1.6 units per move

SENSOR_RANGE = 1.0
SENSOR_OFFSETS = (-math.radians(72.0), 0.0, math.radians(72.0))
CAST_RANGE = 2.0     # cast beyond SENSOR_RANGE so noise can flip marginal readings
NOISE_SD = 0.05
BINARY_THRESHOLD = 0.5

N_LOC_BINS = 30      # one-hot bins per spatial dimension


class Action(IntEnum):
    N = 0
    NE = 1
    E = 2
    SE = 3
    S = 4
    SW = 5
    W = 6
    NW = 7
    HOLD = 8


N_ACTIONS = len(Action)

_DIAG = math.sqrt(0.5)
# Unit direction per action; HOLD is (0, 0).
DIRECTIONS: tuple[tuple[float, float], ...] = (
    (0.0, 1.0),
    (_DIAG, _DIAG),
    (1.0, 0.0),
    (_DIAG, -_DIAG),
    (0.0, -1.0),
    (-_DIAG, -_DIAG),
    (-1.0, 0.0),
    (-_DIAG, _DIAG),
    (0.0, 0.0),
)

HEADINGS: tuple[float, ...] = tuple(
    math.atan2(dy, dx) for dx, dy in DIRECTIONS[:8]
)

# Precomputed ray directions per compass heading so that scalar sensing and the
# vectorized evaluation path use bit-identical direction vectors.
_RAY_DIRS: dict[float, tuple[tuple[float, float], ...]] = {
    h: tuple((math.cos(h + off), math.sin(h + off)) for off in SENSOR_OFFSETS)
    for h in HEADINGS
}
RAY_DIR_TABLE = np.array(
    [[_RAY_DIRS[h][k] for k in range(3)] for h in HEADINGS]
)  # (8, 3, 2)
HEADING_INDEX = {h: i for i, h in enumerate(HEADINGS)}


@dataclass
class AgentState:
    """Continuous pose; heading is the direction of the last non-hold move."""

    x: float
    y: float
    heading: float = HEADINGS[Action.E]


@dataclass(frozen=True)
class SensorReading:
    """Raw (pre-binarization) channels; range distances are inf when nothing
    is detected within SENSOR_RANGE."""

    range_distances: tuple[float, float, float]
    light: float
    rough: float
    in_target: float
    extras: tuple[float, ...] = ()


def step(state: AgentState, action: Action, world: WorldMap) -> tuple[AgentState, bool]:
    """Advance the agent one tick. A move whose path crosses an obstacle is
    rejected in place (bumped=True); moves past the arena edge are clamped."""
    if action == Action.HOLD:
        return AgentState(state.x, state.y, state.heading), False
    ddx, ddy = DIRECTIONS[action]
    nx = min(max(state.x + STEP_LENGTH * ddx, 0.0), world.width)
    ny = min(max(state.y + STEP_LENGTH * ddy, 0.0), world.height)
    heading = HEADINGS[action]
    if world.segment_blocked(state.x, state.y, nx, ny):
        return AgentState(state.x, state.y, heading), True
    return AgentState(nx, ny, heading), False


def _ray_directions(heading: float) -> tuple[tuple[float, float], ...]:
    dirs = _RAY_DIRS.get(heading)
    if dirs is None:
        dirs = tuple((math.cos(heading + off), math.sin(heading + off)) for off in SENSOR_OFFSETS)
    return dirs


def sense(
    state: AgentState,
    world: WorldMap,
    rng: np.random.Generator | None = None,
    noise_sd: float = NOISE_SD,
) -> SensorReading:
    """Cast the three range sensors and read the region detectors.

    Passing rng=None (or noise_sd=0) disables noise. Noise is added to each
    raw scalar, and range readings are reported only if the noisy distance is
    still within SENSOR_RANGE; a fixed-size noise vector is drawn per call so
    the stream of random draws does not depend on what the sensors saw.
    """
    x, y = state.x, state.y
    obstacles = world.obstacles
    dists = []
    for dx, dy in _ray_directions(state.heading):
        best = INF
        for rect in obstacles:
            d = ray_rect_distance(x, y, dx, dy, rect)
            if d < best:
                best = d
        dists.append(best if best <= CAST_RANGE else INF)
    light = 1.0 if world.light_region.contains(x, y) else 0.0
    rough = 1.0 if world.rough_region.contains(x, y) else 0.0
    target = 1.0 if world.in_target(x, y) else 0.0
    extras = [1.0 if r.contains(x, y) else 0.0 for r in world.extra_regions]

    if rng is not None and noise_sd > 0.0:
        noise = rng.normal(0.0, noise_sd, size=6 + len(extras))
        dists = [d + n if d < INF else INF for d, n in zip(dists, noise[:3])]
        light += noise[3]
        rough += noise[4]
        target += noise[5]
        extras = [v + n for v, n in zip(extras, noise[6:])]

    ranges = tuple(d if d <= SENSOR_RANGE else INF for d in dists)
    return SensorReading(ranges, light, rough, target, tuple(extras))


def n_features(world: WorldMap) -> int:
    return world.n_env_features + 2 * N_LOC_BINS


def extract_features(reading: SensorReading, state: AgentState) -> np.ndarray:
    """Binarize a reading into the full feature vector.

    Layout: [obstacle, light, rough, target, extras..., 30 x-bins, 30 y-bins].
    The leading block is the environment feature vector fed to clustering; the
    one-hot position bins only participate in value learning.
    """
    n_env = 4 + len(reading.extras)
    f = np.zeros(n_env + 2 * N_LOC_BINS, dtype=np.int8)
    if any(d < INF for d in reading.range_distances):
        f[0] = 1
    if reading.light >= BINARY_THRESHOLD:
        f[1] = 1
    if reading.rough >= BINARY_THRESHOLD:
        f[2] = 1
    if reading.in_target >= BINARY_THRESHOLD:
        f[3] = 1
    for j, v in enumerate(reading.extras):
        if v >= BINARY_THRESHOLD:
            f[4 + j] = 1
    xbin = min(max(int(state.x), 0), N_LOC_BINS - 1)
    ybin = min(max(int(state.y), 0), N_LOC_BINS - 1)
    f[n_env + xbin] = 1
    f[n_env + N_LOC_BINS + ybin] = 1
    return f


def env_features(f: np.ndarray, world: WorldMap) -> np.ndarray:
    """The environment block of a full feature vector."""
    return f[: world.n_env_features]


def cell_env_features(world: WorldMap, col: int, row: int) -> np.ndarray:
    """Noiseless environment features of a grid cell center, for evaluation.

    The obstacle bit is heading-free here: set when any obstacle lies within
    SENSOR_RANGE of the center, which over-approximates what the three rays
    can see from any single heading.
    """
    x, y = col + 0.5, row + 0.5
    f = np.zeros(world.n_env_features, dtype=np.int8)
    if world.nearest_obstacle_distance(x, y) <= SENSOR_RANGE:
        f[0] = 1
    if world.light_region.contains(x, y):
        f[1] = 1
    if world.rough_region.contains(x, y):
        f[2] = 1
    if world.in_target(x, y):
        f[3] = 1
    for j, r in enumerate(world.extra_regions):
        if r.contains(x, y):
            f[4 + j] = 1
    return f
