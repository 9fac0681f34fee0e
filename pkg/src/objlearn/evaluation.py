"""Policy quality scoring against an A* oracle.

Greedy rollouts (noiseless, deterministic apart from seeded tie-breaking) are
compared with shortest grid paths; a start is "acceptable" when the rollout
reaches the objective in at most acceptance_ratio times the A* length.
Coverage is the percentage of acceptable starts over the cell-center grid, and
an objective counts as converged once coverage exceeds the threshold.

Internally coverage uses a multi-source BFS distance field (exact for the
unit-cost 8-connected grid, equal to per-start A*) and a lockstep vectorized
rollout that reproduces the scalar rollout bit-for-bit.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .env import (
    DIRECTIONS,
    RAY_DIR_TABLE,
    SENSOR_RANGE,
    STEP_LENGTH,
    Action,
    AgentState,
    N_LOC_BINS,
    cell_env_features,
    extract_features,
    sense,
    step,
)
from .learning import matches
from .world import INF, WorldMap


@dataclass(frozen=True)
class EvalConfig:
    acceptance_ratio: float = 1.5
    convergence_threshold: float = 0.5  # strictly-greater fraction of acceptable starts
    rollout_cap: int = 500
    grid_stride: int = 1
    tie_seed: int = 0
    convergence_budget: int = 400

    def __post_init__(self):
        if self.acceptance_ratio <= 1.0:
            raise ValueError("acceptance_ratio must be > 1")
        if not (0.0 < self.convergence_threshold < 1.0):
            raise ValueError("convergence_threshold must be in (0, 1)")
        if self.rollout_cap < 1 or self.grid_stride < 1 or self.convergence_budget < 1:
            raise ValueError("rollout_cap, grid_stride and convergence_budget must be >= 1")


@dataclass
class PathResult:
    length: int
    reached: bool
    trajectory: list[tuple[float, float]]


# --------------------------------------------------------------------------
# Grid model: cell (col, row) has center (col + 0.5, row + 0.5); a move between
# adjacent cells is allowed when the segment joining their centers misses every
# obstacle. All moves cost one tick regardless of direction.
# --------------------------------------------------------------------------

_EIGHT = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))


def grid_shape(world: WorldMap) -> tuple[int, int]:
    return int(round(world.width)), int(round(world.height))


@lru_cache(maxsize=16)
def _nav_graph(world: WorldMap):
    """Blocked-cell mask and adjacency lists for the cell grid of a world."""
    ncols, nrows = grid_shape(world)
    blocked = np.zeros((ncols, nrows), dtype=bool)
    for c in range(ncols):
        for r in range(nrows):
            blocked[c, r] = world.in_obstacle(c + 0.5, r + 0.5)
    adj: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for c in range(ncols):
        for r in range(nrows):
            if blocked[c, r]:
                adj[(c, r)] = []
                continue
            out = []
            for dc, dr in _EIGHT:
                c2, r2 = c + dc, r + dr
                if not (0 <= c2 < ncols and 0 <= r2 < nrows) or blocked[c2, r2]:
                    continue
                if not world.segment_blocked(c + 0.5, r + 0.5, c2 + 0.5, r2 + 0.5):
                    out.append((c2, r2))
            adj[(c, r)] = out
    return blocked, adj


def cell_blocked(world: WorldMap, col: int, row: int) -> bool:
    return bool(_nav_graph(world)[0][col, row])


def goal_cells(world: WorldMap, objective) -> list[tuple[int, int]]:
    """Cells whose noiseless features satisfy the objective (and are standable)."""
    ncols, nrows = grid_shape(world)
    blocked, _ = _nav_graph(world)
    return [
        (c, r)
        for c in range(ncols)
        for r in range(nrows)
        if not blocked[c, r] and matches(objective, cell_env_features(world, c, r))
    ]


def astar_length(world: WorldMap, start_cell: tuple[int, int], objective) -> int | None:
    """Shortest tick count from a start cell to any objective-satisfying cell,
    with the Chebyshev distance to the nearest goal as the admissible
    heuristic. None when no goal cell is reachable."""
    goals = set(goal_cells(world, objective))
    if not goals:
        return None
    if start_cell in goals:
        return 0
    goal_arr = np.array(sorted(goals))
    _, adj = _nav_graph(world)

    def h(cell):
        d = np.abs(goal_arr - cell)
        return int(np.max(d, axis=1).min())

    open_heap = [(h(start_cell), 0, start_cell)]
    g_score = {start_cell: 0}
    while open_heap:
        f, g, cell = heapq.heappop(open_heap)
        if cell in goals:
            return g
        if g > g_score.get(cell, -1):
            continue
        for nxt in adj[cell]:
            g2 = g + 1
            if g2 < g_score.get(nxt, 1 << 30):
                g_score[nxt] = g2
                heapq.heappush(open_heap, (g2 + h(nxt), g2, nxt))
    return None


@lru_cache(maxsize=64)
def _distance_field(world: WorldMap, pattern: tuple[int, ...]) -> np.ndarray:
    """BFS distances from every cell to the objective's goal set (-1 when
    unreachable). Exact for unit edge costs, so it equals per-start A*."""
    ncols, nrows = grid_shape(world)
    _, adj = _nav_graph(world)
    pat = np.array(pattern, dtype=np.int8)
    dist = np.full((ncols, nrows), -1, dtype=np.int64)
    frontier = goal_cells(world, pat)
    for c, r in frontier:
        dist[c, r] = 0
    d = 0
    while frontier:
        nxt = []
        for cell in frontier:
            for c2, r2 in adj[cell]:
                if dist[c2, r2] < 0:
                    dist[c2, r2] = d + 1
                    nxt.append((c2, r2))
        frontier = nxt
        d += 1
    return dist


def start_cells(world: WorldMap, objective, stride: int = 1) -> list[tuple[int, int]]:
    """Evaluation start grid: cell centers excluding obstacle cells and cells
    already satisfying the objective."""
    ncols, nrows = grid_shape(world)
    blocked, _ = _nav_graph(world)
    return [
        (c, r)
        for c in range(0, ncols, stride)
        for r in range(0, nrows, stride)
        if not blocked[c, r] and not matches(objective, cell_env_features(world, c, r))
    ]


# --------------------------------------------------------------------------
# Greedy rollouts
# --------------------------------------------------------------------------


def _greedy_from_table(w: np.ndarray, active: np.ndarray, rng: np.random.Generator) -> int:
    q = w[:, active].sum(axis=1)
    best = np.flatnonzero(q == q.max())
    if len(best) == 1:
        return int(best[0])
    return int(rng.choice(best))


def tie_rng_for_cell(tie_seed: int, col: int, row: int) -> np.random.Generator:
    return np.random.default_rng((tie_seed, col, row))


def greedy_rollout(
    table: np.ndarray,
    objective,
    start: AgentState,
    world: WorldMap,
    cap: int,
    tie_rng: np.random.Generator,
) -> PathResult:
    """Roll the noiseless environment under the greedy policy until the
    objective's pattern is sensed or the step cap is hit."""
    n_env = world.n_env_features
    state = AgentState(start.x, start.y, start.heading)
    trajectory = [(state.x, state.y)]
    f = extract_features(sense(state, world, rng=None), state)
    if matches(objective, f[:n_env]):
        return PathResult(0, True, trajectory)
    length = 0
    for _ in range(cap):
        a = _greedy_from_table(table, np.flatnonzero(f), tie_rng)
        state, _ = step(state, Action(a), world)
        length += 1
        trajectory.append((state.x, state.y))
        f = extract_features(sense(state, world, rng=None), state)
        if matches(objective, f[:n_env]):
            return PathResult(length, True, trajectory)
    return PathResult(length, False, trajectory)


# --------------------------------------------------------------------------
# Vectorized lockstep rollouts (exact mirror of the scalar path)
# --------------------------------------------------------------------------


def _batch_ray_obstacle_bit(world: WorldMap, pos: np.ndarray, hidx: np.ndarray) -> np.ndarray:
    """Obstacle-seen bit per agent from the three range sensors."""
    k = len(pos)
    seen = np.zeros(k, dtype=bool)
    ox, oy = pos[:, 0], pos[:, 1]
    dirs = RAY_DIR_TABLE[hidx]  # (k, 3, 2)
    for ray in range(3):
        dx = dirs[:, ray, 0]
        dy = dirs[:, ray, 1]
        best = np.full(k, INF)
        for rect in world.obstacles:
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (rect.x0 - ox) / dx
                t2 = (rect.x1 - ox) / dx
                s1 = (rect.y0 - oy) / dy
                s2 = (rect.y1 - oy) / dy
            tx0 = np.minimum(t1, t2)
            tx1 = np.maximum(t1, t2)
            ty0 = np.minimum(s1, s2)
            ty1 = np.maximum(s1, s2)
            zx = dx == 0.0
            if zx.any():
                inx = (rect.x0 <= ox) & (ox <= rect.x1)
                tx0 = np.where(zx, np.where(inx, -INF, INF), tx0)
                tx1 = np.where(zx, np.where(inx, INF, -INF), tx1)
            zy = dy == 0.0
            if zy.any():
                iny = (rect.y0 <= oy) & (oy <= rect.y1)
                ty0 = np.where(zy, np.where(iny, -INF, INF), ty0)
                ty1 = np.where(zy, np.where(iny, INF, -INF), ty1)
            tnear = np.maximum(tx0, ty0)
            tfar = np.minimum(tx1, ty1)
            d = np.where((tfar >= tnear) & (tfar >= 0.0), np.maximum(tnear, 0.0), INF)
            np.minimum(best, d, out=best)
        seen |= best <= SENSOR_RANGE
    return seen


def _batch_env_bits(world: WorldMap, pos: np.ndarray, hidx: np.ndarray) -> np.ndarray:
    k = len(pos)
    x, y = pos[:, 0], pos[:, 1]
    bits = np.zeros((k, world.n_env_features), dtype=np.int8)
    bits[:, 0] = _batch_ray_obstacle_bit(world, pos, hidx)
    lr = world.light_region
    bits[:, 1] = (lr.x0 <= x) & (x <= lr.x1) & (lr.y0 <= y) & (y <= lr.y1)
    rr = world.rough_region
    bits[:, 2] = (rr.x0 <= x) & (x <= rr.x1) & (rr.y0 <= y) & (y <= rr.y1)
    tx, ty = world.target_center
    bits[:, 3] = (x - tx) ** 2 + (y - ty) ** 2 <= world.target_radius**2
    for j, er in enumerate(world.extra_regions):
        bits[:, 4 + j] = (er.x0 <= x) & (x <= er.x1) & (er.y0 <= y) & (er.y1 >= y)
    return bits


def _batch_segment_hits(world: WorldMap, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-agent: does the move segment a->b touch any obstacle?"""
    ax, ay = a[:, 0], a[:, 1]
    dx = b[:, 0] - ax
    dy = b[:, 1] - ay
    hit = np.zeros(len(a), dtype=bool)
    for rect in world.obstacles:
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (rect.x0 - ax) / dx
            t2 = (rect.x1 - ax) / dx
            s1 = (rect.y0 - ay) / dy
            s2 = (rect.y1 - ay) / dy
        tx0 = np.minimum(t1, t2)
        tx1 = np.maximum(t1, t2)
        ty0 = np.minimum(s1, s2)
        ty1 = np.maximum(s1, s2)
        zx = dx == 0.0
        if zx.any():
            inx = (rect.x0 <= ax) & (ax <= rect.x1)
            tx0 = np.where(zx, np.where(inx, -INF, INF), tx0)
            tx1 = np.where(zx, np.where(inx, INF, -INF), tx1)
        zy = dy == 0.0
        if zy.any():
            iny = (rect.y0 <= ay) & (ay <= rect.y1)
            ty0 = np.where(zy, np.where(iny, -INF, INF), ty0)
            ty1 = np.where(zy, np.where(iny, INF, -INF), ty1)
        u1 = np.maximum(np.maximum(tx0, ty0), 0.0)
        u2 = np.minimum(np.minimum(tx1, ty1), 1.0)
        hit |= u1 <= u2
    return hit


_DIR_ARRAY = np.array(DIRECTIONS)  # (9, 2)


def batch_greedy_rollout(
    table: np.ndarray,
    objective,
    starts: list[tuple[int, int]],
    world: WorldMap,
    cap: int,
    tie_seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Lockstep greedy rollouts from every start cell center.

    Bit-identical to looping greedy_rollout over the starts with
    tie_rng_for_cell generators; returns (lengths, reached).
    """
    pattern = np.asarray(getattr(objective, "pattern", objective), dtype=np.int8)
    n_env = world.n_env_features
    k = len(starts)
    pos = np.array([(c + 0.5, r + 0.5) for c, r in starts], dtype=float)
    hidx = np.full(k, int(Action.E), dtype=np.int64)
    gens = [tie_rng_for_cell(tie_seed, c, r) for c, r in starts]
    lengths = np.zeros(k, dtype=np.int64)
    reached = np.zeros(k, dtype=bool)
    alive = np.ones(k, dtype=bool)

    # Padded active-index matrix: env bits (or a zero pad column), then the two
    # one-hot position bins, in ascending feature order so padded sums equal
    # the scalar sum over active indices.
    w2 = np.concatenate([table, np.zeros((table.shape[0], 1))], axis=1)
    pad = table.shape[1]

    def env_and_match(idx: np.ndarray):
        bits = _batch_env_bits(world, pos[idx], hidx[idx])
        ok = (pattern < 0) | (bits == pattern)
        return bits, ok.all(axis=1)

    live_idx = np.flatnonzero(alive)
    bits, matched = env_and_match(live_idx)
    reached[live_idx[matched]] = True
    alive[live_idx[matched]] = False
    bits = bits[~matched]

    for _ in range(cap):
        live_idx = np.flatnonzero(alive)
        if len(live_idx) == 0:
            break
        p = pos[live_idx]
        xbin = np.clip(p[:, 0].astype(np.int64), 0, N_LOC_BINS - 1)
        ybin = np.clip(p[:, 1].astype(np.int64), 0, N_LOC_BINS - 1)
        m = len(live_idx)
        idxmat = np.full((m, n_env + 2), pad, dtype=np.int64)
        env_idx = np.arange(n_env)
        idxmat[:, :n_env] = np.where(bits.astype(bool), env_idx, pad)
        idxmat[:, n_env] = n_env + xbin
        idxmat[:, n_env + 1] = n_env + N_LOC_BINS + ybin
        q = w2[:, idxmat].sum(axis=2)  # (actions, m)
        qmax = q.max(axis=0)
        tie_mask = q == qmax
        n_best = tie_mask.sum(axis=0)
        actions = np.argmax(tie_mask, axis=0)
        for j in np.flatnonzero(n_best > 1):
            best = np.flatnonzero(tie_mask[:, j])
            actions[j] = gens[live_idx[j]].choice(best)

        delta = STEP_LENGTH * _DIR_ARRAY[actions]
        npos = p + delta
        np.clip(npos[:, 0], 0.0, world.width, out=npos[:, 0])
        np.clip(npos[:, 1], 0.0, world.height, out=npos[:, 1])
        moving = actions != int(Action.HOLD)
        bumped = np.zeros(m, dtype=bool)
        if moving.any():
            bumped[moving] = _batch_segment_hits(world, p[moving], npos[moving])
        npos[bumped] = p[bumped]
        pos[live_idx] = npos
        hidx[live_idx] = np.where(moving, actions, hidx[live_idx])
        lengths[live_idx] += 1

        bits, matched = env_and_match(live_idx)
        reached[live_idx[matched]] = True
        alive[live_idx[matched]] = False
        bits = bits[~matched]
    return lengths, reached


# --------------------------------------------------------------------------
# Coverage and convergence
# --------------------------------------------------------------------------


def coverage_percentage(
    table: np.ndarray,
    objective,
    world: WorldMap,
    cfg: EvalConfig,
) -> float:
    """Percentage of grid starts whose greedy rollout reaches the objective
    within acceptance_ratio times the optimal tick count."""
    pattern = np.asarray(getattr(objective, "pattern", objective), dtype=np.int8)
    starts = start_cells(world, pattern, cfg.grid_stride)
    if not starts:
        return 0.0
    field = _distance_field(world, tuple(int(v) for v in pattern))
    opt = np.array([field[c, r] for c, r in starts], dtype=np.int64)
    lengths, reached = batch_greedy_rollout(
        table, pattern, starts, world, cfg.rollout_cap, cfg.tie_seed
    )
    ok = reached & (opt >= 0) & (lengths <= cfg.acceptance_ratio * opt)
    return 100.0 * float(ok.sum()) / len(starts)


def is_converged(coverage_pct: float, cfg: EvalConfig) -> bool:
    return coverage_pct > 100.0 * cfg.convergence_threshold


def episodes_to_convergence(trainer, cfg: EvalConfig, budget: int | None = None) -> int | None:
    """Train episode by episode until the trainer's primary objective is
    converged (coverage above threshold); returns the episode count, 0 when
    already converged, or None when the budget runs out."""
    budget = cfg.convergence_budget if budget is None else budget
    pattern = trainer.primary.objective.pattern
    if is_converged(coverage_percentage(trainer.primary.w, pattern, trainer.world, cfg), cfg):
        return 0
    for ep in range(1, budget + 1):
        trainer.run_episode()
        if is_converged(coverage_percentage(trainer.primary.w, pattern, trainer.world, cfg), cfg):
            return ep
    return None
