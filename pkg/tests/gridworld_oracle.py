"""Tiny deterministic gridworld plus a value-iteration oracle.

Used to check that the Q-lambda learner, driven tabularly (joint one-hot
features), recovers the optimal greedy policy of an enumerable MDP.
"""
import numpy as np

from objlearn.env import Action

MOVES = {
    Action.N: (0, 1),
    Action.NE: (1, 1),
    Action.E: (1, 0),
    Action.SE: (1, -1),
    Action.S: (0, -1),
    Action.SW: (-1, -1),
    Action.W: (-1, 0),
    Action.NW: (-1, 1),
    Action.HOLD: (0, 0),
}


class TinyGrid:
    """size x size cells, 9 compass/hold actions, walls clamp, one goal cell."""

    def __init__(self, size=5, goal=(4, 4), goal_reward=100.0, living_penalty=-10.0):
        self.size = size
        self.goal = goal
        self.goal_reward = goal_reward
        self.living_penalty = living_penalty
        self.n_states = size * size

    def state_index(self, cell):
        return cell[0] * self.size + cell[1]

    def transition(self, cell, action):
        dx, dy = MOVES[Action(action)]
        nx = min(max(cell[0] + dx, 0), self.size - 1)
        ny = min(max(cell[1] + dy, 0), self.size - 1)
        nxt = (nx, ny)
        reward = self.goal_reward if nxt == self.goal else self.living_penalty
        return nxt, reward, nxt == self.goal

    def features(self, cell):
        f = np.zeros(self.n_states, dtype=np.int8)
        f[self.state_index(cell)] = 1
        return f

    def non_goal_cells(self):
        return [
            (x, y)
            for x in range(self.size)
            for y in range(self.size)
            if (x, y) != self.goal
        ]


def value_iteration(grid: TinyGrid, gamma: float, tol=1e-12):
    """Exact optimal Q for the episodic MDP (goal is absorbing with value 0)."""
    q = np.zeros((grid.n_states, 9))
    cells = grid.non_goal_cells()
    while True:
        delta = 0.0
        for cell in cells:
            s = grid.state_index(cell)
            for a in range(9):
                nxt, r, terminal = grid.transition(cell, a)
                target = r if terminal else r + gamma * q[grid.state_index(nxt)].max()
                delta = max(delta, abs(q[s, a] - target))
                q[s, a] = target
        if delta < tol:
            return q


def optimal_action_sets(grid: TinyGrid, gamma: float):
    q = value_iteration(grid, gamma)
    out = {}
    for cell in grid.non_goal_cells():
        row = q[grid.state_index(cell)]
        out[cell] = set(np.flatnonzero(row >= row.max() - 1e-9).tolist())
    return out
