"""Q-lambda learners: linear Q-values over binary features with replacing traces.

One learner per objective. Q(s, a) is the sum of the weights of the active
features in action a's row, updates are standard off-policy Q-lambda with
replacing traces (trace set to 1 on active features of the visited pair,
decayed by gamma*lambda afterwards), and each learner keeps a running mean of
|TD error| as a reliability score.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DONT_CARE = -1


class DivergenceError(RuntimeError):
    """Raised when a TD update produces a non-finite error (learning diverged)."""


@dataclass(frozen=True)
class LearnerParams:
    alpha: float = 0.3
    gamma: float = 0.9
    lambda_: float = 0.9
    watkins_cut: bool = True

    def __post_init__(self):
        if not (0 < self.alpha <= 1):
            raise ValueError("alpha must be in (0, 1]")
        if not (0 <= self.gamma < 1):
            raise ValueError("gamma must be in [0, 1)")
        if not (0 <= self.lambda_ <= 1):
            raise ValueError("lambda must be in [0, 1]")


@dataclass(frozen=True)
class RewardConfig:
    goal_reward: float = 100.0
    living_penalty: float = -10.0
    bump_penalty: float = -100.0


@dataclass
class ObjectiveSpec:
    """Target feature pattern over the environment features.

    Elements are 0, 1 or DONT_CARE; primary objectives may use DONT_CARE,
    secondary patterns are fully specified (binarized cluster means).
    """

    pattern: np.ndarray
    kind: str = "primary"  # "primary" | "secondary"
    source_cluster: int | None = None

    def __post_init__(self):
        self.pattern = np.asarray(self.pattern, dtype=np.int8)


def matches(spec, f_e) -> bool:
    """True when every non-DONT_CARE pattern element equals the feature."""
    pattern = getattr(spec, "pattern", spec)
    return bool(np.all((pattern < 0) | (pattern == f_e)))


def reward_value(matched: bool, bumped: bool, cfg: RewardConfig) -> float:
    r = cfg.goal_reward if matched else cfg.living_penalty
    if bumped:
        r += cfg.bump_penalty
    return r


def compute_reward(spec, f_e_new, bumped: bool, cfg: RewardConfig) -> float:
    """Per-step reward for one objective: goal reward on a pattern match, the
    living penalty otherwise, plus the bump penalty when the move bumped."""
    return reward_value(matches(spec, f_e_new), bumped, cfg)


class QLambdaLearner:
    """Weight and trace tables plus the TD update for a single objective."""

    def __init__(
        self,
        objective: ObjectiveSpec,
        params: LearnerParams,
        n_actions: int = 9,
        n_features: int = 64,
    ):
        self.objective = objective
        self.params = params
        self.n_actions = n_actions
        self.n_features = n_features
        self.w = np.zeros((n_actions, n_features))
        self.e = np.zeros((n_actions, n_features))
        self._decay = params.gamma * params.lambda_
        self._td_abs_sum = 0.0
        self._td_count = 0

    # -- value queries ------------------------------------------------------

    def q_values_idx(self, active: np.ndarray) -> np.ndarray:
        """Q of every action given the active feature indices."""
        return self.w[:, active].sum(axis=1)

    def q_values(self, features: np.ndarray) -> np.ndarray:
        return self.q_values_idx(np.flatnonzero(features))

    def q_value(self, features: np.ndarray, action: int) -> float:
        return float(self.w[action, np.flatnonzero(features)].sum())

    # -- action selection ---------------------------------------------------

    def greedy_action_idx(self, active: np.ndarray, rng: np.random.Generator) -> int:
        q = self.q_values_idx(active)
        best = np.flatnonzero(q == q.max())
        if len(best) == 1:
            return int(best[0])
        return int(rng.choice(best))

    def greedy_action(self, features: np.ndarray, rng: np.random.Generator) -> int:
        return self.greedy_action_idx(np.flatnonzero(features), rng)

    def epsilon_greedy_idx(self, active: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
        if rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return self.greedy_action_idx(active, rng)

    def epsilon_greedy(self, features: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
        return self.epsilon_greedy_idx(np.flatnonzero(features), epsilon, rng)

    # -- learning -----------------------------------------------------------

    def begin_episode(self) -> None:
        self.e[:] = 0.0

    def td_update_idx(
        self,
        active_s: np.ndarray,
        action: int,
        reward: float,
        active_s2: np.ndarray,
        terminal: bool = False,
        behavior_was_greedy: bool = True,
    ) -> float:
        """One Q-lambda update; returns the TD error.

        Replacing traces: the visited (action, feature) pairs get trace 1 and
        the same features' traces under every other action are zeroed. The TD
        error delta = r - Q(s,a) (+ gamma max_a' Q(s',a') unless terminal)
        updates every weight through the traces, and traces decay by
        gamma*lambda. A terminal step ends this learner's episode, so its
        traces are cleared; with the Watkins cut enabled, a non-greedy
        behavior action also clears all traces after the update.
        """
        w = self.w
        e = self.e
        e[:, active_s] = 0.0
        e[action, active_s] = 1.0
        delta = reward - w[action, active_s].sum()
        if not terminal:
            delta += self.params.gamma * w[:, active_s2].sum(axis=1).max()
        delta = float(delta)
        if not math.isfinite(delta):
            raise DivergenceError(
                f"non-finite TD error for objective {self.objective.pattern.tolist()}"
            )
        w += (self.params.alpha * delta) * e
        e *= self._decay
        if terminal or (self.params.watkins_cut and not behavior_was_greedy):
            e[:] = 0.0
        self._td_abs_sum += abs(delta)
        self._td_count += 1
        return delta

    def td_update(
        self,
        s_features: np.ndarray,
        action: int,
        reward: float,
        s2_features: np.ndarray,
        terminal: bool = False,
        behavior_was_greedy: bool = True,
    ) -> float:
        return self.td_update_idx(
            np.flatnonzero(s_features),
            action,
            reward,
            np.flatnonzero(s2_features),
            terminal,
            behavior_was_greedy,
        )

    def is_greedy_action(self, active: np.ndarray, action: int) -> bool:
        """Whether the action is among this learner's greedy set (Watkins cut)."""
        q = self.q_values_idx(active)
        return bool(q[action] == q.max())

    # -- stats & serialization ----------------------------------------------

    def avg_td_error(self) -> float:
        if self._td_count == 0:
            raise ValueError("no updates recorded")
        return self._td_abs_sum / self._td_count

    @property
    def updates(self) -> int:
        return self._td_count

    def state_dict(self) -> dict:
        return {
            "pattern": self.objective.pattern.tolist(),
            "kind": self.objective.kind,
            "source_cluster": self.objective.source_cluster,
            "weights": self.w.tolist(),
            "td_abs_sum": self._td_abs_sum,
            "td_count": self._td_count,
        }

    def load_state_dict(self, state: dict) -> None:
        w = np.array(state["weights"], dtype=float)
        if w.shape != self.w.shape:
            raise ValueError(f"weight shape mismatch: {w.shape} vs {self.w.shape}")
        self.w = w
        self.objective = ObjectiveSpec(
            np.array(state["pattern"], dtype=np.int8),
            state["kind"],
            state.get("source_cluster"),
        )
        self._td_abs_sum = float(state["td_abs_sum"])
        self._td_count = int(state["td_count"])
