"""Training orchestration: one behavior stream feeds clustering and all learners.

Each episode runs the primary objective's epsilon-greedy policy from a random
non-goal start. Every newly sensed environment vector is routed through the
cluster store; a freshly seeded cluster immediately gets its own zero-weight
learner, and every learner (primary plus one per cluster) receives an
off-policy update from the shared transition. Only the primary's tables ever
influence action selection, so cluster parameters and secondary learning can
change without perturbing the behavior stream.

The per-step fan-out of TD updates runs over a stacked weight/trace bank (one
vectorized update for all learners); `use_bank=False` switches to a plain
per-learner loop, which the tests hold bit-identical to the bank.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterStore
from .config import RunConfig
from .env import Action, AgentState, HEADINGS, extract_features, n_features, sense, step
from .learning import (
    DivergenceError,
    ObjectiveSpec,
    QLambdaLearner,
    matches,
    reward_value,
)

_BANK_INITIAL_CAPACITY = 16


def secondary_spec_from_cluster(mean: np.ndarray) -> np.ndarray:
    """Binarize a cluster mean into a fully specified objective pattern
    (element >= 0.5 rounds to 1)."""
    return (np.asarray(mean) >= 0.5).astype(np.int8)


@dataclass
class StepRecord:
    episode: int
    step: int
    x: float
    y: float
    action: int
    bumped: bool
    rewards: list[float]  # primary first, then secondaries in cluster order
    cluster_created: int | None


@dataclass
class EpisodeResult:
    episode: int
    steps: int
    success: bool
    records: list[StepRecord] | None = None


@dataclass
class RunSummary:
    episodes: int
    total_steps: int
    successes: int
    n_clusters: int
    clusters_by_episode: list[int]
    learner_stats: list[dict]


class Trainer:
    """Run state for one seeded training run."""

    def __init__(
        self,
        config: RunConfig,
        primary_weights: np.ndarray | None = None,
        use_bank: bool = True,
    ):
        self.config = config
        self.world = config.world
        self.rng = np.random.default_rng(config.seed)
        self.n_features = n_features(config.world)
        self.n_env = config.world.n_env_features
        self.use_bank = use_bank
        self.store = ClusterStore(dim=self.n_env, params=config.clustering)
        self.secondaries: list[QLambdaLearner] = []
        self.episode_counter = 0
        self.step_counter = 0
        self.clusters_by_episode: list[int] = []
        if use_bank:
            self._bank_capacity = _BANK_INITIAL_CAPACITY
            self._w = np.zeros((self._bank_capacity, len(Action), self.n_features))
            self._e = np.zeros_like(self._w)
            self._scratch = np.zeros_like(self._w)
            self._td_abs = np.zeros(self._bank_capacity)
            self._td_cnt = np.zeros(self._bank_capacity, dtype=np.int64)
            self._rows = 0
        self.primary = self._new_learner(
            ObjectiveSpec(np.array(config.primary_pattern, dtype=np.int8), "primary")
        )
        if primary_weights is not None:
            if primary_weights.shape != self.primary.w.shape:
                raise ValueError("primary weight shape mismatch")
            self.primary.w[:] = primary_weights

    # -- learner bank -----------------------------------------------------------

    def _new_learner(self, spec: ObjectiveSpec) -> QLambdaLearner:
        lrn = QLambdaLearner(
            spec, self.config.learner, n_actions=len(Action), n_features=self.n_features
        )
        if self.use_bank:
            row = self._rows
            if row == self._bank_capacity:
                self._grow_bank()
            self._rows += 1
            lrn.w = self._w[row]  # views: the bank is the single storage
            lrn.e = self._e[row]
        return lrn

    def _grow_bank(self) -> None:
        self._bank_capacity *= 2
        for name in ("_w", "_e", "_scratch"):
            old = getattr(self, name)
            new = np.zeros((self._bank_capacity, *old.shape[1:]))
            new[: old.shape[0]] = old
            setattr(self, name, new)
        self._td_abs = np.concatenate([self._td_abs, np.zeros(len(self._td_abs))])
        self._td_cnt = np.concatenate([self._td_cnt, np.zeros(len(self._td_cnt), dtype=np.int64)])
        for i, lrn in enumerate([self.primary, *self.secondaries]):
            lrn.w = self._w[i]
            lrn.e = self._e[i]

    def _sync_stats(self) -> None:
        """Copy bank TD-error accumulators into the learner objects and refresh
        the secondaries' binarized patterns from the drifting cluster means."""
        if not self.use_bank:
            return
        for i, lrn in enumerate([self.primary, *self.secondaries]):
            lrn._td_abs_sum = float(self._td_abs[i])
            lrn._td_count = int(self._td_cnt[i])
        for i, lrn in enumerate(self.secondaries):
            lrn.objective.pattern = secondary_spec_from_cluster(self.store.clusters[i].mean)

    # -- starts ---------------------------------------------------------------

    def random_start(self) -> AgentState:
        """Uniform non-goal start pose: outside obstacles and not already
        satisfying the primary objective (noiseless check), heading east."""
        world = self.world
        pattern = self.primary.objective.pattern
        while True:
            x = self.rng.uniform(0.0, world.width)
            y = self.rng.uniform(0.0, world.height)
            if world.in_obstacle(x, y):
                continue
            state = AgentState(x, y, HEADINGS[Action.E])
            f = extract_features(sense(state, world, rng=None), state)
            if not matches(pattern, f[: self.n_env]):
                return state

    # -- episodes ---------------------------------------------------------------

    def _spawn_secondary(self, cluster_index: int) -> None:
        mean = self.store.clusters[cluster_index].mean
        spec = ObjectiveSpec(secondary_spec_from_cluster(mean), "secondary", cluster_index)
        self.secondaries.append(self._new_learner(spec))

    def _update_learners_bank(self, active, action, active2, fe2, bumped):
        """One stacked TD update for the primary and every secondary."""
        cfg = self.config
        p = cfg.learner
        m = 1 + (len(self.secondaries) if cfg.learn_secondaries else 0)
        matched = np.empty(m, dtype=bool)
        pat = self.primary.objective.pattern
        matched[0] = bool(np.all((pat < 0) | (pat == fe2)))
        if m > 1:
            sec_pats = (self.store.means_matrix >= 0.5).astype(np.int8)
            matched[1:] = (sec_pats == fe2).all(axis=1)
        rewards = np.where(matched, cfg.reward.goal_reward, cfg.reward.living_penalty)
        if bumped:
            rewards = rewards + cfg.reward.bump_penalty

        w = self._w[:m]
        e = self._e[:m]
        q1 = w[:, :, active].sum(axis=-1)  # (m, actions), pre-update values
        e[:, :, active] = 0.0
        e[:, action, active] = 1.0
        delta = rewards - q1[:, action]
        nonterminal = ~matched
        if nonterminal.any():
            q2max = w[:, :, active2].sum(axis=-1).max(axis=1)
            delta[nonterminal] += p.gamma * q2max[nonterminal]
        if not np.isfinite(delta).all():
            bad = int(np.flatnonzero(~np.isfinite(delta))[0])
            lrn = self.primary if bad == 0 else self.secondaries[bad - 1]
            raise DivergenceError(
                f"non-finite TD error for objective {lrn.objective.pattern.tolist()}"
            )
        scratch = self._scratch[:m]
        np.multiply(e, (p.alpha * delta)[:, None, None], out=scratch)
        w += scratch
        e *= p.gamma * p.lambda_
        if p.watkins_cut:
            cut = matched | (q1[:, action] != q1.max(axis=1))
        else:
            cut = matched
        if cut.any():
            e[cut] = 0.0
        self._td_abs[:m] += np.abs(delta)
        self._td_cnt[:m] += 1
        return bool(matched[0]), rewards

    def _update_learners_loop(self, active, action, active2, fe2, bumped):
        """Reference per-learner update path (bit-identical to the bank)."""
        cfg = self.config
        watkins = cfg.learner.watkins_cut
        primary_matched = matches(self.primary.objective.pattern, fe2)
        r = reward_value(primary_matched, bumped, cfg.reward)
        self.primary.td_update_idx(
            active,
            action,
            r,
            active2,
            terminal=primary_matched,
            behavior_was_greedy=self.primary.is_greedy_action(active, action)
            if watkins
            else True,
        )
        rewards = [r]
        if cfg.learn_secondaries:
            for idx, lrn in enumerate(self.secondaries):
                pattern = secondary_spec_from_cluster(self.store.clusters[idx].mean)
                lrn.objective.pattern = pattern
                m = matches(pattern, fe2)
                rs = reward_value(m, bumped, cfg.reward)
                lrn.td_update_idx(
                    active,
                    action,
                    rs,
                    active2,
                    terminal=m,
                    behavior_was_greedy=lrn.is_greedy_action(active, action)
                    if watkins
                    else True,
                )
                rewards.append(rs)
        return primary_matched, rewards

    def run_episode(self, start: AgentState | None = None, record: bool = False) -> EpisodeResult:
        """One episode under the primary's epsilon-greedy behavior policy.

        The caller-provided start must not already satisfy the primary
        objective. Ends on a primary match or after max_steps (failed episode).
        """
        cfg = self.config
        world = self.world
        rng = self.rng
        if start is None:
            start = self.random_start()
        state = start
        self.primary.begin_episode()
        for lrn in self.secondaries:
            lrn.begin_episode()
        reading = sense(state, world, rng=rng, noise_sd=cfg.noise_sd)
        f = extract_features(reading, state)
        records: list[StepRecord] | None = [] if record else None
        success = False
        steps = 0
        update = self._update_learners_bank if self.use_bank else self._update_learners_loop
        for t in range(cfg.max_steps):
            active = np.flatnonzero(f)
            action = self.primary.epsilon_greedy_idx(active, cfg.epsilon, rng)
            new_state, bumped = step(state, Action(action), world)
            reading2 = sense(new_state, world, rng=rng, noise_sd=cfg.noise_sd)
            f2 = extract_features(reading2, new_state)
            fe2 = f2[: self.n_env]
            active2 = np.flatnonzero(f2)

            result = self.store.assign(fe2.astype(float))
            created = result.winner if result.created else None
            if result.created:
                self._spawn_secondary(result.winner)

            primary_matched, rewards = update(active, action, active2, fe2, bumped)

            steps = t + 1
            self.step_counter += 1
            if records is not None:
                records.append(
                    StepRecord(
                        episode=self.episode_counter,
                        step=t,
                        x=new_state.x,
                        y=new_state.y,
                        action=int(action),
                        bumped=bool(bumped),
                        rewards=[float(r) for r in rewards],
                        cluster_created=created,
                    )
                )
            state = new_state
            f = f2
            if primary_matched:
                success = True
                break
        result = EpisodeResult(self.episode_counter, steps, success, records)
        self.episode_counter += 1
        self.clusters_by_episode.append(len(self.store))
        return result

    def run_training(
        self,
        n_episodes: int,
        record: bool = False,
        on_episode=None,
    ) -> tuple[RunSummary, list[EpisodeResult]]:
        """Run n_episodes episodes from random non-goal starts.

        on_episode(trainer, episode_result) is invoked after each episode
        (used for checkpointed evaluation and progress reporting).
        """
        if n_episodes < 1:
            raise ValueError("n_episodes must be >= 1")
        results = []
        for _ in range(n_episodes):
            res = self.run_episode(record=record)
            results.append(res)
            if on_episode is not None:
                on_episode(self, res)
        summary = self.summary()
        summary.successes = sum(1 for r in results if r.success)
        return summary, results

    # -- reporting ---------------------------------------------------------------

    def learner_stats(self) -> list[dict]:
        self._sync_stats()
        stats = []
        for lrn in [self.primary, *self.secondaries]:
            stats.append(
                {
                    "kind": lrn.objective.kind,
                    "cluster_index": lrn.objective.source_cluster,
                    "pattern": lrn.objective.pattern.tolist(),
                    "avg_td_error": lrn.avg_td_error() if lrn.updates else None,
                    "updates": lrn.updates,
                }
            )
        return stats

    def summary(self) -> RunSummary:
        return RunSummary(
            episodes=self.episode_counter,
            total_steps=self.step_counter,
            successes=0,
            n_clusters=len(self.store),
            clusters_by_episode=list(self.clusters_by_episode),
            learner_stats=self.learner_stats(),
        )

    def rank_objectives(self) -> list[tuple[int, float]]:
        """Secondary objectives sorted by reliability: ascending mean |TD error|,
        ties broken by cluster index."""
        if not self.secondaries:
            raise ValueError("no secondary learners to rank")
        self._sync_stats()
        ranked = [
            (i, lrn.avg_td_error() if lrn.updates else math.inf)
            for i, lrn in enumerate(self.secondaries)
        ]
        ranked.sort(key=lambda item: (item[1], item[0]))
        return ranked

    def find_secondary(self, pattern) -> int | None:
        """Index of the secondary whose binarized mean equals the pattern
        (first match in creation order), or None if never discovered."""
        pat = np.asarray(pattern, dtype=np.int8)
        for i in range(len(self.secondaries)):
            mean = self.store.clusters[i].mean
            if np.array_equal(secondary_spec_from_cluster(mean), pat):
                return i
        return None

    # -- persistence ---------------------------------------------------------------

    def snapshot(self) -> dict:
        self._sync_stats()
        return {
            "episode_counter": self.episode_counter,
            "step_counter": self.step_counter,
            "clusters_by_episode": list(self.clusters_by_episode),
            "rng_state": json.loads(json.dumps(self.rng.bit_generator.state)),
            "store": self.store.snapshot(),
            "primary": self.primary.state_dict(),
            "secondaries": [lrn.state_dict() for lrn in self.secondaries],
        }

    @classmethod
    def from_snapshot(cls, config: RunConfig, snap: dict) -> "Trainer":
        trainer = cls(config)
        trainer.episode_counter = int(snap["episode_counter"])
        trainer.step_counter = int(snap["step_counter"])
        trainer.clusters_by_episode = list(snap["clusters_by_episode"])
        trainer.rng.bit_generator.state = snap["rng_state"]
        trainer.store = ClusterStore.from_snapshot(snap["store"])
        trainer._load_learner(trainer.primary, snap["primary"], 0)
        for state in snap["secondaries"]:
            spec = ObjectiveSpec(
                np.array(state["pattern"], dtype=np.int8), "secondary", state.get("source_cluster")
            )
            lrn = trainer._new_learner(spec)
            trainer.secondaries.append(lrn)
            trainer._load_learner(lrn, state, len(trainer.secondaries))
        return trainer

    def _load_learner(self, lrn: QLambdaLearner, state: dict, row: int) -> None:
        w = np.array(state["weights"], dtype=float)
        if w.shape != lrn.w.shape:
            raise ValueError(f"weight shape mismatch: {w.shape} vs {lrn.w.shape}")
        lrn.w[:] = w
        lrn._td_abs_sum = float(state["td_abs_sum"])
        lrn._td_count = int(state["td_count"])
        if self.use_bank:
            self._td_abs[row] = lrn._td_abs_sum
            self._td_cnt[row] = lrn._td_count
