"""Run configuration: defaults, YAML loading, validation and hashing."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .clustering import ClusterParams
from .evaluation import EvalConfig
from .learning import LearnerParams, RewardConfig
from .world import Rect, WorldMap, canonical_map


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


@dataclass
class RunConfig:
    world: WorldMap = field(default_factory=canonical_map)
    primary_pattern: tuple[int, ...] = (-1, -1, -1, 1)
    learner: LearnerParams = field(default_factory=LearnerParams)
    epsilon: float = 0.3
    clustering: ClusterParams = field(default_factory=ClusterParams)
    reward: RewardConfig = field(default_factory=RewardConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    episodes: int = 1000
    runs: int = 10
    seed: int = 1
    max_steps: int = 2000
    noise_sd: float = 0.05
    learn_secondaries: bool = True
    named_objectives: dict[str, tuple[int, ...]] = field(
        default_factory=lambda: {"light": (0, 1, 0, 0), "rough": (0, 0, 1, 0)}
    )

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ConfigError("epsilon must be in [0, 1]")
        if self.noise_sd < 0.0:
            raise ConfigError("noise_sd must be >= 0")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        n_env = self.world.n_env_features
        if len(self.primary_pattern) != n_env:
            raise ConfigError(f"primary pattern must have {n_env} elements")
        if any(v not in (-1, 0, 1) for v in self.primary_pattern):
            raise ConfigError("pattern elements must be -1 (don't care), 0 or 1")
        for name, pat in self.named_objectives.items():
            if len(pat) != n_env or any(v not in (0, 1) for v in pat):
                raise ConfigError(f"named objective {name!r} must be a binary {n_env}-vector")


def _rect(values, what: str) -> Rect:
    try:
        x0, y0, x1, y1 = (float(v) for v in values)
        return Rect(x0, y0, x1, y1)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad rectangle for {what}: {values!r} ({exc})") from exc


def _world_from_dict(d: dict) -> WorldMap:
    base = canonical_map()
    try:
        return WorldMap(
            width=float(d.get("width", base.width)),
            height=float(d.get("height", base.height)),
            obstacles=tuple(_rect(r, "obstacle") for r in d["obstacles"])
            if "obstacles" in d
            else base.obstacles,
            light_region=_rect(d["light_region"], "light_region")
            if "light_region" in d
            else base.light_region,
            rough_region=_rect(d["rough_region"], "rough_region")
            if "rough_region" in d
            else base.rough_region,
            target_center=tuple(float(v) for v in d["target_center"])
            if "target_center" in d
            else base.target_center,
            target_radius=float(d.get("target_radius", base.target_radius)),
            extra_regions=tuple(_rect(r, "extra_region") for r in d.get("extra_regions", ())),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid world geometry: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a nested plain dict (YAML layout)."""
    data = data or {}
    unknown = set(data) - {"world", "primary", "learner", "clustering", "reward", "run", "eval", "objectives"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    world = _world_from_dict(data.get("world", {}))
    lrn = data.get("learner", {})
    run = data.get("run", {})
    ev = data.get("eval", {})
    rew = data.get("reward", {})
    clu = data.get("clustering", {})
    try:
        learner = LearnerParams(
            alpha=float(lrn.get("alpha", 0.3)),
            gamma=float(lrn.get("gamma", 0.9)),
            lambda_=float(lrn.get("lambda", lrn.get("lambda_", 0.9))),
            watkins_cut=bool(lrn.get("watkins_cut", True)),
        )
        clustering = ClusterParams(
            tolerance_n=float(clu.get("tolerance_n", 1.0)),
            seed_variance=float(clu.get("seed_variance", 1.0)),
            variance_floor=float(clu.get("variance_floor", 1e-6)),
            gate_sigma_floor=float(clu.get("gate_sigma_floor", 0.7)),
        )
        reward = RewardConfig(
            goal_reward=float(rew.get("goal", 100.0)),
            living_penalty=float(rew.get("living", -10.0)),
            bump_penalty=float(rew.get("bump", -100.0)),
        )
        eval_cfg = EvalConfig(
            acceptance_ratio=float(ev.get("acceptance_ratio", 1.5)),
            convergence_threshold=float(ev.get("convergence_threshold", 0.5)),
            rollout_cap=int(ev.get("rollout_cap", 500)),
            grid_stride=int(ev.get("grid_stride", 1)),
            tie_seed=int(ev.get("tie_seed", 0)),
            convergence_budget=int(ev.get("convergence_budget", 400)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    primary = data.get("primary", {})
    objectives = data.get("objectives", {"light": [0, 1, 0, 0], "rough": [0, 0, 1, 0]})
    try:
        return RunConfig(
            world=world,
            primary_pattern=tuple(int(v) for v in primary.get("pattern", (-1, -1, -1, 1))),
            learner=learner,
            epsilon=float(lrn.get("epsilon", 0.3)),
            clustering=clustering,
            reward=reward,
            eval=eval_cfg,
            episodes=int(run.get("episodes", 1000)),
            runs=int(run.get("runs", 10)),
            seed=int(run.get("seed", 1)),
            max_steps=int(run.get("max_steps", 2000)),
            noise_sd=float(run.get("noise_sd", 0.05)),
            learn_secondaries=bool(run.get("learn_secondaries", True)),
            named_objectives={k: tuple(int(v) for v in pat) for k, pat in objectives.items()},
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Load a YAML config file (or the built-in canonical defaults) and apply
    CLI-style overrides (seed / episodes / epsilon / runs / ...)."""
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    cfg = config_from_dict(data)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    d = config_to_dict(cfg)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "seed":
            d["run"]["seed"] = value
        elif key == "episodes":
            d["run"]["episodes"] = value
        elif key == "runs":
            d["run"]["runs"] = value
        elif key == "epsilon":
            d["learner"]["epsilon"] = value
        else:
            raise ConfigError(f"unknown override {key!r}")
    return config_from_dict(d)


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain nested dict mirroring the YAML layout (used for hashing and echo)."""
    w = cfg.world
    return {
        "world": {
            "width": w.width,
            "height": w.height,
            "obstacles": [list(r.as_tuple()) for r in w.obstacles],
            "light_region": list(w.light_region.as_tuple()),
            "rough_region": list(w.rough_region.as_tuple()),
            "target_center": list(w.target_center),
            "target_radius": w.target_radius,
            "extra_regions": [list(r.as_tuple()) for r in w.extra_regions],
        },
        "primary": {"pattern": list(cfg.primary_pattern)},
        "learner": {
            "alpha": cfg.learner.alpha,
            "gamma": cfg.learner.gamma,
            "lambda": cfg.learner.lambda_,
            "epsilon": cfg.epsilon,
            "watkins_cut": cfg.learner.watkins_cut,
        },
        "clustering": {
            "tolerance_n": cfg.clustering.tolerance_n,
            "seed_variance": cfg.clustering.seed_variance,
            "variance_floor": cfg.clustering.variance_floor,
            "gate_sigma_floor": cfg.clustering.gate_sigma_floor,
        },
        "reward": {
            "goal": cfg.reward.goal_reward,
            "living": cfg.reward.living_penalty,
            "bump": cfg.reward.bump_penalty,
        },
        "run": {
            "episodes": cfg.episodes,
            "runs": cfg.runs,
            "seed": cfg.seed,
            "max_steps": cfg.max_steps,
            "noise_sd": cfg.noise_sd,
            "learn_secondaries": cfg.learn_secondaries,
        },
        "eval": {
            "acceptance_ratio": cfg.eval.acceptance_ratio,
            "convergence_threshold": cfg.eval.convergence_threshold,
            "rollout_cap": cfg.eval.rollout_cap,
            "grid_stride": cfg.eval.grid_stride,
            "tie_seed": cfg.eval.tie_seed,
            "convergence_budget": cfg.eval.convergence_budget,
        },
        "objectives": {k: list(v) for k, v in cfg.named_objectives.items()},
    }


def config_hash(cfg: RunConfig) -> str:
    """Short stable hash of the full configuration (seed excluded)."""
    d = config_to_dict(cfg)
    d["run"].pop("seed")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
