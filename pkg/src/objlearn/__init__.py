"""Discovery and parallel off-policy learning of multiple objectives.

An agent in a continuous 30x30 world learns a primary navigation objective
with Q-lambda while an online adaptive clusterer discovers candidate
secondary objectives from the sensed feature stream; every discovered
objective gets its own value function, learned off-policy from the single
behavior stream.
"""

from .clustering import AssignResult, Cluster, ClusterParams, ClusterStore
from .config import ConfigError, RunConfig, config_hash, load_config
from .env import Action, AgentState, SensorReading, extract_features, sense, step
from .evaluation import (
    EvalConfig,
    PathResult,
    astar_length,
    coverage_percentage,
    episodes_to_convergence,
    greedy_rollout,
)
from .learning import (
    DONT_CARE,
    DivergenceError,
    LearnerParams,
    ObjectiveSpec,
    QLambdaLearner,
    RewardConfig,
    compute_reward,
    matches,
)
from .training import Trainer, secondary_spec_from_cluster
from .world import Rect, WorldMap, canonical_map

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AgentState",
    "AssignResult",
    "Cluster",
    "ClusterParams",
    "ClusterStore",
    "ConfigError",
    "DONT_CARE",
    "DivergenceError",
    "EvalConfig",
    "LearnerParams",
    "ObjectiveSpec",
    "PathResult",
    "QLambdaLearner",
    "Rect",
    "RewardConfig",
    "RunConfig",
    "SensorReading",
    "Trainer",
    "WorldMap",
    "astar_length",
    "canonical_map",
    "compute_reward",
    "config_hash",
    "coverage_percentage",
    "episodes_to_convergence",
    "extract_features",
    "greedy_rollout",
    "load_config",
    "matches",
    "secondary_spec_from_cluster",
    "sense",
    "step",
]
