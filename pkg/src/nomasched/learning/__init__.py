from .agents import (LearnerConfig, RunRecord, evaluate_power_plan, pl_train, ql_train,
                     rl_policy)
from .graph import (PathDistribution, TransitionGraph, build_tg, covering_paths,
                    edge_probabilities)

__all__ = [
    "LearnerConfig", "RunRecord", "evaluate_power_plan", "pl_train", "ql_train", "rl_policy",
    "PathDistribution", "TransitionGraph", "build_tg", "covering_paths", "edge_probabilities",
]
