"""Transferable safety priors for exploration in tabular gridworlds."""

from .analysis import (ConfusionCounts, TheoremParams, correctness, evaluate_prior,
                       monte_carlo_unsafe_ratio, prior_unsafe_set, td_error_trace, theorem_ratio)
from .explore import (ExploreConfig, bias_exploratory_action, epsilon_greedy, epsilon_schedule,
                      greedy_prior_exploration)
from .gridworld import (AgentPose, CellKind, MapParseError, MapSpec, StepOutcome, load_map,
                        parse_map, reset, step, true_unsafe_actions, with_goal)
from .learner import (MetricsLog, SourceConfig, TrainConfig, episode_return, learn_prior_offpolicy,
                      train_source, train_sources, train_task)
from .mdp import DiscountedParams, QTable, advantage, greedy_action, q_update, value_iteration
from .prior import (PriorModel, UndesirabilityRecord, infer_reward, normalized_entropy,
                    prior_update_step, pseudo_reward, scaled_desirability, scaled_undesirability,
                    select, softmax_normalize, threshold_bounds)
from .rng import RngStream
from .transfer import TransferSpec, run_transfer

__all__ = [
    "AgentPose", "CellKind", "ConfusionCounts", "DiscountedParams", "ExploreConfig",
    "MapParseError", "MapSpec", "MetricsLog", "PriorModel", "QTable", "RngStream",
    "SourceConfig", "StepOutcome", "TheoremParams", "TrainConfig", "TransferSpec",
    "UndesirabilityRecord", "advantage", "bias_exploratory_action", "correctness",
    "episode_return", "epsilon_greedy", "epsilon_schedule", "evaluate_prior", "greedy_action",
    "greedy_prior_exploration", "infer_reward", "learn_prior_offpolicy", "load_map",
    "monte_carlo_unsafe_ratio", "normalized_entropy", "parse_map", "prior_unsafe_set",
    "prior_update_step", "pseudo_reward", "q_update", "reset", "run_transfer",
    "scaled_desirability", "scaled_undesirability", "select", "softmax_normalize", "step",
    "td_error_trace", "theorem_ratio", "threshold_bounds", "train_source", "train_sources",
    "train_task", "true_unsafe_actions", "value_iteration", "with_goal",
]

__version__ = "0.1.0"
