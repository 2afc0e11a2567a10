from .tasks import TaskSpec, task_bernoulli_glm, task_gaussian_mixture, task_linear_gaussian, task_slcp
from .toy_od import (
    DEMAND_PROFILES,
    PRIOR_PRESETS,
    OdScenario,
    make_prior_estimate,
    make_toy_od_scenario,
    starting_prior_rmsne,
    task_toy_od,
)
from .reference import ReferenceResult, random_walk_metropolis, reference_posterior
from .external import PROTOCOL_VERSION, ExternalSimulator, replay_transcript

__all__ = [
    "TaskSpec",
    "task_linear_gaussian",
    "task_gaussian_mixture",
    "task_bernoulli_glm",
    "task_slcp",
    "OdScenario",
    "make_prior_estimate",
    "make_toy_od_scenario",
    "task_toy_od",
    "starting_prior_rmsne",
    "DEMAND_PROFILES",
    "PRIOR_PRESETS",
    "ReferenceResult",
    "reference_posterior",
    "random_walk_metropolis",
    "ExternalSimulator",
    "replay_transcript",
    "PROTOCOL_VERSION",
]
