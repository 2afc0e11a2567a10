"""Active sequential neural posterior estimation toolkit.

A conditional masked autoregressive flow with consistent MC-dropout, APT
proposal-corrected training, variance-of-posteriors acquisition, the full
round-based inference loop with SNPE/ABC/SPSA baselines, tractable benchmark
simulators with reference posteriors, and evaluation metrics, exposed as a
library and a batch CLI.
"""

from .flow import ConditionalMaf, FlowConfig, WeightSample, build_masks, load_flow, save_flow
from .priors import (
    FactorizedNormalPrior,
    MultivariateNormalPrior,
    Prior,
    TruncatedNormalPrior,
    UniformBoxPrior,
)

__version__ = "0.1.0"

__all__ = [
    "ConditionalMaf",
    "FlowConfig",
    "WeightSample",
    "build_masks",
    "save_flow",
    "load_flow",
    "Prior",
    "UniformBoxPrior",
    "TruncatedNormalPrior",
    "FactorizedNormalPrior",
    "MultivariateNormalPrior",
    "__version__",
]
