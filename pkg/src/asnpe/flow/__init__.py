from .masks import FlowConfig, MadeMaskSet, TransformMasks, build_masks
from .maf import ConditionalMaf, ParamLayout, WeightSample, sample_dropout_mask
from .checkpoint import CHECKPOINT_SCHEMA_VERSION, load_flow, save_flow

__all__ = [
    "FlowConfig",
    "MadeMaskSet",
    "TransformMasks",
    "build_masks",
    "ConditionalMaf",
    "ParamLayout",
    "WeightSample",
    "sample_dropout_mask",
    "save_flow",
    "load_flow",
    "CHECKPOINT_SCHEMA_VERSION",
]
