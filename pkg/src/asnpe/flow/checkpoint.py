"""Flow checkpoints: versioned, self-describing, bit-exact round trip."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .maf import ConditionalMaf
from .masks import FlowConfig

CHECKPOINT_SCHEMA_VERSION = 1


def save_flow(flow: ConditionalMaf, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        schema_version=np.int64(CHECKPOINT_SCHEMA_VERSION),
        config_json=np.bytes_(json.dumps(asdict(flow.config)).encode()),
        weights=flow.weights,
        theta_mean=flow.theta_mean,
        theta_std=flow.theta_std,
        x_mean=flow.x_mean,
        x_std=flow.x_std,
        standardized=np.int64(1 if flow.has_standardization else 0),
        init_seed=np.int64(flow.init_seed),
    )


def load_flow(path) -> ConditionalMaf:
    path = Path(path)
    with np.load(path) as data:
        version = int(data["schema_version"])
        if version != CHECKPOINT_SCHEMA_VERSION:
            raise ConfigError(
                f"checkpoint schema version {version} not supported "
                f"(expected {CHECKPOINT_SCHEMA_VERSION})"
            )
        config = FlowConfig(**json.loads(bytes(data["config_json"]).decode()))
        flow = ConditionalMaf(config, init_seed=int(data["init_seed"]))
        if int(data["standardized"]):
            flow.set_standardization(
                data["theta_mean"], data["theta_std"], data["x_mean"], data["x_std"]
            )
        flow.set_weights(data["weights"])
    return flow
