import numpy as np
import pytest

from asnpe.flow import ConditionalMaf, FlowConfig


def make_flow(theta_dim=2, context_dim=3, num_transforms=2, hidden_units=8,
              dropout_rate=0.25, seed=0, perturb=0.0):
    """Small flow for tests; perturb > 0 adds noise to all weights (heads included)."""
    cfg = FlowConfig(
        theta_dim=theta_dim,
        context_dim=context_dim,
        num_transforms=num_transforms,
        hidden_units=hidden_units,
        dropout_rate=dropout_rate,
    )
    flow = ConditionalMaf(cfg, init_seed=seed)
    if perturb:
        rng = np.random.default_rng(seed + 1000)
        flow.set_weights(flow.weights + rng.normal(0.0, perturb, size=flow.num_weights))
    return flow


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
