"""MADE mask construction for the autoregressive transforms.

Each transform permutes its input, then runs a two-hidden-layer MADE whose
binary masks enforce that output slot i (the shift/log-scale pair for
coordinate i in permuted order) depends only on coordinates with lower
degree. Context inputs are unmasked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

__all__ = ["FlowConfig", "TransformMasks", "MadeMaskSet", "build_masks"]

# Hidden layers per MADE block; masks and the parameter layout both assume it.
HIDDEN_LAYERS = 2


@dataclass(frozen=True)
class FlowConfig:
    """Architecture of the conditional masked autoregressive flow."""

    theta_dim: int
    context_dim: int
    num_transforms: int = 5
    hidden_units: int = 50
    dropout_rate: float = 0.25
    permutation_scheme: str = "reverse"
    seed: int = 0  # only consumed by random-seeded permutations

    def __post_init__(self):
        if self.theta_dim < 1:
            raise ConfigError("theta_dim must be >= 1")
        if self.context_dim < 0:
            raise ConfigError("context_dim must be >= 0")
        if self.num_transforms < 1:
            raise ConfigError("num_transforms must be >= 1")
        if self.hidden_units < 1:
            raise ConfigError("hidden_units must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.permutation_scheme not in ("reverse", "random-seeded"):
            raise ConfigError("permutation_scheme must be 'reverse' or 'random-seeded'")

    @property
    def maskable_units(self) -> int:
        """Hidden units subject to dropout across the whole flow."""
        return self.num_transforms * HIDDEN_LAYERS * self.hidden_units


@dataclass(frozen=True)
class TransformMasks:
    """Masks and degree assignments for one transform."""

    permutation: np.ndarray  # u_i = y[permutation[i]]
    input_degrees: np.ndarray  # degree of u_i, always 1..D
    hidden_degrees: np.ndarray
    mask_in: np.ndarray  # (H, D): hidden <- permuted theta
    mask_hidden: np.ndarray  # (H, H)
    mask_out: np.ndarray  # (D, H): output slot <- hidden, strict inequality

    def check_autoregressive(self) -> None:
        d = self.input_degrees
        h = self.hidden_degrees
        assert np.array_equal(np.sort(self.permutation), np.arange(d.size))
        assert np.all(self.mask_in == (h[:, None] >= d[None, :]))
        assert np.all(self.mask_hidden == (h[:, None] >= h[None, :]))
        assert np.all(self.mask_out == (d[:, None] > h[None, :]))


@dataclass(frozen=True)
class MadeMaskSet:
    """Masks for every transform of the flow."""

    transforms: tuple[TransformMasks, ...] = field(default_factory=tuple)

    def dependency_closure(self) -> np.ndarray:
        """Boolean matrix: output coordinate i structurally depends on input j.

        Propagates the per-transform triangular structure (including the
        diagonal pass-through of the affine map) through the permutations.
        """
        d = self.transforms[0].input_degrees.size
        total = np.eye(d, dtype=np.int64)
        for tm in self.transforms:
            # In permuted coordinates z_i depends on u_j for j <= i.
            tri = np.tril(np.ones((d, d), dtype=np.int64))
            # u_i = y[perm[i]] -> dependency of z on y is tri composed with perm.
            perm_mat = np.zeros((d, d), dtype=np.int64)
            perm_mat[np.arange(d), tm.permutation] = 1
            total = np.minimum(tri @ perm_mat @ total, 1)
        return total > 0


def _hidden_degrees(theta_dim: int, hidden_units: int) -> np.ndarray:
    # Cycle through 1..D-1; for D == 1 every hidden degree is 0, which cuts
    # all theta paths and leaves a purely context-driven affine map.
    lo = min(1, theta_dim - 1)
    span = max(1, theta_dim - 1)
    return (np.arange(hidden_units) % span) + lo


def _permutation(config: FlowConfig, t: int, rng: np.random.Generator) -> np.ndarray:
    if config.permutation_scheme == "reverse":
        return np.arange(config.theta_dim)[::-1].copy()
    return rng.permutation(config.theta_dim)


def build_masks(config: FlowConfig) -> MadeMaskSet:
    """Construct masks for every transform; deterministic given the config."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(97,)))
    d = config.theta_dim
    in_deg = np.arange(1, d + 1)
    out = []
    for t in range(config.num_transforms):
        perm = _permutation(config, t, rng)
        h_deg = _hidden_degrees(d, config.hidden_units)
        tm = TransformMasks(
            permutation=perm,
            input_degrees=in_deg.copy(),
            hidden_degrees=h_deg,
            mask_in=(h_deg[:, None] >= in_deg[None, :]).astype(np.float64),
            mask_hidden=(h_deg[:, None] >= h_deg[None, :]).astype(np.float64),
            mask_out=(in_deg[:, None] > h_deg[None, :]).astype(np.float64),
        )
        tm.check_autoregressive()
        out.append(tm)
    return MadeMaskSet(transforms=tuple(out))
