"""Deterministic RNG stream derivation.

Every stochastic phase of a run draws from its own generator, derived from
(master seed, round index, phase name). Streams are independent of how much
randomness any other phase consumed, which makes interrupted runs resumable
without checkpointing generator state: re-deriving the stream for a phase
reproduces it exactly.
"""

from __future__ import annotations

import numpy as np

# Stable phase identifiers; appending is fine, renumbering is a schema break.
_PHASES = {
    "init": 0,
    "propose": 1,
    "acquire": 2,
    "simulate": 3,
    "train": 4,
    "observe": 5,
    "metrics": 6,
}


def phase_seed_sequence(seed: int, round_index: int, phase: str, index: int = 0) -> np.random.SeedSequence:
    if phase not in _PHASES:
        raise ValueError(f"unknown rng phase {phase!r}; expected one of {sorted(_PHASES)}")
    return np.random.SeedSequence(
        entropy=int(seed), spawn_key=(int(round_index), _PHASES[phase], int(index))
    )


def phase_rng(seed: int, round_index: int, phase: str, index: int = 0) -> np.random.Generator:
    """Generator for one (seed, round, phase[, index]) cell of a run."""
    return np.random.default_rng(phase_seed_sequence(seed, round_index, phase, index))


def derive_rng(rng: np.random.Generator, n: int = 1) -> list[np.random.Generator]:
    """Split ``n`` independent child generators off an existing one."""
    return list(rng.spawn(n))
