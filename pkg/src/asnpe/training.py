"""Proposal-corrected (APT) maximum-likelihood training of the flow.

The loss is the atomic contrastive form: each pair (theta_i, x_i) is scored
against M-1 contrast parameters drawn from the same minibatch, with the
prior divided out of every atom weight. With a single round of prior
samples this coincides with plain NPE maximum likelihood up to the softmax
normalizer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, TrainingDivergedError
from .flow import ConditionalMaf, sample_dropout_mask

__all__ = ["RoundDataset", "TrainConfig", "TrainingLog", "apt_loss", "train_round"]


class RoundDataset:
    """Accumulated (theta, x) pairs with round provenance and densities."""

    def __init__(self, theta_dim: int, x_dim: int):
        self.theta_dim = theta_dim
        self.x_dim = x_dim
        self.thetas = np.empty((0, theta_dim))
        self.xs = np.empty((0, x_dim))
        self.round_index = np.empty(0, dtype=np.int64)
        self.prior_log_density = np.empty(0)
        self.proposal_log_density = np.empty(0)

    def __len__(self) -> int:
        return self.thetas.shape[0]

    def append(self, thetas, xs, round_index: int, prior_log_density, proposal_log_density) -> None:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        prior_lp = np.atleast_1d(np.asarray(prior_log_density, dtype=float))
        prop_lp = np.atleast_1d(np.asarray(proposal_log_density, dtype=float))
        n = thetas.shape[0]
        if xs.shape[0] != n or prior_lp.size != n or prop_lp.size != n:
            raise ConfigError("inconsistent pair counts in dataset append")
        if not np.all(np.isfinite(prior_lp)):
            raise ConfigError("every theta must lie in the prior support (finite prior density)")
        if len(self) and round_index < int(self.round_index[-1]):
            raise ConfigError("round_index must be non-decreasing")
        self.thetas = np.vstack([self.thetas, thetas])
        self.xs = np.vstack([self.xs, xs])
        self.round_index = np.concatenate([self.round_index, np.full(n, round_index, dtype=np.int64)])
        self.prior_log_density = np.concatenate([self.prior_log_density, prior_lp])
        self.proposal_log_density = np.concatenate([self.proposal_log_density, prop_lp])

    def save(self, path) -> None:
        np.savez(
            Path(path),
            schema_version=np.int64(1),
            thetas=self.thetas,
            xs=self.xs,
            round_index=self.round_index,
            prior_log_density=self.prior_log_density,
            proposal_log_density=self.proposal_log_density,
        )

    @classmethod
    def load(cls, path) -> "RoundDataset":
        with np.load(Path(path)) as data:
            if int(data["schema_version"]) != 1:
                raise ConfigError("unsupported dataset schema version")
            ds = cls(int(data["thetas"].shape[1]), int(data["xs"].shape[1]))
            ds.thetas = data["thetas"].copy()
            ds.xs = data["xs"].copy()
            ds.round_index = data["round_index"].copy()
            ds.prior_log_density = data["prior_log_density"].copy()
            ds.proposal_log_density = data["proposal_log_density"].copy()
        return ds


@dataclass(frozen=True)
class TrainConfig:
    atoms_M: int = 10
    batch_size: int = 50
    learning_rate: float = 5e-4
    max_epochs: int = 500
    validation_fraction: float = 0.1
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.atoms_M < 1:
            raise ConfigError("atoms_M must be >= 1")
        if self.atoms_M > self.batch_size:
            raise ConfigError("atoms_M must not exceed batch_size")
        if not (0.0 < self.validation_fraction <= 0.5):
            raise ConfigError("validation_fraction must lie in (0, 0.5]")
        if self.learning_rate <= 0 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("learning_rate, max_epochs, patience must be positive")


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)  # (epoch, train_loss, val_loss, lr)
    best_epoch: int = -1
    best_val_loss: float = np.inf
    lr_halved: bool = False

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "learning_rate"])
            for row in self.epochs:
                w.writerow([row[0], f"{row[1]:.17g}", f"{row[2]:.17g}", f"{row[3]:.17g}"])


def _draw_atom_indices(rng: np.random.Generator, members: np.ndarray, pool: np.ndarray, m: int) -> np.ndarray:
    """Atom index matrix: column 0 is the example itself, the rest contrasts.

    Contrasts are drawn without replacement from ``pool`` excluding the
    example, independently per example.
    """
    idx = np.empty((members.size, m), dtype=np.int64)
    idx[:, 0] = members
    if m == 1:
        return idx
    for row, i in enumerate(members):
        others = pool[pool != i]
        idx[row, 1:] = rng.choice(others, size=m - 1, replace=False)
    return idx


def _apt_loss_tensor(flow, params, thetas, xs, prior_lp, atom_idx, gains):
    """Batch APT softmax loss; atom_idx[:, 0] indexes each example itself."""
    b, m = atom_idx.shape
    flat_theta = torch.from_numpy(thetas[atom_idx.reshape(-1)])
    flat_x = torch.from_numpy(np.repeat(xs[atom_idx[:, 0]], m, axis=0))
    lp = flow.log_prob_tensor(params, flat_theta, flat_x, gains).reshape(b, m)
    ell = lp - torch.from_numpy(prior_lp[atom_idx])
    return -(ell[:, 0] - torch.logsumexp(ell, dim=1)).mean()


def apt_loss(
    flow: ConditionalMaf,
    thetas: np.ndarray,
    xs: np.ndarray,
    prior_log_density: np.ndarray,
    atoms_M: int,
    rng: np.random.Generator,
    dropout_mask: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Atomic APT loss and its weight gradient on one batch.

    Contrast atoms are redrawn per example from within the batch. Returns
    the scalar loss and the exact gradient with respect to all weights.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    prior_lp = np.asarray(prior_log_density, dtype=float)
    b = thetas.shape[0]
    if not (1 <= atoms_M <= b):
        raise ConfigError("need batch size >= atoms_M >= 1")
    atom_idx = _draw_atom_indices(rng, np.arange(b), np.arange(b), atoms_M)
    params = flow._weights.detach().clone().requires_grad_(True)
    gains = flow._gains_from_mask(dropout_mask) if dropout_mask is not None else None
    loss = _apt_loss_tensor(flow, params, thetas, xs, prior_lp, atom_idx, gains)
    if not torch.isfinite(loss):
        raise TrainingDivergedError("non-finite APT loss")
    (grad,) = torch.autograd.grad(loss, params)
    return float(loss.detach()), grad.numpy()


def train_round(flow: ConditionalMaf, dataset: RoundDataset, config: TrainConfig) -> TrainingLog:
    """Adam training with early stopping; restores the best-validation weights.

    Standardization statistics are computed from the dataset the first time
    the flow is trained and kept fixed afterwards, so continued weights keep
    their meaning across rounds. Validation uses the deterministic network
    (no dropout) with a fixed atom assignment so epochs are comparable.
    """
    n = len(dataset)
    if n == 0:
        raise ConfigError("dataset is empty")
    if n < config.atoms_M:
        raise ConfigError(f"dataset size {n} smaller than atoms_M={config.atoms_M}")

    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(config.seed), spawn_key=(23,)))

    if not flow.has_standardization:
        t_std = dataset.thetas.std(axis=0)
        x_std = dataset.xs.std(axis=0)
        flow.set_standardization(
            dataset.thetas.mean(axis=0),
            np.where(t_std < 1e-8, 1.0, t_std),
            dataset.xs.mean(axis=0),
            np.where(x_std < 1e-8, 1.0, x_std),
        )

    perm = rng.permutation(n)
    n_val = max(1, int(round(config.validation_fraction * n)))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    if train_idx.size == 0:
        raise ConfigError("dataset too small for the validation split")

    m_val = min(config.atoms_M, n)
    val_atoms = _draw_atom_indices(rng, val_idx, np.arange(n), m_val)

    thetas, xs, prior_lp = dataset.thetas, dataset.xs, dataset.prior_log_density

    lr = config.learning_rate
    opt = torch.optim.Adam([flow._weights], lr=lr)
    log = TrainingLog()
    best_weights = flow.weights
    bad_epochs = 0
    nonfinite_seen = False

    def val_loss() -> float:
        with torch.no_grad():
            loss = _apt_loss_tensor(
                flow, flow._weights.detach(), thetas, xs, prior_lp, val_atoms, None
            )
        return float(loss)

    for epoch in range(config.max_epochs):
        order = rng.permutation(train_idx)
        batches = [order[s : s + config.batch_size] for s in range(0, order.size, config.batch_size)]
        if len(batches) > 1 and batches[-1].size < config.atoms_M:
            batches.pop()
        batch_losses = []
        for batch in batches:
            m = min(config.atoms_M, batch.size)
            atom_idx = _draw_atom_indices(rng, batch, batch, m)
            gains = None
            if flow.config.dropout_rate > 0:
                step_mask = sample_dropout_mask(
                    flow.config.maskable_units,
                    flow.config.dropout_rate,
                    int(rng.integers(0, 2**62)),
                )
                gains = flow._gains_from_mask(step_mask)
            loss = _apt_loss_tensor(flow, flow._weights, thetas, xs, prior_lp, atom_idx, gains)
            if not torch.isfinite(loss):
                if not nonfinite_seen:
                    # reject the step, halve the learning rate once, continue
                    nonfinite_seen = True
                    lr *= 0.5
                    for group in opt.param_groups:
                        group["lr"] = lr
                    log.lr_halved = True
                    continue
                raise TrainingDivergedError(
                    f"non-finite APT loss at epoch {epoch} after learning-rate halving"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            batch_losses.append(float(loss.detach()))

        v = val_loss()
        log.epochs.append((epoch, float(np.mean(batch_losses)) if batch_losses else np.nan, v, lr))
        if v < log.best_val_loss:
            log.best_val_loss = v
            log.best_epoch = epoch
            best_weights = flow.weights
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    flow.set_weights(best_weights)
    return log
