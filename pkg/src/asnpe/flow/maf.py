"""Conditional masked autoregressive flow with consistent MC-dropout.

The flow's trainable state is a single flat float64 vector. Evaluation is
functional: every operation takes the weights it should use, either the
flow's live training weights or a frozen :class:`WeightSample`. A
WeightSample pins both a copy of the weights and one dropout mask, so it
defines a single valid density that sampling and log-density evaluation
share exactly.

Density direction (theta -> z) is a single masked pass per transform;
sampling inverts the transforms coordinate by coordinate. Log-scales are
clamped to [-7, 7] before exponentiation. Inputs are z-scored with
statistics stored on the flow (identity until training sets them).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ConfigError, FlowEvaluationError
from .masks import HIDDEN_LAYERS, FlowConfig, MadeMaskSet, build_masks

__all__ = ["WeightSample", "ConditionalMaf", "ParamLayout", "sample_dropout_mask"]

LOG_SCALE_CLAMP = 7.0


def sample_dropout_mask(num_units: int, dropout_rate: float, seed: int) -> np.ndarray:
    """Bernoulli(1 - dropout_rate) keep-mask over maskable hidden units.

    Reproducible from the seed; rate 0 yields the all-ones mask.
    """
    if not (0.0 <= dropout_rate < 1.0):
        raise ConfigError("dropout_rate must lie in [0, 1)")
    if dropout_rate == 0.0:
        return np.ones(num_units, dtype=np.uint8)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(11,)))
    return (rng.random(num_units) >= dropout_rate).astype(np.uint8)


@dataclass(frozen=True)
class WeightSample:
    """One concrete parameterization: weights plus a frozen dropout mask."""

    weights: np.ndarray
    dropout_mask: np.ndarray
    mask_seed: int

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "dropout_mask", np.asarray(self.dropout_mask, dtype=np.uint8))
        self.weights.setflags(write=False)
        self.dropout_mask.setflags(write=False)


class ParamLayout:
    """Slices of the flat weight vector, per transform and tensor."""

    def __init__(self, config: FlowConfig):
        d, c, h = config.theta_dim, config.context_dim, config.hidden_units
        self.slices: dict[str, tuple[slice, tuple[int, ...]]] = {}
        offset = 0

        def add(name, shape):
            nonlocal offset
            size = int(np.prod(shape))
            self.slices[name] = (slice(offset, offset + size), shape)
            offset += size

        for t in range(config.num_transforms):
            add(f"t{t}.W0", (h, d))
            add(f"t{t}.b0", (h,))
            if c > 0:
                add(f"t{t}.V0", (h, c))
            add(f"t{t}.W1", (h, h))
            add(f"t{t}.b1", (h,))
            add(f"t{t}.Wmu", (d, h))
            add(f"t{t}.bmu", (d,))
            add(f"t{t}.Wal", (d, h))
            add(f"t{t}.bal", (d,))
        self.total = offset
        self._head_names = [
            n for n in self.slices if n.split(".")[1] in ("Wmu", "bmu", "Wal", "bal")
        ]

    def view(self, params: torch.Tensor, name: str) -> torch.Tensor:
        sl, shape = self.slices[name]
        return params[sl].reshape(shape)

    def indices(self, name: str) -> np.ndarray:
        sl, _ = self.slices[name]
        return np.arange(sl.start, sl.stop)

    def zero_heads(self, params: np.ndarray) -> None:
        """Zero the shift/log-scale heads so the flow starts as the identity."""
        for name in self._head_names:
            sl, _ = self.slices[name]
            params[sl] = 0.0

    def indices_touching_unit(self, config: FlowConfig, t: int, layer: int, unit: int) -> np.ndarray:
        """Flat weight indices whose gradient must vanish when a hidden unit is dropped."""
        h = config.hidden_units
        idx: list[np.ndarray] = []

        def rows(name, row):
            sl, shape = self.slices[name]
            cols = shape[1]
            start = sl.start + row * cols
            return np.arange(start, start + cols)

        def cols(name, col):
            sl, shape = self.slices[name]
            ncols = shape[1]
            return np.arange(sl.start + col, sl.stop, ncols)

        def entry(name, i):
            sl, _ = self.slices[name]
            return np.array([sl.start + i])

        if layer == 0:
            idx.append(rows(f"t{t}.W0", unit))
            if f"t{t}.V0" in self.slices:
                idx.append(rows(f"t{t}.V0", unit))
            idx.append(entry(f"t{t}.b0", unit))
            idx.append(cols(f"t{t}.W1", unit))
        elif layer == 1:
            idx.append(rows(f"t{t}.W1", unit))
            idx.append(entry(f"t{t}.b1", unit))
            idx.append(cols(f"t{t}.Wmu", unit))
            idx.append(cols(f"t{t}.Wal", unit))
        else:
            raise ValueError("layer must be 0 or 1")
        del h
        return np.concatenate(idx)


class ConditionalMaf:
    """Conditional MAF q(theta | x) over a flat weight vector.

    Evaluation methods are read-only and safe to call concurrently once the
    flow is constructed; training mutates ``weights`` and needs exclusive
    access.
    """

    def __init__(self, config: FlowConfig, init_seed: int = 0):
        self.config = config
        self.masks: MadeMaskSet = build_masks(config)
        self.layout = ParamLayout(config)
        self._weights = torch.from_numpy(self._initial_weights(init_seed))
        self._weights.requires_grad_(True)
        self.init_seed = int(init_seed)

        d, c = config.theta_dim, config.context_dim
        self.theta_mean = np.zeros(d)
        self.theta_std = np.ones(d)
        self.x_mean = np.zeros(c)
        self.x_std = np.ones(c)
        self._standardized = False
        self._refresh_torch_constants()

    # ----- construction and state -----

    def _initial_weights(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(7,)))
        params = np.empty(self.layout.total, dtype=np.float64)
        for name, (sl, shape) in self.layout.slices.items():
            if name.endswith("b0") or name.endswith("b1"):
                params[sl] = 0.0
            else:
                fan_in = shape[1] if len(shape) == 2 else 1
                scale = 1.0 / math.sqrt(max(fan_in, 1))
                params[sl] = rng.normal(0.0, scale, size=sl.stop - sl.start)
        self.layout.zero_heads(params)
        return params

    def _refresh_torch_constants(self) -> None:
        to_t = lambda a: torch.from_numpy(np.asarray(a, dtype=np.float64))
        self._t_masks = []
        for tm in self.masks.transforms:
            self._t_masks.append(
                (
                    torch.from_numpy(tm.permutation.astype(np.int64)),
                    to_t(tm.mask_in),
                    to_t(tm.mask_hidden),
                    to_t(tm.mask_out),
                )
            )
        self._t_theta_mean = to_t(self.theta_mean)
        self._t_theta_std = to_t(self.theta_std)
        self._t_x_mean = to_t(self.x_mean)
        self._t_x_std = to_t(self.x_std)
        self._std_logdet = float(-np.sum(np.log(self.theta_std)))

    @property
    def num_weights(self) -> int:
        return self.layout.total

    @property
    def weights(self) -> np.ndarray:
        """Copy of the current trainable weights."""
        return self._weights.detach().numpy().copy()

    def set_weights(self, weights: np.ndarray) -> None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.layout.total,):
            raise ConfigError(f"expected {self.layout.total} weights, got {weights.shape}")
        with torch.no_grad():
            self._weights.copy_(torch.from_numpy(weights))

    def set_standardization(self, theta_mean, theta_std, x_mean=None, x_std=None) -> None:
        self.theta_mean = np.asarray(theta_mean, dtype=np.float64).reshape(self.config.theta_dim)
        self.theta_std = np.asarray(theta_std, dtype=np.float64).reshape(self.config.theta_dim)
        if np.any(self.theta_std <= 0):
            raise ConfigError("theta_std must be positive")
        if self.config.context_dim > 0:
            self.x_mean = np.asarray(x_mean, dtype=np.float64).reshape(self.config.context_dim)
            self.x_std = np.asarray(x_std, dtype=np.float64).reshape(self.config.context_dim)
            if np.any(self.x_std <= 0):
                raise ConfigError("x_std must be positive")
        self._standardized = True
        self._refresh_torch_constants()

    @property
    def has_standardization(self) -> bool:
        return self._standardized

    def draw_weight_sample(self, seed: int) -> WeightSample:
        """Freeze the current weights with a fresh dropout mask."""
        mask = sample_dropout_mask(self.config.maskable_units, self.config.dropout_rate, seed)
        return WeightSample(weights=self.weights, dropout_mask=mask, mask_seed=int(seed))

    def eval_weight_sample(self) -> WeightSample:
        """Current weights with no dropout (the deterministic network)."""
        return WeightSample(
            weights=self.weights,
            dropout_mask=np.ones(self.config.maskable_units, dtype=np.uint8),
            mask_seed=-1,
        )

    # ----- tensor plumbing -----

    def _gains_from_mask(self, mask: np.ndarray | None) -> torch.Tensor | None:
        """Per-unit multipliers implementing inverted dropout; None means no-op."""
        if mask is None:
            return None
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != (self.config.maskable_units,):
            raise ConfigError(
                f"dropout mask has {mask.shape} entries, expected {self.config.maskable_units}"
            )
        keep = 1.0 - self.config.dropout_rate
        if np.all(mask == 1.0):
            return None
        return torch.from_numpy(mask / keep)

    def _gain_slice(self, gains: torch.Tensor | None, t: int, layer: int) -> torch.Tensor | None:
        if gains is None:
            return None
        h = self.config.hidden_units
        start = (t * HIDDEN_LAYERS + layer) * h
        return gains[start : start + h]

    def _as_theta(self, theta) -> torch.Tensor:
        arr = np.asarray(theta, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.shape[1] != self.config.theta_dim:
            raise ConfigError(f"theta dim {arr.shape[1]} != {self.config.theta_dim}")
        return torch.from_numpy(arr)

    def _as_context(self, x, n: int) -> torch.Tensor | None:
        if self.config.context_dim == 0:
            return None
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 1:
            arr = np.broadcast_to(arr[None, :], (n, arr.size)).copy()
        if arr.shape != (n, self.config.context_dim):
            raise ConfigError(f"context shape {arr.shape} != ({n}, {self.config.context_dim})")
        return torch.from_numpy(arr)

    def _params_tensor(self, phi: WeightSample | None) -> tuple[torch.Tensor, torch.Tensor | None]:
        if phi is None:
            return self._weights.detach(), None
        if phi.weights.shape != (self.layout.total,):
            raise ConfigError("WeightSample does not match this flow's parameter count")
        # WeightSample arrays are frozen read-only; copy before wrapping.
        return torch.from_numpy(phi.weights.copy()), self._gains_from_mask(phi.dropout_mask)

    # ----- core passes -----

    def _made(self, params, t, u, ctx, gains):
        """One MADE pass: permuted input (and context) -> (shift, clamped log-scale)."""
        v = self.layout.view
        perm, m_in, m_hid, m_out = self._t_masks[t]
        del perm
        pre0 = u @ (v(params, f"t{t}.W0") * m_in).T + v(params, f"t{t}.b0")
        if ctx is not None:
            pre0 = pre0 + ctx @ v(params, f"t{t}.V0").T
        h = torch.tanh(pre0)
        g0 = self._gain_slice(gains, t, 0)
        if g0 is not None:
            h = h * g0
        pre1 = h @ (v(params, f"t{t}.W1") * m_hid).T + v(params, f"t{t}.b1")
        h = torch.tanh(pre1)
        g1 = self._gain_slice(gains, t, 1)
        if g1 is not None:
            h = h * g1
        mu = h @ (v(params, f"t{t}.Wmu") * m_out).T + v(params, f"t{t}.bmu")
        log_scale = h @ (v(params, f"t{t}.Wal") * m_out).T + v(params, f"t{t}.bal")
        log_scale = torch.clamp(log_scale, -LOG_SCALE_CLAMP, LOG_SCALE_CLAMP)
        return mu, log_scale

    def _forward(self, params, theta_t, ctx_t, gains):
        """theta -> base-space z plus the total log|det dz/dtheta|."""
        y = (theta_t - self._t_theta_mean) / self._t_theta_std
        ctx = None
        if ctx_t is not None:
            ctx = (ctx_t - self._t_x_mean) / self._t_x_std
        logdet = torch.full((y.shape[0],), self._std_logdet, dtype=torch.float64)
        for t in range(self.config.num_transforms):
            perm = self._t_masks[t][0]
            u = y[:, perm]
            mu, log_scale = self._made(params, t, u, ctx, gains)
            y = (u - mu) * torch.exp(-log_scale)
            logdet = logdet - log_scale.sum(dim=1)
        return y, logdet

    def log_prob_tensor(self, params, theta_t, ctx_t, gains) -> torch.Tensor:
        """Differentiable per-row log density under the given parameters."""
        z, logdet = self._forward(params, theta_t, ctx_t, gains)
        d = self.config.theta_dim
        base = -0.5 * d * math.log(2 * math.pi) - 0.5 * (z * z).sum(dim=1)
        return base + logdet

    def _inverse(self, params, z_t, ctx_t, gains) -> torch.Tensor:
        d = self.config.theta_dim
        ctx = None
        if ctx_t is not None:
            ctx = (ctx_t - self._t_x_mean) / self._t_x_std
        y = z_t
        for t in reversed(range(self.config.num_transforms)):
            perm = self._t_masks[t][0]
            u = torch.zeros_like(y)
            for i in range(d):
                mu, log_scale = self._made(params, t, u, ctx, gains)
                u[:, i] = y[:, i] * torch.exp(log_scale[:, i]) + mu[:, i]
            out = torch.empty_like(u)
            out[:, perm] = u
            y = out
        return y * self._t_theta_std + self._t_theta_mean

    # ----- public evaluation API -----

    def log_prob(self, theta, x, phi: WeightSample | None = None) -> np.ndarray:
        """Exact log density; raises FlowEvaluationError on non-finite results."""
        theta_t = self._as_theta(theta)
        ctx_t = self._as_context(x, theta_t.shape[0])
        params, gains = self._params_tensor(phi)
        with torch.no_grad():
            lp = self.log_prob_tensor(params, theta_t, ctx_t, gains)
        out = lp.numpy()
        if not np.all(np.isfinite(out)):
            raise FlowEvaluationError("non-finite log density (overflowing scale parameters?)")
        return out if np.asarray(theta).ndim > 1 else float(out[0])

    def sample(self, n: int, x, phi: WeightSample | None = None, rng: np.random.Generator | None = None) -> np.ndarray:
        """Draw n parameters from q(.|x) under the same mask log_prob uses."""
        if n < 1:
            raise ConfigError("n must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        z = rng.standard_normal((n, self.config.theta_dim))
        return self.inverse_from_base(z, x, phi)

    def inverse_from_base(self, z: np.ndarray, x, phi: WeightSample | None = None) -> np.ndarray:
        """Map base-space draws through the inverse transform (seedless core of sample)."""
        z = np.asarray(z, dtype=np.float64)
        z_t = torch.from_numpy(z.copy())
        ctx_t = self._as_context(x, z.shape[0])
        params, gains = self._params_tensor(phi)
        with torch.no_grad():
            theta = self._inverse(params, z_t, ctx_t, gains)
        out = theta.numpy()
        if not np.all(np.isfinite(out)):
            raise FlowEvaluationError("non-finite sample (overflowing scale parameters?)")
        return out

    def forward_to_base(self, theta, x, phi: WeightSample | None = None) -> np.ndarray:
        """theta -> z; exposed for round-trip checks."""
        theta_t = self._as_theta(theta)
        ctx_t = self._as_context(x, theta_t.shape[0])
        params, gains = self._params_tensor(phi)
        with torch.no_grad():
            z, _ = self._forward(params, theta_t, ctx_t, gains)
        return z.numpy()

    def marginal_log_prob(self, theta, x, phis: list[WeightSample]) -> np.ndarray:
        """Log of the phi-averaged density, via max-shifted log-mean-exp."""
        if not phis:
            raise ConfigError("phis must be non-empty")
        comps = self.component_log_probs(theta, x, phis)
        shift = comps.max(axis=1, keepdims=True)
        out = (shift[:, 0] + np.log(np.mean(np.exp(comps - shift), axis=1)))
        if not np.all(np.isfinite(out)):
            raise FlowEvaluationError("all mixture components non-finite")
        return out if np.asarray(theta).ndim > 1 else float(out[0])

    def component_log_probs(self, theta, x, phis: list[WeightSample]) -> np.ndarray:
        """Matrix of log densities, rows = theta points, columns = weight samples."""
        theta_t = self._as_theta(theta)
        ctx_t = self._as_context(x, theta_t.shape[0])
        cols = []
        with torch.no_grad():
            for phi in phis:
                params, gains = self._params_tensor(phi)
                cols.append(self.log_prob_tensor(params, theta_t, ctx_t, gains).numpy())
        return np.stack(cols, axis=1)

    def grad_log_prob(self, theta, x, phi: WeightSample | None = None) -> np.ndarray:
        """Gradient of the (summed) log density with respect to all weights."""
        theta_t = self._as_theta(theta)
        ctx_t = self._as_context(x, theta_t.shape[0])
        if phi is None:
            params = self._weights.detach().clone().requires_grad_(True)
            gains = None
        else:
            params = torch.from_numpy(phi.weights.copy()).requires_grad_(True)
            gains = self._gains_from_mask(phi.dropout_mask)
        lp = self.log_prob_tensor(params, theta_t, ctx_t, gains).sum()
        if not torch.isfinite(lp):
            raise FlowEvaluationError("non-finite log density in gradient evaluation")
        (grad,) = torch.autograd.grad(lp, params)
        return grad.numpy()
