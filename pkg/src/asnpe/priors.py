"""Prior distributions over simulator parameters.

All priors are samplable and density-evaluable, and expose their support so
the inference loop can truncate flow proposals to it. Vector parameters are
broadcast per dimension.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from .errors import ConfigError

__all__ = [
    "Prior",
    "UniformBoxPrior",
    "TruncatedNormalPrior",
    "FactorizedNormalPrior",
    "MultivariateNormalPrior",
    "prior_from_dict",
]


class Prior:
    """Interface: sample, evaluate log density, test support membership."""

    dim: int
    kind: str = "abstract"

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, theta: np.ndarray) -> np.ndarray:
        """Log density per row; -inf outside the support."""
        raise NotImplementedError

    def inside(self, theta: np.ndarray) -> np.ndarray:
        """Boolean support-membership per row."""
        return np.isfinite(self.log_density(theta))

    def describe(self) -> str:
        return f"{self.kind} prior over R^{self.dim}"

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _rows(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 1:
            theta = theta[None, :]
        if theta.shape[1] != self.dim:
            raise ValueError(f"theta has dim {theta.shape[1]}, prior has dim {self.dim}")
        return theta


class UniformBoxPrior(Prior):
    kind = "uniform-box"

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ConfigError("uniform-box bounds must have equal shape")
        if not np.all(self.upper > self.lower):
            raise ConfigError("uniform-box requires upper > lower in every dimension")
        self.dim = self.lower.size
        self._log_vol = float(np.sum(np.log(self.upper - self.lower)))

    def sample(self, n, rng):
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def log_density(self, theta):
        theta = self._rows(theta)
        ok = np.all((theta >= self.lower) & (theta <= self.upper), axis=1)
        out = np.full(theta.shape[0], -np.inf)
        out[ok] = -self._log_vol
        return out

    def describe(self):
        return f"uniform box on [{self.lower.tolist()}, {self.upper.tolist()}]"

    def to_dict(self):
        return {"kind": self.kind, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class TruncatedNormalPrior(Prior):
    """Independent per-dimension normals truncated to [lower, upper]."""

    kind = "truncated-normal"

    def __init__(self, loc, scale, lower=0.0, upper=np.inf):
        self.loc = np.atleast_1d(np.asarray(loc, dtype=float))
        self.dim = self.loc.size
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), (self.dim,)).copy()
        self.lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.dim,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.dim,)).copy()
        if np.any(self.scale <= 0):
            raise ConfigError("truncated-normal scale must be positive")
        if not np.all(self.upper > self.lower):
            raise ConfigError("truncated-normal requires upper > lower")
        self._a = (self.lower - self.loc) / self.scale
        self._b = (self.upper - self.loc) / self.scale

    def sample(self, n, rng):
        return stats.truncnorm.rvs(
            self._a, self._b, loc=self.loc, scale=self.scale, size=(n, self.dim), random_state=rng
        )

    def log_density(self, theta):
        theta = self._rows(theta)
        per_dim = stats.truncnorm.logpdf(theta, self._a, self._b, loc=self.loc, scale=self.scale)
        out = per_dim.sum(axis=1)
        return np.where(np.isnan(out), -np.inf, out)

    def inside(self, theta):
        theta = self._rows(theta)
        return np.all((theta >= self.lower) & (theta <= self.upper), axis=1)

    def describe(self):
        return f"truncated normal, support [{self.lower.min()}, {self.upper.max()}] per dim"

    def to_dict(self):
        return {
            "kind": self.kind,
            "loc": self.loc.tolist(),
            "scale": self.scale.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }


class FactorizedNormalPrior(Prior):
    """Independent N(loc_i, scale_i^2) per dimension; full support."""

    kind = "factorized-normal"

    def __init__(self, loc, scale):
        self.loc = np.atleast_1d(np.asarray(loc, dtype=float))
        self.dim = self.loc.size
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), (self.dim,)).copy()
        if np.any(self.scale <= 0):
            raise ConfigError("normal scale must be positive")

    def sample(self, n, rng):
        return self.loc + self.scale * rng.standard_normal((n, self.dim))

    def log_density(self, theta):
        theta = self._rows(theta)
        z = (theta - self.loc) / self.scale
        return -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(self.scale)) - 0.5 * self.dim * np.log(2 * np.pi)

    def inside(self, theta):
        theta = self._rows(theta)
        return np.ones(theta.shape[0], dtype=bool)

    def to_dict(self):
        return {"kind": self.kind, "loc": self.loc.tolist(), "scale": self.scale.tolist()}


class MultivariateNormalPrior(Prior):
    """Correlated Gaussian prior (used by benchmark tasks); full support."""

    kind = "multivariate-normal"

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.asarray(cov, dtype=float)
        self.dim = self.mean.size
        if self.cov.shape != (self.dim, self.dim):
            raise ConfigError("covariance shape mismatch")
        self._chol = np.linalg.cholesky(self.cov)
        sign, logdet = np.linalg.slogdet(self.cov)
        if sign <= 0:
            raise ConfigError("covariance must be positive definite")
        self._logdet = logdet

    def sample(self, n, rng):
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self._chol.T

    def log_density(self, theta):
        theta = self._rows(theta)
        diff = theta - self.mean
        sol = np.linalg.solve(self._chol, diff.T)
        mahal = np.sum(sol * sol, axis=0)
        return -0.5 * (self.dim * np.log(2 * np.pi) + self._logdet + mahal)

    def inside(self, theta):
        theta = self._rows(theta)
        return np.ones(theta.shape[0], dtype=bool)

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean.tolist(), "cov": self.cov.tolist()}


_PRIOR_KINDS = {
    "uniform-box": lambda d: UniformBoxPrior(d["lower"], d["upper"]),
    "truncated-normal": lambda d: TruncatedNormalPrior(
        d["loc"], d["scale"], d.get("lower", 0.0), d.get("upper", np.inf)
    ),
    "factorized-normal": lambda d: FactorizedNormalPrior(d["loc"], d["scale"]),
    "multivariate-normal": lambda d: MultivariateNormalPrior(d["mean"], d["cov"]),
}


def prior_from_dict(spec: dict) -> Prior:
    """Rebuild a prior from its serialized form (scenario and config files)."""
    kind = spec.get("kind")
    if kind not in _PRIOR_KINDS:
        raise ConfigError(f"unknown prior kind {kind!r}; expected one of {sorted(_PRIOR_KINDS)}")
    return _PRIOR_KINDS[kind](spec)
