"""Evaluation metrics: RMSNE, C2ST, MMD, median distance, posterior mean error.

RMSNE follows the printed formula sqrt(n * sum((x_hat - x_o)^2)) / sum(x_o),
which normalizes by the total observed flow rather than per element; keep
that in mind when comparing against per-element normalizations elsewhere.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist
from sklearn.exceptions import ConvergenceWarning
from sklearn.model_selection import StratifiedKFold
from sklearn.neural_network import MLPClassifier

from .errors import ConfigError, SimulatorError

__all__ = [
    "MetricReport",
    "rmsne",
    "c2st",
    "mmd",
    "median_distance",
    "posterior_mean_error",
]


@dataclass
class MetricReport:
    name: str
    value: float
    standard_error: float | None = None
    sample_sizes: dict = field(default_factory=dict)
    config_digest: str = ""

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ConfigError(f"metric {self.name} produced a non-finite value")


def _digest(name: str, **params) -> str:
    blob = json.dumps({"name": name, **params}, sort_keys=True)
    return hashlib.md5(blob.encode()).hexdigest()[:10]


def rmsne(x_hat, x_o) -> float:
    """Root mean squared normalized error: sqrt(n * sum(sq residual)) / sum(x_o)."""
    x_hat = np.asarray(x_hat, dtype=float).ravel()
    x_o = np.asarray(x_o, dtype=float).ravel()
    if x_hat.size != x_o.size or x_o.size < 1:
        raise ConfigError("rmsne requires equal-length, non-empty vectors")
    denom = float(np.sum(x_o))
    if denom <= 0:
        raise ConfigError("rmsne undefined: sum of observed values must be positive")
    n = x_o.size
    return float(math.sqrt(n * np.sum((x_hat - x_o) ** 2)) / denom)


def c2st(samples_p, samples_q, folds: int = 5, seed: int = 0) -> MetricReport:
    """Classifier two-sample test: k-fold CV accuracy of a small MLP.

    0.5 means the sample sets are indistinguishable. Data are z-scored with
    pooled statistics; constant features are dropped with a warning.
    """
    p = np.atleast_2d(np.asarray(samples_p, dtype=float))
    q = np.atleast_2d(np.asarray(samples_q, dtype=float))
    if p.shape[0] < 100 or q.shape[0] < 100:
        raise ConfigError("c2st needs at least 100 samples per side")
    data = np.vstack([p, q])
    labels = np.concatenate([np.zeros(p.shape[0]), np.ones(q.shape[0])])

    std = data.std(axis=0)
    keep = std > 0
    if not np.all(keep):
        warnings.warn(f"c2st: dropping {int(np.sum(~keep))} constant feature(s)")
        data = data[:, keep]
        std = std[keep]
    if data.shape[1] == 0:
        raise ConfigError("c2st: no non-constant features remain")
    data = (data - data.mean(axis=0)) / std

    accs = []
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for k, (tr, te) in enumerate(splitter.split(data, labels)):
            clf = MLPClassifier(hidden_layer_sizes=(32, 32), max_iter=300, random_state=seed + k)
            clf.fit(data[tr], labels[tr])
            accs.append(clf.score(data[te], labels[te]))
    accs = np.asarray(accs)
    return MetricReport(
        name="c2st",
        value=float(accs.mean()),
        standard_error=float(accs.std(ddof=1) / math.sqrt(folds)),
        sample_sizes={"p": p.shape[0], "q": q.shape[0]},
        config_digest=_digest("c2st", folds=folds, hidden=(32, 32), seed=seed),
    )


def mmd(samples_p, samples_q) -> MetricReport:
    """Unbiased squared MMD with a Gaussian kernel at the median-distance
    bandwidth; the signed estimate may be slightly negative under the null."""
    x = np.atleast_2d(np.asarray(samples_p, dtype=float))
    y = np.atleast_2d(np.asarray(samples_q, dtype=float))
    n, m = x.shape[0], y.shape[0]
    if n < 50 or m < 50:
        raise ConfigError("mmd needs at least 50 samples per side")

    pooled = np.vstack([x, y])
    dists = pdist(pooled)
    sigma = float(np.median(dists))
    if sigma == 0.0:
        sigma = 1.0

    gamma = 1.0 / (2.0 * sigma**2)
    kxx = np.exp(-gamma * cdist(x, x, "sqeuclidean"))
    kyy = np.exp(-gamma * cdist(y, y, "sqeuclidean"))
    kxy = np.exp(-gamma * cdist(x, y, "sqeuclidean"))
    np.fill_diagonal(kxx, 0.0)
    np.fill_diagonal(kyy, 0.0)
    value = kxx.sum() / (n * (n - 1)) + kyy.sum() / (m * (m - 1)) - 2.0 * kxy.mean()
    return MetricReport(
        name="mmd",
        value=float(value),
        sample_sizes={"p": n, "q": m},
        config_digest=_digest("mmd", kernel="gaussian-median", bandwidth=round(sigma, 12)),
    )


def median_distance(posterior_theta_samples, simulator, x_o, rng: np.random.Generator) -> MetricReport:
    """Median L2 distance between simulations at posterior draws and x_o.

    Each theta is simulated once; simulator failures are excluded and counted.
    """
    thetas = np.atleast_2d(np.asarray(posterior_theta_samples, dtype=float))
    if thetas.shape[0] < 1:
        raise ConfigError("median_distance needs at least one sample")
    x_o = np.asarray(x_o, dtype=float).ravel()
    dists = []
    failures = 0
    for i in range(thetas.shape[0]):
        try:
            x = np.asarray(simulator(thetas[i], rng), dtype=float).ravel()
        except SimulatorError:
            failures += 1
            continue
        dists.append(float(np.linalg.norm(x - x_o)))
    if not dists:
        raise ConfigError("median_distance: every simulation failed")
    return MetricReport(
        name="median_dist",
        value=float(np.median(dists)),
        sample_sizes={"used": len(dists), "failed": failures},
        config_digest=_digest("median_dist"),
    )


def posterior_mean_error(approx_samples, true_mean, normalizer) -> MetricReport:
    """Normalized absolute error of the posterior mean, averaged over dimensions.

    The normalizer is the reference posterior standard deviation per
    dimension; zero components are skipped with a warning.
    """
    samples = np.atleast_2d(np.asarray(approx_samples, dtype=float))
    true_mean = np.asarray(true_mean, dtype=float).ravel()
    normalizer = np.asarray(normalizer, dtype=float).ravel()
    if samples.shape[1] != true_mean.size or true_mean.size != normalizer.size:
        raise ConfigError("posterior_mean_error dimension mismatch")
    if np.any(normalizer < 0):
        raise ConfigError("normalizer must be nonnegative")
    keep = normalizer > 0
    if not np.all(keep):
        warnings.warn(f"posterior_mean_error: skipping {int(np.sum(~keep))} zero-sd dimension(s)")
    if not np.any(keep):
        raise ConfigError("posterior_mean_error: all normalizer components are zero")
    err = np.abs(samples.mean(axis=0) - true_mean)[keep] / normalizer[keep]
    return MetricReport(
        name="mean_err",
        value=float(err.mean()),
        sample_sizes={"n": samples.shape[0], "dims": int(np.sum(keep))},
        config_digest=_digest("mean_err", normalizer="reference-posterior-sd"),
    )
