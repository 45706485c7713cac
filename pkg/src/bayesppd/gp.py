"""Exact Gaussian-process regression with an RBF kernel and a constant mean.

Used as a continuous-prior baseline: fitted to noiseless samples of a step
function while assuming Gaussian observation noise, the GP band around its
over-smooth mean gets narrower as context grows and stops covering the step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .priors import Dataset

JITTER_LEVELS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
Z95 = 1.959963984540054


class FactorizationError(LinAlgError):
    def __init__(self, jitters):
        self.jitters = tuple(jitters)
        super().__init__(f"Cholesky factorization failed with jitter levels {self.jitters}")


@dataclass(frozen=True)
class GPConfig:
    lengthscale: float = 0.4
    outputscale: float = 1.0
    noise_sigma: float = 0.1
    constant_mean: float = 0.0

    def __post_init__(self):
        for name in ("lengthscale", "outputscale", "noise_sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def kernel(self, a, b) -> np.ndarray:
        d = np.asarray(a, dtype=np.float64)[:, None] - np.asarray(b, dtype=np.float64)[None, :]
        return self.outputscale * np.exp(-0.5 * (d / self.lengthscale) ** 2)


@dataclass
class GPPosterior:
    config: GPConfig
    context: Dataset
    factor: tuple
    alpha: np.ndarray
    jitter: float = 0.0
    attempted_jitters: tuple = field(default_factory=tuple)

    def latent(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """Mean and variance of the noise-free function values at ``xs``."""
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        ks = self.config.kernel(xs, self.context.xs)
        mean = self.config.constant_mean + ks @ self.alpha
        v = cho_solve(self.factor, ks.T)
        var = self.config.outputscale - np.einsum("ij,ji->i", ks, v)
        return mean, np.maximum(var, 0.0)

    def predict(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """Mean and variance of a new noisy observation at ``xs``."""
        mean, var = self.latent(xs)
        return mean, var + self.config.noise_sigma ** 2


def gp_fit(config: GPConfig, data: Dataset) -> GPPosterior:
    """Condition the GP on ``data``; jitter is added only if factorization fails."""
    if len(data) == 0:
        raise ValueError("gp_fit needs at least one context point")
    K = config.kernel(data.xs, data.xs)
    K[np.diag_indices_from(K)] += config.noise_sigma ** 2
    tried = []
    for jitter in JITTER_LEVELS:
        tried.append(jitter)
        try:
            factor = cho_factor(K + jitter * np.eye(len(data)), lower=True)
        except LinAlgError:
            continue
        alpha = cho_solve(factor, data.ys - config.constant_mean)
        return GPPosterior(config, data, factor, alpha, jitter, tuple(tried))
    raise FactorizationError(tried)


def unit_step(x, location: float = 0.5, low: float = 0.0, high: float = 1.0):
    return np.where(np.asarray(x) < location, low, high)


@dataclass
class StepCoverage:
    n_context: np.ndarray
    coverage_95: np.ndarray
    mean_abs_error: np.ndarray
    grid: np.ndarray
    means: list
    variances: list
    jitters: list


def gp_step_experiment(config: GPConfig | None = None, n_context_values=(10, 20, 50, 100, 200, 400),
                       target=None, n_grid: int = 1001, band: str = "latent") -> StepCoverage:
    """Coverage of the true function by the GP's 95% band as context grows.

    Context points are ``n`` linearly spaced, noiseless samples of ``target``
    on [0, 1] (default: a 0 -> 1 step at 0.5 with constant mean 0.5). Coverage
    is the fraction of ``n_grid`` evaluation points where the target lies in
    mean +- 1.96 sd. ``band="latent"`` uses the sd of the function values;
    ``band="predictive"`` adds observation noise.
    """
    if config is None:
        config = GPConfig(constant_mean=0.5)
    if target is None:
        target = unit_step
    if band not in ("latent", "predictive"):
        raise ValueError("band must be 'latent' or 'predictive'")
    grid = np.linspace(0.0, 1.0, n_grid)
    truth = target(grid)
    cov, mae, means, variances, jitters = [], [], [], [], []
    for n in n_context_values:
        xs = np.linspace(0.0, 1.0, int(n))
        post = gp_fit(config, Dataset(xs, target(xs)))
        mean, var = post.latent(grid) if band == "latent" else post.predict(grid)
        cov.append(float(np.mean(np.abs(truth - mean) <= Z95 * np.sqrt(var))))
        mae.append(float(np.mean(np.abs(truth - mean))))
        means.append(mean)
        variances.append(var)
        jitters.append(post.jitter)
    return StepCoverage(np.asarray(n_context_values), np.asarray(cov), np.asarray(mae),
                        grid, means, variances, jitters)
