"""Exact posterior over a finite latent set and the discrete posterior predictive.

The posterior predictive density at a query input is a weighted sum of Gaussians,
one per latent, centred on that latent's mean function:

    p(y | x, D) = sum_l p(l | D) * Normal(y; f_l(x), sigma**2)

All per-latent work is done in fixed-size blocks (see :mod:`bayesppd.logspace`)
so results do not depend on ``jobs``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .logspace import (
    BLOCK_SIZE,
    LOG_SQRT_2PI,
    blocked_logsumexp,
    logsumexp,
    map_blocks,
    ordered_sum,
)
from .priors import Dataset, FinitePrior, log_likelihoods

DEFAULT_QUANTILES = (0.05, 0.95)
DEFAULT_Y_POINTS = 201
QUANTILE_TOL = 1e-8


@dataclass(frozen=True)
class PosteriorWeights:
    """Normalized log posterior mass per latent, aligned with the prior."""

    log_weights: np.ndarray
    evidence: float
    n_observed: int = 0

    def __len__(self) -> int:
        return int(self.log_weights.size)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def mass(self, mask) -> float:
        """Total posterior probability of the latents selected by ``mask``."""
        return math.exp(blocked_logsumexp(self.log_weights[mask]))

    def top(self, k: int) -> np.ndarray:
        """Indices of the ``k`` heaviest latents, heaviest first (ties by index)."""
        k = min(k, len(self))
        idx = np.argpartition(-self.log_weights, k - 1)[:k] if k < len(self) else np.arange(len(self))
        return idx[np.lexsort((idx, -self.log_weights[idx]))]


@dataclass
class PPDResult:
    query_xs: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    y_grid: np.ndarray | None = None
    density: np.ndarray | None = None
    quantiles: dict[float, np.ndarray] = field(default_factory=dict)
    truncated_mass: float = 0.0

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


def _log_joint(prior: FinitePrior, data: Dataset, jobs: int) -> np.ndarray:
    n = len(prior)
    out = np.empty(n)

    def work(lo, hi):
        out[lo:hi] = prior.log_prior[lo:hi] + log_likelihoods(prior, data, lo, hi)

    map_blocks(work, n, jobs)
    return out


def posterior(prior: FinitePrior, data: Dataset, jobs: int = 1) -> PosteriorWeights:
    """Exact posterior ``p(l | data)``; ``evidence`` is ``log p(data)``.

    The evidence includes the input density term ``n * log p(x)``, which is 0
    for U(0, 1). With no data the prior is returned as is.
    """
    if len(data) == 0:
        return PosteriorWeights(prior.log_prior, 0.0, 0)
    log_joint = _log_joint(prior, data, jobs)
    log_z = blocked_logsumexp(log_joint)
    evidence = log_z + len(data) * prior.log_input_density
    return PosteriorWeights(log_joint - log_z, evidence, len(data))


def posterior_update(prior: FinitePrior, weights: PosteriorWeights, new: Dataset,
                     jobs: int = 1) -> PosteriorWeights:
    """Condition an existing posterior on additional examples."""
    if len(new) == 0:
        return weights
    log_joint = np.empty(len(prior))

    def work(lo, hi):
        log_joint[lo:hi] = weights.log_weights[lo:hi] + log_likelihoods(prior, new, lo, hi)

    map_blocks(work, len(prior), jobs)
    log_z = blocked_logsumexp(log_joint)
    evidence = weights.evidence + log_z + len(new) * prior.log_input_density
    return PosteriorWeights(log_joint - log_z, evidence, weights.n_observed + len(new))


def marginal_evidence(prior: FinitePrior, data: Dataset, jobs: int = 1) -> float:
    """``log p(data)`` under the prior."""
    if len(data) == 0:
        return 0.0
    log_z = blocked_logsumexp(_log_joint(prior, data, jobs))
    return log_z + len(data) * prior.log_input_density


def _support(weights: PosteriorWeights) -> np.ndarray:
    """Latents whose weight is non-zero in float64, in index order.

    Dropping the rest changes no sum: their weights are exactly 0.
    """
    return np.flatnonzero(np.exp(weights.log_weights) > 0.0)


def _truncated_support(weights: PosteriorWeights, mass_tol: float) -> tuple[np.ndarray, float]:
    """Smallest index set whose discarded mass is at most ``mass_tol``."""
    idx = _support(weights)
    if mass_tol <= 0 or idx.size <= 1:
        return idx, 0.0
    w = np.exp(weights.log_weights[idx])
    order = np.argsort(w, kind="stable")
    tail = np.cumsum(w[order])
    n_drop = int(np.searchsorted(tail, mass_tol, side="right"))
    if n_drop == 0:
        return idx, 0.0
    dropped = float(tail[n_drop - 1])
    keep = np.sort(order[n_drop:])
    return idx[keep], dropped


def ppd_moments(prior: FinitePrior, weights: PosteriorWeights, query_xs,
                jobs: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Mixture mean and variance at each query input, summed over all latents."""
    mean, variance, _, _ = _moments(prior, weights, query_xs, jobs)
    return mean, variance


def _moments(prior, weights, query_xs, jobs):
    """Mean, variance and the per-input range of mean values over the support."""
    xs = np.asarray(query_xs, dtype=np.float64).reshape(-1)
    if xs.size == 0:
        return np.empty(0), np.empty(0), np.empty(0), np.empty(0)
    idx = _support(weights)
    w_all = np.exp(weights.log_weights[idx])

    def work(lo, hi):
        f = prior.means_at(xs, idx[lo:hi])
        w = w_all[lo:hi]
        return w.sum(), w @ f, w @ (f * f), f.min(axis=0), f.max(axis=0)

    parts = map_blocks(work, idx.size, jobs, BLOCK_SIZE // 8)
    w_sum = math.fsum(p[0] for p in parts)
    first = ordered_sum([p[1] for p in parts]) / w_sum
    second = ordered_sum([p[2] for p in parts]) / w_sum
    lo = np.min([p[3] for p in parts], axis=0)
    hi = np.max([p[4] for p in parts], axis=0)
    mean = np.clip(first, lo, hi)
    variance = prior.noise_sigma ** 2 + np.maximum(second - mean * mean, 0.0)
    return mean, variance, lo, hi


def _components(values: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge latents with identical mean value into one weighted component."""
    uniq, inv = np.unique(values, return_inverse=True)
    return uniq, np.bincount(inv, weights=w, minlength=uniq.size)


def _mixture_quantiles(centers, w, sigma, probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    lo = np.full(probs.shape, centers.min() - 10 * sigma)
    hi = np.full(probs.shape, centers.max() + 10 * sigma)
    total = w.sum()
    while np.any(hi - lo > QUANTILE_TOL):
        mid = 0.5 * (lo + hi)
        cdf = ndtr((mid[:, None] - centers[None, :]) / sigma) @ w / total
        below = cdf < probs
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def ppd(prior: FinitePrior, weights: PosteriorWeights, query_xs, y_grid=None,
        quantiles=DEFAULT_QUANTILES, density: bool = False, mass_tol: float = 1e-12,
        jobs: int = 1) -> PPDResult:
    """Posterior predictive statistics at each query input.

    Mean and variance are exact sums over every latent with non-zero weight.
    Density and quantiles merge latents that share a mean value at each input
    and skip the lightest latents up to a total mass of ``mass_tol``; the
    skipped mass is reported as ``truncated_mass``. Quantiles come from the
    mixture CDF by bisection to ``1e-8`` in y, independent of ``y_grid``.

    When ``density`` is true and ``y_grid`` is not given, the grid has 201
    points spanning ``[min(mean - 4*std), max(mean + 4*std)]``, widened where
    needed to reach 4 sigma beyond every latent's mean value, so that light
    components far from the mixture mean are not cut off.
    """
    if len(weights) != len(prior):
        raise ValueError("weights are not aligned with the prior")
    xs = np.asarray(query_xs, dtype=np.float64).reshape(-1)
    mean, variance, f_lo, f_hi = _moments(prior, weights, xs, jobs)
    result = PPDResult(xs, mean, variance)
    if xs.size == 0:
        return result
    want_density = density or y_grid is not None
    quantiles = tuple(quantiles or ())
    if not want_density and not quantiles:
        return result

    if want_density and y_grid is None:
        sd = np.sqrt(variance)
        s4 = 4 * prior.noise_sigma
        y_grid = np.linspace(min(np.min(mean - 4 * sd), np.min(f_lo) - s4),
                             max(np.max(mean + 4 * sd), np.max(f_hi) + s4), DEFAULT_Y_POINTS)
    if want_density:
        result.y_grid = np.asarray(y_grid, dtype=np.float64)
        result.density = np.empty((xs.size, result.y_grid.size))
    result.quantiles = {q: np.empty(xs.size) for q in quantiles}

    idx, dropped = _truncated_support(weights, mass_tol)
    result.truncated_mass = dropped
    w = np.exp(weights.log_weights[idx])
    sigma = prior.noise_sigma
    norm = 1.0 / (sigma * math.sqrt(2 * math.pi))
    chunk = max(1, (1 << 22) // max(idx.size, 1))

    def work(j0, j1):
        vals = prior.means_at(xs[j0:j1], idx)
        for j in range(j0, j1):
            centers, cw = _components(vals[:, j - j0], w)
            if want_density:
                z = (result.y_grid[:, None] - centers[None, :]) / sigma
                result.density[j] = norm * (np.exp(-0.5 * z * z) @ cw) / cw.sum()
            if quantiles:
                qs = _mixture_quantiles(centers, cw, sigma, quantiles)
                for q, v in zip(quantiles, qs):
                    result.quantiles[q][j] = v

    map_blocks(work, xs.size, jobs, chunk)
    return result


def ppd_log_density(prior: FinitePrior, weights: PosteriorWeights, x: float, y: float) -> float:
    """``log p(y | x, D)`` computed in log space over all latents."""
    f = prior.means(np.array([x]))[:, 0]
    z = (y - f) / prior.noise_sigma
    terms = weights.log_weights - 0.5 * z * z
    return blocked_logsumexp(terms) - math.log(prior.noise_sigma) - LOG_SQRT_2PI


@dataclass(frozen=True)
class NLLEstimate:
    mean: float
    stderr: float
    n_eval: int
    n_context: int


def bayes_optimal_nll(prior: FinitePrior, n_context: int, n_eval: int, seed=None,
                      budget: int = 1 << 23) -> NLLEstimate:
    """Monte-Carlo estimate of the expected negative log posterior predictive density.

    Each evaluation draws a latent and ``n_context + 1`` examples from the prior,
    conditions on the first ``n_context`` and scores the last. This is the loss
    floor of a network trained on prior samples with that context size.
    Evaluations are vectorized in batches holding at most ``budget``
    latent-by-input entries.
    """
    if n_context < 0:
        raise ValueError("n_context must be non-negative")
    if n_eval < 1:
        raise ValueError("n_eval must be positive")
    rng = np.random.default_rng(seed)
    L = len(prior)
    width = n_context + 1
    cdf = np.cumsum(np.exp(prior.log_prior))
    per_eval = L * width
    batch = max(1, budget // per_eval)
    chunk = max(1, budget // (width * min(batch, n_eval)))
    losses = np.empty(n_eval)
    for start in range(0, n_eval, batch):
        b = min(batch, n_eval - start)
        latent = np.minimum(np.searchsorted(cdf, rng.random(b) * cdf[-1], side="right"), L - 1)
        xs = rng.uniform(prior.input_low, prior.input_high, size=(b, width))
        ys = np.empty((b, width))
        for i in range(b):
            ys[i] = prior.means(xs[i], latent[i], latent[i] + 1)[0]
        ys += prior.noise_sigma * rng.standard_normal((b, width))
        losses[start:start + b] = _nll_batch(prior, xs, ys, chunk)
    stderr = float(np.std(losses, ddof=1) / math.sqrt(n_eval)) if n_eval > 1 else math.nan
    return NLLEstimate(float(np.mean(losses)), stderr, n_eval, n_context)


def _nll_batch(prior: FinitePrior, xs: np.ndarray, ys: np.ndarray, chunk: int) -> np.ndarray:
    """-log ppd(y_last | x_last, other points) for each row of (xs, ys)."""
    b, width = xs.shape
    sigma = prior.noise_sigma
    den_parts, num_parts = [], []
    for lo in range(0, len(prior), chunk):
        hi = min(lo + chunk, len(prior))
        f = prior.means(xs.ravel(), lo, hi).reshape(hi - lo, b, width)
        z = (ys[None] - f) / sigma
        sq = z * z
        ctx = prior.log_prior[lo:hi, None] - 0.5 * np.sum(sq[:, :, :-1], axis=2)
        den_parts.append(logsumexp(ctx, axis=0))
        num_parts.append(logsumexp(ctx - 0.5 * sq[:, :, -1], axis=0))
    log_den = logsumexp(np.stack(den_parts), axis=0)
    log_num = logsumexp(np.stack(num_parts), axis=0)
    return -(log_num - log_den) + math.log(sigma) + LOG_SQRT_2PI
