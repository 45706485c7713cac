"""Exact coin-flip posteriors over a finite set of head probabilities.

Averages over coin-toss outcomes are exact expectations under the true coin:
the number of heads k after n flips is Binomial(n, true_p), and every
statistic here depends on the sequence only through k, so each average is a
sum of n + 1 terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .logspace import logsumexp


@dataclass(frozen=True)
class CoinPrior:
    head_probs: np.ndarray
    log_prior: np.ndarray = None

    def __post_init__(self):
        p = np.asarray(self.head_probs, dtype=np.float64).reshape(-1)
        if p.size == 0:
            raise ValueError("a coin prior needs at least one head probability")
        if np.any(p <= 0) or np.any(p >= 1):
            raise ValueError("head probabilities must lie strictly inside (0, 1)")
        if self.log_prior is None:
            lp = np.full(p.size, -math.log(p.size))
        else:
            lp = np.asarray(self.log_prior, dtype=np.float64).reshape(-1)
            if lp.shape != p.shape:
                raise ValueError("log_prior must align with head_probs")
            lp = lp - logsumexp(lp)
        object.__setattr__(self, "head_probs", p)
        object.__setattr__(self, "log_prior", lp)

    @classmethod
    def grid(cls, lo: float = 0.01, hi: float = 0.99, num: int = 99) -> "CoinPrior":
        return cls(np.linspace(lo, hi, num))

    def log_posterior(self, heads, tails) -> np.ndarray:
        """Normalized log posterior; broadcasts over arrays of counts (last axis = latents)."""
        heads = np.asarray(heads, dtype=np.float64)[..., None]
        tails = np.asarray(tails, dtype=np.float64)[..., None]
        logj = self.log_prior + heads * np.log(self.head_probs) + tails * np.log1p(-self.head_probs)
        return logj - logsumexp(logj, axis=-1)[..., None]


def coin_posterior_predictive(prior: CoinPrior, heads: int, tails: int) -> float:
    """Probability that the next flip is heads after observing the counts."""
    if heads < 0 or tails < 0:
        raise ValueError("counts must be non-negative")
    return float(np.exp(prior.log_posterior(heads, tails)) @ prior.head_probs)


def counting_curve(prior: CoinPrior, ks) -> np.ndarray:
    """Predictive head probability after ``k`` heads and no tails, for each k."""
    ks = np.asarray(ks)
    if ks.size == 0:
        raise ValueError("ks must be non-empty")
    if np.any(ks < 0):
        raise ValueError("ks must be non-negative")
    return np.exp(prior.log_posterior(ks, np.zeros_like(ks))) @ prior.head_probs


def log_binomial_pmf(n: int, p: float) -> np.ndarray:
    """log Binomial(k; n, p) for k = 0..n, via log-gamma."""
    k = np.arange(n + 1, dtype=np.float64)
    log_coef = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return log_coef + k * math.log(p) + (n - k) * math.log1p(-p)


@dataclass
class CoinExperimentResult:
    """Outcome-averaged statistics of a misspecified coin prior.

    Rows follow ``n_values``; matrix columns follow ``head_probs``. Averages are
    expectations over k ~ Binomial(n, true_p).
    """

    n_values: np.ndarray
    head_probs: np.ndarray
    true_p: float
    avg_predictive: np.ndarray
    avg_log_likelihood: np.ndarray
    avg_posterior_mass: np.ndarray
    averaging: str = field(default="expectation over k ~ Binomial(n, true_p)")


def misspecified_sweep(prior: CoinPrior, true_p: float, n_values) -> CoinExperimentResult:
    if not 0 < true_p < 1:
        raise ValueError("true_p must lie strictly inside (0, 1)")
    n_values = np.asarray(n_values, dtype=np.int64)
    if np.any(n_values < 0):
        raise ValueError("n_values must be non-negative")
    p = prior.head_probs
    log_p, log_q = np.log(p), np.log1p(-p)
    pred = np.empty(n_values.size)
    loglik = np.empty((n_values.size, p.size))
    mass = np.empty((n_values.size, p.size))
    for i, n in enumerate(n_values):
        n = int(n)
        pmf = np.exp(log_binomial_pmf(n, true_p))
        k = np.arange(n + 1, dtype=np.float64)
        post = np.exp(prior.log_posterior(k, n - k))
        mass[i] = pmf @ post
        pred[i] = mass[i] @ p
        expected_heads = n * true_p
        loglik[i] = expected_heads * log_p + (n - expected_heads) * log_q
    mass /= mass.sum(axis=1, keepdims=True)
    return CoinExperimentResult(n_values, p.copy(), float(true_p), pred, loglik, mass)
