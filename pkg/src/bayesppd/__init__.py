"""Exact posteriors and posterior predictives for finite-latent in-context-learning priors."""

__version__ = "0.1.0"

from .priors import (  # noqa: E402
    Dataset,
    Example,
    Family,
    FinitePrior,
    FunctionLatent,
    PriorSpec,
    build_prior,
    eval_latent,
    line,
    log_likelihood,
    prior_from_latents,
    sample_dataset,
    sine,
    step,
)
from .posterior import (  # noqa: E402
    PPDResult,
    PosteriorWeights,
    bayes_optimal_nll,
    marginal_evidence,
    posterior,
    posterior_update,
    ppd,
)
from .coins import CoinPrior, coin_posterior_predictive, counting_curve, misspecified_sweep  # noqa: E402
