"""Independent reference implementations used as test oracles.

Posterior, coin and GP oracles use mpmath at 50 significant digits and direct
products or explicit inverses, with no log-space shortcuts, so they share no
numerics with the package. The gradient oracle is central finite differences.
"""

import itertools
import math

import mpmath as mp
import numpy as np

from bayesppd import Dataset, line, prior_from_latents, sine, step
from bayesppd.mlp import loss_and_grads

mp.mp.dps = 50


def f_value(family, params, x):
    x = mp.mpf(x)
    if family == 0:
        dx, dy, h = (mp.mpf(v) for v in params[:3])
        return dy if x < dx else dy + h
    if family == 1:
        return mp.mpf("0.2") * mp.sin(3 * mp.pi * x + mp.mpf(params[0]))
    dy, m = mp.mpf(params[0]), mp.mpf(params[1])
    return m * x + dy


def normal_pdf(y, mean, sigma):
    sigma = mp.mpf(sigma)
    return mp.exp(-((mp.mpf(y) - mean) ** 2) / (2 * sigma ** 2)) / (sigma * mp.sqrt(2 * mp.pi))


def naive_posterior(prior, data):
    """(log weights, log evidence) from direct products of densities."""
    joint = []
    for i in range(len(prior)):
        w = mp.exp(mp.mpf(prior.log_prior[i]))
        for x, y in zip(data.xs, data.ys):
            w *= normal_pdf(y, f_value(int(prior.family[i]), prior.params[i], x), prior.noise_sigma)
        joint.append(w)
    z = mp.fsum(joint)
    return np.array([float(mp.log(w / z)) for w in joint]), float(mp.log(z))


def naive_ppd_moments(prior, log_weights, x):
    w = [mp.exp(mp.mpf(v)) for v in log_weights]
    f = [f_value(int(prior.family[i]), prior.params[i], x) for i in range(len(prior))]
    mean = mp.fsum(wi * fi for wi, fi in zip(w, f)) / mp.fsum(w)
    second = mp.fsum(wi * (fi ** 2 + mp.mpf(prior.noise_sigma) ** 2) for wi, fi in zip(w, f)) / mp.fsum(w)
    return float(mean), float(second - mean ** 2)


def random_prior(rng, max_latents=100):
    n = int(rng.integers(1, max_latents + 1))
    latents = []
    for _ in range(n):
        fam = int(rng.integers(0, 3))
        if fam == 0:
            latents.append(step(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 2)))
        elif fam == 1:
            latents.append(sine(rng.uniform(0, 2 * math.pi)))
        else:
            latents.append(line(rng.uniform(-1, 1), rng.uniform(-1, 1)))
    log_prior = rng.normal(0, 2, n) if rng.random() < 0.5 else None
    sigma = float(rng.choice([0.05, 0.1, 0.3]))
    return prior_from_latents(latents, log_prior, noise_sigma=sigma)


def random_dataset(rng, max_n=20):
    n = int(rng.integers(0, max_n + 1))
    return Dataset(rng.uniform(0, 1, n), rng.uniform(-1.5, 1.5, n))


# ------------------------------------------------------------- coins

def brute_force(prior, true_p, n):
    """Average over all 2**n sequences, weighting each by its probability."""
    p = prior.head_probs
    prior_w = np.exp(prior.log_prior)
    pred = 0.0
    loglik = np.zeros(p.size)
    mass = np.zeros(p.size)
    for seq in itertools.product((0, 1), repeat=n):
        h = sum(seq)
        prob = true_p ** h * (1 - true_p) ** (n - h)
        lik = prior_w.copy()
        for s in seq:
            lik *= p if s else 1 - p
        post = lik / lik.sum()
        pred += prob * (post @ p)
        mass += prob * post
        loglik += prob * (h * np.log(p) + (n - h) * np.log(1 - p))
    return pred, loglik, mass


def mp_avg_predictive(probs, true_p, n):
    probs = [mp.mpf(x) for x in probs]
    t = mp.mpf(true_p)
    total = mp.mpf(0)
    for k in range(n + 1):
        lik = [q ** k * (1 - q) ** (n - k) for q in probs]
        pred = mp.fsum(q * l for q, l in zip(probs, lik)) / mp.fsum(lik)
        total += mp.binomial(n, k) * t ** k * (1 - t) ** (n - k) * pred
    return float(total)


# ------------------------------------------------------------- GP

def mp_predict(cfg, xs, ys, query):
    """Predictive mean and variance via an explicit extended-precision inverse."""
    n = len(xs)

    def k(a, b):
        return mp.mpf(cfg.outputscale) * mp.exp(-((mp.mpf(a) - mp.mpf(b)) ** 2) / (2 * mp.mpf(cfg.lengthscale) ** 2))

    K = mp.matrix(n, n)
    for i in range(n):
        for j in range(n):
            K[i, j] = k(xs[i], xs[j]) + (mp.mpf(cfg.noise_sigma) ** 2 if i == j else 0)
    Kinv = mp.inverse(K)
    resid = mp.matrix([mp.mpf(y) - mp.mpf(cfg.constant_mean) for y in ys])
    means, variances = [], []
    for q in query:
        ks = mp.matrix([k(q, x) for x in xs])
        means.append(float(mp.mpf(cfg.constant_mean) + (ks.T * Kinv * resid)[0]))
        variances.append(float(k(q, q) + mp.mpf(cfg.noise_sigma) ** 2 - (ks.T * Kinv * ks)[0]))
    return np.array(means), np.array(variances)


# ------------------------------------------------------------- MLP

def numeric_grad(params, x, y, sw, idx, h=1e-5):
    flat = params.flat()
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        plus, minus = flat.copy(), flat.copy()
        plus[i] += h
        minus[i] -= h
        lp, _ = loss_and_grads(params.with_flat(plus), x, y, sw)
        lm, _ = loss_and_grads(params.with_flat(minus), x, y, sw)
        out[j] = (lp - lm) / (2 * h)
    return out
