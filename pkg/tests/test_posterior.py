import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import naive_posterior, naive_ppd_moments, random_dataset, random_prior
from scipy.optimize import brentq
from scipy.stats import norm

from bayesppd import (
    Dataset,
    Family,
    bayes_optimal_nll,
    build_prior,
    line,
    log_likelihood,
    marginal_evidence,
    posterior,
    posterior_update,
    ppd,
    prior_from_latents,
    sample_dataset,
    sine,
)
from bayesppd.logspace import blocked_logsumexp
from bayesppd.posterior import ppd_log_density

seeds = st.integers(0, 2 ** 32 - 1)


def coarse_step_prior(num=41):
    """A step prior with num**3 latents; 41 gives 68,921, i.e. three blocks."""
    g = [-1.0, 1.0, num]
    return build_prior({"family": "step", "grids": {"dx": g, "dy": g, "h": [0.0, 2.0, num]}})


# ------------------------------------------------------------- posterior

def test_empty_data_returns_prior():
    p = build_prior("sine+line")
    w = posterior(p, Dataset.empty())
    assert np.array_equal(w.log_weights, p.log_prior)
    assert w.evidence == 0.0


def test_two_constants(two_constants):
    w = posterior(two_constants, Dataset.from_examples([(0.5, 0.0)]))
    # 1 - 1e-20 rounds to 1.0, so the bound is checked on the complement
    assert w.weights[1] < 1e-20
    assert w.log_weights[1] == pytest.approx(-50.0, abs=1e-12)
    assert w.log_weights[0] == pytest.approx(-math.log1p(math.exp(-50)), abs=1e-15)


@given(seeds)
def test_matches_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    prior, data = random_prior(rng, 30), random_dataset(rng, 12)
    w = posterior(prior, data)
    ref_w, ref_z = naive_posterior(prior, data)
    assert np.max(np.abs(w.log_weights - ref_w)) < 1e-10
    assert w.evidence == pytest.approx(ref_z, abs=1e-10)


@given(seeds)
def test_normalized(seed):
    rng = np.random.default_rng(seed)
    w = posterior(random_prior(rng), random_dataset(rng))
    assert abs(blocked_logsumexp(w.log_weights)) < 1e-10
    assert np.all(w.log_weights <= 0)


@given(seeds, st.randoms())
def test_permutation_invariance_bitwise(seed, r):
    rng = np.random.default_rng(seed)
    prior, data = random_prior(rng), random_dataset(rng)
    perm = list(range(len(data)))
    r.shuffle(perm)
    a = posterior(prior, data)
    b = posterior(prior, data.take(np.array(perm, dtype=int)))
    assert np.array_equal(a.log_weights, b.log_weights)
    assert a.evidence == b.evidence


@given(seeds, st.integers(0, 20))
def test_sequential_equals_batch(seed, cut):
    rng = np.random.default_rng(seed)
    prior, data = random_prior(rng), random_dataset(rng)
    cut = min(cut, len(data))
    seq = posterior_update(prior, posterior(prior, data.take(slice(0, cut))), data.take(slice(cut, None)))
    batch = posterior(prior, data)
    assert np.max(np.abs(seq.log_weights - batch.log_weights)) < 1e-10
    assert seq.evidence == pytest.approx(batch.evidence, abs=1e-9)
    assert seq.n_observed == batch.n_observed == len(data)


def test_update_with_nothing_is_identity(two_constants):
    w = posterior(two_constants, Dataset.from_examples([(0.2, 0.3)]))
    assert posterior_update(two_constants, w, Dataset.empty()) is w


def test_consistency_on_line_prior():
    p = build_prior("line")
    for seed in range(5):
        true_idx, d = sample_dataset(p, 100, seed=seed)
        best = int(np.argmax(posterior(p, d).log_weights))
        gap = np.abs(p.means(d.xs, best, best + 1) - p.means(d.xs, true_idx, true_idx + 1))
        assert gap.max() < p.noise_sigma


def test_result_independent_of_jobs():
    p = coarse_step_prior()
    _, d = sample_dataset(p, 30, seed=4)
    w1, w3 = posterior(p, d, jobs=1), posterior(p, d, jobs=3)
    assert np.array_equal(w1.log_weights, w3.log_weights) and w1.evidence == w3.evidence
    xs = np.linspace(0, 1, 41)
    r1, r3 = ppd(p, w1, xs, density=True, jobs=1), ppd(p, w3, xs, density=True, jobs=3)
    for a, b in [(r1.mean, r3.mean), (r1.variance, r3.variance), (r1.density, r3.density),
                 (r1.quantiles[0.05], r3.quantiles[0.05])]:
        assert np.array_equal(a, b)


def _close_mass(ns, eps=0.05, n_seeds=100):
    """Posterior mass within sup-distance ``eps`` of the true sine, per n and seed."""
    p = build_prior("sine")
    f = p.means(np.linspace(0, 1, 401))
    out = {n: [] for n in ns}
    for seed in range(n_seeds):
        true_idx, d = sample_dataset(p, max(ns), seed=seed)
        close = np.max(np.abs(f - f[true_idx]), axis=1) <= eps
        for n in ns:
            out[n].append(posterior(p, d.take(slice(0, n))).mass(close))
    return {n: np.mean(v) for n, v in out.items()}


def test_concentration_grows_on_average():
    avg = _close_mass((1, 5, 20, 50, 100, 400))
    vals = [avg[n] for n in sorted(avg)]
    assert all(b >= a for a, b in zip(vals, vals[1:])), vals
    assert avg[400] > 0.99


@pytest.mark.xfail(strict=True, reason="average eps-close mass at n=100 is about 0.976")
def test_concentration_above_099_at_100_points():
    assert _close_mass((100,))[100] > 0.99


# ------------------------------------------------------------- evidence

def test_evidence_trivial_cases():
    p = prior_from_latents([sine(0.3)])
    d = Dataset.from_examples([(0.1, 0.2), (0.7, -0.1)])
    assert marginal_evidence(p, Dataset.empty()) == 0.0
    assert marginal_evidence(p, d) == pytest.approx(log_likelihood(p, 0, d), abs=1e-12)


@given(seeds)
def test_evidence_matches_posterior(seed):
    rng = np.random.default_rng(seed)
    prior, data = random_prior(rng), random_dataset(rng)
    assert marginal_evidence(prior, data) == posterior(prior, data).evidence


# ------------------------------------------------------------- ppd

def test_ppd_two_constants(two_constants):
    w = posterior(two_constants, Dataset.empty())
    r = ppd(two_constants, w, np.linspace(0, 1, 5))
    assert np.allclose(r.mean, 0.5, atol=1e-15)
    assert np.allclose(r.variance, 0.26, atol=1e-15)


def test_ppd_quantiles_against_root_finder(two_constants):
    w = posterior(two_constants, Dataset.empty())
    r = ppd(two_constants, w, [0.3], quantiles=(0.05, 0.5, 0.95))

    def cdf(y):
        return 0.5 * norm.cdf(y / 0.1) + 0.5 * norm.cdf((y - 1) / 0.1)

    for q in (0.05, 0.5, 0.95):
        expected = brentq(lambda y: cdf(y) - q, -1, 2, xtol=1e-13)
        assert r.quantiles[q][0] == pytest.approx(expected, abs=2e-8)


def test_ppd_single_latent_quantiles():
    p = prior_from_latents([line(0.2, 0.5)], noise_sigma=0.1)
    r = ppd(p, posterior(p, Dataset.empty()), [0.0, 1.0])
    assert r.quantiles[0.95] == pytest.approx(np.array([0.2, 0.7]) + 0.1 * norm.ppf(0.95), abs=2e-8)


def test_ppd_empty_query(two_constants):
    r = ppd(two_constants, posterior(two_constants, Dataset.empty()), [], density=True)
    assert r.mean.size == 0 and r.variance.size == 0


def test_ppd_rejects_misaligned_weights(two_constants):
    w = posterior(build_prior("sine"), Dataset.empty())
    with pytest.raises(ValueError):
        ppd(two_constants, w, [0.5])


@given(seeds)
def test_ppd_moments_match_oracle(seed):
    rng = np.random.default_rng(seed)
    prior, data = random_prior(rng, 30), random_dataset(rng, 8)
    w = posterior(prior, data)
    xs = rng.uniform(0, 1, 3)
    r = ppd(prior, w, xs, quantiles=())
    for i, x in enumerate(xs):
        m, v = naive_ppd_moments(prior, w.log_weights, x)
        assert r.mean[i] == pytest.approx(m, abs=1e-12)
        assert r.variance[i] == pytest.approx(v, abs=1e-12)


@given(seeds)
def test_ppd_invariants(seed):
    rng = np.random.default_rng(seed)
    prior, data = random_prior(rng), random_dataset(rng)
    w = posterior(prior, data)
    xs = np.linspace(0, 1, 23)
    r = ppd(prior, w, xs, density=True)
    f = prior.means(xs)[np.exp(prior.log_prior) > 0]
    assert np.all(r.mean >= f.min(axis=0)) and np.all(r.mean <= f.max(axis=0))
    assert np.all(r.variance >= prior.noise_sigma ** 2)
    integrals = np.trapezoid(r.density, r.y_grid, axis=1)
    assert np.all(np.abs(integrals - 1) < 1e-3)
    assert np.all(r.quantiles[0.05] <= r.quantiles[0.95])


def test_density_matches_direct_sum():
    rng = np.random.default_rng(1)
    prior, data = random_prior(rng, 50), random_dataset(rng, 5)
    w = posterior(prior, data)
    ys = np.linspace(-2, 2, 9)
    r = ppd(prior, w, [0.37], y_grid=ys, mass_tol=0)
    f = prior.means([0.37])[:, 0]
    direct = [np.sum(w.weights * norm.pdf(y, f, prior.noise_sigma)) for y in ys]
    assert r.density[0] == pytest.approx(direct, rel=1e-12, abs=1e-300)
    assert ppd_log_density(prior, w, 0.37, 0.5) == pytest.approx(
        math.log(np.sum(w.weights * norm.pdf(0.5, f, prior.noise_sigma))), abs=1e-12)


def test_density_truncation_reported():
    p = coarse_step_prior(21)
    _, d = sample_dataset(p, 10, seed=2)
    w = posterior(p, d)
    r = ppd(p, w, [0.5], density=True)
    assert 0 <= r.truncated_mass <= 1e-12


def test_top_sorted(two_constants):
    w = posterior(two_constants, Dataset.from_examples([(0.5, 0.9)]))
    assert w.top(2).tolist() == [1, 0]
    assert w.top(1).tolist() == [1]


# ------------------------------------------------------------- bayes-optimal NLL

def test_nll_single_latent_close_to_entropy():
    p = prior_from_latents([line(0.3, -0.2)])
    est = bayes_optimal_nll(p, 5, 20_000, seed=0)
    assert est.mean == pytest.approx(0.5 * math.log(2 * math.pi * 0.01) + 0.5, abs=0.02)
    assert est.stderr < 0.01


def test_nll_decreases_with_context():
    p = build_prior("sine")
    vals = [bayes_optimal_nll(p, n, 3000, seed=11) for n in (0, 3, 10, 30)]
    for a, b in zip(vals, vals[1:]):
        assert b.mean < a.mean + 2 * math.hypot(a.stderr, b.stderr)
    assert vals[-1].mean < vals[0].mean


def test_nll_matches_ppd_log_density():
    p = build_prior("sine")
    rng = np.random.default_rng(5)
    xs = rng.uniform(0, 1, (1, 4))
    ys = rng.normal(0, 0.2, (1, 4))
    from bayesppd.posterior import _nll_batch

    ctx = Dataset(xs[0, :3], ys[0, :3])
    expected = -ppd_log_density(p, posterior(p, ctx), xs[0, 3], ys[0, 3])
    assert _nll_batch(p, xs, ys, 7)[0] == pytest.approx(expected, abs=1e-10)


def test_nll_argument_checks():
    p = build_prior("sine")
    with pytest.raises(ValueError):
        bayes_optimal_nll(p, -1, 10)
    with pytest.raises(ValueError):
        bayes_optimal_nll(p, 1, 0)


def test_class_mask_partition():
    p = build_prior("sine+line")
    assert np.sum(p.class_mask(Family.SINE)) == 101 and np.sum(p.class_mask(Family.LINE)) == 10_201
