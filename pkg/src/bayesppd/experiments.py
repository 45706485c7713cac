"""Experiment registry: one entry per reproduced figure, each writing CSV tables.

Every experiment takes a flat parameter dict (defaults below, overridable from a
JSON config), a seed, an output directory and a worker count, and returns a
small summary dict. :func:`run` wraps it and writes ``metadata.json`` next to
the tables; feeding that file back as a config reproduces the tables exactly.
"""

from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, io
from .coins import CoinPrior, counting_curve, misspecified_sweep
from .gp import GPConfig, gp_step_experiment
from .mlp import TrainConfig, interior_std, seed_sweep
from .posterior import marginal_evidence, posterior, posterior_update, ppd
from .priors import Dataset, Family, FinitePrior, PriorSpec, build_prior, eval_latent, step


@dataclass
class Experiment:
    id: str
    figure: str
    description: str
    defaults: dict
    runner: Callable[[dict, int, Path, int], dict]


@dataclass
class ExperimentSpec:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: Path = Path("results")
    jobs: int = 1


REGISTRY: dict[str, Experiment] = {}


def register(id, figure, description, **defaults):
    def deco(fn):
        REGISTRY[id] = Experiment(id, figure, description, defaults, fn)
        return fn
    return deco


# ---------------------------------------------------------------- datasets

def step_context(n: int, rng, sigma: float, dx=0.5, dy=0.0, h=1.0) -> Dataset:
    """``n`` cell-centred inputs on [0, 1] with noisy values of a step."""
    xs = (np.arange(n) + 0.5) / n
    ys = eval_latent(step(dx, dy, h), xs) + sigma * rng.standard_normal(n)
    return Dataset(xs, ys)


def sine_context(n: int, rng, sigma: float, amplitude=0.2, frequency=2 * math.pi) -> Dataset:
    xs = rng.uniform(0.0, 1.0, n)
    ys = amplitude * np.sin(frequency * xs) + sigma * rng.standard_normal(n)
    return Dataset(xs, ys)


def sloped_sine(xs, amplitude=0.2, slope=0.05):
    return amplitude * np.sin(3 * math.pi * xs) + slope * xs


def bump(xs, lo=0.3, hi=0.7, height=0.5):
    xs = np.asarray(xs)
    return np.where((xs >= lo) & (xs < hi), height, 0.0)


def van_der_corput(n: int, base: int = 2) -> np.ndarray:
    """First ``n`` points of the van der Corput sequence; every prefix is spread evenly."""
    out = np.empty(n)
    for i in range(n):
        k, f, v = i + 1, 1.0, 0.0
        while k:
            f /= base
            v += f * (k % base)
            k //= base
        out[i] = v
    return out


def two_segments(d: float, n_per_side: int = 10) -> Dataset:
    """Left segment at -d/2 on [0.05, 0.45], right segment at +d/2 on [0.55, 0.95]."""
    left = np.linspace(0.05, 0.45, n_per_side)
    right = np.linspace(0.55, 0.95, n_per_side)
    xs = np.concatenate([left, right])
    ys = np.concatenate([np.full(n_per_side, -d / 2), np.full(n_per_side, d / 2)])
    return Dataset(xs, ys)


def _context_override(params) -> Dataset | None:
    ctx = params.get("context")
    if ctx is None:
        return None
    return Dataset.from_examples([tuple(p) for p in ctx])


def _prior(params) -> FinitePrior:
    spec = params["prior"]
    if isinstance(spec, str):
        spec = {"family": spec}
    return build_prior(PriorSpec.from_dict(spec))


def _query(params) -> np.ndarray:
    return np.linspace(0.0, 1.0, int(params["n_query"]))


def _write_ppd_outputs(out: Path, prior, weights, params, jobs, stem="ppd"):
    res = ppd(prior, weights, _query(params), density=params.get("density", False), jobs=jobs)
    io.write_ppd(out / f"{stem}.csv", res)
    if res.density is not None:
        io.write_density(out / f"{stem}_density.csv", res)
    return res


def _find_latent(prior: FinitePrior, fam: Family, values) -> int:
    vals = np.zeros(3)
    vals[: len(values)] = values
    hit = np.flatnonzero((prior.family == int(fam)) & np.all(np.abs(prior.params - vals) < 1e-9, axis=1))
    if hit.size == 0:
        raise ValueError(f"no {fam.name.lower()} latent with parameters {values}")
    return int(hit[0])


def transition_width(xs, mean, lo_level=None, hi_level=None, rel=1e-3):
    """Length of the x-range where the mean is strictly between its two plateaus.

    Plateaus default to the mean's first and last values; "strictly between"
    means at least ``rel`` of the plateau gap away from both.
    """
    lo_level = mean[0] if lo_level is None else lo_level
    hi_level = mean[-1] if hi_level is None else hi_level
    a, b = sorted((lo_level, hi_level))
    tol = rel * (b - a)
    inside = (mean > a + tol) & (mean < b - tol)
    if not inside.any():
        return 0.0
    dx = xs[1] - xs[0]
    return float(inside.sum() * dx)


# ---------------------------------------------------------------- experiments

@register("fig1-step-smooth", "Fig. 1",
          "Step prior conditioned on noisy step data; the PPD mean is a smooth ramp.",
          prior="step", n_context=10, step_dx=0.5, step_dy=0.0, step_h=1.0,
          n_query=1001, context=None, top_k=10_000, density=False)
def _fig1(params, seed, out, jobs):
    prior = _prior(params)
    rng = np.random.default_rng(seed)
    data = _context_override(params)
    if data is None:
        data = step_context(params["n_context"], rng, prior.noise_sigma,
                            params["step_dx"], params["step_dy"], params["step_h"])
    w = posterior(prior, data, jobs)
    res = _write_ppd_outputs(out, prior, w, params, jobs)
    io.write_context(out / "context.csv", data)
    io.write_weights(out / "weights.csv", prior, w, params["top_k"])
    return {"log_evidence": w.evidence,
            "transition_width": transition_width(res.query_xs, res.mean),
            "truncated_mass": res.truncated_mass}


@register("fig2-sine-flat", "Fig. 2",
          "Sine prior (frequency 3*pi) conditioned on a sine of wavelength 2; the PPD is flat.",
          prior="sine", n_context=50, amplitude=0.2, frequency=2 * math.pi,
          n_query=1001, context=None, top_k=101, density=False)
def _fig2(params, seed, out, jobs):
    prior = _prior(params)
    rng = np.random.default_rng(seed)
    data = _context_override(params)
    if data is None:
        data = sine_context(params["n_context"], rng, prior.noise_sigma,
                            params["amplitude"], params["frequency"])
    w = posterior(prior, data, jobs)
    res = _write_ppd_outputs(out, prior, w, params, jobs)
    io.write_context(out / "context.csv", data)
    io.write_weights(out / "weights.csv", prior, w, params["top_k"])
    return {"log_evidence": w.evidence,
            "max_deviation_from_average": float(np.max(np.abs(res.mean - res.mean.mean())))}


@register("fig3-sloped-sine", "Fig. 3",
          "Sine+line mixture prior conditioned on a slightly sloped sine.",
          prior="sine+line", n_context=30, amplitude=0.2, slope=0.05,
          n_query=1001, context=None, top_k=10_000, density=False)
def _fig3(params, seed, out, jobs):
    prior = _prior(params)
    rng = np.random.default_rng(seed)
    data = _context_override(params)
    if data is None:
        n = params["n_context"]
        xs = (np.arange(n) + 0.5) / n
        ys = sloped_sine(xs, params["amplitude"], params["slope"]) + prior.noise_sigma * rng.standard_normal(n)
        data = Dataset(xs, ys)
    w = posterior(prior, data, jobs)
    res = _write_ppd_outputs(out, prior, w, params, jobs)
    io.write_context(out / "context.csv", data)
    io.write_weights(out / "weights.csv", prior, w, params["top_k"])
    truth = sloped_sine(res.query_xs, params["amplitude"], params["slope"])
    return {"log_evidence": w.evidence,
            "line_mass": w.mass(prior.class_mask(Family.LINE)),
            "sine_mass": w.mass(prior.class_mask(Family.SINE)),
            "max_abs_error_vs_truth": float(np.max(np.abs(res.mean - truth)))}


@register("fig5-representability", "Fig. 5",
          "Extended step prior on step-up/step-down data: the two latents whose 50/50 "
          "mix fits the data get little posterior mass, and the PPD is flatter.",
          prior="step-extended", n_values=[20, 50, 100], bump_lo=0.3, bump_hi=0.7,
          bump_height=0.5, n_query=1001, top_k=10_000, density=False)
def _fig5(params, seed, out, jobs):
    prior = _prior(params)
    rng = np.random.default_rng(seed)
    lo, hi, height = params["bump_lo"], params["bump_hi"], params["bump_height"]
    # f1 steps up by 2*height at lo, f2 steps down by 2*height at hi; their average is the bump
    i1 = _find_latent(prior, Family.STEP, (lo, -height, 2 * height))
    i2 = _find_latent(prior, Family.STEP, (hi, height, -2 * height))
    xq = _query(params)
    optimal = 0.5 * (prior.means(xq, i1, i1 + 1)[0] + prior.means(xq, i2, i2 + 1)[0])
    rows, summary = [], {"optimal_latents": [i1, i2]}
    for j, n in enumerate(params["n_values"]):
        xs = (np.arange(n) + 0.5) / n
        data = Dataset(xs, bump(xs, lo, hi, height) + prior.noise_sigma * rng.standard_normal(n))
        w = posterior(prior, data, jobs)
        pair = math.exp(np.logaddexp(w.log_weights[i1], w.log_weights[i2]))
        res = _write_ppd_outputs(out, prior, w, params, jobs, stem=f"ppd_n{n}")
        io.write_context(out / f"context_n{n}.csv", data)
        if j == 0:
            io.write_weights(out / "weights.csv", prior, w, params["top_k"])
        ppd_range = float(res.mean.max() - res.mean.min())
        rows.append([n, pair, ppd_range, float(optimal.max() - optimal.min())])
    io.write_rows(out / "representability.csv", io.REPRESENTABILITY_HEADER, rows)
    io.write_rows(out / "optimal_mixture.csv", ("x", "mean"), zip(xq, optimal))
    summary["optimal_pair_mass"] = [r[1] for r in rows]
    summary["ppd_range"] = [r[2] for r in rows]
    summary["optimal_range"] = rows[0][3]
    return summary


@register("fig7-likelihood-threshold", "Fig. 7",
          "Marginal evidence of two horizontal segments pulled apart, under the extended step prior.",
          prior="step-extended", separations=[0.5, 1.0, 1.5, 2.0], n_per_side=10,
          n_query=1001, density=False)
def _fig7(params, seed, out, jobs):
    prior = _prior(params)
    rows = []
    for d in params["separations"]:
        data = two_segments(d, params["n_per_side"])
        w = posterior(prior, data, jobs)
        _write_ppd_outputs(out, prior, w, params, jobs, stem=f"ppd_d{d:g}")
        rows.append([d, w.evidence])
    io.write_rows(out / "evidence.csv", io.EVIDENCE_HEADER, rows)
    return {"log_evidence": [r[1] for r in rows]}


@register("fig9-mixture-degradation", "Fig. 9",
          "Sine+line prior conditioned on more and more points of a sloped sine; mass "
          "drifts to the KL-closest class (lines) and the gap grows linearly.",
          prior="sine+line", n_values=[10, 25, 50, 100], fit_n_values=list(range(10, 101, 10)),
          amplitude=0.2, slope=0.25, design="van_der_corput", observation_noise=False,
          n_query=1001, density=False)
def _fig9(params, seed, out, jobs):
    prior = _prior(params)
    rng = np.random.default_rng(seed)
    n_max = max(max(params["n_values"]), max(params["fit_n_values"]))
    if params["design"] == "van_der_corput":
        xs = van_der_corput(n_max)
    elif params["design"] == "uniform":
        xs = rng.uniform(0.0, 1.0, n_max)
    else:
        raise ValueError(f"unknown design {params['design']!r}; use 'van_der_corput' or 'uniform'")
    ys = sloped_sine(xs, params["amplitude"], params["slope"])
    if params["observation_noise"]:
        ys = ys + prior.noise_sigma * rng.standard_normal(n_max)
    full = Dataset(xs, ys)
    io.write_context(out / "context.csv", full)
    lines, sines = prior.class_mask(Family.LINE), prior.class_mask(Family.SINE)

    def stats(n, w):
        gap = float(w.log_weights[lines].max() - w.log_weights[sines].max())
        return [n, w.mass(lines), w.mass(sines), gap]

    rows = []
    for n in params["n_values"]:
        w = posterior(prior, full.take(slice(0, n)), jobs)
        _write_ppd_outputs(out, prior, w, params, jobs, stem=f"ppd_n{n}")
        rows.append(stats(n, w))
    io.write_rows(out / "class_mass.csv", io.MASS_HEADER, rows)

    # sequential conditioning along the same sample for the gap fit
    fit_rows, w, seen = [], posterior(prior, Dataset.empty(), jobs), 0
    for n in sorted(params["fit_n_values"]):
        w = posterior_update(prior, w, full.take(slice(seen, n)), jobs)
        seen = n
        fit_rows.append(stats(n, w))
    io.write_rows(out / "gap_fit.csv", io.MASS_HEADER, fit_rows)
    ns = np.array([r[0] for r in fit_rows], dtype=float)
    gaps = np.array([r[3] for r in fit_rows])
    slope, intercept = np.polyfit(ns, gaps, 1)
    pred = slope * ns + intercept
    r2 = 1.0 - np.sum((gaps - pred) ** 2) / np.sum((gaps - gaps.mean()) ** 2)
    return {"line_mass": [r[1] for r in rows], "gap": [r[3] for r in rows],
            "gap_slope": float(slope), "gap_r2": float(r2)}


@register("fig4-coin-misspec", "Fig. 4",
          "Coin prior {0.3, 0.6} with fair flips: exact outcome-averaged predictive, "
          "expected log-likelihood and posterior mass per latent.",
          head_probs=[0.3, 0.6], true_p=0.5, n_values=[2 ** i for i in range(11)])
def _fig4(params, seed, out, jobs):
    res = misspecified_sweep(CoinPrior(params["head_probs"]), params["true_p"], params["n_values"])
    io.write_coin_tables(out, res)
    return {"avg_predictive": res.avg_predictive.tolist(), "averaging": res.averaging}


@register("fig8-counting", "Fig. 8",
          "Predictive head probability after k heads under the 99-coin uniform prior.",
          lo=0.01, hi=0.99, num=99, ks=[1, 2, 4, 8, 16, 32, 64])
def _fig8(params, seed, out, jobs):
    prior = CoinPrior.grid(params["lo"], params["hi"], params["num"])
    curve = counting_curve(prior, params["ks"])
    io.write_rows(out / "counting.csv", io.COUNTING_HEADER, zip(params["ks"], curve))
    return {"posterior_predictive": curve.tolist()}


@register("fig10-gp-step", "Fig. 10",
          "RBF GP fitted to noiseless step samples: 95% band coverage falls as context grows.",
          n_context_values=[10, 20, 50, 100, 200, 400], lengthscale=0.4, outputscale=1.0,
          noise_sigma=0.1, constant_mean=0.5, n_grid=1001, band="latent",
          control_value=1.0)
def _fig10(params, seed, out, jobs):
    cfg = GPConfig(params["lengthscale"], params["outputscale"], params["noise_sigma"],
                   params["constant_mean"])
    res = gp_step_experiment(cfg, params["n_context_values"], n_grid=params["n_grid"], band=params["band"])
    io.write_rows(out / "coverage.csv", io.GP_COVERAGE_HEADER,
                  zip(res.n_context, res.coverage_95, res.mean_abs_error))
    for n, m, v in zip(res.n_context, res.means, res.variances):
        io.write_rows(out / f"predictions_n{n}.csv", io.GP_PREDICTION_HEADER, zip(res.grid, m, v))
    c = params["control_value"]
    ctrl = gp_step_experiment(cfg, params["n_context_values"], target=lambda x: np.full(np.shape(x), c),
                              n_grid=params["n_grid"], band=params["band"])
    io.write_rows(out / "coverage_control.csv", io.GP_COVERAGE_HEADER,
                  zip(ctrl.n_context, ctrl.coverage_95, ctrl.mean_abs_error))
    return {"coverage": res.coverage_95.tolist(), "control_coverage": ctrl.coverage_95.tolist(),
            "jitter": res.jitters}


@register("fig6-mlp-sweep", "Fig. 6",
          "100 seeds of a 3x64 ReLU MLP on {(0,0),(1,1)} with and without input noise.",
          n_seeds=100, steps=2000, learning_rate=1e-3, batch_size=1024, noise_sigma=0.1,
          n_grid=1001, hidden=64, n_hidden_layers=3)
def _fig6(params, seed, out, jobs):
    seeds = [seed * 1_000_003 + i for i in range(params["n_seeds"])]
    base = TrainConfig(steps=params["steps"], learning_rate=params["learning_rate"],
                       batch_size=params["batch_size"], hidden=params["hidden"],
                       n_hidden_layers=params["n_hidden_layers"])
    summary, sweeps = {}, {}
    for name, sigma in (("deterministic", 0.0), ("noisy", params["noise_sigma"])):
        cfg = replace(base, input_noise_sigma=sigma)
        res = seed_sweep(cfg, seeds=seeds, n_grid=params["n_grid"], jobs=jobs)
        sweeps[name] = res
        io.write_matrix(out / f"predictions_{name}.csv", res.grid, res.seeds, res.predictions, "seed")
        summary[f"interior_std_{name}"] = interior_std(res)
        summary[f"max_pred_at_0_{name}"] = float(res.predictions[:, 0].max())
        summary[f"min_pred_at_1_{name}"] = float(res.predictions[:, -1].min())
    io.write_rows(out / "summary.csv", io.MLP_SUMMARY_HEADER,
                  zip(sweeps["deterministic"].grid, sweeps["deterministic"].std, sweeps["noisy"].std))
    return summary


# ---------------------------------------------------------------- driver

def resolve_params(experiment_id: str, overrides: dict | None = None) -> dict:
    exp = get(experiment_id)
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(exp.defaults)
    if unknown:
        raise ValueError(f"unknown parameters for {experiment_id}: {sorted(unknown)}")
    return {**exp.defaults, **overrides}


def get(experiment_id: str) -> Experiment:
    try:
        return REGISTRY[experiment_id]
    except KeyError:
        raise ValueError(f"unknown experiment {experiment_id!r}; known: {sorted(REGISTRY)}") from None


def load_config(path: str | Path) -> dict:
    """Read a JSON config: either a parameter dict or an emitted metadata record."""
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    return cfg


def run(spec: ExperimentSpec) -> dict:
    """Run one experiment and write its tables plus ``metadata.json`` into ``spec.out``."""
    exp = get(spec.experiment)
    params = resolve_params(spec.experiment, spec.params)
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = exp.runner(params, int(spec.seed), out, int(spec.jobs))
    wall = time.perf_counter() - t0
    meta = {
        "experiment": exp.id,
        "figure": exp.figure,
        "params": params,
        "seed": int(spec.seed),
        "versions": {"bayesppd": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "wall_time_s": wall,
        "summary": _jsonable(summary),
        "files": sorted(p.name for p in out.iterdir() if p.name != "metadata.json"),
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    return meta


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
