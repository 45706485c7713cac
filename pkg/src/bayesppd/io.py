"""CSV writers for every table the experiments emit.

Floats are written with ``repr`` (shortest round-trip form) so files are
byte-stable across runs. Header tuples below are the documented schemas.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .logspace import blocked_logsumexp

PPD_HEADER = ("x", "mean", "variance", "q05", "q95")
WEIGHTS_HEADER = ("latent_index", "family", "param1", "param2", "param3", "weight")
CONTEXT_HEADER = ("x", "y")
COIN_PREDICTIVE_HEADER = ("n", "avg_predictive")
COIN_LATENT_HEADER = ("n", "latent_p", "expected_log_likelihood", "expected_posterior_mass")
COUNTING_HEADER = ("k", "posterior_predictive")
GP_COVERAGE_HEADER = ("n_context", "coverage_95", "mean_abs_error")
GP_PREDICTION_HEADER = ("x", "mean", "var")
MLP_SUMMARY_HEADER = ("x", "std_deterministic", "std_noisy")
EVIDENCE_HEADER = ("separation", "log_evidence")
MASS_HEADER = ("n", "line_mass", "sine_mass", "best_line_minus_best_sine")
REPRESENTABILITY_HEADER = ("n", "optimal_pair_mass", "ppd_range", "optimal_range")

REMAINING_LABEL = "remaining"


def fmt(v) -> str:
    if isinstance(v, (str, bytes)):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_ppd(path, result) -> Path:
    q05 = result.quantiles.get(0.05, np.full(result.query_xs.size, math.nan))
    q95 = result.quantiles.get(0.95, np.full(result.query_xs.size, math.nan))
    return write_rows(path, PPD_HEADER, zip(result.query_xs, result.mean, result.variance, q05, q95))


def write_density(path, result) -> Path:
    """One row per query x; the header row carries the y grid after an ``x`` column."""
    if result.density is None:
        raise ValueError("result has no density matrix")
    header = ["x"] + [fmt(y) for y in result.y_grid]
    return write_rows(path, header, ([x, *row] for x, row in zip(result.query_xs, result.density)))


def write_weights(path, prior, weights, top_k: int = 10_000) -> Path:
    """Heaviest ``top_k`` latents plus a final row holding the remaining mass."""
    idx = weights.top(top_k)
    rest = np.ones(len(weights), dtype=bool)
    rest[idx] = False
    remaining = math.exp(blocked_logsumexp(weights.log_weights[rest])) if rest.any() else 0.0
    rows = []
    for i in idx:
        fam = prior.latent(int(i)).family.name.lower()
        rows.append([int(i), fam, *prior.params[i], math.exp(weights.log_weights[i])])
    rows.append([REMAINING_LABEL, "", "", "", "", remaining])
    return write_rows(path, WEIGHTS_HEADER, rows)


def write_context(path, data) -> Path:
    return write_rows(path, CONTEXT_HEADER, zip(data.xs, data.ys))


def write_coin_tables(out_dir, result) -> list[Path]:
    out_dir = Path(out_dir)
    a = write_rows(out_dir / "predictive.csv", COIN_PREDICTIVE_HEADER,
                   zip(result.n_values, result.avg_predictive))
    rows = []
    for i, n in enumerate(result.n_values):
        for j, p in enumerate(result.head_probs):
            rows.append([n, p, result.avg_log_likelihood[i, j], result.avg_posterior_mass[i, j]])
    b = write_rows(out_dir / "latents.csv", COIN_LATENT_HEADER, rows)
    return [a, b]


def write_matrix(path, header_values, row_labels, matrix, label: str) -> Path:
    header = [label] + [fmt(v) for v in header_values]
    return write_rows(path, header, ([r, *row] for r, row in zip(row_labels, matrix)))
