"""Finite latent priors over mean functions, dataset sampling and likelihoods.

Three function families are built in:

* ``step``  f(x) = dy if x < dx else dy + h
* ``sine``  f(x) = 0.2 * sin(3*pi*x + dx)
* ``line``  f(x) = m * x + dy

Latents are stored column-wise (a family code plus three parameter columns) so
that a block of latents can be evaluated on many inputs with one numpy call.
Parameters per family, in column order:

==========  ======  ======  ======
family      col 0   col 1   col 2
==========  ======  ======  ======
step        dx      dy      h
sine        dx      0       0
line        dy      m       0
==========  ======  ======  ======

Observations follow y = f(x) + Normal(0, noise_sigma**2) with x ~ U(0, 1).
The input density is the same for every latent, so :func:`log_likelihood`
leaves it out; it cancels in the posterior.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .logspace import LOG_SQRT_2PI, blocked_logsumexp

SINE_AMPLITUDE = 0.2
SINE_FREQUENCY = 3.0 * math.pi
DEFAULT_NOISE_SIGMA = 0.1


class Family(enum.IntEnum):
    STEP = 0
    SINE = 1
    LINE = 2


_PARAM_NAMES = {
    Family.STEP: ("dx", "dy", "h"),
    Family.SINE: ("dx",),
    Family.LINE: ("dy", "m"),
}


class Example(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Dataset:
    """An exchangeable set of (x, y) examples, stored as two float arrays."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64).reshape(-1)
        ys = np.asarray(self.ys, dtype=np.float64).reshape(-1)
        if xs.shape != ys.shape:
            raise ValueError(f"xs and ys differ in length: {xs.size} != {ys.size}")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("dataset contains non-finite values")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @classmethod
    def empty(cls) -> "Dataset":
        return cls(np.empty(0), np.empty(0))

    @classmethod
    def from_examples(cls, examples: Iterable[Example | tuple[float, float]]) -> "Dataset":
        pairs = [tuple(e) for e in examples]
        if not pairs:
            return cls.empty()
        arr = np.asarray(pairs, dtype=np.float64)
        return cls(arr[:, 0], arr[:, 1])

    def __len__(self) -> int:
        return int(self.xs.size)

    def __iter__(self):
        return (Example(float(x), float(y)) for x, y in zip(self.xs, self.ys))

    def union(self, other: "Dataset") -> "Dataset":
        return Dataset(np.concatenate([self.xs, other.xs]), np.concatenate([self.ys, other.ys]))

    def take(self, idx) -> "Dataset":
        return Dataset(self.xs[idx], self.ys[idx])

    def canonical(self) -> "Dataset":
        """Examples sorted by (x, y); every reduction over data uses this order."""
        order = np.lexsort((self.ys, self.xs))
        return self.take(order)


@dataclass(frozen=True)
class FunctionLatent:
    family: Family
    params: tuple[float, ...]

    def __call__(self, x):
        return eval_latent(self, x)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(_PARAM_NAMES[self.family], self.params))


def step(dx: float, dy: float, h: float) -> FunctionLatent:
    return FunctionLatent(Family.STEP, (float(dx), float(dy), float(h)))


def sine(dx: float) -> FunctionLatent:
    return FunctionLatent(Family.SINE, (float(dx),))


def line(dy: float, m: float) -> FunctionLatent:
    return FunctionLatent(Family.LINE, (float(dy), float(m)))


def _evaluate(family: np.ndarray, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Mean functions of latents (rows) at inputs (columns)."""
    family = np.asarray(family)
    p0 = params[:, 0:1]
    p1 = params[:, 1:2]
    p2 = params[:, 2:3]
    x = x[None, :]
    kinds = np.unique(family)
    if kinds.size == 1:
        kind = Family(int(kinds[0]))
        if kind is Family.STEP:
            return np.where(x < p0, p1, p1 + p2)
        if kind is Family.SINE:
            return SINE_AMPLITUDE * np.sin(SINE_FREQUENCY * x + p0)
        return p1 * x + p0
    out = np.empty((params.shape[0], x.shape[1]))
    for kind in kinds:
        rows = family == kind
        out[rows] = _evaluate(family[rows], params[rows], x[0])
    return out


def eval_latent(latent: FunctionLatent, x):
    """Evaluate one latent's mean function; scalar in, float out."""
    params = np.zeros((1, 3))
    params[0, : len(latent.params)] = latent.params
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = _evaluate(np.array([int(latent.family)]), params, xs)[0]
    return float(out[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class FinitePrior:
    """Enumerated latents with normalized log prior weights.

    ``family`` and ``params`` are aligned arrays of length ``n_latents``; the
    input distribution is always U(input_low, input_high).
    """

    family: np.ndarray
    params: np.ndarray
    log_prior: np.ndarray
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    input_low: float = 0.0
    input_high: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        family = np.asarray(self.family, dtype=np.int8).reshape(-1)
        params = np.asarray(self.params, dtype=np.float64)
        log_prior = np.asarray(self.log_prior, dtype=np.float64).reshape(-1)
        if family.size == 0:
            raise ValueError("a prior needs at least one latent")
        if params.shape != (family.size, 3):
            raise ValueError(f"params must have shape ({family.size}, 3), got {params.shape}")
        if log_prior.shape != family.shape:
            raise ValueError("log_prior must align with the latents")
        if not self.noise_sigma > 0:
            raise ValueError(f"noise_sigma must be positive, got {self.noise_sigma}")
        if not np.all(np.isin(family, [int(f) for f in Family])):
            raise ValueError("unknown family code")
        if abs(blocked_logsumexp(log_prior)) > 1e-9:
            raise ValueError("log_prior is not normalized")
        for arr in (family, params, log_prior):
            arr.setflags(write=False)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "log_prior", log_prior)

    def __len__(self) -> int:
        return int(self.family.size)

    @property
    def n_latents(self) -> int:
        return len(self)

    @property
    def log_input_density(self) -> float:
        return -math.log(self.input_high - self.input_low)

    def latent(self, index: int) -> FunctionLatent:
        if not 0 <= index < len(self):
            raise IndexError(f"latent index {index} out of range for {len(self)} latents")
        fam = Family(int(self.family[index]))
        n = len(_PARAM_NAMES[fam])
        return FunctionLatent(fam, tuple(float(v) for v in self.params[index, :n]))

    def means(self, xs, lo: int = 0, hi: int | None = None) -> np.ndarray:
        """Mean functions of latents ``lo:hi`` at ``xs``, shape (hi - lo, len(xs))."""
        hi = len(self) if hi is None else hi
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        return _evaluate(self.family[lo:hi], self.params[lo:hi], xs)

    def means_at(self, xs, index: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        return _evaluate(self.family[index], self.params[index], xs)

    def class_mask(self, fam: Family) -> np.ndarray:
        return self.family == int(fam)

    def with_log_prior(self, log_prior) -> "FinitePrior":
        return FinitePrior(self.family, self.params, log_prior, self.noise_sigma,
                           self.input_low, self.input_high, self.name)


def grid(lo: float, hi: float, num: int = 101) -> np.ndarray:
    """Inclusive grid built as lo + i*step so endpoints are exact."""
    return np.linspace(lo, hi, num)


DEFAULT_GRIDS: dict[str, dict[str, tuple[float, float, int]]] = {
    "step": {"dx": (-1.0, 1.0, 101), "dy": (-1.0, 1.0, 101), "h": (0.0, 2.0, 101)},
    "step-extended": {"dx": (-1.0, 1.0, 101), "dy": (-1.0, 1.0, 101), "h": (-1.0, 1.0, 101)},
    "sine": {"dx": (0.0, 2.0 * math.pi, 101)},
    "line": {"dy": (-1.0, 1.0, 101), "m": (-1.0, 1.0, 101)},
}

FAMILIES = ("step", "step-extended", "sine", "line", "sine+line")


@dataclass
class PriorSpec:
    """Structured prior description, loadable from JSON.

    ``grids`` overrides individual parameter grids as ``[lo, hi, num]``;
    ``mixture_weights`` gives the (sine, line) class masses of ``sine+line``.
    """

    family: str = "step"
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    grids: dict[str, Sequence[float]] = field(default_factory=dict)
    mixture_weights: tuple[float, float] = (0.5, 0.5)
    dedupe_sine: bool = False
    latents_csv: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown prior config keys: {sorted(extra)}")
        d = dict(d)
        if "mixture_weights" in d:
            d["mixture_weights"] = tuple(d["mixture_weights"])
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "PriorSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _family_grids(name: str, overrides: dict) -> list[np.ndarray]:
    base = DEFAULT_GRIDS[name]
    unknown = set(overrides) - set(base)
    if unknown:
        raise ValueError(f"unknown grid names for {name}: {sorted(unknown)}")
    out = []
    for key, default in base.items():
        lo, hi, num = overrides.get(key, default)
        out.append(grid(float(lo), float(hi), int(num)))
    return out


def _product(grids: list[np.ndarray]) -> np.ndarray:
    """Lexicographic product, first grid outermost."""
    mesh = np.meshgrid(*grids, indexing="ij")
    cols = [m.reshape(-1) for m in mesh]
    out = np.zeros((cols[0].size, 3))
    for i, c in enumerate(cols):
        out[:, i] = c
    return out


def _uniform(n: int) -> np.ndarray:
    return np.full(n, -math.log(n))


def _sine_block(overrides: dict, dedupe: bool) -> np.ndarray:
    (dx,) = _family_grids("sine", overrides)
    if dedupe:
        # offsets 0 and 2*pi give the same function
        wrapped = np.mod(dx, 2.0 * math.pi)
        _, keep = np.unique(np.round(wrapped, 12), return_index=True)
        dx = dx[np.sort(keep)]
    return _product([dx])


def build_prior(spec: PriorSpec | str | dict = "step", **kwargs) -> FinitePrior:
    """Build one of the built-in priors, or a custom prior from a latents CSV."""
    if isinstance(spec, str):
        spec = PriorSpec(family=spec, **kwargs)
    elif isinstance(spec, dict):
        spec = PriorSpec.from_dict({**spec, **kwargs})
    if not spec.noise_sigma > 0:
        raise ValueError(f"noise_sigma must be positive, got {spec.noise_sigma}")
    sigma = float(spec.noise_sigma)
    name = spec.family

    if spec.latents_csv is not None or name == "custom":
        if spec.latents_csv is None:
            raise ValueError("custom prior requires latents_csv")
        return load_latents_csv(spec.latents_csv, noise_sigma=sigma)
    if name in ("step", "step-extended"):
        params = _product(_family_grids(name, spec.grids))
        return FinitePrior(np.full(len(params), Family.STEP), params, _uniform(len(params)), sigma, name=name)
    if name == "sine":
        params = _sine_block(spec.grids, spec.dedupe_sine)
        return FinitePrior(np.full(len(params), Family.SINE), params, _uniform(len(params)), sigma, name=name)
    if name == "line":
        params = _product(_family_grids("line", spec.grids))
        return FinitePrior(np.full(len(params), Family.LINE), params, _uniform(len(params)), sigma, name=name)
    if name == "sine+line":
        w_sine, w_line = spec.mixture_weights
        if w_sine <= 0 or w_line <= 0:
            raise ValueError("mixture weights must be positive")
        total = w_sine + w_line
        sines = _sine_block({k: v for k, v in spec.grids.items() if k == "dx"}, spec.dedupe_sine)
        lines = _product(_family_grids("line", {k: v for k, v in spec.grids.items() if k in ("dy", "m")}))
        family = np.concatenate([np.full(len(sines), Family.SINE), np.full(len(lines), Family.LINE)])
        log_prior = np.concatenate([
            math.log(w_sine / total) + _uniform(len(sines)),
            math.log(w_line / total) + _uniform(len(lines)),
        ])
        return FinitePrior(family, np.vstack([sines, lines]), log_prior, sigma, name=name)
    raise ValueError(f"unknown prior family {name!r}; expected one of {FAMILIES} or custom")


def prior_from_latents(latents: Sequence[FunctionLatent], log_prior=None,
                       noise_sigma: float = DEFAULT_NOISE_SIGMA) -> FinitePrior:
    if len(latents) == 0:
        raise ValueError("custom latent list is empty")
    family = np.array([int(l.family) for l in latents])
    params = np.zeros((len(latents), 3))
    for i, l in enumerate(latents):
        params[i, : len(l.params)] = l.params
    if log_prior is None:
        log_prior = _uniform(len(latents))
    else:
        log_prior = np.asarray(log_prior, dtype=np.float64)
        log_prior = log_prior - blocked_logsumexp(log_prior)
    return FinitePrior(family, params, log_prior, noise_sigma)


def load_latents_csv(path: str | Path, noise_sigma: float = DEFAULT_NOISE_SIGMA) -> FinitePrior:
    """Read ``family,param1,param2,param3[,log_prior]`` rows into a prior."""
    latents, log_prior = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            fam = Family[row["family"].strip().upper()]
            n = len(_PARAM_NAMES[fam])
            vals = tuple(float(row[f"param{i + 1}"]) for i in range(n))
            latents.append(FunctionLatent(fam, vals))
            if row.get("log_prior") not in (None, ""):
                log_prior.append(float(row["log_prior"]))
    if log_prior and len(log_prior) != len(latents):
        raise ValueError("log_prior column must be filled for every row or none")
    return prior_from_latents(latents, log_prior or None, noise_sigma)


def sample_dataset(prior: FinitePrior, n: int | None = None, seed=None) -> tuple[int, Dataset]:
    """Draw a latent from the prior and ``n`` noisy examples from it.

    ``n=None`` draws the size uniformly from 1..100. ``seed`` may be an int or a
    ``numpy.random.Generator``.
    """
    rng = np.random.default_rng(seed)
    if n is None:
        n = int(rng.integers(1, 101))
    if n < 0:
        raise ValueError("n must be non-negative")
    cdf = np.cumsum(np.exp(prior.log_prior))
    index = int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(prior) - 1))
    xs = rng.uniform(prior.input_low, prior.input_high, size=n)
    ys = prior.means(xs, index, index + 1)[0] + prior.noise_sigma * rng.standard_normal(n)
    return index, Dataset(xs, ys)


def log_likelihoods(prior: FinitePrior, data: Dataset, lo: int = 0, hi: int | None = None) -> np.ndarray:
    """Per-latent sum of Gaussian log densities for latents ``lo:hi``.

    Data are put in canonical order first so that the result does not depend on
    the order of the examples.
    """
    hi = len(prior) if hi is None else hi
    if len(data) == 0:
        return np.zeros(hi - lo)
    data = data.canonical()
    resid = (data.ys[None, :] - prior.means(data.xs, lo, hi)) / prior.noise_sigma
    sq = np.sum(resid * resid, axis=1)
    return -0.5 * sq - len(data) * (math.log(prior.noise_sigma) + LOG_SQRT_2PI)


def log_likelihood(prior: FinitePrior, latent_index: int, data: Dataset) -> float:
    if not 0 <= latent_index < len(prior):
        raise IndexError(f"latent index {latent_index} out of range for {len(prior)} latents")
    return float(log_likelihoods(prior, data, latent_index, latent_index + 1)[0])
