"""A small ReLU network trained with Adam on the two-point task {(0, 0), (1, 1)}.

Everything is plain numpy: forward pass, reverse-mode gradients and the
optimizer. Each training run is single-threaded and fully determined by its
seed; sweeps over seeds may run in parallel processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, seed: int | None = None):
        self.step = step
        self.seed = seed
        where = f" (seed {seed})" if seed is not None else ""
        super().__init__(f"loss became non-finite at step {step}{where}")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    learning_rate: float = 1e-3
    batch_size: int = 1024
    seed: int = 0
    input_noise_sigma: float = 0.0
    hidden: int = 64
    n_hidden_layers: int = 3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dtype: str = "float32"

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError("batch_size must be a positive even number")


@dataclass
class MLPParams:
    weights: list
    biases: list

    @classmethod
    def init(cls, sizes, rng: np.random.Generator) -> "MLPParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            bs.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(ws, bs)

    def astype(self, dtype) -> "MLPParams":
        return MLPParams([w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases])

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "MLPParams":
        ws, bs, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vec[i:i + w.size].reshape(w.shape))
            i += w.size
            bs.append(vec[i:i + b.size].copy())
            i += b.size
        return MLPParams(ws, bs)

    def logits(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=self.weights[0].dtype).reshape(-1, 1)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
        return (h @ self.weights[-1] + self.biases[-1])[:, 0]

    def predict(self, x) -> np.ndarray:
        """Probability of class 1."""
        return sigmoid(self.logits(x))


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z)))


def _bce_terms(z, y):
    return np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(_bce_terms(np.asarray(z), np.asarray(y))))


def loss_and_grads(params: MLPParams, x: np.ndarray, y: np.ndarray,
                   sample_weight: np.ndarray | None = None) -> tuple[float, list]:
    """Weighted-mean binary cross-entropy and its gradient.

    Gradients are ordered like ``params.arrays()``. ``sample_weight`` must sum
    to 1; the default is the plain batch mean.
    """
    if sample_weight is None:
        sample_weight = np.full(x.shape[0], 1.0 / x.shape[0], dtype=x.dtype)
    h = x[:, None] * params.weights[0] + params.biases[0]
    np.maximum(h, 0.0, out=h)
    acts = [x[:, None], h]
    for w, b in zip(params.weights[1:-1], params.biases[1:-1]):
        h = h @ w
        h += b
        np.maximum(h, 0.0, out=h)
        acts.append(h)
    z = h @ params.weights[-1][:, 0] + params.biases[-1][0]
    loss = float(sample_weight @ _bce_terms(z, y))

    delta = (sample_weight * (sigmoid(z) - y))[:, None]
    grads = [None] * (2 * len(params.weights))
    for layer in range(len(params.weights) - 1, -1, -1):
        a = acts[layer]
        grads[2 * layer] = a.T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ params.weights[layer].T
            delta *= a > 0
    return loss, grads


def _balanced_batch(cfg: TrainConfig, rng: np.random.Generator, dtype):
    """Half class 0 at x=0, half class 1 at x=1, inputs optionally noised.

    Without input noise the batch holds two distinct examples, so it is
    represented by those two with weight 1/2 each (the same mean loss).
    """
    if cfg.input_noise_sigma == 0:
        pts = np.array([0.0, 1.0], dtype=dtype)
        return pts, pts.copy(), np.array([0.5, 0.5], dtype=dtype)
    half = cfg.batch_size // 2
    y = np.concatenate([np.zeros(half), np.ones(half)])
    x = y + cfg.input_noise_sigma * rng.standard_normal(y.size)
    return x.astype(dtype), y.astype(dtype), np.full(y.size, 1.0 / y.size, dtype=dtype)


@dataclass
class TrainResult:
    params: MLPParams
    losses: np.ndarray
    config: TrainConfig


def train_mlp(cfg: TrainConfig) -> TrainResult:
    rng = np.random.default_rng(cfg.seed)
    sizes = [1] + [cfg.hidden] * cfg.n_hidden_layers + [1]
    params = MLPParams.init(sizes, rng).astype(cfg.dtype)
    arrays = params.arrays()
    m = [np.zeros_like(a) for a in arrays]
    v = [np.zeros_like(a) for a in arrays]
    losses = np.empty(cfg.steps)
    for t in range(1, cfg.steps + 1):
        x, y, sw = _balanced_batch(cfg, rng, cfg.dtype)
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = loss_and_grads(params, x, y, sw)
        if not math.isfinite(loss):
            raise TrainingDiverged(t, cfg.seed)
        losses[t - 1] = loss
        c1 = 1.0 - cfg.beta1 ** t
        c2 = 1.0 - cfg.beta2 ** t
        for a, g, mi, vi in zip(arrays, grads, m, v):
            mi *= cfg.beta1
            mi += (1.0 - cfg.beta1) * g
            vi *= cfg.beta2
            vi += (1.0 - cfg.beta2) * g * g
            a -= cfg.learning_rate * (mi / c1) / (np.sqrt(vi / c2) + cfg.eps)
    return TrainResult(params, losses, cfg)


@dataclass
class SweepResult:
    """Per-seed predictions on ``grid``, rows sorted by the prediction at x = 0.5."""

    grid: np.ndarray
    seeds: np.ndarray
    predictions: np.ndarray
    std: np.ndarray
    final_losses: np.ndarray
    config: TrainConfig


def _train_one(args):
    cfg_dict, grid = args
    cfg = TrainConfig(**cfg_dict)
    res = train_mlp(cfg)
    preds = res.params.predict(grid).astype(np.float64)
    return preds, float(res.losses[-1]) if cfg.steps else math.nan


def seed_sweep(config: TrainConfig = TrainConfig(), n_seeds: int = 100, seeds=None,
               n_grid: int = 1001, jobs: int = 1) -> SweepResult:
    if seeds is None:
        seeds = range(n_seeds)
    seeds = np.asarray(list(seeds), dtype=np.int64)
    if seeds.size < 2:
        raise ValueError("a sweep needs at least two seeds")
    grid = np.linspace(0.0, 1.0, n_grid)
    tasks = [(asdict(replace(config, seed=int(s))), grid) for s in seeds]
    results = []
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_train_one, tasks))
        else:
            results = [_train_one(t) for t in tasks]
    except TrainingDiverged as exc:
        raise TrainingDiverged(exc.step, exc.seed) from exc
    preds = np.vstack([r[0] for r in results])
    losses = np.array([r[1] for r in results])
    mid = int(np.argmin(np.abs(grid - 0.5)))
    order = np.argsort(preds[:, mid], kind="stable")
    return SweepResult(grid, seeds[order], preds[order], preds.std(axis=0), losses[order], config)


def interior_std(result: SweepResult, lo: float = 0.2, hi: float = 0.8) -> float:
    """Mean over grid points in [lo, hi] of the across-seed standard deviation."""
    mask = (result.grid >= lo) & (result.grid <= hi)
    return float(result.std[mask].mean())
