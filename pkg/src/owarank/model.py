"""Per-item MLP scorer trained end to end through the OWA ranking layer."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .policy import expected_dcg, fairness_violations, position_bias
from .solver import FwConfig, FwSolution, objective, solve
from .spo import TargetCache, spo_plus

__all__ = [
    "TrainConfig",
    "Mlp",
    "Normalizer",
    "Model",
    "AdamState",
    "default_hidden",
    "init_mlp",
    "forward",
    "backward",
    "adam_step",
    "train",
    "predict_policy",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "owarank-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.5
    learning_rate: float = 0.1
    batch_size: int = 256
    epochs: int = 20
    T_train: int = 100
    T_infer: int = 500
    beta0: float = 1.0
    weight_schedule: str = "linear"
    size_weighted: bool = True
    hidden: int | None = None
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        for name in ("learning_rate", "batch_size", "T_train", "T_infer", "beta0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.hidden is not None and self.hidden < 4:
            raise ValueError(f"hidden width must be at least 4, got {self.hidden}")

    def fw(self, T: int) -> FwConfig:
        return FwConfig(lam=self.lam, T=T, beta0=self.beta0, weight_schedule=self.weight_schedule,
                        size_weighted=self.size_weighted)

    @property
    def fw_train(self) -> FwConfig:
        return self.fw(self.T_train)

    @property
    def fw_infer(self) -> FwConfig:
        return self.fw(self.T_infer)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def default_hidden(d: int) -> int:
    """Smallest power of two >= ``d``, capped at 256 (and at least 4)."""
    return int(min(256, max(4, 1 << max(0, int(d) - 1).bit_length())))


@dataclass
class Mlp:
    """Weights ``W[l]`` of shape (in, out) and biases ``c[l]``; ReLU between layers."""

    W: list[np.ndarray]
    c: list[np.ndarray]

    @property
    def dims(self) -> list[int]:
        return [self.W[0].shape[0]] + [w.shape[1] for w in self.W]

    def flat(self) -> list[np.ndarray]:
        return [*self.W, *self.c]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.W], [c.copy() for c in self.c])


def init_mlp(d: int, hidden: int | None = None, seed: int = 0) -> Mlp:
    """``d -> h -> h/2 -> h/4 -> 1`` with fan-in scaled uniform weights and zero biases."""
    h = hidden or default_hidden(d)
    dims = [d, h, h // 2, h // 4, 1]
    rng = np.random.default_rng(seed)
    W, c = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        W.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        c.append(np.zeros(fan_out))
    return Mlp(W, c)


def _forward_cache(params: Mlp, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.W[0].shape[0]:
        raise ValueError(f"features of shape {X.shape} do not fit input dim {params.W[0].shape[0]}")
    acts = [X]
    a = X
    last = len(params.W) - 1
    for i, (w, c) in enumerate(zip(params.W, params.c)):
        z = a @ w + c
        a = z if i == last else np.maximum(z, 0.0)
        acts.append(a)
    return acts


def forward(params: Mlp, X) -> np.ndarray:
    """Score each item (row of ``X``) independently."""
    return _forward_cache(params, X)[-1][:, 0]


def backward(params: Mlp, X, d_scores) -> Mlp:
    """Gradient of ``d_scores @ forward(params, X)`` with respect to every parameter."""
    acts = _forward_cache(params, X)
    d_scores = np.asarray(d_scores, dtype=float)
    if d_scores.shape != (acts[0].shape[0],):
        raise ValueError(f"d_scores has shape {d_scores.shape}, expected ({acts[0].shape[0]},)")
    g = d_scores[:, None]
    gW: list[np.ndarray] = [None] * len(params.W)
    gc: list[np.ndarray] = [None] * len(params.c)
    for i in range(len(params.W) - 1, -1, -1):
        if i != len(params.W) - 1:
            g = g * (acts[i + 1] > 0)
        gW[i] = acts[i].T @ g
        gc[i] = g.sum(axis=0)
        if i:
            g = g @ params.W[i].T
    return Mlp(gW, gc)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mlp) -> "AdamState":
        return cls([np.zeros_like(p) for p in params.flat()], [np.zeros_like(p) for p in params.flat()])


def adam_step(params: Mlp, grads: Mlp, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple[Mlp, AdamState]:
    """One bias-corrected Adam update; returns new params and state, inputs untouched."""
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.flat(), grads.flat(), state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    k = len(params.W)
    return Mlp(new_p[:k], new_p[k:]), AdamState(new_m, new_v, t)


@dataclass
class Normalizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, samples) -> "Normalizer":
        X = np.concatenate([s.features for s in samples])
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def __call__(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


@dataclass
class Model:
    params: Mlp
    normalizer: Normalizer
    config: TrainConfig = field(default_factory=TrainConfig)

    def scores(self, features) -> np.ndarray:
        return forward(self.params, self.normalizer(features))


def predict_policy(model: Model, features, groups, cfg: FwConfig | None = None,
                   record_trace: bool = True) -> FwSolution:
    cfg = cfg or model.config.fw_infer
    y_hat = model.scores(features)
    return solve(y_hat, groups, position_bias(len(y_hat)), cfg, record_trace=record_trace)


def _evaluate_one(args):
    model, s, cfg, f_star = args
    b = position_bias(s.n)
    t0 = time.perf_counter()
    sol = predict_policy(model, s.features, s.groups, cfg, record_trace=False)
    elapsed = time.perf_counter() - t0
    viol = fairness_violations(sol.policy, s.groups, b)
    reg = np.nan if f_star is None else f_star - objective(sol.policy, s.relevance, s.groups, b, cfg)
    return expected_dcg(sol.policy, s.relevance, b), viol.mean(), viol.max(), reg, elapsed


def evaluate(model: Model, samples, cfg: FwConfig | None = None, cache: TargetCache | None = None,
             workers: int = 1) -> dict[str, np.ndarray]:
    """Per-query DCG, mean/max group violation, regret (if targets given) and solve time."""
    cfg = cfg or model.config.fw_infer
    samples = list(samples)
    jobs = [(model, s, cfg, None if cache is None else cache.get(s.qid, cfg.lam).f_star) for s in samples]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_evaluate_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_evaluate_one(j) for j in jobs]
    cols = np.array(rows, dtype=float).reshape(len(rows), 5)
    return {
        "qid": np.array([s.qid for s in samples]),
        "dcg": cols[:, 0],
        "mean_violation": cols[:, 1],
        "max_violation": cols[:, 2],
        "regret": cols[:, 3],
        "seconds": cols[:, 4],
    }


def train(train_set, valid_set, cfg: TrainConfig, cache: TargetCache, normalizer: Normalizer | None = None):
    """Fit the scorer by SPO+ subgradients through the ranking layer.

    One Adam step per batch of queries; batches come from a seeded shuffle
    and gradients accumulate in batch order.  After every epoch the
    validation split is scored at inference-grade ``T``; the parameters with
    the lowest validation regret are returned with the per-epoch history.
    """
    train_set = list(train_set)
    valid_set = list(valid_set)
    if not train_set:
        raise ValueError("empty training set")
    normalizer = normalizer or Normalizer.fit(train_set)
    d = train_set[0].features.shape[1]
    params = init_mlp(d, cfg.hidden, cfg.seed)
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(cfg.seed)
    fw_train = cfg.fw_train
    Xs = [normalizer(s.features) for s in train_set]
    targets = [cache.get(s.qid, cfg.lam) for s in train_set]
    biases = [position_bias(s.n) for s in train_set]

    def validate(p: Mlp) -> dict:
        if not valid_set:
            return {}
        ev = evaluate(Model(p, normalizer, cfg), valid_set, cfg.fw_infer, cache)
        return {"valid_regret": float(ev["regret"].mean()), "valid_dcg": float(ev["dcg"].mean()),
                "valid_mean_violation": float(ev["mean_violation"].mean()),
                "valid_max_violation": float(ev["max_violation"].mean())}

    history = [{"epoch": 0, "train_spo_loss": None, **validate(params)}]
    best_params, best_regret = params.copy(), history[0].get("valid_regret", np.inf)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            acc = None
            for i in batch:
                s = train_set[i]
                y_hat = forward(params, Xs[i])
                res = spo_plus(y_hat, s.relevance, s.groups, biases[i], fw_train, targets[i])
                losses.append(res.loss)
                g = backward(params, Xs[i], res.grad)
                acc = g if acc is None else Mlp([a + b for a, b in zip(acc.W, g.W)],
                                                [a + b for a, b in zip(acc.c, g.c)])
            acc = Mlp([w / len(batch) for w in acc.W], [c / len(batch) for c in acc.c])
            params, state = adam_step(params, acc, state, cfg.learning_rate,
                                      cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        row = {"epoch": epoch, "train_spo_loss": float(np.mean(losses)), **validate(params)}
        history.append(row)
        log.info("epoch %d: %s", epoch, row)
        if row.get("valid_regret", -np.inf) < best_regret or not valid_set:
            best_params, best_regret = params.copy(), row.get("valid_regret", best_regret)
    return Model(best_params, normalizer, cfg), history


def save_checkpoint(model: Model, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": model.params.dims,
        "W": [w.tolist() for w in model.params.W],
        "c": [c.tolist() for c in model.params.c],
        "normalizer": {"mean": model.normalizer.mean.tolist(), "scale": model.normalizer.scale.tolist()},
        "config": asdict(model.config),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> Model:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format {doc.get('format')!r} "
                         f"version {doc.get('version')!r}")
    params = Mlp([np.array(w, dtype=float).reshape(a, b) for w, a, b in
                  zip(doc["W"], doc["dims"][:-1], doc["dims"][1:])],
                 [np.array(c, dtype=float) for c in doc["c"]])
    if params.dims != doc["dims"]:
        raise ValueError(f"{path}: layer shapes do not match declared dims {doc['dims']}")
    norm = Normalizer(np.array(doc["normalizer"]["mean"]), np.array(doc["normalizer"]["scale"]))
    return Model(params, norm, TrainConfig.from_dict(doc["config"]))
