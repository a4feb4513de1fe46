"""
Episode loss, the score-function gradient estimator and the meta-training loop.

Every training episode draws one problem, embeds its pool and evaluation
set, samples ``mc_samples`` selection masks and backpropagates the surrogate

    mean_m [ log P(alpha_m) * (R_m - b) + R_m ]

where ``R_m`` is the summed cross-entropy on the evaluation set. The first
term is the likelihood-ratio estimate for the selector, the second the
pathwise gradient through the embedder and the predictor.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Problem
from .nn_core import (MlpSpec, ParamStore, Tensor, add, init_mlp, load_checkpoint, mlp_embed,
                      mul, no_grad, save_checkpoint, take)
from .predictor import EmptySupportError, LabeledSubset, accuracy, predict, prediction_loss
from .selector import (SelectionMask, _draw_order, init_policy, policy_scores, select,
                       sequence_log_prob)

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Parameters became non-finite; ``last_good`` holds the previous state."""

    def __init__(self, msg: str, last_good: "ModelParams"):
        super().__init__(msg)
        self.last_good = last_good


BASELINES = ("ema", "loo", "none")


@dataclass
class TrainConfig:
    budget: int = 2
    lam: float = 0.0
    mc_samples: int = 8
    lr: float = 0.01
    episodes: int = 1000
    similarity: str = "euclidean"
    temperature: float = 1.0
    strategy: str = "policy"
    optimizer: str = "sgd"
    clip_norm: float = 5.0
    baseline: str = "ema"
    baseline_decay: float = 0.99
    eval_interval: int = 250
    eval_seeds: int = 1
    with_replacement: bool = False
    shuffle_pool: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.baseline not in BASELINES:
            raise ValueError(f"unknown baseline {self.baseline!r}; expected one of {BASELINES}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


# -- model ----------------------------------------------------------------------

@dataclass
class ModelParams:
    """Embedder f and policy parameters in one flat store."""

    store: ParamStore
    arch: dict

    @property
    def embed_spec(self) -> MlpSpec | None:
        sizes = self.arch.get("embed_sizes")
        if not sizes:
            return None
        return MlpSpec(tuple(sizes), self.arch.get("activation", "tanh"))

    @property
    def has_policy(self) -> bool:
        return "policy.head.W" in self.store

    def embed(self, X) -> Tensor:
        spec = self.embed_spec
        if spec is None:
            return X if isinstance(X, Tensor) else Tensor(X)
        return mlp_embed(X, self.store, "embed", spec)

    def copy(self) -> "ModelParams":
        return ModelParams(self.store.copy(), dict(self.arch))

    def save(self, path, header: dict | None = None) -> None:
        save_checkpoint(path, self.store, {"arch": self.arch, **(header or {})})

    @classmethod
    def load(cls, path) -> "ModelParams":
        store, meta = load_checkpoint(path)
        return cls(store, meta["arch"])


def init_model(n_features: int, embed_dim: int = 16, hidden_dim: int = 16,
               embed_hidden=(32,), activation: str = "tanh", seed: int = 0,
               policy: bool = True) -> ModelParams:
    """Build f: R^K -> R^L (identity when ``embed_dim`` is 0) and the bi-LSTM policy."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    if embed_dim > 0:
        sizes = (n_features, *embed_hidden, embed_dim)
        init_mlp(store, "embed", MlpSpec(sizes, activation), rng)
        latent = embed_dim
    else:
        sizes = ()
        latent = n_features
    if policy:
        init_policy(store, latent, hidden_dim, rng)
    arch = {"n_features": n_features, "embed_sizes": list(sizes), "activation": activation,
            "hidden_dim": hidden_dim, "seed": seed}
    return ModelParams(store, arch)


# -- losses -----------------------------------------------------------------------

def _support(pool_emb: Tensor, problem: Problem, positions, pool_index=None) -> LabeledSubset:
    positions = np.asarray(positions, dtype=np.int64)
    original = positions if pool_index is None else pool_index[positions]
    labels = problem.oracle.query(original)
    return LabeledSubset.from_labels(take(pool_emb, positions), labels, problem.P, original)


def episode_loss(problem: Problem, mask: SelectionMask, params: ModelParams, cfg: TrainConfig):
    """Summed evaluation cross-entropy plus ``lam * |D_alpha|``.

    Returns the scalar loss tensor and the per-example cross-entropies.
    """
    if mask.size == 0:
        raise EmptySupportError("selection mask is empty")
    pool_emb = params.embed(problem.pool_x)
    eval_emb = params.embed(problem.eval_x)
    support = _support(pool_emb, problem, mask.chosen)
    probs = predict(eval_emb, support, cfg.similarity, cfg.temperature)
    p_true = probs.data[np.arange(problem.M), problem.eval_y]
    per_example = -np.log(np.clip(p_true, 1e-12, 1 - 1e-12))
    loss = prediction_loss(eval_emb, support, problem.eval_y, cfg.similarity, cfg.temperature)
    return add(loss, cfg.lam * mask.size), per_example


@dataclass
class GradientEstimate:
    grad: np.ndarray  # flat, in store order
    rewards: np.ndarray  # prediction loss per history
    draws: list
    labeling_cost: float

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean())

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.grad))


def policy_gradient_estimate(problem: Problem, params: ModelParams, cfg: TrainConfig,
                             rng: np.random.Generator, baseline: float = 0.0,
                             pool_order=None, loo_baseline: bool = False) -> GradientEstimate:
    """Monte-Carlo gradient of the expected episode loss.

    ``baseline`` is subtracted from every history's reward; with
    ``loo_baseline`` each history uses the mean reward of the other
    histories instead. Identical draws are grouped, so the cost grows with
    the number of distinct masks rather than with ``mc_samples``.
    """
    N = problem.N
    if pool_order is None:
        pool_order = rng.permutation(N) if cfg.shuffle_pool else np.arange(N)
    pool_order = np.asarray(pool_order, dtype=np.int64)
    store = params.store
    store.zero_grad()

    pool_emb = params.embed(problem.pool_x[pool_order])
    eval_emb = params.embed(problem.eval_x)
    scores = None
    if cfg.strategy == "policy":
        out = policy_scores(pool_emb, store)
        scores = out.scores
        draws = [tuple(int(i) for i in _draw_order(out.probs, cfg.budget, rng, cfg.with_replacement))
                 for _ in range(cfg.mc_samples)]
    else:
        draws = []
        for _ in range(cfg.mc_samples):
            m = select(cfg.strategy, pool_emb.data, cfg.budget, seed=rng)
            draws.append(tuple(int(i) for i in m.indices))

    counts = Counter(draws)
    losses, rewards = {}, {}
    for draw in counts:
        support = _support(pool_emb, problem, np.unique(draw), pool_order)
        losses[draw] = prediction_loss(eval_emb, support, problem.eval_y, cfg.similarity,
                                       cfg.temperature)
        rewards[draw] = float(losses[draw].data)
    total = sum(rewards[d] for d in draws)

    surrogate = None
    for draw, c in counts.items():
        term = losses[draw]
        if scores is not None:
            if loo_baseline:
                # mean reward of the other histories; independent of this draw
                b = (total - rewards[draw]) / (cfg.mc_samples - 1) if cfg.mc_samples > 1 else 0.0
            else:
                b = baseline
            lp = sequence_log_prob(scores, draw, cfg.with_replacement)
            term = add(term, mul(lp, rewards[draw] - b))
        term = mul(term, c / cfg.mc_samples)
        surrogate = term if surrogate is None else add(surrogate, term)

    if surrogate.requires_grad:
        surrogate.backward()
    grad = store.flat_grad()
    store.zero_grad()
    r = np.array([rewards[d] for d in draws])
    cost = cfg.lam * float(np.mean([len(set(d)) for d in draws]))
    return GradientEstimate(grad, r, draws, cost)


# -- optimizers --------------------------------------------------------------------

def clip_by_norm(grad: np.ndarray, max_norm: float | None) -> np.ndarray:
    if max_norm is None or max_norm <= 0:
        return grad
    n = np.linalg.norm(grad)
    return grad * (max_norm / n) if n > max_norm else grad


def sgd_step(store: ParamStore, grad, lr: float, clip_norm: float | None = None) -> ParamStore:
    """In-place ``p <- p - lr * clip(g)``; ``grad`` is flat or a name->array dict."""
    if isinstance(grad, dict):
        if set(grad) != set(store.names()):
            raise ValueError("gradient names do not match parameters")
        for name, t in store:
            if np.shape(grad[name]) != t.shape:
                raise ValueError(f"gradient shape {np.shape(grad[name])} != {t.shape} for {name}")
        grad = np.concatenate([np.ravel(grad[n]) for n in store.names()]) if len(store) else np.zeros(0)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != (store.size,):
        raise ValueError(f"flat gradient of size {grad.size}, expected {store.size}")
    store.restore(store.flatten() - lr * clip_by_norm(grad, clip_norm))
    return store


class Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, store: ParamStore, grad: np.ndarray, clip_norm: float | None = None) -> ParamStore:
        g = clip_by_norm(grad, clip_norm)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        store.restore(store.flatten() - self.lr * mhat / (np.sqrt(vhat) + self.eps))
        return store


# -- evaluation ----------------------------------------------------------------------

def mask_seed(seed: int, problem_index: int, draw: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(problem_index), int(draw)])


def problem_accuracy(problem: Problem, params: ModelParams, strategy: str, budget: int,
                     cfg: TrainConfig, rng) -> float:
    """Select on one problem, query the oracle, predict its evaluation set."""
    with no_grad():
        pool_emb = params.embed(problem.pool_x)
        mask = select(strategy, pool_emb.data, budget,
                      params.store if strategy == "policy" else None, rng, cfg.with_replacement)
        support = _support(pool_emb, problem, mask.chosen)
        probs = predict(params.embed(problem.eval_x), support, cfg.similarity, cfg.temperature)
    return accuracy(probs, problem.eval_y)


def evaluate(problems, params: ModelParams, strategy: str, budget: int, cfg: TrainConfig,
             n_seeds: int = 1, seed: int = 0) -> tuple[float, float]:
    """Mean and std over problems of the accuracy (averaged over ``n_seeds`` draws)."""
    if not problems:
        raise ValueError("no problems to evaluate")
    accs = np.array([
        np.mean([problem_accuracy(p, params, strategy, budget, cfg, mask_seed(seed, i, s))
                 for s in range(n_seeds)])
        for i, p in enumerate(problems)
    ])
    return float(accs.mean()), float(accs.std())


# -- training loop --------------------------------------------------------------------

LOG_FIELDS = ("episode", "split", "budget", "strategy", "accuracy_mean", "accuracy_std",
              "loss_mean", "grad_norm", "baseline")


@dataclass
class EpisodeStats:
    problem_id: str
    rewards: np.ndarray
    accuracy: float
    labeling_cost: float
    grad_norm: float
    baseline: float


@dataclass
class TrainResult:
    params: ModelParams
    log: list = field(default_factory=list)
    best_val: float = float("nan")
    best_episode: int = 0

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
            w.writeheader()
            for row in self.log:
                w.writerow({k: _fmt(row[k]) for k in LOG_FIELDS})


def _fmt(v):
    return f"{v:.10g}" if isinstance(v, float) else v


def _trainable(params: ModelParams, cfg: TrainConfig) -> bool:
    if cfg.strategy == "policy":
        return True
    return params.embed_spec is not None


def train(problems_train, problems_val, cfg: TrainConfig, params: ModelParams,
          checkpoint_path=None) -> TrainResult:
    """Meta-train on random training problems, keeping the best-on-validation state."""
    if not problems_train or not problems_val:
        raise ValueError("training needs non-empty train and validation problems")
    if cfg.strategy == "policy" and not params.has_policy:
        raise ValueError("policy strategy needs a model with policy parameters")
    params = params.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(params.store.size, cfg.lr) if cfg.optimizer == "adam" else None
    baseline = None
    result = TrainResult(params.copy())

    def validate(episode: int, recent: list[EpisodeStats]):
        mean, std = evaluate(problems_val, params, cfg.strategy, cfg.budget, cfg,
                             cfg.eval_seeds, seed=cfg.seed + 1)
        row = {"episode": episode, "split": "val", "budget": cfg.budget, "strategy": cfg.strategy,
               "accuracy_mean": mean, "accuracy_std": std,
               "loss_mean": float(np.mean([s.rewards.mean() for s in recent])) if recent else float("nan"),
               "grad_norm": float(np.mean([s.grad_norm for s in recent])) if recent else float("nan"),
               "baseline": float("nan") if baseline is None else float(baseline)}
        result.log.append(row)
        log.info("episode %d val acc %.4f (best %.4f)", episode, mean, result.best_val)
        if not (mean <= result.best_val):
            result.best_val, result.best_episode = mean, episode
            result.params = params.copy()
            if checkpoint_path is not None:
                result.params.save(checkpoint_path, {"config": asdict(cfg), "episode": episode})

    if cfg.episodes <= 0 or not _trainable(params, cfg):
        validate(0, [])
        return result

    validate(0, [])
    recent: list[EpisodeStats] = []
    for episode in range(1, cfg.episodes + 1):
        problem = problems_train[int(rng.integers(len(problems_train)))]
        b = baseline if (cfg.baseline == "ema" and baseline is not None) else 0.0
        est = policy_gradient_estimate(problem, params, cfg, rng, baseline=b,
                                       loo_baseline=cfg.baseline == "loo")
        last_good = params.copy()
        if opt is not None:
            opt.step(params.store, est.grad, cfg.clip_norm)
        else:
            sgd_step(params.store, est.grad, cfg.lr, cfg.clip_norm)
        if not params.store.all_finite() or not np.isfinite(est.grad).all():
            raise TrainingDiverged(f"non-finite parameters at episode {episode}", last_good)
        r = est.mean_reward
        baseline = r if baseline is None else cfg.baseline_decay * baseline + (1 - cfg.baseline_decay) * r
        recent.append(EpisodeStats(problem.pid, est.rewards, float("nan"), est.labeling_cost,
                                   est.norm, float(b)))
        if episode % cfg.eval_interval == 0 or episode == cfg.episodes:
            validate(episode, recent)
            recent = []
    return result
