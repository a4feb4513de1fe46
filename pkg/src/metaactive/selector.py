"""
Acquisition strategies: which pool examples get sent to the oracle.

``random`` and ``kmedoids`` are fixed baselines. ``policy`` is a learned
stochastic strategy: a bidirectional LSTM reads the whole embedded pool,
a linear head scores every position, and ``k`` indices are drawn without
replacement from the softmax of the scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .nn_core import (LstmCellParams, ParamStore, Tensor, add, as_tensor, bidirectional_scan,
                      init_lstm, linear_forward, log_softmax, logsumexp, reshape, softmax,
                      take, tsum, uniform_init)

STRATEGIES = ("random", "kmedoids", "policy")


@dataclass
class SelectionMask:
    alpha: np.ndarray  # (N,) of 0/1
    indices: np.ndarray  # chosen pool positions in draw order
    log_prob: float
    budget: int

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)

    @property
    def chosen(self) -> np.ndarray:
        """Distinct selected positions, ascending."""
        return np.flatnonzero(self.alpha)

    @property
    def size(self) -> int:
        return int(self.alpha.sum())

    def to_json(self) -> dict:
        return {"indices": [int(i) for i in self.indices], "log_prob": float(self.log_prob),
                "budget": int(self.budget)}


def _mask(N: int, indices, log_prob: float, k: int) -> SelectionMask:
    alpha = np.zeros(N, dtype=np.int64)
    alpha[np.asarray(indices, dtype=np.int64)] = 1
    return SelectionMask(alpha, indices, log_prob, k)


def _check_budget(N: int, k: int) -> None:
    if N < 1:
        raise ValueError("empty pool")
    if not 1 <= k <= N:
        raise ValueError(f"budget k={k} must lie in [1, N={N}]")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# -- random ------------------------------------------------------------------

def select_random(N: int, k: int, seed) -> SelectionMask:
    _check_budget(N, k)
    idx = _rng(seed).choice(N, size=k, replace=False)
    return _mask(N, idx, 0.0, k)


# -- k-medoids -----------------------------------------------------------------

@dataclass
class KMedoidsResult:
    medoids: np.ndarray
    labels: np.ndarray
    costs: list = field(default_factory=list)  # cost after init and after every update

    @property
    def cost(self) -> float:
        return self.costs[-1]

    @property
    def n_iter(self) -> int:
        return len(self.costs) - 1


def clustering_cost(D: np.ndarray, medoids) -> float:
    """Sum over points of the distance to the nearest medoid."""
    return float(D[:, list(medoids)].min(axis=1).sum())


def kmedoids_pp_init(D: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    N = len(D)
    medoids = [int(rng.integers(N))]
    for _ in range(1, k):
        d2 = D[:, medoids].min(axis=1) ** 2
        d2[medoids] = 0.0
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(N, p=d2 / total))
        else:
            # only duplicates of existing medoids remain
            rest = np.setdiff1d(np.arange(N), medoids)
            nxt = int(rng.choice(rest))
        medoids.append(nxt)
    return medoids


def _assign(D: np.ndarray, medoids: list[int]) -> np.ndarray:
    labels = D[:, medoids].argmin(axis=1)
    labels[medoids] = np.arange(len(medoids))
    return labels


def kmedoids(X, k: int, seed=0, init=None, max_iter: int = 100) -> KMedoidsResult:
    """Alternate nearest-medoid assignment and per-cluster medoid update.

    A medoid only moves when another member strictly lowers the summed
    distance of its cluster, so the cost never increases and the loop
    reaches a fixed point.
    """
    X = np.asarray(X, dtype=np.float64)
    _check_budget(len(X), k)
    D = cdist(X, X)
    medoids = [int(m) for m in init] if init is not None else kmedoids_pp_init(D, k, _rng(seed))
    if len(set(medoids)) != k:
        raise ValueError(f"need {k} distinct initial medoids, got {medoids}")
    costs = [clustering_cost(D, medoids)]
    for _ in range(max_iter):
        labels = _assign(D, medoids)
        new = list(medoids)
        for j, m in enumerate(medoids):
            members = np.flatnonzero(labels == j)
            within = D[np.ix_(members, members)].sum(axis=1)
            best = int(np.argmin(within))
            if within[best] < within[members == m][0]:
                new[j] = int(members[best])
        if new == medoids:
            break
        medoids = new
        costs.append(clustering_cost(D, medoids))
    return KMedoidsResult(np.array(medoids), _assign(D, medoids), costs)


def kmedoids_select(pool_embedded, k: int, seed) -> SelectionMask:
    X = pool_embedded.data if isinstance(pool_embedded, Tensor) else np.asarray(pool_embedded)
    res = kmedoids(X, k, seed)
    return _mask(len(X), res.medoids, 0.0, k)


# -- learned policy --------------------------------------------------------------

@dataclass
class PolicyOutput:
    scores: Tensor  # (N,)
    probs: np.ndarray  # (N,)

    @property
    def N(self) -> int:
        return len(self.probs)


def init_policy(store: ParamStore, input_dim: int, hidden_dim: int, rng: np.random.Generator,
                prefix: str = "policy") -> None:
    init_lstm(store, f"{prefix}.fwd", input_dim, hidden_dim, rng)
    init_lstm(store, f"{prefix}.bwd", input_dim, hidden_dim, rng)
    store.add(f"{prefix}.head.W", uniform_init(rng, (1, 2 * hidden_dim), 2 * hidden_dim))
    store.add(f"{prefix}.head.b", np.zeros(1))


def policy_scores(pool_embedded, store: ParamStore, prefix: str = "policy") -> PolicyOutput:
    """Score every pool position from the bidirectional read of the whole pool."""
    pool = as_tensor(pool_embedded)
    if pool.ndim != 2 or pool.shape[0] == 0:
        raise ValueError(f"policy needs a non-empty (N, L) pool, got shape {pool.shape}")
    hidden = bidirectional_scan(pool, LstmCellParams.from_store(store, f"{prefix}.fwd"),
                                LstmCellParams.from_store(store, f"{prefix}.bwd"))
    scores = reshape(linear_forward(hidden, store[f"{prefix}.head.W"], store[f"{prefix}.head.b"]),
                     (pool.shape[0],))
    probs = softmax(scores.detach(), 1.0).data
    return PolicyOutput(scores, probs)


def _draw_order(probs: np.ndarray, k: int, rng: np.random.Generator, with_replacement: bool):
    if with_replacement:
        return rng.choice(len(probs), size=k, replace=True, p=probs)
    # Gumbel top-k: same ordered law as k sequential renormalized draws
    with np.errstate(divide="ignore"):
        keys = np.log(probs) + rng.gumbel(size=len(probs))
    order = np.argsort(-keys, kind="stable")[:k]
    if not np.isfinite(keys[order]).all():
        raise ValueError("distribution has fewer than k positive entries")
    return order


def draw_log_prob(probs: np.ndarray, order, with_replacement: bool = False) -> float:
    """Log-probability of an ordered draw."""
    with np.errstate(divide="ignore"):
        logp = np.log(np.asarray(probs, dtype=np.float64))
    order = np.asarray(order, dtype=np.int64)
    if with_replacement:
        return float(logp[order].sum())
    remaining = np.ones(len(logp), dtype=bool)
    total = 0.0
    for i in order:
        lr = logp[remaining]
        m = lr.max()
        total += logp[i] - (m + np.log(np.exp(lr - m).sum()))
        remaining[i] = False
    return float(total)


def sample_alpha(dist, k: int, seed, with_replacement: bool = False) -> SelectionMask:
    """Draw ``k`` indices sequentially from ``dist``, renormalizing after each draw.

    With ``with_replacement`` the draws are i.i.d. and duplicates collapse,
    so the mask may hold fewer than ``k`` ones.
    """
    probs = dist.probs if isinstance(dist, PolicyOutput) else np.asarray(dist, dtype=np.float64)
    N = len(probs)
    _check_budget(N, k)
    if abs(probs.sum() - 1.0) > 1e-9 or (probs < 0).any():
        raise ValueError("selection distribution must be nonnegative and sum to 1")
    order = _draw_order(probs, k, _rng(seed), with_replacement)
    return _mask(N, order, draw_log_prob(probs, order, with_replacement), k)


def sequence_log_prob(scores: Tensor, order, with_replacement: bool = False) -> Tensor:
    """Differentiable log-probability of an ordered draw under softmax(scores)."""
    order = np.asarray(order, dtype=np.int64)
    if with_replacement:
        return tsum(take(log_softmax(scores), order))
    N, k = scores.shape[0], len(order)
    # row t masks out the t indices drawn before step t
    blocked = np.zeros((k, N))
    for t in range(1, k):
        blocked[t:, order[t - 1]] = -np.inf
    rows = add(reshape(scores, (1, N)), blocked)
    return add(tsum(take(scores, order)), -tsum(logsumexp(rows, axis=-1)))


def select(strategy: str, pool_embedded, k: int, params: ParamStore | None = None, seed=0,
           with_replacement: bool = False) -> SelectionMask:
    """Uniform entry point over the three acquisition strategies."""
    if strategy == "random":
        return select_random(len(pool_embedded), k, seed)
    if strategy == "kmedoids":
        return kmedoids_select(pool_embedded, k, seed)
    if strategy == "policy":
        if params is None:
            raise ValueError("policy strategy needs parameters")
        _check_budget(len(pool_embedded), k)
        out = policy_scores(Tensor(pool_embedded.data if isinstance(pool_embedded, Tensor)
                                   else pool_embedded), params)
        return sample_alpha(out, k, seed, with_replacement)
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
