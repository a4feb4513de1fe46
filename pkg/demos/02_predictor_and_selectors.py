"""Similarity-weighted prediction and the three ways of choosing which points to label."""

# %%
import numpy as np

from metaactive import (LabeledSubset, kmedoids, kmedoids_select, predict, sample_alpha,
                        select_random)

rng = np.random.default_rng(1)

# %% Three labeled points and two queries. The prediction is the softmax of similarities
# pushed through the one-hot labels, so it is a distribution over classes.
support = LabeledSubset.from_labels([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]], [0, 1, 1], 2)
queries = np.array([[0.5, 0.2], [3.0, 3.0]])
for tau in (0.5, 2.0, 1e6):
    print(f"temperature {tau:g}:", predict(queries, support, "euclidean", tau).data.round(3))

# %% A pool with two obvious groups.
pool = np.vstack([rng.normal(size=(10, 2)), rng.normal(size=(10, 2)) + [6.0, 0.0]])

# %% Random selection draws k distinct positions uniformly.
print("random  ", select_random(len(pool), 2, seed=3).chosen)

# %% k-medoids picks cluster representatives, here one per group.
res = kmedoids(pool, 2, seed=0)
print("kmedoids", sorted(res.medoids.tolist()), "cost", round(res.cost, 3), "iterations", res.n_iter)
print("as mask ", kmedoids_select(pool, 2, seed=0).chosen)

# %% Sampling without replacement from a distribution, with the log-probability of the order drawn.
probs = np.array([0.5, 0.3, 0.2])
m = sample_alpha(probs, 2, seed=0)
print("order", m.indices, "log P", round(m.log_prob, 4))
