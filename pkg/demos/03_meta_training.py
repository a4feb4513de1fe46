"""Meta-train the acquisition policy on letter pairs and compare it with the baselines.

This runs the full budget-2 setting on the bundled letter data and takes about
four minutes. Set EPISODES lower for a quick look.
"""

# %%
from pathlib import Path

from metaactive import (TrainConfig, evaluate, init_model, load_dataset, make_problem_suite,
                        partition_classes, standardize, train)

EPISODES = 12000
DATA = Path(__file__).resolve().parents[1] / "data" / "letter-recognition.csv"

# %% 10 classes for training, 7 for validation, 9 for testing; problems are class pairs
# with 25 pool points and 40 evaluation points.
ds = load_dataset(DATA)
part = partition_classes(ds, (10, 7, 9), seed=0)
ds = standardize(ds, part.train)
suite = make_problem_suite(ds, part, 2, 25, 40, (2000, 500, 500), master_seed=0)
print(ds.summary())

# %% Baselines need no training when the representation is the raw features.
cfg = TrainConfig(budget=2, mc_samples=16, lr=0.003, optimizer="adam", episodes=EPISODES,
                  eval_interval=1000, eval_seeds=3, baseline="loo")
params = init_model(ds.n_features, embed_dim=0, hidden_dim=32, seed=0)
for strategy in ("random", "kmedoids"):
    print(strategy, evaluate(suite.test, params, strategy, 2, cfg, n_seeds=3))

# %% Train the policy; the best state on validation problems is kept.
result = train(suite.train, suite.val[:200], cfg, params)
for row in result.log:
    print(row["episode"], round(row["accuracy_mean"], 4))

# %%
print("policy", evaluate(suite.test, result.params, "policy", 2, cfg, n_seeds=3))
