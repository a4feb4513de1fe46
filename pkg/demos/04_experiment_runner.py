"""Run a small experiment through the same entry points as the command line, then replay it."""

# %%
import tempfile
from pathlib import Path

from metaactive.cli import RunConfig, compare, format_table, gen_synthetic, replay, run_experiment

work = Path(tempfile.mkdtemp())

# %% A synthetic dataset: one Gaussian cluster per class.
data = gen_synthetic(classes=12, per_class=60, n_features=4, spread=0.4, seed=0,
                     path=work / "clusters.csv")

# %% Train and evaluate every strategy at two budgets. Results, a manifest and
# checkpoints land in the output directory.
cfg = RunConfig(dataset=str(data), partition=[6, 3, 3], pool_size=12, eval_size=20,
                problems=[200, 50, 100], budgets=[2, 4], episodes=300, eval_interval=100,
                mc_samples=8, hidden_dim=8, standardize=True, out=str(work / "run"))
run_experiment(cfg)
print(format_table(compare([work / "run" / "results.csv"])))

# %% The manifest pins the class partition and every problem, so a replay is byte-identical.
replay(work / "run" / "manifest.json", str(work / "again"))
same = (work / "run" / "results.csv").read_bytes() == (work / "again" / "results.csv").read_bytes()
print("replay identical:", same)
