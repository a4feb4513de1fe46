"""
Experiment runner.

    metaactive run --dataset data/letter-recognition.csv --out runs/letter ...
    metaactive replay runs/letter/manifest.json --out runs/replay
    metaactive compare runs/a/results.csv runs/b/results.csv
    metaactive gen-synthetic --classes 40 --per-class 100 --features 16 --out synth.csv

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or input.
Set ``METAACTIVE_LOG`` (DEBUG, INFO, WARNING) to control verbosity.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import (DataError, load_dataset, make_problem_suite, partition_classes, standardize,
                   suite_from_manifest)
from .selector import STRATEGIES
from .trainer import LOG_FIELDS, TrainConfig, TrainingDiverged, _fmt, evaluate, init_model, train

log = logging.getLogger("metaactive")

SCHEMA_VERSION = 1
RESULT_FIELDS = ("schema_version", "dataset", "P", "budget", "strategy", "split",
                 "accuracy_mean", "accuracy_std", "n_problems", "seed")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class RunConfig:
    dataset: str
    format: str = "csv"
    label_column: int = -1
    header: bool = False
    partition: list | None = None
    classes_per_problem: int = 2
    pool_size: int = 25
    eval_size: int = 40
    problems: list = field(default_factory=lambda: [2000, 500, 500])
    strategies: list = field(default_factory=lambda: ["random", "kmedoids", "policy"])
    budgets: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    similarity: str = "euclidean"
    temperature: float = 1.0
    embed_dim: int = 0
    embed_hidden: list = field(default_factory=lambda: [32])
    hidden_dim: int = 32
    lr: float = 0.003
    optimizer: str = "adam"
    episodes: int = 12000
    mc_samples: int = 16
    lam: float = 0.0
    baseline: str = "loo"
    eval_interval: int = 1000
    eval_seeds: int = 3
    val_problems: int | None = 200
    clip_norm: float = 5.0
    seed: int = 0
    out: str = "runs/out"
    balanced: bool = False
    standardize: bool = False
    with_replacement: bool = False

    def train_config(self, budget: int, strategy: str, seed: int) -> TrainConfig:
        return TrainConfig(budget=budget, lam=self.lam, mc_samples=self.mc_samples, lr=self.lr,
                           episodes=self.episodes, similarity=self.similarity,
                           temperature=self.temperature, strategy=strategy,
                           optimizer=self.optimizer, clip_norm=self.clip_norm,
                           baseline=self.baseline, eval_interval=self.eval_interval,
                           eval_seeds=self.eval_seeds, with_replacement=self.with_replacement,
                           seed=seed)


def validate_config(cfg: RunConfig, ds=None) -> list[str]:
    """Every problem with the configuration, not just the first."""
    errs = []
    if cfg.format not in ("csv", "libsvm"):
        errs.append(f"--format: {cfg.format!r} is not csv or libsvm")
    for s in cfg.strategies:
        if s not in STRATEGIES:
            errs.append(f"--strategy: unknown strategy {s!r}")
    if not cfg.strategies:
        errs.append("--strategy: at least one strategy is required")
    if not cfg.budgets:
        errs.append("--budgets: at least one budget is required")
    for b in cfg.budgets:
        if b < 1 or b > cfg.pool_size:
            errs.append(f"--budgets: budget {b} outside [1, pool size {cfg.pool_size}]")
    if cfg.similarity not in ("cosine", "euclidean"):
        errs.append(f"--similarity: {cfg.similarity!r} is not cosine or euclidean")
    if not cfg.temperature > 0:
        errs.append("--temperature: must be positive")
    if not cfg.lr > 0:
        errs.append("--lr: must be positive")
    if cfg.mc_samples < 1:
        errs.append("--mc-samples: must be >= 1")
    if cfg.episodes < 0:
        errs.append("--episodes: must be >= 0")
    if cfg.lam < 0:
        errs.append("--lambda: must be >= 0")
    if cfg.embed_dim < 0 or cfg.hidden_dim < 1:
        errs.append("--embed-dim must be >= 0 and --hidden-dim >= 1")
    if cfg.optimizer not in ("sgd", "adam"):
        errs.append(f"--optimizer: {cfg.optimizer!r} is not sgd or adam")
    if cfg.baseline not in ("ema", "loo", "none"):
        errs.append(f"--baseline: {cfg.baseline!r} is not ema, loo or none")
    if cfg.eval_interval < 1 or cfg.eval_seeds < 1:
        errs.append("--eval-interval and --eval-seeds must be >= 1")
    if cfg.classes_per_problem < 1 or cfg.pool_size < 1 or cfg.eval_size < 1:
        errs.append("--classes-per-problem, --pool-size and --eval-size must be >= 1")
    if len(cfg.problems) != 3 or min(cfg.problems) < 1:
        errs.append("--problems: need three positive counts (train val test)")
    if cfg.partition is not None and (len(cfg.partition) != 3 or min(cfg.partition) < 0):
        errs.append("--partition: need three non-negative class counts")
    if ds is not None:
        counts = resolve_partition(cfg, len(ds.classes))
        if sum(counts) > len(ds.classes):
            errs.append(f"--partition: {counts} exceeds the {len(ds.classes)} classes available")
        for name, n in zip(("train", "val", "test"), counts):
            if n < cfg.classes_per_problem:
                errs.append(f"--classes-per-problem: {cfg.classes_per_problem} > {n} {name} classes")
        sizes = sorted(len(r) for r in ds.by_class.values())
        # the P smallest classes must still hold N+M rows
        need = cfg.pool_size + cfg.eval_size
        if cfg.balanced:
            per = -(-cfg.pool_size // cfg.classes_per_problem) + -(-cfg.eval_size // cfg.classes_per_problem)
            if sizes and sizes[0] < per:
                errs.append(f"--balanced: smallest class has {sizes[0]} rows; need {per}")
        elif sum(sizes[:cfg.classes_per_problem]) < need:
            errs.append(f"--pool-size/--eval-size: {need} rows needed but the smallest "
                        f"{cfg.classes_per_problem} classes hold only {sum(sizes[:cfg.classes_per_problem])}")
    return errs


def resolve_partition(cfg: RunConfig, n_classes: int) -> list[int]:
    if cfg.partition is not None:
        return [int(c) for c in cfg.partition]
    n_train = int(0.4 * n_classes)
    n_val = int(0.27 * n_classes)
    return [n_train, n_val, n_classes - n_train - n_val]


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _derived_seed(master: int, budget: int, strategy: str) -> int:
    ss = np.random.SeedSequence([int(master), int(budget), STRATEGIES.index(strategy)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _prepare(cfg: RunConfig, manifest: dict | None = None):
    ds = load_dataset(cfg.dataset, cfg.format, cfg.label_column, cfg.header)
    errs = validate_config(cfg, ds)
    if errs:
        raise ConfigError(errs)
    if manifest is None:
        part = partition_classes(ds, resolve_partition(cfg, len(ds.classes)), cfg.seed)
    else:
        part = None
    if cfg.standardize:
        fit = part.train if part is not None else manifest["problems"]["partition"]["train"]
        ds = standardize(ds, fit)
    if manifest is None:
        suite = make_problem_suite(ds, part, cfg.classes_per_problem, cfg.pool_size, cfg.eval_size,
                                   cfg.problems, cfg.seed, balanced=cfg.balanced)
    else:
        suite = suite_from_manifest(ds, manifest["problems"])
    return ds, suite


def _write_results(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.6f}" if isinstance(r[k], float) else r[k]) for k in RESULT_FIELDS})


def run_experiment(cfg: RunConfig, manifest: dict | None = None) -> list[dict]:
    """Train and evaluate every (budget, strategy) pair; write results, manifest, checkpoints."""
    ds, suite = _prepare(cfg, manifest)
    out = Path(cfg.out)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    man = {
        "schema_version": SCHEMA_VERSION,
        "run_config": asdict(cfg),
        "dataset": {"path": str(cfg.dataset), "sha256": _sha256(cfg.dataset), "rows": len(ds),
                    "n_features": ds.n_features, "n_classes": len(ds.classes)},
        "problems": suite.manifest(),
    }
    (out / "manifest.json").write_text(json.dumps(man, sort_keys=True, indent=1))

    val = suite.val if cfg.val_problems is None else suite.val[:cfg.val_problems]
    rows, logs = [], []
    for budget in cfg.budgets:
        for strategy in cfg.strategies:
            seed = _derived_seed(cfg.seed, budget, strategy)
            tcfg = cfg.train_config(budget, strategy, seed)
            model = init_model(ds.n_features, cfg.embed_dim, cfg.hidden_dim, tuple(cfg.embed_hidden),
                               seed=seed, policy=(strategy == "policy"))
            ckpt = out / "checkpoints" / f"{strategy}_k{budget}.mpck"
            log.info("budget %d, strategy %s", budget, strategy)
            res = train(suite.train, val, tcfg, model, checkpoint_path=ckpt)
            logs.extend(res.log)
            for split, problems in (("val", val), ("test", suite.test)):
                mean, std = evaluate(problems, res.params, strategy, budget, tcfg,
                                     cfg.eval_seeds, seed=seed + 7)
                rows.append({"schema_version": SCHEMA_VERSION, "dataset": ds.name,
                             "P": cfg.classes_per_problem, "budget": budget, "strategy": strategy,
                             "split": split, "accuracy_mean": mean, "accuracy_std": std,
                             "n_problems": len(problems), "seed": cfg.seed})
                log.info("  %s accuracy %.4f +- %.4f", split, mean, std)
    _write_results(out / "results.csv", rows)
    with open(out / "train_log.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in logs:
            w.writerow({k: _fmt(r[k]) for k in LOG_FIELDS})
    return rows


def replay(manifest_path, out: str | None = None) -> list[dict]:
    """Re-run an experiment from its manifest, reusing the exact problem indices."""
    man = json.loads(Path(manifest_path).read_text())
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in man["run_config"].items() if k in known})
    if _sha256(cfg.dataset) != man["dataset"]["sha256"]:
        raise DataError(f"{cfg.dataset}: contents differ from the manifest's dataset")
    if out is not None:
        cfg.out = out
    return run_experiment(cfg, manifest=man)


# -- compare ---------------------------------------------------------------------

def load_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        if tuple(reader.fieldnames) != RESULT_FIELDS:
            raise ConfigError([f"{path}: unexpected columns {reader.fieldnames}"])
        return list(reader)


def compare(paths, split: str = "test") -> dict:
    """Pivot accuracy by (dataset, P, budget) x strategy with pairwise deltas."""
    rows = []
    multi = len(paths) > 1
    strategy_files: dict[str, set] = {}
    for p in paths:
        for r in load_results(p):
            strategy_files.setdefault(r["strategy"], set()).add(str(p))
            rows.append((str(p), r))
    rows = [(p, r) for p, r in rows if r["split"] == split]
    if not rows:
        return {"columns": [], "rows": []}

    def label(p, r):
        clash = multi and len(strategy_files[r["strategy"]]) > 1
        return f"{r['strategy']}@{Path(p).parent.name or Path(p).stem}" if clash else r["strategy"]

    columns, table = [], {}
    for p, r in rows:
        col = label(p, r)
        if col not in columns:
            columns.append(col)
        key = (r["dataset"], int(r["P"]), int(r["budget"]))
        table.setdefault(key, {})[col] = float(r["accuracy_mean"])
    out_rows = []
    for key in sorted(table):
        vals = table[key]
        deltas = {f"{a}-{b}": vals[a] - vals[b]
                  for i, a in enumerate(columns) for b in columns[i + 1:] if a in vals and b in vals}
        out_rows.append({"dataset": key[0], "P": key[1], "budget": key[2],
                         "accuracy": vals, "deltas": deltas})
    return {"columns": columns, "rows": out_rows}


def format_table(pivot: dict) -> str:
    cols = pivot["columns"]
    delta_names = sorted({d for r in pivot["rows"] for d in r["deltas"]})
    head = ["dataset", "P", "budget", *cols, *delta_names]
    lines = ["\t".join(head)]
    for r in pivot["rows"]:
        cells = [r["dataset"], str(r["P"]), str(r["budget"])]
        cells += [f"{r['accuracy'][c]:.4f}" if c in r["accuracy"] else "-" for c in cols]
        cells += [f"{r['deltas'][d]:+.4f}" if d in r["deltas"] else "-" for d in delta_names]
        lines.append("\t".join(cells))
    return "\n".join(lines)


# -- synthetic data ------------------------------------------------------------------

def gen_synthetic(classes: int, per_class: int, n_features: int, spread: float, seed: int, path) -> Path:
    """Isotropic Gaussian clusters with means uniform in [-1, 1]^K, written as CSV."""
    if classes < 1 or per_class < 1 or n_features < 1 or spread < 0:
        raise ConfigError(["gen-synthetic: sizes must be positive and spread non-negative"])
    rng = np.random.default_rng(seed)
    means = rng.uniform(-1.0, 1.0, size=(classes, n_features))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for c in range(classes):
            pts = means[c] + spread * rng.normal(size=(per_class, n_features))
            for row in pts:
                w.writerow([repr(float(v)) for v in row] + [f"c{c}"])
    return path


# -- argument parsing ------------------------------------------------------------------

def _csv_list(kind):
    def parse(s):
        return [kind(x) for x in s.replace(",", " ").split()]
    return parse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metaactive", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train and evaluate acquisition strategies")
    r.add_argument("--dataset", required=True)
    r.add_argument("--format", default="csv")
    r.add_argument("--label-column", type=int, default=-1)
    r.add_argument("--header", action="store_true")
    r.add_argument("--partition", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    r.add_argument("--classes-per-problem", type=int, default=2)
    r.add_argument("--pool-size", type=int, default=25)
    r.add_argument("--eval-size", type=int, default=40)
    r.add_argument("--problems", type=int, nargs=3, default=[2000, 500, 500], metavar=("TRAIN", "VAL", "TEST"))
    r.add_argument("--strategy", type=_csv_list(str), default=["random", "kmedoids", "policy"],
                   help="comma-separated subset of random,kmedoids,policy")
    r.add_argument("--budgets", type=_csv_list(int), default=[1, 2, 3, 4, 5, 6])
    r.add_argument("--similarity", default="euclidean")
    r.add_argument("--temperature", type=float, default=1.0)
    r.add_argument("--embed-dim", type=int, default=0, help="0 disables the learned representation")
    r.add_argument("--embed-hidden", type=_csv_list(int), default=[32])
    r.add_argument("--hidden-dim", type=int, default=32)
    r.add_argument("--lr", type=float, default=0.003)
    r.add_argument("--optimizer", default="adam")
    r.add_argument("--episodes", type=int, default=12000)
    r.add_argument("--mc-samples", type=int, default=16)
    r.add_argument("--lambda", dest="lam", type=float, default=0.0)
    r.add_argument("--baseline", default="loo", help="ema, loo or none")
    r.add_argument("--no-baseline", action="store_true")
    r.add_argument("--eval-interval", type=int, default=1000)
    r.add_argument("--eval-seeds", type=int, default=3)
    r.add_argument("--val-problems", type=int, default=200)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="runs/out")
    r.add_argument("--balanced", action="store_true")
    r.add_argument("--standardize", action="store_true")
    r.add_argument("--with-replacement", action="store_true")

    rp = sub.add_parser("replay", help="re-run an experiment from its manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out")

    c = sub.add_parser("compare", help="pivot one or more results.csv files")
    c.add_argument("results", nargs="+")
    c.add_argument("--split", default="test")
    c.add_argument("--json")

    g = sub.add_parser("gen-synthetic", help="write a Gaussian-clusters dataset")
    g.add_argument("--classes", type=int, default=40)
    g.add_argument("--per-class", type=int, default=100)
    g.add_argument("--features", type=int, default=16)
    g.add_argument("--spread", type=float, default=0.3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    return ap


def config_from_args(a) -> RunConfig:
    return RunConfig(
        dataset=a.dataset, format=a.format, label_column=a.label_column, header=a.header,
        partition=a.partition, classes_per_problem=a.classes_per_problem, pool_size=a.pool_size,
        eval_size=a.eval_size, problems=list(a.problems), strategies=a.strategy, budgets=a.budgets,
        similarity=a.similarity, temperature=a.temperature, embed_dim=a.embed_dim,
        embed_hidden=a.embed_hidden, hidden_dim=a.hidden_dim, lr=a.lr, optimizer=a.optimizer,
        episodes=a.episodes, mc_samples=a.mc_samples, lam=a.lam,
        baseline="none" if a.no_baseline else a.baseline, eval_interval=a.eval_interval,
        eval_seeds=a.eval_seeds, val_problems=a.val_problems, seed=a.seed, out=a.out,
        balanced=a.balanced, standardize=a.standardize, with_replacement=a.with_replacement)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("METAACTIVE_LOG", "WARNING").upper(),
                        format="%(asctime)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = config_from_args(args)
            errs = validate_config(cfg)
            if errs:
                raise ConfigError(errs)
            run_experiment(cfg)
            print(Path(cfg.out) / "results.csv")
        elif args.command == "replay":
            cfg_rows = replay(args.manifest, args.out)
            print(f"{len(cfg_rows)} rows")
        elif args.command == "compare":
            pivot = compare(args.results, args.split)
            if not pivot["rows"]:
                print("no rows", file=sys.stderr)
                return 2
            print(format_table(pivot))
            if args.json:
                Path(args.json).write_text(json.dumps(pivot, indent=1, sort_keys=True))
        elif args.command == "gen-synthetic":
            print(gen_synthetic(args.classes, args.per_class, args.features, args.spread,
                                args.seed, args.out))
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
