import csv
import json

import numpy as np
import pytest

from metaactive.cli import (RESULT_FIELDS, RunConfig, compare, gen_synthetic, main, replay,
                            run_experiment, validate_config)
from metaactive.data import load_dataset, sample_problem
from metaactive.trainer import ModelParams, TrainConfig, evaluate, init_model

from conftest import LETTER


def small_letter(out, **kw):
    base = dict(dataset=str(LETTER), problems=[20, 10, 10], budgets=[2, 4, 6], episodes=10,
                mc_samples=4, eval_interval=5, eval_seeds=1, hidden_dim=4, out=str(out),
                standardize=True)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def letter_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    rows = run_experiment(small_letter(out))
    return out, rows


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_nine_test_rows(letter_run):
    out, _ = letter_run
    rows = read_rows(out / "results.csv")
    assert tuple(rows[0]) == RESULT_FIELDS
    test = [r for r in rows if r["split"] == "test"]
    assert len(test) == 9
    assert {(int(r["budget"]), r["strategy"]) for r in test} == {
        (k, s) for k in (2, 4, 6) for s in ("random", "kmedoids", "policy")}
    for r in rows:
        assert 0.0 <= float(r["accuracy_mean"]) <= 1.0 and float(r["accuracy_std"]) >= 0.0
    for k in (2, 4, 6):
        ModelParams.load(out / "checkpoints" / f"policy_k{k}.mpck")
    man = json.loads((out / "manifest.json").read_text())
    assert man["problems"]["partition"]["train"] and len(man["problems"]["problems"]["train"]) == 20


def test_replay_is_byte_identical(letter_run, tmp_path):
    out, _ = letter_run
    replay(out / "manifest.json", str(tmp_path / "again"))
    assert (tmp_path / "again" / "results.csv").read_bytes() == (out / "results.csv").read_bytes()
    assert (tmp_path / "again" / "train_log.csv").read_bytes() == (out / "train_log.csv").read_bytes()


def test_replay_rejects_changed_dataset(tmp_path):
    data = tmp_path / "d.csv"
    gen_synthetic(4, 20, 2, 0.1, 0, data)
    run_experiment(RunConfig(dataset=str(data), partition=[2, 1, 1], classes_per_problem=1,
                             pool_size=5, eval_size=5, problems=[2, 2, 2], budgets=[1],
                             strategies=["random"], out=str(tmp_path / "r")))
    with open(data, "a") as fh:
        fh.write("0.0,0.0,c0\n")
    assert main(["replay", str(tmp_path / "r" / "manifest.json")]) == 2


def test_full_supervision_ceiling(tmp_path):
    data = tmp_path / "blobs.csv"
    gen_synthetic(6, 30, 2, 0.05, 1, data)
    rows = run_experiment(RunConfig(dataset=str(data), partition=[2, 2, 2], pool_size=10,
                                    eval_size=10, problems=[5, 5, 20], budgets=[1, 10],
                                    strategies=["random"], temperature=1e6, out=str(tmp_path / "o")))
    test = {r["budget"]: r["accuracy_mean"] for r in rows if r["split"] == "test"}
    assert test[10] >= test[1]


# -- compare --------------------------------------------------------------------

def write_results(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({"schema_version": 1, "dataset": "d", "P": 2, "split": "test",
                        "accuracy_std": 0.1, "n_problems": 5, "seed": 0, **r})


def test_compare_single_file_is_identity(letter_run):
    out, rows = letter_run
    pivot = compare([out / "results.csv"])
    assert sorted(pivot["columns"]) == ["kmedoids", "policy", "random"]
    for r in pivot["rows"]:
        for s, v in r["accuracy"].items():
            want = [x for x in rows if x["split"] == "test" and x["strategy"] == s
                    and x["budget"] == r["budget"]][0]["accuracy_mean"]
            assert v == pytest.approx(want, abs=5e-7)


def test_compare_two_files_fills_delta(tmp_path):
    write_results(tmp_path / "a" / "results.csv", [{"budget": 2, "strategy": "random", "accuracy_mean": 0.6}])
    write_results(tmp_path / "b" / "results.csv", [{"budget": 2, "strategy": "policy", "accuracy_mean": 0.7}])
    pivot = compare([tmp_path / "a" / "results.csv", tmp_path / "b" / "results.csv"])
    assert pivot["rows"][0]["deltas"]["random-policy"] == pytest.approx(-0.1)


def test_compare_same_strategy_two_runs(tmp_path):
    for name, acc in (("a", 0.6), ("b", 0.65)):
        write_results(tmp_path / name / "results.csv",
                      [{"budget": 2, "strategy": "random", "accuracy_mean": acc}])
    pivot = compare([tmp_path / "a" / "results.csv", tmp_path / "b" / "results.csv"])
    assert pivot["columns"] == ["random@a", "random@b"]
    assert pivot["rows"][0]["deltas"]["random@a-random@b"] == pytest.approx(-0.05)


def test_compare_empty_file(tmp_path, capsys):
    empty = tmp_path / "results.csv"
    write_results(empty, [])
    assert main(["compare", str(empty)]) == 2
    assert "no rows" in capsys.readouterr().err


def test_compare_cli_json(tmp_path, capsys):
    write_results(tmp_path / "r.csv", [{"budget": 1, "strategy": "random", "accuracy_mean": 0.5},
                                       {"budget": 1, "strategy": "kmedoids", "accuracy_mean": 0.55}])
    assert main(["compare", str(tmp_path / "r.csv"), "--json", str(tmp_path / "p.json")]) == 0
    assert "0.5500" in capsys.readouterr().out
    assert json.loads((tmp_path / "p.json").read_text())["rows"][0]["budget"] == 1


def test_compare_schema_mismatch(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["compare", str(bad)]) == 2


# -- config validation ---------------------------------------------------------------

def test_validation_lists_every_problem(capsys):
    code = main(["run", "--dataset", str(LETTER), "--strategy", "greedy", "--similarity", "dot",
                 "--temperature", "0", "--budgets", "0,30", "--mc-samples", "0"])
    assert code == 2
    err = capsys.readouterr().err
    for flag in ("--strategy", "--similarity", "--temperature", "--budgets", "--mc-samples"):
        assert flag in err


def test_validation_against_dataset(letter):
    cfg = RunConfig(dataset=str(LETTER), partition=[20, 5, 2], classes_per_problem=3)
    errs = validate_config(cfg, letter)
    assert any("--partition" in e for e in errs)
    assert any("--classes-per-problem" in e for e in errs)


def test_missing_dataset(tmp_path):
    assert main(["run", "--dataset", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2


# -- synthetic data ---------------------------------------------------------------

def test_gen_synthetic_shape(tmp_path):
    p = gen_synthetic(40, 100, 16, 0.3, 0, tmp_path / "s.csv")
    ds = load_dataset(p)
    assert len(ds) == 4000 and ds.n_features == 16 and len(ds.classes) == 40
    assert main(["gen-synthetic", "--classes", "3", "--per-class", "5", "--features", "2",
                 "--out", str(tmp_path / "t.csv")]) == 0
    assert len(load_dataset(tmp_path / "t.csv")) == 15


def test_gen_synthetic_point_clusters(tmp_path):
    data = gen_synthetic(2, 30, 4, 0.0, 3, tmp_path / "pts.csv")
    ds = load_dataset(data)
    for rows in ds.by_class.values():
        assert np.ptp(ds.X[rows], axis=0).max() == 0.0
    # a balanced pool of two holds one point per class
    problems = [sample_problem(ds, [0, 1], 2, 2, 10, seed=s, balanced=True) for s in range(10)]
    params = init_model(4, embed_dim=0)
    for strategy in ("random", "kmedoids", "policy"):
        assert evaluate(problems, params, strategy, 2, TrainConfig()) == (1.0, 0.0)


def test_gen_synthetic_spread_drives_random_to_chance(tmp_path):
    accs = []
    for spread in (0.05, 20.0):
        data = gen_synthetic(6, 60, 4, spread, 0, tmp_path / f"s{spread}.csv")
        rows = run_experiment(RunConfig(dataset=str(data), partition=[2, 2, 2], pool_size=10,
                                        eval_size=20, problems=[2, 2, 200], budgets=[2],
                                        strategies=["random"], out=str(tmp_path / f"o{spread}")))
        accs.append([r["accuracy_mean"] for r in rows if r["split"] == "test"][0])
    assert accs[0] > 0.7 and abs(accs[1] - 0.5) < 0.05


def test_gen_synthetic_rejects_bad_sizes(tmp_path):
    assert main(["gen-synthetic", "--classes", "0", "--out", str(tmp_path / "x.csv")]) == 2
