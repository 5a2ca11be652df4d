import json

import pytest

from fakeads import cli

CONFIG = """
seed = 0
[synth]
n_ads = 400
[stack]
roster = ["gbdt_xgb", "knn_distance", "extra_trees_gini"]
[stack.hyperparameters.extra_trees_gini]
n_trees = 20
[ablation]
order = ["spatial", "refined"]
"""


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "c.toml").write_text(CONFIG, encoding="utf-8")
    return d


@pytest.fixture(scope="module")
def staged(workdir):
    """synth -> extract -> clean -> train in one output directory."""
    out = workdir / "out"
    for cmd in ("synth", "extract", "clean", "train"):
        assert cli.main(["--config", str(workdir / "c.toml"), "--out", str(out), cmd]) == 0, cmd
    return out


def test_stage_artifacts(staged):
    for name in ("corpus.jsonl", "labels.csv", "gazetteer.csv", "truth.csv", "extracted.jsonl",
                 "extraction_report.json", "cleaned.jsonl", "cleaning_report.json", "bundle.zip",
                 "leaderboard.json", "leaderboard.txt", "split.json"):
        assert (staged / name).exists(), name


def test_evaluate_uses_held_out_ids(staged, workdir, capsys):
    code, out, _ = run(capsys, "--config", workdir / "c.toml", "--out", staged, "evaluate")
    assert code == 0
    m = json.loads((staged / "metrics.json").read_text())
    split = json.loads((staged / "split.json").read_text())
    assert m["counts"]["tp"] + m["counts"]["tn"] + m["counts"]["fp"] + m["counts"]["fn"] == len(split["test"])
    assert json.loads(out)["command"] == "evaluate"


def test_importance_and_predict(staged, workdir, capsys):
    code, _, _ = run(capsys, "--config", workdir / "c.toml", "--out", staged, "importance", "--n-shuffles", 2)
    assert code == 0
    imp = json.loads((staged / "importance.json").read_text())
    assert imp["n_shuffles"] == 2 and {f["feature"] for f in imp["features"]} >= {"price", "area", "description"}
    code, out, _ = run(capsys, "--out", staged, "predict", "--corpus", staged / "corpus.jsonl")
    assert code == 0
    res = json.loads(out)["result"]
    lines = (staged / "predictions.jsonl").read_text().splitlines()
    assert res["predicted"] == len(lines) > 0
    assert all(0.0 <= json.loads(x)["p_fake"] <= 1.0 for x in lines)


def test_ablate(staged, workdir, capsys):
    code, _, _ = run(capsys, "--config", workdir / "c.toml", "--out", staged, "ablate")
    assert code == 0
    rows = json.loads((staged / "ablation.json").read_text())
    assert [r["label"] for r in rows] == ["full", "-spatial", "-spatial -refined"]


def _error(err):
    obj = json.loads(err.strip().splitlines()[-1])
    assert set(obj) == {"error", "type", "message", "exit_code"}
    return obj


@pytest.mark.parametrize("argv", [["frobnicate"], ["--seed", "-3", "synth"], ["synth", "--n-ads", "x"],
                                  ["--config", "/nonexistent.toml", "synth"]])
def test_usage_errors(tmp_path, capsys, argv):
    code, _, err = run(capsys, "--out", tmp_path, *argv)
    assert code == 1 and _error(err)["exit_code"] == 1


def test_bad_config_is_usage_error(tmp_path, capsys):
    (tmp_path / "c.toml").write_text("[stack]\nroster = ['nope']\n", encoding="utf-8")
    code, _, err = run(capsys, "--config", tmp_path / "c.toml", "--out", tmp_path, "synth")
    assert code == 1 and _error(err)["type"] == "ConfigError"


def test_thread_variable_validated(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("FAKEADS_THREADS", "zero")
    code, _, err = run(capsys, "--out", tmp_path, "synth", "--n-ads", 10)
    assert code == 1


def test_data_errors(tmp_path, capsys):
    code, _, err = run(capsys, "--out", tmp_path, "extract")
    assert code == 2 and _error(err)["type"] == "FileNotFoundError"
    (tmp_path / "bundle.zip").write_bytes(b"garbage")
    code, _, err = run(capsys, "--out", tmp_path, "evaluate", "--records", tmp_path / "bundle.zip")
    assert code == 2 and _error(err)["type"] == "IntegrityError"


def test_one_class_labels_cannot_be_split(tmp_path, capsys):
    assert run(capsys, "--out", tmp_path, "synth", "--n-ads", 60)[0] == 0
    assert run(capsys, "--out", tmp_path, "extract")[0] == 0
    assert run(capsys, "--out", tmp_path, "clean")[0] == 0
    labels = (tmp_path / "labels.csv").read_text().splitlines()
    head, rows = labels[0], labels[1:]
    (tmp_path / "labels.csv").write_text("\n".join([head] + [r.rsplit(",", 1)[0] + ",real" for r in rows]) + "\n")
    code, _, err = run(capsys, "--out", tmp_path, "train")
    assert code == 2 and _error(err)["type"] == "StratifyError"


def test_training_failure_exit_code(staged, workdir, capsys, monkeypatch):
    from fakeads import ensemble, pipeline

    def boom(*a, **k):
        raise ensemble.StackError("every learner failed")
    monkeypatch.setattr(pipeline, "train_stack", boom)
    code, _, err = run(capsys, "--config", workdir / "c.toml", "--out", staged, "train")
    assert code == 3 and _error(err)["type"] == "StackError"
