import csv
import json

import numpy as np
import pytest

from emovae.config import config_from_dict
from emovae.corpus import DIMENSIONS
from emovae.experiment import latent_sweep, run_experiment
from emovae.report import markdown_table, write_report, write_sweep


@pytest.fixture(scope="module")
def categorical(small_records, tmp_path_factory):
    cfg = config_from_dict({"seeds": [0, 1], "model_kind": "cvae",
                            "representation": {"epochs": 2, "hidden_dims": [24, 12], "latent_dim": 6},
                            "classifier": {"max_epochs": 3, "lstm_hidden": [6, 6]}})
    ckpt = tmp_path_factory.mktemp("ckpt")
    return cfg, run_experiment(small_records, cfg, ckpt), ckpt


@pytest.fixture(scope="module")
def dimensional(small_records):
    cfg = config_from_dict({"seeds": [0], "task": "dimensional", "model_kind": "vae",
                            "cv": {"dimensional_folds": 4},
                            "representation": {"epochs": 1, "hidden_dims": [16], "latent_dim": 4},
                            "classifier": {"max_epochs": 2, "lstm_hidden": [4, 4]}})
    return run_experiment(small_records, cfg)


def test_loso_tests_every_utterance_once(categorical, small_records):
    _, report, _ = categorical
    for seed in report.seeds:
        assert report.aggregate(seed, "emotion").total == len(small_records)
        ids = [p[0] for f in report.folds if f.seed == seed for p in f.predictions["emotion"]]
        assert sorted(ids) == sorted(r.id for r in small_records)


def test_aggregate_is_sum_of_folds(categorical):
    _, report, _ = categorical
    total = sum(f.confusion["emotion"].counts for f in report.folds if f.seed == 0)
    assert np.array_equal(report.aggregate(0, "emotion").counts, total)


def test_summary_is_mean_over_seeds(categorical):
    _, report, _ = categorical
    ua = [report.seed_metrics(s)["emotion"]["ua"] for s in report.seeds]
    assert report.summary()["emotion"]["ua"] == pytest.approx(np.mean(ua), abs=1e-15)


def test_checkpoints_written(categorical):
    _, report, ckpt = categorical
    names = sorted(p.name for p in ckpt.iterdir())
    assert names == sorted(report.to_dict()["checkpoints"])
    assert "seed1_session3_rep.emovae" in names and "seed0_session5_clf_emotion.emovae" in names


def test_probabilities_are_normalised(categorical):
    _, report, _ = categorical
    for f in report.folds:
        for _, true, pred, probs in f.predictions["emotion"]:
            assert abs(sum(probs) - 1) < 1e-12 and pred == int(np.argmax(probs))


def test_dimensional_mean_is_average_of_three(dimensional):
    m = dimensional.seed_metrics(0)
    assert set(DIMENSIONS) <= set(m)
    assert m["mean_f1"] == pytest.approx(sum(m[d]["macro_f1"] for d in DIMENSIONS) / 3, abs=1e-15)
    assert dimensional.fold_scheme == "kfold(4)"
    assert "Mean" in markdown_table(dimensional)


def test_report_files(categorical, tmp_path):
    cfg, report, _ = categorical
    write_report(report, tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["config"] == cfg.to_dict() and data["model"] == "CVAE-LSTM"
    assert data["build"].startswith("emovae ")
    agg = data["runs"][0]["aggregate"]["emotion"]
    assert 0.0 <= agg["shuffled_label_macro_f1"] <= 1.0
    with open(tmp_path / "predictions_seed0_emotion.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["utterance_id", "true", "predicted", "p_0", "p_1", "p_2", "p_3"]
    assert len(rows) == 41
    table = (tmp_path / "report.md").read_text()
    assert "| Model | WA (%) | UA (%) |" in table
    for name in ("metrics.csv", "per_class_f1.csv", "rep_history.csv", "clf_history.csv",
                 "confusion_seed0_emotion.png", "rep_loss_seed0.png"):
        assert (tmp_path / name).stat().st_size > 0
    assert (tmp_path / "confusion_seed1_emotion.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_report_is_deterministic(categorical, tmp_path):
    _, report, _ = categorical
    write_report(report, tmp_path / "a")
    write_report(report, tmp_path / "b")
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes(), p.name


def test_sweep_rows_and_csv(small_records, tmp_path):
    cfg = config_from_dict({"seeds": [0], "model_kind": "ae",
                            "representation": {"epochs": 1, "hidden_dims": [8]},
                            "classifier": {"max_epochs": 1, "lstm_hidden": [3, 3]}})
    rows, reports = latent_sweep(small_records, cfg, [4, 2])
    assert [r["latent_dim"] for r in rows] == [2, 4] and set(reports) == {2, 4}
    write_sweep(rows, "categorical", tmp_path)
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "latent_dim,model,wa,ua" and len(lines) == 3
    assert lines[1].startswith("2,AE-LSTM,")
    assert (tmp_path / "sweep.png").exists()


def test_empty_sweep_rejected(small_records):
    with pytest.raises(Exception, match="at least one"):
        latent_sweep(small_records, config_from_dict({}), [])
