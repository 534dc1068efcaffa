import csv
import math

import pytest

import metarec

SMALL = {
    "synthetic.num_sources": "2",
    "synthetic.items": "15",
    "synthetic.source_users": "40",
    "synthetic.target_users": "30",
    "synthetic.min_len": "5",
    "synthetic.max_len": "8",
    "data.k_core": "2",
    "encoder.d_model": "8",
    "encoder.max_len": "6",
    "vq.heads": "2",
    "meta.n_tasks": "2",
    "meta.inner_batch": "4",
    "meta.meta_batch": "4",
    "joint.batch": "24",
    "train.iterations": "6",
    "train.eval_every": "2",
}


def test_config_round_trip():
    text = metarec.make_config(overrides={"meta.temperature": "0.25"})
    assert "meta.temperature=0.25\n" in text
    assert metarec.make_config(text) == text
    assert metarec.make_config(metarec.default_config()) == metarec.default_config()
    with pytest.raises(ValueError, match="no.such"):
        metarec.make_config(overrides={"no.such": "1"})


def test_metrics():
    assert metarec.rank_of_truth([0.1, 0.9, 0.3], 2) == 2
    assert metarec.rank_of_truth([1.0, 1.0, 1.0, 1.0], 3) == 4
    ndcg, recall, rr = metarec.metrics_from_rank(3, 10)
    assert (ndcg, recall) == (0.5, 1.0)
    assert rr == pytest.approx(1 / 3)
    assert metarec.metrics_from_rank(11, 10) == (0.0, 0.0, 1 / 11)
    with pytest.raises(IndexError):
        metarec.rank_of_truth([0.0], 1)


def test_weights():
    w = metarec.task_weights([1.0, -1.0], 0.5)
    assert math.isclose(sum(w), 1.0, abs_tol=1e-12)
    assert w[0] == pytest.approx(math.exp(4) / (math.exp(4) + 1))
    assert metarec.task_weights([0.3, 0.9, -0.2], 1.0, False) == [1 / 3] * 3


def test_data_ops():
    assert metarec.k_core([("u1", ["i1"]), ("u2", ["i1"])], 2) == []
    full = [(u, ["a", "b", "c"]) for u in ("x", "y", "z")]
    assert metarec.k_core(full, 3) == full
    rows, dropped = metarec.leave_one_out([("u", ["a", "b", "c", "d"]), ("v", ["a", "b"])])
    assert rows == [("u", ["a", "b"], "c", "d")]
    assert dropped == 1


def test_generate_train_eval_ablate(tmp_path):
    manifest = metarec.generate(tmp_path / "gen", overrides=SMALL)
    assert manifest.name == "manifest.tsv"
    assert len(list((tmp_path / "gen").glob("*.tsv"))) == 4

    summary = metarec.train(tmp_path / "run", overrides=SMALL)
    assert summary["metric_rows"] == 9
    assert 0.0 <= summary["test"]["ndcg"] <= 1.0
    with open(tmp_path / "run" / "metrics.csv") as f:
        assert len(list(csv.reader(f))) == 10

    val = metarec.evaluate(tmp_path / "run" / "best.ckpt", split="val")
    assert val["ndcg"] == summary["validation"]["ndcg"]
    test = metarec.evaluate(tmp_path / "run" / "best.ckpt", k=15, out_dir=tmp_path / "ev")
    assert test["k"] == 15 and test["recall"] == 1.0
    assert (tmp_path / "ev" / "test_ranks.csv").exists()

    (tmp_path / "bad.ckpt").write_bytes(b"nope")
    with pytest.raises(metarec.CheckpointError):
        metarec.evaluate(tmp_path / "bad.ckpt")

    table = metarec.ablate(tmp_path / "abl", overrides=SMALL)
    assert list(table) == metarec.variants()
    assert table["full"] == summary["test"]
