import csv
import json

import numpy as np
import pytest

from hgda.cli import CliError, dataset_hash, main, read_manifest
from hgda.graph import load_graph


def spec(n=60, c=3, h=(8, 2), sigma=1.0, d=6, seed=4):
    return {"num_nodes": n, "num_classes": c, "mean_degree": 4,
            "homophily_mix": [[1.0, h[0], h[1]]], "feature_dim": d,
            "feature_noise_sigma": sigma, "seed": seed}


@pytest.fixture
def pair_dir(tmp_path):
    path = tmp_path / "pair.json"
    path.write_text(json.dumps({"source": spec(), "target": spec(n=50, h=(3, 7))}))
    assert main(["gen", str(path), "--out", str(tmp_path / "data"), "--quiet"]) == 0
    return tmp_path / "data"


def train_run(pair_dir, out, *extra):
    return main(["train", "--source", str(pair_dir / "source"), "--target",
                 str(pair_dir / "target"), "--out", str(out), "--epochs", "3", "--quiet",
                 *extra])


def test_gen_single_loads(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps(spec()))
    assert main(["gen", str(tmp_path / "s.json"), "--out", str(tmp_path / "g"), "--quiet"]) == 0
    g = load_graph(tmp_path / "g")
    assert g.num_nodes == 60 and g.is_fully_labeled()
    assert read_manifest(tmp_path / "g")["command"] == "gen"


def test_gen_is_reproducible(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps(spec()))
    for name in ("a", "b"):
        main(["gen", str(tmp_path / "s.json"), "--out", str(tmp_path / name), "--quiet"])
    assert dataset_hash(tmp_path / "a") == dataset_hash(tmp_path / "b")
    main(["gen", str(tmp_path / "s.json"), "--out", str(tmp_path / "c"), "--seed", "9",
          "--quiet"])
    assert dataset_hash(tmp_path / "a") != dataset_hash(tmp_path / "c")


def test_gen_invalid_spec(tmp_path, capsys):
    (tmp_path / "s.json").write_text(json.dumps(spec(n=2, c=5)))
    assert main(["gen", str(tmp_path / "s.json"), "--out", str(tmp_path / "g")]) != 0
    assert "num_nodes >= num_classes" in capsys.readouterr().err


def test_train_outputs(pair_dir, tmp_path):
    run = tmp_path / "run"
    assert train_run(pair_dir, run) == 0
    for name in ("checkpoint.json", "report.json", "metrics.csv", "manifest.json"):
        assert (run / name).is_file()
    report = json.loads((run / "report.json").read_text())
    assert len(report["epochs"]) == 3
    manifest = read_manifest(run)
    assert manifest["config"]["epochs"] == 3
    assert set(manifest["inputs"]) == {"source", "target"}


def test_train_report_byte_identical(pair_dir, tmp_path):
    train_run(pair_dir, tmp_path / "a")
    train_run(pair_dir, tmp_path / "b")
    assert (tmp_path / "a/report.json").read_bytes() == (tmp_path / "b/report.json").read_bytes()


def test_config_file_and_override_precedence(pair_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"channels_enabled": ["L"], "alpha": 0.5, "epochs": 7,
                               "hidden_dims": [8, 4]}))
    assert train_run(pair_dir, tmp_path / "run", "--config", str(cfg), "--alpha", "0.05") == 0
    config = json.loads((tmp_path / "run/report.json").read_text())["config"]
    assert config["channels_enabled"] == ["L"]
    assert config["alpha"] == 0.05 and config["epochs"] == 3
    ckpt = json.loads((tmp_path / "run/checkpoint.json").read_text())
    assert not any(k.startswith(("F.", "H.")) for k in ckpt["tensors"])


def test_train_zero_epochs(pair_dir, tmp_path):
    assert train_run(pair_dir, tmp_path / "run", "--epochs", "0") == 0
    assert json.loads((tmp_path / "run/report.json").read_text())["epochs"] == []
    lines = (tmp_path / "run/metrics.csv").read_text().splitlines()
    assert lines == ["epoch,loss_total,loss_H,loss_S,loss_T,src_acc,tgt_acc"]


def test_train_unlabeled_source(pair_dir, tmp_path, capsys):
    (pair_dir / "source/labels.csv").unlink()
    assert train_run(pair_dir, tmp_path / "run") != 0
    assert "source must be labeled" in capsys.readouterr().err


def test_eval_subgroup(pair_dir, tmp_path, capsys):
    train_run(pair_dir, tmp_path / "run")
    capsys.readouterr()
    assert main(["eval", "--run", str(tmp_path / "run")]) == 0
    out = json.loads(capsys.readouterr().out)
    report = json.loads((tmp_path / "run/report.json").read_text())
    assert out["accuracy"] == report["final_target_accuracy"]
    assert main(["subgroup", "--run", str(tmp_path / "run"), "--bins", "10"]) == 0
    prof = json.loads(capsys.readouterr().out)
    assert sum(prof["target_proportion"]) == pytest.approx(1.0)
    assert main(["subgroup", "--run", str(tmp_path / "run"), "--bins", "5"]) != 0


def test_eval_missing_run(tmp_path):
    assert main(["eval", "--run", str(tmp_path / "nothing"), "--quiet"]) != 0


def test_eval_separable(tmp_path, capsys):
    # tiny noise and no shift: features alone separate the classes
    (tmp_path / "p.json").write_text(json.dumps({"source": spec(sigma=0.01),
                                                 "target": spec(sigma=0.01)}))
    main(["gen", str(tmp_path / "p.json"), "--out", str(tmp_path / "d"), "--quiet"])
    assert main(["train", "--source", str(tmp_path / "d/source"), "--target",
                 str(tmp_path / "d/target"), "--out", str(tmp_path / "run"), "--quiet",
                 "--epochs", "100", "--lr", "0.01"]) == 0
    capsys.readouterr()
    main(["eval", "--run", str(tmp_path / "run")])
    assert json.loads(capsys.readouterr().out)["accuracy"] >= 0.99


def test_diagnose_self(pair_dir, capsys, tmp_path):
    src = str(pair_dir / "source")
    assert main(["diagnose", "--source", src, "--target", src, "--out", str(tmp_path / "o")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert all(0 <= v <= 1e-9 for v in out.values())
    assert json.loads((tmp_path / "o/diagnose.json").read_text()) == out
    assert (tmp_path / "o/manifest.json").is_file()


def test_manifest_detects_changed_input(pair_dir, tmp_path):
    train_run(pair_dir, tmp_path / "run")
    with open(pair_dir / "target/features.csv", "a") as fh:
        fh.write("\n")
    with pytest.raises(CliError, match="changed"):
        read_manifest(tmp_path / "run")


def sweep(pair_dir, tmp_path, alphas, betas, seeds, jobs=1, source=None):
    grid = {"alpha": alphas, "beta": betas, "seeds": seeds,
            "source": str(source or pair_dir / "source"), "target": str(pair_dir / "target"),
            "config": {"hidden_dims": [4], "epochs": 1}}
    (tmp_path / "grid.json").write_text(json.dumps(grid))
    out = tmp_path / "sweep"
    code = main(["sweep", "--grid", str(tmp_path / "grid.json"), "--out", str(out), "--quiet",
                 "--jobs", str(jobs)])
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    agg = list(csv.DictReader(open(out / "aggregate.csv")))
    return code, rows, agg


def test_sweep_single_cell(pair_dir, tmp_path):
    code, rows, agg = sweep(pair_dir, tmp_path, [0.1], [0.1], [0])
    assert code == 0 and len(rows) == 1 and len(agg) == 1
    assert rows[0]["status"] == "ok"


def test_sweep_cardinality_and_means(pair_dir, tmp_path):
    grid = [0.01, 0.05, 0.1, 0.5, 1]
    _, rows, agg = sweep(pair_dir, tmp_path, grid, grid, [0, 1, 2])
    assert len(rows) == 75 and len(agg) == 25
    for cell in agg:
        mine = [float(r["target_accuracy"]) for r in rows
                if (r["alpha"], r["beta"]) == (cell["alpha"], cell["beta"])]
        assert len(mine) == 3
        assert float(cell["mean_target_accuracy"]) == pytest.approx(np.mean(mine), abs=1e-12)


def test_sweep_parallel_matches_serial(pair_dir, tmp_path):
    _, serial, _ = sweep(pair_dir, tmp_path, [0.1, 1], [0.1], [0, 1])
    _, parallel, _ = sweep(pair_dir, tmp_path, [0.1, 1], [0.1], [0, 1], jobs=2)
    assert serial == parallel


def test_sweep_failed_cell_recorded(pair_dir, tmp_path):
    (pair_dir / "source/labels.csv").unlink()
    code, rows, _ = sweep(pair_dir, tmp_path, [0.1], [0.1, 0.5], [0])
    assert code == 0
    assert [r["status"] for r in rows] == ["failed", "failed"]
    assert "source must be labeled" in rows[0]["message"]
