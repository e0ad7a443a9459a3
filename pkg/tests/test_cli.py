import csv
import json

import numpy as np
import pytest

from frekoo.cli import main

TINY = """\
defaults:
  epochs: 4
  m: 4
  hidden: [6]
  coder_widths: [16]
  warm_start_steps: 30
  finetune_steps: 10
  baseline_steps: 30
  seeds: [0, 1]
datasets:
  toy:
    source: {generator: rotated_moons, n_domains: 5, n_per_domain: 40}
    tau: 0.9
    alpha: 10.0
    beta: 1.0
    gamma: 1.0
    lr_pre: 1.0e-2
    lr_co: 1.0e-3
    lr_ko: 1.0e-3
  hot:
    source: {generator: rotated_moons, n_domains: 5, n_per_domain: 40}
    tau: 0.9
    alpha: 1.0e+12
    beta: 1.0
    gamma: 1.0
    lr_pre: 1.0e-2
    lr_co: 1.0e-3
    lr_ko: 1.0e-3
  broken:
    source: {generator: rotated_moons}
    tau: 0.9
    alpha: 10.0
    beta: 1.0
    gamma: 1.0
    lr_pre: 1.0e-2
    lr_co: 1.0e-3
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY)
    return str(path)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_generate_writes_every_domain_reproducibly(tmp_path):
    assert main(["generate", "--dataset", "2-moons", "--out", str(tmp_path / "a")]) == 0
    assert main(["generate", "--dataset", "2-moons", "--out", str(tmp_path / "b")]) == 0
    files = sorted((tmp_path / "a").glob("*.csv"))
    assert len(files) == 10
    assert sum(len(rows(f)) for f in files) == 1800
    for f in files:
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_generate_periodic_has_37_domains(tmp_path):
    assert main(["generate", "--dataset", "p-moons", "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.csv"))) == 37


def test_unknown_dataset_and_bad_flags(tmp_path, capsys):
    assert main(["generate", "--dataset", "nope", "--out", str(tmp_path)]) == 1
    assert "unknown dataset" in capsys.readouterr().err
    assert main(["train", "--variant", "bogus"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["generate", "--dataset", "onp", "--out", str(tmp_path)]) == 1


def test_train_writes_artifacts(tiny, tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", tiny, "--dataset", "toy", "--seed", "0", "--out", str(out)]) == 0
    log = rows(out / "train_log.csv")
    assert [r["epoch"] for r in log] == ["1", "2", "3", "4"]
    assert all(np.isfinite(float(r["total"])) for r in log)
    assert (out / "checkpoint.npz").exists()
    assert len(rows(out / "trajectory.csv")) > 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train" and manifest["seeds"] == [0]


def test_train_multiple_seeds_uses_subdirectories(tiny, tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", tiny, "--dataset", "toy", "--seeds", "0", "1",
                 "--out", str(out)]) == 0
    assert (out / "seed_0" / "checkpoint.npz").exists()
    assert (out / "seed_1" / "train_log.csv").exists()


def test_zero_epochs_is_valid(tiny, tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", tiny, "--dataset", "toy", "--seed", "0", "--epochs", "0",
                 "--out", str(out)]) == 0
    assert rows(out / "train_log.csv") == []
    assert (out / "checkpoint.npz").exists()


def test_missing_config_key_is_named(tiny, tmp_path, capsys):
    assert main(["train", "--config", tiny, "--dataset", "broken", "--out", str(tmp_path)]) == 1
    assert "lr_ko" in capsys.readouterr().err


def test_invalid_override_rejected(tiny, tmp_path):
    assert main(["train", "--config", tiny, "--dataset", "toy", "--tau", "1.5",
                 "--out", str(tmp_path)]) == 1


def test_divergence_exits_two(tiny, tmp_path, capsys):
    assert main(["train", "--config", tiny, "--dataset", "hot", "--seed", "0",
                 "--out", str(tmp_path)]) == 2
    assert "diverged" in capsys.readouterr().err


def test_eval_checkpoint_roundtrip(tiny, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--config", tiny, "--dataset", "toy", "--seed", "1", "--out", str(run)]) == 0
    out = tmp_path / "eval"
    assert main(["eval", "--config", tiny, "--dataset", "toy", "--checkpoint",
                 str(run / "checkpoint.npz"), "--out", str(out)]) == 0
    res = rows(out / "results.csv")
    assert len(res) == 1 and res[0]["seed"] == "1"
    assert 0 <= float(res[0]["value"]) <= 100


def test_eval_missing_checkpoint(tiny, tmp_path):
    assert main(["eval", "--config", tiny, "--dataset", "toy", "--checkpoint",
                 str(tmp_path / "absent.npz"), "--out", str(tmp_path)]) == 1


def test_eval_compares_methods(tiny, tmp_path):
    assert main(["eval", "--config", tiny, "--dataset", "toy", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    methods = {s["method"] for s in summary}
    assert methods == {"frekoo", "offline", "last_domain", "inc_finetune"}
    assert len(rows(tmp_path / "results.csv")) == 8


def test_ablate_and_sweep(tiny, tmp_path):
    assert main(["ablate", "--config", tiny, "--dataset", "toy", "--seed", "0",
                 "--variant", "full", "no_koop", "--out", str(tmp_path)]) == 0
    assert len(rows(tmp_path / "ablation.csv")) == 2
    assert main(["sweep", "--config", tiny, "--dataset", "toy", "--seed", "0",
                 "--param", "alpha", "--out", str(tmp_path)]) == 0
    sweep = rows(tmp_path / "sweep_alpha.csv")
    assert [float(r["value"]) for r in sweep] == [0.01, 0.1, 1.0, 10.0, 100.0]


def test_theory_reports(tmp_path):
    report = tmp_path / "theory.json"
    assert main(["theory", "--cases", "40", "--sequences", "5", "--out", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["stability"]["violations"] == 0 and len(data["gap"]) == 5
