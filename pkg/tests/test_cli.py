import hashlib
import json
import subprocess

import pytest

from tcfa.cli import main, read_config
from tcfa.pipeline import derive_seed

SMALL = "seed = 7\nphantom.size = 120\nphantom.tcfa_fraction = 0.25  # small corpus\n"


@pytest.fixture()
def cfg(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL)
    return p


def test_read_config(cfg):
    assert read_config(cfg) == {"seed": "7", "phantom.size": "120", "phantom.tcfa_fraction": "0.25"}


def test_derive_seed_is_stage_name_hash():
    want = int.from_bytes(hashlib.sha256(b"42/split").digest()[:8], "little")
    assert derive_seed(42, "split") == want
    assert derive_seed(42, "split") != derive_seed(42, "model")


def test_stages_chain(tmp_path, cfg, capsys):
    d = tmp_path
    assert main(["generate", "--config", str(cfg), "--out", str(d / "corpus")]) == 0
    assert (d / "corpus" / "manifest.csv").read_text().splitlines()[0] == "id,label,seed,index"
    assert (d / "corpus" / "ph00000_img.pgm").exists() and (d / "corpus" / "ph00000_mask.pgm").exists()
    assert main(["segment", "--corpus", str(d / "corpus"), "--out", str(d / "roi")]) == 0
    assert (d / "roi" / "ph00000_roi.pgm").exists()
    assert main(["extract", "--corpus", str(d / "corpus"), "--roi", str(d / "roi"), "--out", str(d / "f.csv")]) == 0
    assert main(["select", "--features", str(d / "f.csv"), "--out", str(d / "rank.csv")]) == 0
    assert main(["train", "--config", str(cfg), "--features", str(d / "f.csv"), "--classifier", "knn",
                 "--n-features", "10", "--out", str(d / "model")]) == 0
    for name in ("model.npz", "normalizer.csv", "split.csv", "ranking.csv", "train.json"):
        assert (d / "model" / name).exists()
    assert main(["eval", "--model-dir", str(d / "model"), "--features", str(d / "f.csv"), "--out", str(d / "ev")]) == 0
    rep = json.loads((d / "ev" / "report.json").read_text())
    assert {"auc", "specificity_pct", "sensitivity_pct", "confusion", "guideline", "threshold"} <= rep.keys()
    assert main(["sweep", "--config", str(cfg), "--features", str(d / "f.csv"), "--classifier", "rf",
                 "--sweep-n", "1-3", "--out", str(d / "sw")]) == 0
    for e in (10, 50, 100):
        lines = (d / "sw" / f"sweep_e{e}.csv").read_text().splitlines()
        assert lines[0] == "n,auc" and len(lines) == 4


def test_run_all_is_complete_and_reproducible(tmp_path, cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run-all", "--config", str(cfg), "--classifier", "knn", "--sweep", "--sweep-n", "1-5",
                 "--out", str(a)]) == 0
    assert main(["run-all", "--config", str(cfg), "--classifier", "knn", "--sweep", "--sweep-n", "1-5",
                 "--out", str(b), "--threads", "8"]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    rep = json.loads((a / "report.json").read_text())
    for name in rep["artifacts"]:
        assert (a / name).exists(), name
    log = json.loads((a / "run_log.json").read_text())
    assert log["config"]["seed"] == 7 and log["backend"] in ("cython", "python")
    for stage in ("generate", "split", "model", "sweep", "augment", "validation"):
        assert log["seeds"][stage] == derive_seed(7, stage)
    assert sorted(map(int, log["seeds"]["sweep_jobs"])) == [1, 2, 3, 4, 5]
    assert not any(p.name.startswith(".") for p in tmp_path.iterdir())


def test_completed_run_is_never_overwritten(tmp_path, cfg, capsys):
    out = tmp_path / "r"
    assert main(["run-all", "--config", str(cfg), "--classifier", "knn", "--out", str(out)]) == 0
    before = (out / "report.json").read_bytes()
    assert main(["run-all", "--config", str(cfg), "--classifier", "rf", "--out", str(out)]) == 2
    assert "[setup]" in capsys.readouterr().err
    assert (out / "report.json").read_bytes() == before


def test_stage_failure_is_tagged(tmp_path, capsys):
    code = main(["run-all", "--seed", "1", "--corpus", str(tmp_path / "missing"), "--out", str(tmp_path / "r")])
    assert code == 2 and "[generate]" in capsys.readouterr().err
    assert not (tmp_path / "r" / "report.json").exists()


def test_bad_config_key(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("seed = 1\nbogus = 3\n")
    assert main(["run-all", "--config", str(p), "--out", str(tmp_path / "r")]) == 2
    assert "bogus" in capsys.readouterr().err


def test_seed_is_required(tmp_path, capsys):
    assert main(["run-all", "--out", str(tmp_path / "r")]) == 2
    assert "seed" in capsys.readouterr().err


def test_console_script(tmp_path):
    out = subprocess.run(["tcfa", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("generate", "segment", "extract", "select", "train", "eval", "sweep", "run-all"):
        assert cmd in out.stdout
