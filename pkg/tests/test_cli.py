import json

import numpy as np
import pytest

from snl import cli, linalg


def test_verify_filter_no_match_is_usage_error(capsys):
    assert cli.run(["verify", "--filter", "no-such-group"]) == 2


def test_verify_single_group(tmp_path, capsys):
    code = cli.run(["verify", "--filter", "matmul", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "matmul-associativity" in out and "pass" in out
    assert (tmp_path / "verify.csv").read_text().startswith("name,passed,detail")


def test_gradcheck_single_variant(tmp_path, capsys):
    code = cli.run(["gradcheck", "--variant", "NL", "--out", str(tmp_path)])
    assert code == 0
    assert "NL" in capsys.readouterr().out
    assert (tmp_path / "gradcheck.csv").exists()


def test_gradcheck_unknown_variant():
    assert cli.run(["gradcheck", "--variant", "NOPE"]) == 2


def test_train_writes_metrics(tmp_path, capsys):
    cfg = {
        "block": {"variant": "SNL", "c_in": 4, "c_s": 2},
        "dataset": {"n_samples": 32},
        "steps": 20,
        "eval_every": 10,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "run"
    assert cli.run(["train", "--config", str(cfg_path), "--seed", "0", "--out", str(out)]) == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == "step,loss,accuracy"
    assert len(lines) == 3  # steps 10 and 20


def test_train_unknown_config_key(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"steps": 5, "bogus": 1}))
    assert cli.run(["train", "--config", str(cfg_path), "--out", str(tmp_path)]) == 2


def test_train_unknown_dataset_key(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"dataset": {"shape": "weird"}}))
    assert cli.run(["train", "--config", str(cfg_path), "--out", str(tmp_path)]) == 2


def test_train_missing_config():
    assert cli.run(["train", "--config", "/no/such/file.json", "--out", "/tmp/x"]) == 2


def test_export_attention(tmp_path):
    rng = np.random.default_rng(0)
    feat = tmp_path / "feat.csv"
    linalg.save_csv(rng.normal(0.0, 0.3, size=(64, 4)), feat)
    block = tmp_path / "block.json"
    block.write_text(json.dumps({"variant": "SNL", "c_in": 4, "c_s": 2}))
    out = tmp_path / "att"
    code = cli.run([
        "export-attention", "--input", str(feat), "--block", str(block),
        "--positions", "0,63", "--out", str(out),
    ])
    assert code == 0
    for pos in (0, 63):
        raw = (out / f"attention_{pos:04d}.pgm").read_bytes()
        assert raw.startswith(b"P5\n8 8\n255\n")
        assert len(raw) == len(b"P5\n8 8\n255\n") + 64


def test_export_attention_bad_position(tmp_path):
    rng = np.random.default_rng(1)
    feat = tmp_path / "feat.csv"
    linalg.save_csv(rng.normal(0.0, 0.3, size=(64, 4)), feat)
    block = tmp_path / "block.json"
    block.write_text(json.dumps({"variant": "SNL", "c_in": 4, "c_s": 2}))
    code = cli.run([
        "export-attention", "--input", str(feat), "--block", str(block),
        "--positions", "999", "--out", str(tmp_path / "att"),
    ])
    assert code == 2


def test_export_attention_nonsquare_needs_height(tmp_path):
    rng = np.random.default_rng(2)
    feat = tmp_path / "feat.csv"
    linalg.save_csv(rng.normal(0.0, 0.3, size=(12, 4)), feat)
    block = tmp_path / "block.json"
    block.write_text(json.dumps({"variant": "SNL", "c_in": 4, "c_s": 2}))
    args = ["export-attention", "--input", str(feat), "--block", str(block),
            "--positions", "0", "--out", str(tmp_path / "att")]
    assert cli.run(args) == 2
    assert cli.run(args + ["--height", "3"]) == 0


def test_bench_writes_csv(tmp_path, capsys):
    code = cli.run(["bench", "--sizes", "16,36", "--orders", "2,4", "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "bench.csv").read_text().splitlines()
    assert lines[0] == "variant,n,order,seconds"
    assert "K-scaling" in capsys.readouterr().out


def test_usage_error_exit_code():
    assert cli.run(["not-a-command"]) == 2
