"""End-to-end CLI pipeline, exit codes, and reproducibility of artifacts."""

import json
import os
from pathlib import Path

import numpy as np
import pytest

from mimlm.cli import main
from mimlm.checkpoint import load_checkpoint

from conftest import grammar_lines


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    lines = grammar_lines(24, seed=5)
    (d / "train.txt").write_text("\n".join(lines[:16]) + "\n")
    (d / "valid.txt").write_text("\n".join(lines[16:20]) + "\n")
    (d / "test.txt").write_text("\n".join(lines[20:]) + "\n")
    return d


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "train.json"
    path.write_text(json.dumps({
        "objective": "mim", "latent_dim": 3, "embed_dim": 6, "hidden_dim": 8,
        "batch_size": 8, "max_epochs": 3, "seed": 9, "dropout": 0.0,
        "max_len": 16,
    }))
    return path


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, data_dir, config_file):
    out = tmp_path_factory.mktemp("run")
    ckpt = out / "model.ckpt"
    code = main(["train", "--config", str(config_file), "--data", str(data_dir),
                 "--out", str(ckpt)])
    assert code == 0
    return out


class TestVocabCommand:
    def test_builds_and_writes_manifest(self, data_dir, tmp_path):
        out = tmp_path / "vocab.json"
        assert main(["vocab", "--data", str(data_dir), "--out", str(out)]) == 0
        tokens = json.loads(out.read_text())
        assert tokens[:4] == ["<BOT>", "<EOT>", "<UNK>", "<PAD>"]
        manifest = json.loads((tmp_path / "vocab.json.manifest.json").read_text())
        assert manifest["command"] == "vocab"
        assert manifest["input_digests"]

    def test_missing_data_dir_exits_3(self, tmp_path):
        assert main(["vocab", "--data", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "v.json")]) == 3


class TestTrainCommand:
    def test_pipeline_with_prebuilt_vocab(self, data_dir, config_file, tmp_path):
        vocab_path = tmp_path / "v.json"
        assert main(["vocab", "--data", str(data_dir), "--out", str(vocab_path)]) == 0
        ckpt_path = tmp_path / "m.ckpt"
        assert main(["train", "--config", str(config_file), "--data", str(data_dir),
                     "--vocab", str(vocab_path), "--out", str(ckpt_path)]) == 0
        ckpt = load_checkpoint(ckpt_path)
        assert ckpt.epoch == 3
        csv = (tmp_path / "m.ckpt.epochs.csv").read_text()
        assert csv.splitlines()[0] == "epoch,train_loss,valid_loss,lr,beta"
        assert len(csv.strip().splitlines()) == 4

    def test_rerun_is_byte_identical(self, data_dir, config_file, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        for out in (a, b):
            assert main(["train", "--config", str(config_file), "--data",
                         str(data_dir), "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.ckpt.epochs.csv").read_text() == \
            (tmp_path / "b.ckpt.epochs.csv").read_text()

    def test_set_override_and_env_seed(self, data_dir, config_file, tmp_path,
                                       monkeypatch):
        out = tmp_path / "s.ckpt"
        monkeypatch.setenv("MIMLM_SEED", "123")
        assert main(["train", "--config", str(config_file), "--data", str(data_dir),
                     "--out", str(out), "--set", "max_epochs=1"]) == 0
        ckpt = load_checkpoint(out)
        assert ckpt.config.seed == 123  # env var beats the config file
        assert ckpt.config.max_epochs == 1

    def test_invalid_config_exits_4(self, data_dir, config_file, tmp_path, capsys):
        code = main(["train", "--config", str(config_file), "--data", str(data_dir),
                     "--out", str(tmp_path / "x.ckpt"), "--set", "latent_dim=0"])
        assert code == 4
        assert "latent_dim" in capsys.readouterr().err

    def test_resume_from_checkpoint(self, data_dir, config_file, trained_dir,
                                    tmp_path):
        out = tmp_path / "resumed.ckpt"
        code = main(["train", "--config", str(config_file), "--data", str(data_dir),
                     "--out", str(out), "--resume", str(trained_dir / "model.ckpt"),
                     "--set", "max_epochs=5"])
        assert code == 0
        assert load_checkpoint(out).epoch == 5


class TestUsageErrors:
    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "mimlm" in capsys.readouterr().out

    def test_unknown_flag_exits_2(self, capsys):
        assert main(["train", "--bogus"]) == 2

    def test_unknown_command_exits_2(self, capsys):
        assert main(["frobnicate"]) == 2


class TestEvalCommand:
    def test_writes_report_and_histograms(self, data_dir, trained_dir, tmp_path):
        report = tmp_path / "report.json"
        hist = tmp_path / "hist.csv"
        table = tmp_path / "table.csv"
        code = main(["eval", "--ckpt", str(trained_dir / "model.ckpt"),
                     "--data", str(data_dir), "--out", str(report),
                     "--split", "test", "--repeats", "2",
                     "--knn-k", "1", "--hist-out", str(hist),
                     "--table-out", str(table)])
        assert code == 0
        payload = json.loads(report.read_text())
        assert payload["label"] == "mim(3)"
        assert payload["n_sentences"] == 4
        assert 0.0 <= payload["bleu1"] <= 1.0
        lines = hist.read_text().strip().splitlines()
        assert lines[0] == "kind,value"
        kinds = {l.split(",")[0] for l in lines[1:]}
        assert kinds == {"p_same", "p_cross", "q_same", "q_cross"}
        assert len(lines) - 1 == 2 * (4 + 4 * 3)
        table_lines = table.read_text().strip().splitlines()
        assert table_lines[0].startswith("model,latent_dim,enc_recon")

    def test_eval_rerun_identical(self, data_dir, trained_dir, tmp_path):
        r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
        for out in (r1, r2):
            assert main(["eval", "--ckpt", str(trained_dir / "model.ckpt"),
                         "--data", str(data_dir), "--out", str(out),
                         "--repeats", "1", "--knn-k", "1"]) == 0
        assert r1.read_bytes() == r2.read_bytes()

    def test_missing_checkpoint_exits_3(self, data_dir, tmp_path):
        assert main(["eval", "--ckpt", str(tmp_path / "none.ckpt"),
                     "--data", str(data_dir), "--out", str(tmp_path / "r.json")]) == 3


class TestProbeCommands:
    def test_interp(self, trained_dir, tmp_path, capsys):
        out = tmp_path / "trace.json"
        code = main(["interp", "--ckpt", str(trained_dir / "model.ckpt"),
                     "--a", "anna quickly paints red boxes",
                     "--b", "ben rarely sells blue lamps",
                     "--steps", "4", "--out", str(out)])
        assert code == 0
        trace = json.loads(out.read_text())
        assert [s["alpha"] for s in trace["steps"]] == [0.0, 1/3, 2/3, 1.0]
        assert len(capsys.readouterr().out.strip().splitlines()) == 4

    def test_sample(self, trained_dir, capsys):
        code = main(["sample", "--ckpt", str(trained_dir / "model.ckpt"),
                     "--n", "3", "--sigma", "0.1"])
        assert code == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 3

    def test_recon(self, trained_dir, capsys):
        code = main(["recon", "--ckpt", str(trained_dir / "model.ckpt"),
                     "--text", "anna quickly paints red boxes"])
        assert code == 0
        out = capsys.readouterr().out
        for mode in ("mean", "sample", "perturbed"):
            assert mode in out


@pytest.fixture(scope="module")
def qa_ckpt(tmp_path_factory, data_dir):
    # QA needs "?" in the vocabulary
    d = tmp_path_factory.mktemp("qa_corpus")
    lines = [f"{line} ?" for line in grammar_lines(12, seed=8)]
    (d / "train.txt").write_text("\n".join(lines) + "\n")
    out = tmp_path_factory.mktemp("qa_run") / "qa.ckpt"
    cfg = tmp_path_factory.mktemp("qa_cfg") / "c.json"
    cfg.write_text(json.dumps({
        "objective": "mim", "latent_dim": 3, "embed_dim": 6, "hidden_dim": 8,
        "batch_size": 6, "max_epochs": 2, "seed": 4, "dropout": 0.0,
        "unk_corrupt_rate": 0.2, "max_len": 16,
    }))
    assert main(["train", "--config", str(cfg), "--data", str(d),
                 "--out", str(out)]) == 0
    return out


class TestQaCommands:
    def test_rank(self, qa_ckpt, tmp_path, capsys):
        items = tmp_path / "items.jsonl"
        items.write_text("\n".join(json.dumps({
            "question": "anna quickly paints",
            "answers": ["red boxes", "blue lamps", "green doors"],
        }) for _ in range(2)))
        out = tmp_path / "result.json"
        code = main(["qa", "rank", "--ckpt", str(qa_ckpt), "--items", str(items),
                     "--out", str(out)])
        assert code == 0
        result = json.loads(out.read_text())
        assert result["n_items"] == 2
        assert 0.0 <= result["p_at_1"] <= result["mrr"] <= 1.0
        assert len(result["rankings"][0]) == 3

    def test_answer(self, qa_ckpt, capsys):
        code = main(["qa", "answer", "--ckpt", str(qa_ckpt),
                     "--question", "anna quickly paints", "--len", "5"])
        assert code == 0

    def test_missing_qmark_vocab_exits_4(self, trained_dir, tmp_path, capsys):
        items = tmp_path / "i.jsonl"
        items.write_text(json.dumps({"question": "x", "answers": ["a", "b"]}))
        code = main(["qa", "rank", "--ckpt", str(trained_dir / "model.ckpt"),
                     "--items", str(items), "--out", str(tmp_path / "r.json")])
        assert code == 4
        assert "?" in capsys.readouterr().err
