"""CLI surface: every subcommand exercised end to end on tiny configs."""

import json

import pytest

from trimodal.cli import main

TINY = {
    "steps": 2,
    "warmup_steps": 1,
    "log_every": 1,
    "contrastive_batch": 2,
    "chunk_size": 2,
    "model": {
        "encoder": {"h_lang": 16, "h_vision": 16, "h_speech": 16, "h_fusion": 32,
                    "depth": 1, "heads": 2, "patch_width": 8,
                    "speech_widths": [8, 16, 16, 16]},
        "fusion": {"mode": "merge", "layers": 1, "hidden": 32, "heads": 2},
        "vision_codebook_size": 32,
        "speech_codebook_size": 24,
        "vision_code_dim": 8,
    },
    "stream": {"proportions": {"VL": 1.0}, "batch_size": 2},
}


@pytest.fixture
def tiny_run(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(TINY))
    out = tmp_path / "run"
    main(["pretrain", "--config", str(cfg_path), "--out", str(out)])
    return cfg_path, out


def test_pretrain_writes_outputs(tiny_run, capsys):
    _, out = tiny_run
    assert (out / "checkpoint.bin").exists()
    assert (out / "metrics.jsonl").exists()


def test_pretrain_rejects_unknown_config_key(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"stepz": 3}))
    with pytest.raises(ValueError, match="unknown config keys"):
        main(["pretrain", "--config", str(bad), "--out", str(tmp_path / "o")])


def test_eval_retrieval_command(tiny_run, capsys):
    _, out = tiny_run
    main(["eval-retrieval", "--ckpt", str(out / "checkpoint.bin"),
          "--kind", "VL", "--n", "8"])
    result = json.loads(capsys.readouterr().out)
    assert set(result) >= {"recall@1", "recall@5"}


def test_finetune_command(tiny_run, capsys, monkeypatch):
    from trimodal import cli, trainer
    _, out = tiny_run
    # shrink the budget: the CLI default (192/128/300) is too slow for CI
    monkeypatch.setattr(
        cli, "finetune",
        lambda model, task, modalities="VLS": trainer.finetune(
            model, task, modalities, train_n=8, test_n=4, steps=5))
    main(["finetune", "--ckpt", str(out / "checkpoint.bin"),
          "--task", "class16", "--modalities", "VL"])
    result = json.loads(capsys.readouterr().out)
    assert result["task"] == "class16"


def test_grad_check_command(capsys):
    main(["grad-check", "--module", "tensor", "--seeds", "1"])
    out = capsys.readouterr().out
    assert "ok" in out and "FAIL" not in out


def test_param_count_command(tmp_path, capsys):
    cfg_path = tmp_path / "model.json"
    cfg_path.write_text(json.dumps(TINY["model"]))
    main(["param-count", "--config", str(cfg_path)])
    counts = json.loads(capsys.readouterr().out)
    assert counts["total"] == counts["encoders"] + counts["fusion"]
    assert counts["mode"] == "merge"


def test_unknown_subcommand_exits():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
