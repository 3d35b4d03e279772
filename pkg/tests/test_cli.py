import json

import numpy as np
import pytest

from lesa import cli
from lesa.checkpoint import load_checkpoint
from lesa.model import closed_form_param_count
from lesa.synthetic import KEYWORDS, LABEL_NAMES, make_dataset
from lesa.text import save_jsonl, tokenize

TINY_MODEL = dict(n_layers=2, d_model=8, d_head=4, n_heads=2, d_ff=16, max_len=12, dropout=0.0)


@pytest.fixture
def data_files(tmp_path):
    ds = make_dataset(n_messages=90, vocab_size=40, seed=1, noise_range=(3, 8))
    train = tmp_path / "data.jsonl"
    save_jsonl(ds, train)
    kw = tmp_path / "keywords.json"
    kw.write_text(json.dumps(KEYWORDS))
    return train, kw


def run_config(data_files, tmp_path, **over):
    train, kw = data_files
    cfg = {
        "model": dict(TINY_MODEL, mode="lesa"),
        "data": {"train_path": str(train), "test_frac": 0.2, "keywords_path": str(kw),
                 "label_names": LABEL_NAMES},
        "train": {"lr": 3e-3, "epochs": 2, "batch_size": 8},
        "distill": {"n_student_layers": 1, "epochs": 1, "lr": 1e-3},
        "output_dir": str(tmp_path / "out"),
        "seeds": [1],
    }
    for k, v in over.items():
        cfg[k] = v
    return cfg


@pytest.fixture
def trained(data_files, tmp_path):
    cfg = run_config(data_files, tmp_path)
    report = cli.cmd_train(cfg, quiet=True)
    return cfg, report, report["runs"][0]["checkpoint"]


def test_train_writes_checkpoint_and_report(trained, tmp_path):
    cfg, report, ckpt = trained
    assert (tmp_path / "out" / "train_report.json").exists()
    assert load_checkpoint(ckpt).config.n_layers == 2
    assert set(report["aggregate"]) >= {"macro_f1", "macro_precision", "macro_recall"}
    assert report["n_train"] + report["n_test"] == 90


def test_train_multi_seed_reports_mean_and_stderr(data_files, tmp_path):
    cfg = run_config(data_files, tmp_path, seeds=[1, 2, 3, 4, 5], train={"epochs": 1})
    report = cli.cmd_train(cfg, quiet=True)
    f1 = [r["metrics"]["macro_f1"] for r in report["runs"]]
    agg = report["aggregate"]["macro_f1"]
    assert agg["mean"] == pytest.approx(np.mean(f1))
    assert agg["stderr"] == pytest.approx(np.std(f1, ddof=1) / np.sqrt(5))
    assert len(report["runs"]) == 5


def test_missing_train_path_named(data_files, tmp_path):
    cfg = run_config(data_files, tmp_path)
    del cfg["data"]["train_path"]
    with pytest.raises(cli.ConfigError, match="train_path"):
        cli.cmd_train(cfg, quiet=True)


@pytest.mark.parametrize("section,key,value", [
    ("model", "d_model", 10),
    ("train", "momentum", 0.9),
    ("distill", "temperature", -1),
])
def test_invalid_config_names_section(data_files, tmp_path, section, key, value):
    cfg = run_config(data_files, tmp_path)
    cfg[section][key] = value
    with pytest.raises(cli.ConfigError, match=section):
        cli.validate_config(cfg)


def test_config_echo_reproduces_run(trained, tmp_path):
    cfg, report, _ = trained
    again = cli.cmd_train(report["config"], output=tmp_path / "again", quiet=True)
    assert again["runs"][0]["metrics"] == report["runs"][0]["metrics"]


def test_distill_full_copy_initial_f1_equals_teacher(trained, tmp_path):
    cfg, _, ckpt = trained
    cfg = dict(cfg, distill={"n_student_layers": 2, "epochs": 1})
    report = cli.cmd_distill(cfg, ckpt, output=tmp_path / "d", quiet=True)
    assert report["runs"][0]["initial_metrics"]["macro_f1"] == report["teacher_metrics"]["macro_f1"]
    assert report["param_ratio"] == 1.0


def test_distill_ratio_matches_closed_form(data_files, tmp_path):
    cfg = run_config(data_files, tmp_path, model=dict(TINY_MODEL, n_layers=4, mode="lesa"),
                     train={"epochs": 1})
    ckpt = cli.cmd_train(cfg, quiet=True)["runs"][0]["checkpoint"]
    cfg["distill"] = {"n_student_layers": 2, "epochs": 1}
    report = cli.cmd_distill(cfg, ckpt, output=tmp_path / "d", quiet=True)
    teacher = load_checkpoint(ckpt)
    V = len(teacher.vocab)
    student_cfg = load_checkpoint(report["runs"][0]["checkpoint"]).config
    expected = closed_form_param_count(student_cfg, V) / closed_form_param_count(teacher.config, V)
    assert report["param_ratio"] == expected
    assert report["student_params"] < report["teacher_params"]


def test_distill_too_deep_student(trained, tmp_path):
    cfg, _, ckpt = trained
    cfg = dict(cfg, distill={"n_student_layers": 3})
    with pytest.raises(ValueError):
        cli.cmd_distill(cfg, ckpt, output=tmp_path / "d", quiet=True)


def test_eval_report_schema(trained, data_files, tmp_path):
    _, _, ckpt = trained
    report = cli.cmd_eval(ckpt, data_files[0], output=tmp_path / "e", quiet=True)
    for key in ("macro_f1", "macro_precision", "macro_recall", "per_class", "accuracy", "confusion"):
        assert key in report
    assert (tmp_path / "e" / "eval_report.json").exists()
    assert sum(map(sum, report["confusion"])) == 90


def test_eval_after_memorisation(data_files, tmp_path):
    train, kw = data_files
    tiny = tmp_path / "tiny.jsonl"
    tiny.write_text("\n".join(json.dumps(r) for r in [
        {"text": "w001 chest pain", "label": "urgent"},
        {"text": "w002 headache w003", "label": "medium"},
        {"text": "w004 w005", "label": "non-urgent"},
    ]) + "\n")
    cfg = run_config(data_files, tmp_path, train={"lr": 1e-2, "epochs": 60, "batch_size": 3})
    cfg["data"] = {"train_path": str(tiny), "test_path": str(tiny), "label_names": LABEL_NAMES}
    ckpt = cli.cmd_train(cfg, quiet=True)["runs"][0]["checkpoint"]
    assert cli.cmd_eval(ckpt, tiny, quiet=True)["macro_f1"] == 1.0


def test_eval_unknown_label(trained, tmp_path):
    _, _, ckpt = trained
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps({"text": "x", "label": "critical"}) + "\n")
    with pytest.raises(ValueError, match="non-urgent"):
        cli.cmd_eval(ckpt, p, quiet=True)


def test_eval_empty_file(trained, tmp_path):
    _, _, ckpt = trained
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    with pytest.raises(ValueError, match="no examples"):
        cli.cmd_eval(ckpt, p, quiet=True)


@pytest.mark.parametrize("text", ["chest pain since this morning", ""])
def test_predict_probabilities(trained, text):
    _, _, ckpt = trained
    out = cli.cmd_predict(ckpt, text, quiet=True)
    probs = list(out["probabilities"].values())
    assert len(probs) == 3
    assert abs(sum(probs) - 1) < 1e-6
    assert out["label"] in LABEL_NAMES
    assert cli.cmd_predict(ckpt, text, quiet=True) == out


def test_export_attention_alignment(trained, tmp_path):
    _, _, ckpt = trained
    text = "w001 chest pain w002"
    out = cli.cmd_export_attention(ckpt, text, output=tmp_path / "a", quiet=True)
    assert out["tokens"] == tokenize(text)
    assert len(out["attention"]) == len(out["tokens"]) == len(out["max_source"])
    assert sum(out["attention"]) <= 1 + 1e-6
    assert sum(out["attention"]) + out["cls_self_attention"] == pytest.approx(1.0, abs=1e-5)
    assert set(out["max_source"]) <= {"cls", *LABEL_NAMES}
    assert len(out["max_source_per_head"]) == 2
    assert (tmp_path / "a" / "attention.json").exists()


def test_export_attention_truncates_like_encode(trained):
    _, _, ckpt = trained
    text = " ".join(f"w{i:03d}" for i in range(30))
    out = cli.cmd_export_attention(ckpt, text, layer=0, head=1, quiet=True)
    assert len(out["tokens"]) == len(out["attention"]) == 12
    assert out["layer"] == 0 and out["head"] == 1


def test_export_attention_standard_has_no_sources(data_files, tmp_path):
    cfg = run_config(data_files, tmp_path, model=dict(TINY_MODEL, mode="standard"),
                     train={"epochs": 1})
    ckpt = cli.cmd_train(cfg, quiet=True)["runs"][0]["checkpoint"]
    out = cli.cmd_export_attention(ckpt, "chest pain", quiet=True)
    assert "max_source" not in out


@pytest.mark.parametrize("layer,head", [(2, None), (-3, None), (0, 2), (0, -1)])
def test_export_attention_range(trained, layer, head):
    _, _, ckpt = trained
    with pytest.raises(ValueError, match="out of range"):
        cli.cmd_export_attention(ckpt, "chest pain", layer=layer, head=head, quiet=True)


def test_inspect(trained, data_files, tmp_path):
    cfg, _, ckpt = trained
    out = cli.cmd_inspect(ckpt, data_files[0], output=tmp_path / "i", quiet=True)
    assert out["param_count"] == out["param_count_closed_form"]
    assert out["inference_seconds"] > 0 and out["inference_examples"] == 90
    student_cfg = dict(cfg, distill={"n_student_layers": 1, "epochs": 1})
    report = cli.cmd_distill(student_cfg, ckpt, output=tmp_path / "d", quiet=True)
    small = cli.cmd_inspect(report["runs"][0]["checkpoint"], quiet=True)
    assert small["param_count"] < out["param_count"]
    assert "inference_seconds" not in small


def test_main_end_to_end(data_files, tmp_path, capsys):
    cfg = run_config(data_files, tmp_path, seeds=[1, 2])
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "main"
    assert cli.main(["train", "--config", str(cfg_path), "--seed", "7", "--output", str(out)]) == 0
    report = json.loads((out / "train_report.json").read_text())
    assert report["config"]["seeds"] == [7]
    ckpt = str(out / "model_seed7.lesa")
    assert cli.main(["predict", ckpt, "chest pain"]) == 0
    assert "probabilities" in capsys.readouterr().out
    assert cli.main(["inspect", ckpt]) == 0
    assert cli.main(["export-attention", ckpt, "chest pain", "--layer", "0"]) == 0
    assert cli.main(["eval", ckpt, str(data_files[0])]) == 0
    assert cli.main(["distill", "--config", str(cfg_path), "--teacher", ckpt,
                     "--output", str(tmp_path / "dd")]) == 0


def test_main_reports_errors(tmp_path, capsys):
    assert cli.main(["train", "--config", str(tmp_path / "missing.json")]) == 2
    assert "config file not found" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"data": {"label_names": LABEL_NAMES}}))
    assert cli.main(["train", "--config", str(bad)]) == 2
    assert "train_path" in capsys.readouterr().err
