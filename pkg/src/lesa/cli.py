"""Command-line interface: train, distill, eval, predict, export-attention, inspect.

Each ``cmd_*`` function returns the report it prints, so the commands can
also be driven from Python.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .distill import DistillConfig, distill_train, make_student
from .encoder import AttentionMode
from .metrics import mean_stderr
from .model import (
    ModelConfig,
    TrainHyper,
    closed_form_param_count,
    evaluate,
    forward_logits,
    init_model,
    param_count,
    predict_proba,
    train_supervised,
)
from .rng import Rng
from .tensor import no_grad
from .text import build_vocab, encode, encode_batch, load_jsonl, load_keywords, split, tokenize

log = logging.getLogger("lesa")

METRIC_KEYS = ("macro_f1", "macro_precision", "macro_recall", "accuracy")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _require(section: dict, key: str, where: str):
    if key not in section or section[key] in (None, ""):
        raise ConfigError(f"missing required config key {where}.{key}" if where else
                          f"missing required config key {key}")
    return section[key]


def validate_config(cfg: dict, need_data: bool = True) -> dict:
    """Fill defaults and check a run configuration; errors name the offending key."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    known = {"model", "data", "train", "distill", "output_dir", "seeds"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = {k: dict(cfg.get(k) or {}) for k in ("model", "data", "train", "distill")}
    out["output_dir"] = cfg.get("output_dir", "runs")
    seeds = cfg.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a non-empty list of integers")
    out["seeds"] = list(seeds)
    data = out["data"]
    if need_data:
        train_path = _require(data, "train_path", "data")
        if not Path(train_path).exists():
            raise ConfigError(f"data.train_path does not exist: {train_path}")
        if data.get("test_path"):
            if not Path(data["test_path"]).exists():
                raise ConfigError(f"data.test_path does not exist: {data['test_path']}")
        else:
            frac = data.setdefault("test_frac", 0.2)
            if not isinstance(frac, (int, float)) or not 0 < frac < 1:
                raise ConfigError("data.test_frac must be in (0, 1)")
        if data.get("keywords_path") and not Path(data["keywords_path"]).exists():
            raise ConfigError(f"data.keywords_path does not exist: {data['keywords_path']}")
        names = _require(data, "label_names", "data")
        if not isinstance(names, list) or len(names) < 2:
            raise ConfigError("data.label_names must list at least two labels")
    data.setdefault("min_freq", 1)
    data.setdefault("split_seed", 0)
    try:
        if "label_names" in data:
            out["model"].setdefault("n_classes", len(data["label_names"]))
        ModelConfig.from_dict(out["model"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"model: {exc}") from None
    try:
        TrainHyper.from_dict(out["train"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"train: {exc}") from None
    try:
        DistillConfig.from_dict(out["distill"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"distill: {exc}") from None
    return out


def load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_splits(cfg: dict):
    data = cfg["data"]
    names = data["label_names"]
    full = load_jsonl(data["train_path"], names)
    if len(full) == 0:
        raise ConfigError(f"data.train_path is empty: {data['train_path']}")
    if data.get("test_path"):
        return full, load_jsonl(data["test_path"], names)
    return split(full, data["test_frac"], Rng(data["split_seed"]))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def aggregate(per_seed: list[dict]) -> dict:
    """Mean and standard error across seeds for each headline metric."""
    agg = {}
    for key in METRIC_KEYS:
        mean, se = mean_stderr([r[key] for r in per_seed])
        agg[key] = {"mean": mean, "stderr": se}
    return agg


def _table(rows: list[tuple]) -> str:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(str(c).ljust(w) for c, w in zip(r, widths)) for r in rows)


def _format_agg(name: str, agg: dict) -> str:
    rows = [("model", "macro F1", "macro P", "macro R")]
    rows.append((name,) + tuple(f"{agg[k]['mean']:.3f} ± {agg[k]['stderr']:.3f}"
                                for k in ("macro_f1", "macro_precision", "macro_recall")))
    return _table(rows)


# ---------------------------------------------------------------------------
# commands


def cmd_train(cfg: dict, output: Path | None = None, quiet: bool = False) -> dict:
    cfg = validate_config(cfg)
    out_dir = Path(output or cfg["output_dir"])
    train_set, test_set = load_splits(cfg)
    vocab = build_vocab(train_set, cfg["data"]["min_freq"])
    keywords = load_keywords(cfg["data"]["keywords_path"]) if cfg["data"].get("keywords_path") else None
    per_seed, runs = [], []
    for seed in cfg["seeds"]:
        mcfg = ModelConfig.from_dict({**cfg["model"], "seed": seed})
        model = init_model(mcfg, vocab, train_set.label_names, keywords, Rng(seed))
        hyper = TrainHyper.from_dict({**cfg["train"], "seed": seed})
        t0 = time.perf_counter()
        history = train_supervised(model, train_set, None, hyper)
        elapsed = time.perf_counter() - t0
        metrics = evaluate(model, test_set)
        ckpt = out_dir / f"model_seed{seed}.lesa"
        ckpt.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, ckpt)
        per_seed.append(metrics)
        runs.append({"seed": seed, "checkpoint": str(ckpt), "train_seconds": elapsed,
                     "history": history, "metrics": metrics})
        if not quiet:
            print(f"seed {seed}: macro F1 {metrics['macro_f1']:.4f} ({elapsed:.1f}s)")
    report = {
        "command": "train",
        "config": cfg,
        "n_train": len(train_set),
        "n_test": len(test_set),
        "vocab_size": len(vocab),
        "param_count": param_count(model),
        "aggregate": aggregate(per_seed),
        "runs": runs,
    }
    _write_json(out_dir / "train_report.json", report)
    if not quiet:
        print(_format_agg(f"{mcfg.mode} N={mcfg.n_layers}", report["aggregate"]))
    return report


def cmd_distill(cfg: dict, teacher_path, output: Path | None = None, quiet: bool = False) -> dict:
    cfg = validate_config(cfg)
    out_dir = Path(output or cfg["output_dir"])
    teacher = load_checkpoint(teacher_path)
    if list(teacher.label_names) != list(cfg["data"]["label_names"]):
        raise ConfigError(f"teacher labels {teacher.label_names} differ from "
                          f"data.label_names {cfg['data']['label_names']}")
    train_set, test_set = load_splits(cfg)
    teacher_metrics = evaluate(teacher, test_set)
    per_seed, runs = [], []
    for seed in cfg["seeds"]:
        dcfg = DistillConfig.from_dict({**cfg["distill"], "seed": seed})
        student = make_student(teacher, dcfg)
        initial = evaluate(student, test_set)
        history = distill_train(teacher, student, train_set, dcfg)
        metrics = evaluate(student, test_set)
        ckpt = out_dir / f"student_M{dcfg.n_student_layers}_seed{seed}.lesa"
        ckpt.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(student, ckpt)
        per_seed.append(metrics)
        runs.append({"seed": seed, "checkpoint": str(ckpt), "initial_metrics": initial,
                     "history": history, "metrics": metrics})
        if not quiet:
            print(f"seed {seed}: student macro F1 {metrics['macro_f1']:.4f} "
                  f"(teacher {teacher_metrics['macro_f1']:.4f})")
    t_params = param_count(teacher)
    s_params = param_count(student)
    report = {
        "command": "distill",
        "config": cfg,
        "teacher_checkpoint": str(teacher_path),
        "teacher_layers": teacher.config.n_layers,
        "student_layers": student.config.n_layers,
        "teacher_metrics": teacher_metrics,
        "teacher_params": t_params,
        "student_params": s_params,
        "param_ratio": s_params / t_params,
        "aggregate": aggregate(per_seed),
        "retention": aggregate(per_seed)["macro_f1"]["mean"] / teacher_metrics["macro_f1"]
        if teacher_metrics["macro_f1"] > 0 else None,
        "runs": runs,
    }
    _write_json(out_dir / "distill_report.json", report)
    if not quiet:
        print(_format_agg(f"student M={student.config.n_layers}", report["aggregate"]))
        print(f"params: teacher {t_params}, student {s_params} (x{report['param_ratio']:.3f})")
    return report


def cmd_eval(checkpoint, data_path, output: Path | None = None, quiet: bool = False) -> dict:
    model = load_checkpoint(checkpoint)
    dataset = load_jsonl(data_path, model.label_names)
    if len(dataset) == 0:
        raise ValueError(f"{data_path}: no examples to evaluate")
    report = evaluate(model, dataset)
    report["label_names"] = list(model.label_names)
    report["n_examples"] = len(dataset)
    if output is not None:
        _write_json(Path(output) / "eval_report.json", report)
    if not quiet:
        rows = [("class", "precision", "recall", "f1")]
        for name, pc in zip(model.label_names, report["per_class"]):
            rows.append((name, f"{pc['precision']:.3f}", f"{pc['recall']:.3f}", f"{pc['f1']:.3f}"))
        rows.append(("macro", f"{report['macro_precision']:.3f}", f"{report['macro_recall']:.3f}",
                     f"{report['macro_f1']:.3f}"))
        print(_table(rows))
        print(f"accuracy {report['accuracy']:.3f} on {len(dataset)} examples")
    return report


def cmd_predict(checkpoint, text: str, quiet: bool = False) -> dict:
    model = load_checkpoint(checkpoint)
    probs = predict_proba(model, [text])[0].astype(np.float64)
    idx = int(np.argmax(probs))
    report = {"label": model.label_names[idx], "label_id": idx,
              "probabilities": {n: float(p) for n, p in zip(model.label_names, probs)}}
    if not quiet:
        print(json.dumps(report, indent=2))
    return report


def cmd_export_attention(checkpoint, text: str, layer: int | None = None, head: int | None = None,
                         output: Path | None = None, quiet: bool = False) -> dict:
    """Post-softmax [CLS] -> token attention for one layer (default last) and head (default mean)."""
    model = load_checkpoint(checkpoint)
    c = model.config
    N, h = c.n_layers, c.n_heads
    layer = N - 1 if layer is None else layer
    if not -N <= layer < N:
        raise ValueError(f"layer {layer} out of range for {N} layers")
    layer %= N
    if head is not None and not 0 <= head < h:
        raise ValueError(f"head {head} out of range for {h} heads")
    tokens = tokenize(text)[:c.max_len]
    ex = encode(text, model.vocab, c.max_len)
    batch = encode_batch([text], model.vocab, c.max_len)
    record: dict = {}
    with no_grad():
        forward_logits(model, batch, record=record)
    P = record["attention"][layer][0]  # h x T x T
    L = len(tokens)
    rows = P[:, 0, :]
    row = rows.mean(axis=0) if head is None else rows[head]
    report = {
        "tokens": tokens,
        "in_vocab": [i != 2 for i in ex.ids[1:L + 1]],
        "layer": layer,
        "head": head,
        "mode": c.mode,
        "cls_self_attention": float(row[0]),
        "attention": [float(x) for x in row[1:L + 1]],
    }
    if c.attention_mode is AttentionMode.LESA:
        names = ["cls"] + list(model.label_names)
        W = record["winners"][layer][0][:, :L]  # h x L
        per_head = [[names[int(w)] for w in W[i]] for i in range(h)]
        if head is None:
            src = []
            for j in range(L):
                counts = Counter(int(W[i, j]) for i in range(h))
                best = max(counts.values())
                src.append(names[min(k for k, v in counts.items() if v == best)])
        else:
            src = per_head[head]
        report["max_source"] = src
        report["max_source_per_head"] = per_head
    if output is not None:
        _write_json(Path(output) / "attention.json", report)
    if not quiet:
        print(json.dumps(report, indent=2))
    return report


def time_inference(model, texts) -> float:
    """Wall-clock seconds for encode + forward of every text, one at a time."""
    t0 = time.perf_counter()
    with no_grad():
        for t in texts:
            forward_logits(model, encode_batch([t], model.vocab, model.config.max_len))
    return time.perf_counter() - t0


def cmd_inspect(checkpoint, data_path=None, output: Path | None = None, quiet: bool = False) -> dict:
    model = load_checkpoint(checkpoint)
    report = {
        "config": model.config.to_dict(),
        "label_names": list(model.label_names),
        "vocab_size": len(model.vocab),
        "param_count": param_count(model),
        "param_count_closed_form": closed_form_param_count(model.config, len(model.vocab)),
        "parameters": {p.name: list(p.shape) for p in model.parameters()},
    }
    if data_path is not None:
        dataset = load_jsonl(data_path, model.label_names)
        report["inference_examples"] = len(dataset)
        report["inference_seconds"] = time_inference(model, dataset.texts)
    if output is not None:
        _write_json(Path(output) / "inspect.json", report)
    if not quiet:
        brief = {k: v for k, v in report.items() if k != "parameters"}
        print(json.dumps(brief, indent=2))
    return report


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="single seed overriding config seeds")
    common.add_argument("--output", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lesa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train one model per seed")
    p = sub.add_parser("distill", parents=[common], help="distill a teacher checkpoint")
    p.add_argument("--teacher", required=True)
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a JSONL file")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p = sub.add_parser("predict", parents=[common], help="classify one text")
    p.add_argument("checkpoint")
    p.add_argument("text")
    p = sub.add_parser("export-attention", parents=[common], help="dump [CLS] attention")
    p.add_argument("checkpoint")
    p.add_argument("text")
    p.add_argument("--layer", type=int)
    p.add_argument("--head", type=int)
    p = sub.add_parser("inspect", parents=[common], help="parameter count and timing")
    p.add_argument("checkpoint")
    p.add_argument("--data", help="JSONL file for batch-1 inference timing")
    return parser


def _run_config(args) -> dict:
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.output) if args.output else None
    try:
        if args.command == "train":
            cmd_train(_run_config(args), out)
        elif args.command == "distill":
            cmd_distill(_run_config(args), args.teacher, out)
        elif args.command == "eval":
            cmd_eval(args.checkpoint, args.data, out)
        elif args.command == "predict":
            cmd_predict(args.checkpoint, args.text)
        elif args.command == "export-attention":
            cmd_export_attention(args.checkpoint, args.text, args.layer, args.head, out)
        elif args.command == "inspect":
            cmd_inspect(args.checkpoint, args.data, out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
