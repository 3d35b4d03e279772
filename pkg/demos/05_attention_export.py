"""
Which tokens does the [CLS] position look at?
=============================================

Trains a small LESA model through the command-line entry points, then
exports the last layer's [CLS] attention for one message and marks, per
token, whether the [CLS] query or a label embedding supplied the score.
"""
import json
import tempfile
from pathlib import Path

from lesa import cli
from lesa.synthetic import KEYWORDS, LABEL_NAMES, make_dataset
from lesa.text import save_jsonl

work = Path(tempfile.mkdtemp())
save_jsonl(make_dataset(n_messages=600, vocab_size=200, seed=0), work / "messages.jsonl")
(work / "keywords.json").write_text(json.dumps(KEYWORDS))
config = {
    "model": {"n_layers": 4, "d_model": 64, "d_head": 16, "n_heads": 4, "d_ff": 128, "mode": "lesa"},
    "data": {"train_path": str(work / "messages.jsonl"), "keywords_path": str(work / "keywords.json"),
             "label_names": LABEL_NAMES},
    "train": {"lr": 1e-3, "epochs": 10, "batch_size": 8},
    "output_dir": str(work / "runs"),
    "seeds": [1],
}
ckpt = cli.cmd_train(config, quiet=True)["runs"][0]["checkpoint"]

text = "w012 w040 patient reports chest pain and w007 blue lips"
out = cli.cmd_export_attention(ckpt, text, quiet=True)
print(f"layer {out['layer']}, heads averaged; [CLS] self-attention {out['cls_self_attention']:.3f}")
for tok, a, src in zip(out["tokens"], out["attention"], out["max_source"]):
    bar = "#" * int(round(a * 60))
    print(f"{tok:>12} {a:6.3f} {src:>10} {bar}")
print("prediction:", cli.cmd_predict(ckpt, text, quiet=True)["label"])
