"""The ``LESA1`` checkpoint format.

Layout::

    b"LESA1"                      5 bytes magic
    uint32 little-endian          byte length of the JSON header
    UTF-8 JSON header             config, vocab, label names, parameter manifest
    float32 little-endian payload parameters back to back, row-major

Each manifest entry records ``name``, ``shape`` and ``offset``, the absolute
byte position of the tensor in the file, so a reader can seek straight to it.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .model import ModelConfig, TriageModel, init_model
from .rng import Rng
from .text import Vocab

MAGIC = b"LESA1"
_LEN = struct.Struct("<I")


def _header_bytes(model: TriageModel, payload_start: int) -> tuple[bytes, list]:
    manifest, offset = [], payload_start
    for p in model.parameters():
        manifest.append({"name": p.name, "shape": list(p.shape), "offset": offset})
        offset += p.data.size * 4
    header = {
        "format": "LESA1",
        "config": model.config.to_dict(),
        "vocab": model.vocab.to_list(),
        "label_names": list(model.label_names),
        "keyword_classes": list(model.keyword_classes),
        "payload_offset": payload_start,
        "parameters": manifest,
    }
    return json.dumps(header, ensure_ascii=False).encode("utf-8"), manifest


def save_checkpoint(model: TriageModel, path) -> None:
    start = 0
    # header length depends on the offsets it contains; iterate to a fixed point
    for _ in range(8):
        raw, _ = _header_bytes(model, start)
        new_start = len(MAGIC) + _LEN.size + len(raw)
        if new_start == start:
            break
        start = new_start
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(raw)))
        fh.write(raw)
        for p in model.parameters():
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a LESA1 checkpoint (magic {magic!r})")
        (n,) = _LEN.unpack(fh.read(_LEN.size))
        return json.loads(fh.read(n).decode("utf-8"))


def load_checkpoint(path) -> TriageModel:
    header = read_header(path)
    config = ModelConfig.from_dict(header["config"])
    vocab = Vocab.from_list(header["vocab"])
    model = init_model(config, vocab, header["label_names"], rng=Rng(0))
    model.keyword_classes = list(header.get("keyword_classes", []))
    params = model.named_parameters()
    manifest = {e["name"]: e for e in header["parameters"]}
    if set(manifest) != set(params):
        missing = sorted(set(params) - set(manifest))
        extra = sorted(set(manifest) - set(params))
        raise ValueError(f"{path}: parameter manifest mismatch (missing {missing}, extra {extra})")
    with open(path, "rb") as fh:
        for name, p in params.items():
            entry = manifest[name]
            if tuple(entry["shape"]) != p.shape:
                raise ValueError(f"{path}: {name} has shape {entry['shape']}, expected {list(p.shape)}")
            fh.seek(entry["offset"])
            buf = fh.read(p.data.size * 4)
            p.data = np.frombuffer(buf, dtype="<f4").astype(np.float32).reshape(p.shape)
    return model
