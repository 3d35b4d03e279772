"""Tokenisation, vocabulary, sequence encoding, dataset loading and batching."""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD, CLS, UNK = "[PAD]", "[CLS]", "[UNK]"
PAD_ID, CLS_ID, UNK_ID = 0, 1, 2
SPECIALS = (PAD, CLS, UNK)

# a run of word characters, or a single non-space non-word character
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and break punctuation into its own tokens.

    >>> tokenize("Chest pain!")
    ['chest', 'pain', '!']
    """
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    """Bijective token <-> id map with reserved ids 0=[PAD], 1=[CLS], 2=[UNK]."""

    def __init__(self, tokens=()):
        self.itos: list[str] = list(SPECIALS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self.itos[idx]

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, itos: list[str]) -> "Vocab":
        if tuple(itos[:3]) != SPECIALS:
            raise ValueError(f"vocabulary must start with {SPECIALS}")
        return cls(itos[3:])


@dataclass
class LabeledDataset:
    examples: list[tuple[str, int]]
    label_names: list[str]

    def __post_init__(self):
        if len(self.label_names) < 2:
            raise ValueError("a dataset needs at least two label names")
        C = len(self.label_names)
        for _, y in self.examples:
            if not 0 <= y < C:
                raise ValueError(f"label {y} outside [0, {C})")

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def texts(self) -> list[str]:
        return [t for t, _ in self.examples]

    @property
    def labels(self) -> np.ndarray:
        return np.array([y for _, y in self.examples], dtype=np.int64)

    def class_counts(self) -> list[int]:
        counts = Counter(y for _, y in self.examples)
        return [counts.get(c, 0) for c in range(len(self.label_names))]


@dataclass
class EncodedExample:
    ids: list[int]
    mask: list[int]
    label: int = -1


@dataclass
class Batch:
    ids: np.ndarray      # B x (max_len+1)
    mask: np.ndarray     # B x (max_len+1), 1 = real token or [CLS]
    labels: np.ndarray   # B
    index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.labels)


def build_vocab(texts, min_freq: int = 1) -> Vocab:
    """Vocabulary of every token seen at least ``min_freq`` times.

    Ids 3.. are assigned by descending frequency, ties broken lexicographically.
    ``texts`` may be a :class:`LabeledDataset` or an iterable of strings.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    if isinstance(texts, LabeledDataset):
        texts = texts.texts
    counts: Counter = Counter()
    n_docs = 0
    for text in texts:
        n_docs += 1
        counts.update(tokenize(text))
    if n_docs == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_freq and t not in SPECIALS),
                  key=lambda t: (-counts[t], t))
    return Vocab(kept)


def encode(text: str, vocab: Vocab, max_len: int, label: int = -1) -> EncodedExample:
    """[CLS] + up to ``max_len`` token ids, right-padded with [PAD] to ``max_len + 1``."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    toks = tokenize(text)[:max_len]
    ids = [CLS_ID] + [vocab.id(t) for t in toks]
    n = len(ids)
    pad = max_len + 1 - n
    return EncodedExample(ids=ids + [PAD_ID] * pad, mask=[1] * n + [0] * pad, label=label)


def decode(ids, vocab: Vocab) -> list[str]:
    """Inverse of :func:`encode` for in-vocabulary text (specials dropped)."""
    return [vocab.token(i) for i in ids if i not in (PAD_ID, CLS_ID)]


def encode_batch(texts, vocab: Vocab, max_len: int, labels=None) -> Batch:
    encoded = [encode(t, vocab, max_len) for t in texts]
    ids = np.array([e.ids for e in encoded], dtype=np.int64).reshape(len(encoded), max_len + 1)
    mask = np.array([e.mask for e in encoded], dtype=np.int8).reshape(len(encoded), max_len + 1)
    if labels is None:
        labels = np.full(len(encoded), -1, dtype=np.int64)
    return Batch(ids=ids, mask=mask, labels=np.asarray(labels, dtype=np.int64),
                 index=np.arange(len(encoded)))


def load_jsonl(path, label_names: list[str]) -> LabeledDataset:
    """Read ``{"text": ..., "label": ...}`` lines; labels must be in ``label_names``."""
    index = {name: i for i, name in enumerate(label_names)}
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                text, label = obj["text"], obj["label"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed record ({exc})") from None
            if not isinstance(text, str):
                raise ValueError(f"{path}:{lineno}: 'text' must be a string")
            if label not in index:
                raise ValueError(f"{path}:{lineno}: unknown label {label!r}; "
                                 f"expected one of {label_names}")
            examples.append((text, index[label]))
    return LabeledDataset(examples, list(label_names))


def save_jsonl(dataset: LabeledDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for text, y in dataset.examples:
            fh.write(json.dumps({"text": text, "label": dataset.label_names[y]}) + "\n")


def load_keywords(path) -> dict[str, list[str]]:
    """Read the label -> keyword phrases JSON map."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(obj, dict) or not all(
            isinstance(v, list) and all(isinstance(s, str) for s in v) for v in obj.values()):
        raise ValueError(f"{path}: keywords file must map label names to lists of strings")
    return obj


def stratified_test_counts(class_counts, test_frac: float) -> list[int]:
    """Per-class test sizes: ``floor(n * test_frac + 0.5)``, but a single example stays in train."""
    out = []
    for n in class_counts:
        k = int(np.floor(n * test_frac + 0.5))
        if n <= 1:
            k = 0
        out.append(min(k, n))
    return out


def split(dataset: LabeledDataset, test_frac: float, rng) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified train/test split; each class is split as close to ``test_frac`` as rounding allows."""
    if not 0.0 < test_frac < 1.0:
        raise ValueError(f"test_frac must be in (0, 1), got {test_frac}")
    labels = dataset.labels
    C = len(dataset.label_names)
    n_test = stratified_test_counts([int((labels == c).sum()) for c in range(C)], test_frac)
    test_idx: list[int] = []
    for c in range(C):
        members = np.flatnonzero(labels == c)
        perm = members[rng.permutation(len(members))]
        test_idx.extend(perm[:n_test[c]].tolist())
    test_set = set(test_idx)
    train = [ex for i, ex in enumerate(dataset.examples) if i not in test_set]
    test = [dataset.examples[i] for i in sorted(test_set)]
    return LabeledDataset(train, dataset.label_names), LabeledDataset(test, dataset.label_names)


def batches(dataset: LabeledDataset, vocab: Vocab, max_len: int, batch_size: int, rng=None):
    """Yield :class:`Batch` objects; shuffled with ``rng`` when given, last partial batch kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(dataset)
    order = np.arange(n) if rng is None else rng.permutation(n)
    texts, labels = dataset.texts, dataset.labels
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        b = encode_batch([texts[i] for i in idx], vocab, max_len, labels[idx])
        b.index = idx
        yield b
