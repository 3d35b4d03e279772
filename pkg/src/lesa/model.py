"""Full triage classifier: embeddings, encoder stack, label embedding and linear head."""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import encoder as enc
from .encoder import AttentionMode, EmbeddingTable, EncoderLayerParams
from .metrics import evaluate_predictions
from .optim import Adam
from .rng import Rng
from .tensor import Parameter, Tensor, add, backward, cross_entropy, matmul, no_grad, row_softmax
from .text import UNK_ID, Batch, LabeledDataset, Vocab, batches, encode_batch, tokenize

log = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    n_layers: int = 4
    d_model: int = 64
    d_head: int = 16
    n_heads: int = 4
    d_ff: int = 128
    n_classes: int = 3
    max_len: int = 64
    dropout: float = 0.1
    mode: str = "lesa"
    seed: int = 0
    init_std: float = 0.02

    def __post_init__(self):
        self.mode = AttentionMode(self.mode).value
        if self.d_model != self.n_heads * self.d_head:
            raise ValueError(f"d_model ({self.d_model}) must equal n_heads*d_head "
                             f"({self.n_heads}*{self.d_head})")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def attention_mode(self) -> AttentionMode:
        return AttentionMode(self.mode)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**known)


@dataclass
class TriageModel:
    config: ModelConfig
    vocab: Vocab
    label_names: list[str]
    embeddings: EmbeddingTable
    layers: list[EncoderLayerParams]
    label_emb: Parameter | None
    w_cls: Parameter
    b_cls: Parameter
    keyword_classes: list[int] = field(default_factory=list)

    def parameters(self) -> list[Parameter]:
        params = self.embeddings.parameters()
        for layer in self.layers:
            params += layer.parameters()
        if self.label_emb is not None:
            params.append(self.label_emb)
        return params + [self.w_cls, self.b_cls]

    def named_parameters(self) -> dict[str, Parameter]:
        named = {}
        for p in self.parameters():
            if p.name in named:
                raise ValueError(f"duplicate parameter name {p.name!r}")
            named[p.name] = p
        return named

    def astype(self, dtype) -> "TriageModel":
        """Deep copy with every parameter cast to ``dtype`` (float64 for gradient checks)."""
        clone = copy.deepcopy(self)
        for p in clone.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return clone

    def clone(self) -> "TriageModel":
        return self.astype(self.w_cls.dtype)

    def forward_logits(self, batch: Batch, rng=None, training: bool = False,
                       suppress_labels: bool = False, record: dict | None = None) -> Tensor:
        return forward_logits(self, batch, rng, training, suppress_labels, record)


def _normal_param(name, shape, rng, std, dtype=np.float32):
    return Parameter(name, rng.normal(shape, std, dtype))


def keyword_token_ids(phrases, vocab: Vocab) -> list[int]:
    ids = []
    for phrase in phrases:
        ids.extend(i for i in (vocab.id(t) for t in tokenize(phrase)) if i != UNK_ID)
    return ids


def init_model(config: ModelConfig, vocab: Vocab, label_names, keywords: dict | None = None,
               rng: Rng | None = None) -> TriageModel:
    """Randomly initialised model; LESA label rows start at the mean keyword embedding.

    Classes without keywords (or whose keywords are all out of vocabulary)
    keep a random row.
    """
    label_names = list(label_names)
    if len(label_names) != config.n_classes:
        raise ValueError(f"{len(label_names)} label names for n_classes={config.n_classes}")
    keywords = keywords or {}
    for name in keywords:
        if name not in label_names:
            raise ValueError(f"keyword class {name!r} not in label set {label_names}")
    rng = rng or Rng(config.seed)
    c, std = config, config.init_std
    D = c.d_model
    embeddings = EmbeddingTable(
        token_emb=_normal_param("embeddings.token", (len(vocab), D), rng, std),
        pos_emb=_normal_param("embeddings.position", (c.max_len + 1, D), rng, std),
    )
    layers = [enc.init_layer(f"layers.{i}", D, c.d_head, c.n_heads, c.d_ff, rng, std)
              for i in range(c.n_layers)]
    label_emb = None
    keyword_classes = []
    if c.attention_mode is AttentionMode.LESA:
        rows = rng.normal((c.n_classes, D), std)
        for ci, name in enumerate(label_names):
            ids = keyword_token_ids(keywords.get(name, []), vocab)
            if ids:
                rows[ci] = embeddings.token_emb.data[ids].mean(axis=0)
                keyword_classes.append(ci)
        label_emb = Parameter("label_embedding", rows)
    w_cls = _normal_param("head.w_cls", (D, c.n_classes), rng, std)
    b_cls = Parameter("head.b_cls", np.zeros(c.n_classes, dtype=np.float32))
    return TriageModel(c, vocab, label_names, embeddings, layers, label_emb, w_cls, b_cls,
                       keyword_classes)


def _trim(batch: Batch) -> tuple[np.ndarray, np.ndarray]:
    # drop trailing columns that are padding in every row; masked columns carry no attention mass
    ids, mask = np.asarray(batch.ids), np.asarray(batch.mask)
    if ids.ndim == 1:
        ids, mask = ids[None], mask[None]
    T = max(int(mask.sum(axis=1).max()), 1) if len(mask) else 1
    return ids[:, :T], mask[:, :T]


def forward_logits(model: TriageModel, batch: Batch, rng=None, training: bool = False,
                   suppress_labels: bool = False, record: dict | None = None) -> Tensor:
    """``B x C`` logits from the final [CLS] representation."""
    ids, mask = _trim(batch)
    c = model.config
    X = enc.embed(ids, mask, model.embeddings)
    H = enc.encoder_forward(X, model.layers, model.label_emb, c.mode, mask, rng, training,
                            c.dropout, suppress_labels, record)
    h_cls = H[:, 0, :]
    return add(matmul(h_cls, model.w_cls), model.b_cls)


def predict(logits) -> np.ndarray:
    """Row-wise argmax; ties resolve to the smallest label index."""
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return np.argmax(z, axis=-1)


def predict_proba(model: TriageModel, texts, batch_size: int = 64) -> np.ndarray:
    out = []
    with no_grad():
        for start in range(0, len(texts), batch_size):
            b = encode_batch(texts[start:start + batch_size], model.vocab, model.config.max_len)
            out.append(row_softmax(forward_logits(model, b)).data)
    if not out:
        return np.zeros((0, model.config.n_classes), dtype=np.float32)
    return np.concatenate(out, axis=0)


def dataset_logits(model: TriageModel, dataset: LabeledDataset, batch_size: int = 64) -> np.ndarray:
    out = []
    with no_grad():
        for b in batches(dataset, model.vocab, model.config.max_len, batch_size):
            out.append(forward_logits(model, b).data)
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.config.n_classes))


def evaluate(model: TriageModel, dataset: LabeledDataset, batch_size: int = 64) -> dict:
    """Metrics report (macro/per-class scores, accuracy, confusion) on ``dataset``."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    preds = predict(dataset_logits(model, dataset, batch_size))
    return evaluate_predictions(dataset.labels, preds, model.config.n_classes)


def param_count(model: TriageModel) -> int:
    return int(sum(p.data.size for p in model.parameters()))


def closed_form_param_count(config: ModelConfig, vocab_size: int) -> int:
    c = config
    D, d, h, F, C = c.d_model, c.d_head, c.n_heads, c.d_ff, c.n_classes
    per_layer = 3 * h * D * d + h * d * D + 2 * D * F + F + D + 4 * D
    total = vocab_size * D + (c.max_len + 1) * D + c.n_layers * per_layer + D * C + C
    if c.attention_mode is AttentionMode.LESA:
        total += C * D
    return total


def inverse_frequency_weights(dataset: LabeledDataset) -> np.ndarray:
    counts = np.asarray(dataset.class_counts(), dtype=np.float64)
    w = np.where(counts > 0, counts.sum() / np.maximum(counts, 1) / len(counts), 0.0)
    return w


@dataclass
class TrainHyper:
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 8
    warmup_steps: int = 0
    seed: int = 0
    class_weighting: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHyper":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)


def _snapshot(model: TriageModel) -> list[np.ndarray]:
    return [p.data.copy() for p in model.parameters()]


def _restore(model: TriageModel, snap: list[np.ndarray]) -> None:
    for p, arr in zip(model.parameters(), snap):
        p.data[...] = arr


def train_supervised(model: TriageModel, train_set: LabeledDataset,
                     val_set: LabeledDataset | None = None, hyper: TrainHyper | None = None,
                     **overrides) -> dict:
    """Minimise mean cross-entropy on hard labels with Adam.

    Returns a log with per-epoch training loss (and validation macro F1 when
    ``val_set`` is given). With a validation set, the parameters of the best
    epoch by macro F1 are restored at the end.
    """
    hyper = hyper or TrainHyper()
    if overrides:
        hyper = TrainHyper(**{**asdict(hyper), **overrides})
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    rng = Rng(hyper.seed)
    shuffle_rng, dropout_rng = rng.spawn(1), rng.spawn(2)
    weights = inverse_frequency_weights(train_set) if hyper.class_weighting else None
    opt = Adam(model.parameters(), lr=hyper.lr, warmup_steps=hyper.warmup_steps)
    history = {"epochs": [], "hyper": asdict(hyper)}
    best_f1, best_snap, best_epoch = -1.0, None, None
    for epoch in range(hyper.epochs):
        losses, sizes = [], []
        for batch in batches(train_set, model.vocab, model.config.max_len, hyper.batch_size,
                             shuffle_rng):
            opt.zero_grad()
            logits = forward_logits(model, batch, dropout_rng, training=True)
            loss = cross_entropy(logits, batch.labels, weights)
            backward(loss)
            opt.step()
            losses.append(float(loss.data))
            sizes.append(len(batch))
        entry = {"epoch": epoch + 1, "train_loss": float(np.average(losses, weights=sizes))}
        if val_set is not None and len(val_set):
            entry["val_macro_f1"] = evaluate(model, val_set)["macro_f1"]
            if entry["val_macro_f1"] > best_f1:
                best_f1, best_snap, best_epoch = entry["val_macro_f1"], _snapshot(model), epoch + 1
        history["epochs"].append(entry)
        log.info("epoch %d: %s", epoch + 1, entry)
    if best_snap is not None:
        _restore(model, best_snap)
        history["best_epoch"] = best_epoch
        history["best_val_macro_f1"] = best_f1
    return history
