"""Soft-target distillation of an N-layer teacher into an M-layer student."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from .model import TriageModel, forward_logits, init_model, param_count
from .optim import Adam
from .rng import Rng
from .tensor import Tensor, add, backward, cross_entropy, no_grad, scale, soft_cross_entropy
from .text import LabeledDataset, batches

log = logging.getLogger(__name__)


@dataclass
class DistillConfig:
    n_student_layers: int = 2
    temperature: float = 1.0
    init_from_teacher: bool = True
    lr: float = 1e-3
    epochs: int = 5
    batch_size: int = 8
    warmup_steps: int = 0
    seed: int = 0
    hard_label_weight: float = 0.0

    def __post_init__(self):
        if self.n_student_layers < 1:
            raise ValueError("n_student_layers must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not 0.0 <= self.hard_label_weight <= 1.0:
            raise ValueError("hard_label_weight must be in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "DistillConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown distill keys: {sorted(unknown)}")
        return cls(**d)


def softmax_np(z: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_entropy(z, temperature: float = 1.0) -> np.ndarray:
    """Entropy of ``softmax(z / temperature)`` per row."""
    p = softmax_np(z, temperature)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(p > 0, np.log(p), 0.0)
    return -(p * logp).sum(axis=-1)


def distill_loss(z_t, z_s, temperature: float = 1.0) -> Tensor:
    """Cross-entropy of the student's tempered distribution against the teacher's.

    ``z_t`` is treated as a constant; ``z_s`` may be a tracked tensor. Rows are
    averaged over the batch.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    zt = z_t.data if isinstance(z_t, Tensor) else np.asarray(z_t)
    zs = z_s if isinstance(z_s, Tensor) else Tensor(z_s)
    if zt.shape != zs.shape:
        raise ValueError(f"teacher logits {zt.shape} and student logits {zs.shape} differ")
    if zs.data.ndim == 1:
        zt = zt[None]
        zs = zs[None, :]
    target = softmax_np(zt, temperature).astype(zs.dtype)
    return soft_cross_entropy(scale(zs, 1.0 / temperature), target)


def init_student(teacher: TriageModel, n_layers: int) -> TriageModel:
    """Copy embeddings, label embedding, head and the first ``n_layers`` encoder layers."""
    N = teacher.config.n_layers
    if not 1 <= n_layers <= N:
        raise ValueError(f"student depth must be in [1, {N}], got {n_layers}")
    student = teacher.clone()
    student.layers = student.layers[:n_layers]
    student.config = replace(student.config, n_layers=n_layers)
    return student


def _check_compatible(teacher: TriageModel, student: TriageModel) -> None:
    if teacher.vocab.to_list() != student.vocab.to_list():
        raise ValueError("teacher and student vocabularies differ")
    if teacher.config.n_classes != student.config.n_classes:
        raise ValueError(f"teacher has {teacher.config.n_classes} classes, "
                         f"student has {student.config.n_classes}")


def make_student(teacher: TriageModel, cfg: DistillConfig) -> TriageModel:
    if cfg.init_from_teacher:
        return init_student(teacher, cfg.n_student_layers)
    if cfg.n_student_layers > teacher.config.n_layers:
        raise ValueError("student cannot be deeper than the teacher")
    config = replace(teacher.config, n_layers=cfg.n_student_layers, seed=cfg.seed)
    return init_model(config, teacher.vocab, teacher.label_names, rng=Rng(cfg.seed))


def distill_train(teacher: TriageModel, student: TriageModel, train_set: LabeledDataset,
                  cfg: DistillConfig) -> dict:
    """Train ``student`` to match the frozen teacher's tempered class distribution.

    The objective is ``(1 - w) * soft_ce + w * hard_ce`` with
    ``w = cfg.hard_label_weight``. The log records the eval-mode objective
    before the first update (``initial_loss``) and per-epoch training losses.
    """
    _check_compatible(teacher, student)
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    max_len = student.config.max_len
    T0, w = cfg.temperature, cfg.hard_label_weight
    rng = Rng(cfg.seed)
    shuffle_rng, dropout_rng = rng.spawn(1), rng.spawn(2)

    def objective(z_t, z_s, labels):
        soft = distill_loss(z_t, z_s, T0)
        if w == 0.0:
            return soft
        hard = cross_entropy(z_s, labels)
        if w == 1.0:
            return hard
        return add(scale(soft, 1.0 - w), scale(hard, w))

    with no_grad():
        total, n = 0.0, 0
        for b in batches(train_set, student.vocab, max_len, 64):
            z_t = forward_logits(teacher, b).data
            z_s = forward_logits(student, b)
            total += float(objective(z_t, z_s, b.labels).data) * len(b)
            n += len(b)
    history = {"config": asdict(cfg), "initial_loss": total / n, "epochs": [],
               "teacher_params": param_count(teacher), "student_params": param_count(student)}

    opt = Adam(student.parameters(), lr=cfg.lr, warmup_steps=cfg.warmup_steps)
    for epoch in range(cfg.epochs):
        losses, sizes = [], []
        for b in batches(train_set, student.vocab, max_len, cfg.batch_size, shuffle_rng):
            with no_grad():
                z_t = forward_logits(teacher, b).data
            opt.zero_grad()
            z_s = forward_logits(student, b, dropout_rng, training=True)
            loss = objective(z_t, z_s, b.labels)
            backward(loss)
            opt.step()
            losses.append(float(loss.data))
            sizes.append(len(b))
        entry = {"epoch": epoch + 1, "train_loss": float(np.average(losses, weights=sizes))}
        history["epochs"].append(entry)
        log.info("distill epoch %d: %s", epoch + 1, entry)
    return history
