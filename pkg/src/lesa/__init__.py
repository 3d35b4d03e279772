"""Label-embedding self-attention (LESA) text classifiers with teacher-student distillation."""
from .checkpoint import load_checkpoint, read_header, save_checkpoint
from .distill import DistillConfig, distill_loss, distill_train, init_student, make_student
from .encoder import AttentionMode
from .metrics import confusion, macro_metrics
from .model import (
    ModelConfig,
    TrainHyper,
    TriageModel,
    closed_form_param_count,
    evaluate,
    forward_logits,
    init_model,
    param_count,
    predict,
    train_supervised,
)
from .rng import Rng
from .tensor import Parameter, Tensor, backward, no_grad
from .text import Vocab, build_vocab, encode, load_jsonl, split, tokenize

__version__ = "0.1.0"
