import numpy as np
import pytest

from lesa.model import ModelConfig, init_model
from lesa.rng import Rng
from lesa.synthetic import KEYWORDS, LABEL_NAMES, make_dataset
from lesa.text import LabeledDataset, build_vocab


def tiny_config(**kw):
    base = dict(n_layers=2, d_model=8, d_head=4, n_heads=2, d_ff=16, n_classes=3, max_len=12,
                dropout=0.0, mode="lesa", seed=0)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def small_dataset():
    return make_dataset(n_messages=60, vocab_size=40, seed=3, noise_range=(3, 8))


@pytest.fixture
def small_vocab(small_dataset):
    return build_vocab(small_dataset)


@pytest.fixture
def tiny_model(small_vocab):
    return init_model(tiny_config(), small_vocab, LABEL_NAMES, KEYWORDS, Rng(0))


@pytest.fixture
def one_example():
    return LabeledDataset([("chest pain and dizziness today", 2)], list(LABEL_NAMES))
