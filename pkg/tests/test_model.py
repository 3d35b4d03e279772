import numpy as np
import pytest

from lesa.model import (
    ModelConfig,
    TrainHyper,
    closed_form_param_count,
    evaluate,
    forward_logits,
    init_model,
    keyword_token_ids,
    param_count,
    predict,
    train_supervised,
)
from lesa.rng import Rng
from lesa.synthetic import KEYWORDS, LABEL_NAMES
from lesa.tensor import cross_entropy
from lesa.text import Vocab, batches, build_vocab, encode_batch

from conftest import tiny_config


def test_config_enforces_head_split():
    with pytest.raises(ValueError, match="d_model"):
        ModelConfig(d_model=64, n_heads=4, d_head=8)
    with pytest.raises(ValueError):
        ModelConfig(n_layers=0)
    with pytest.raises(ValueError):
        ModelConfig(n_classes=1)


def test_config_round_trip():
    c = tiny_config(mode="standard")
    assert ModelConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ValueError, match="bogus"):
        ModelConfig.from_dict({**c.to_dict(), "bogus": 1})


def test_parameter_names_unique_and_label_rows(tiny_model):
    named = tiny_model.named_parameters()
    assert len(named) == len(tiny_model.parameters())
    assert tiny_model.label_emb.shape == (3, 8)


def test_standard_model_has_no_label_embedding(small_vocab):
    m = init_model(tiny_config(mode="standard"), small_vocab, LABEL_NAMES)
    assert m.label_emb is None


def test_init_weight_statistics():
    vocab = Vocab([f"t{i}" for i in range(400)])
    m = init_model(ModelConfig(mode="standard"), vocab, LABEL_NAMES, rng=Rng(1))
    assert abs(m.embeddings.token_emb.data.std() - 0.02) < 1e-3
    layer = m.layers[0]
    assert (layer.b_1.data == 0).all() and (layer.ln1_gain.data == 1).all()


def test_single_keyword_row_equals_token_embedding(small_vocab):
    m = init_model(tiny_config(), small_vocab, LABEL_NAMES, {"urgent": ["paralysis"]}, Rng(0))
    tok = m.embeddings.token_emb.data[small_vocab.id("paralysis")]
    np.testing.assert_array_equal(m.label_emb.data[2], tok)
    assert m.keyword_classes == [2]


def test_keyword_row_is_mean_of_phrase_tokens(small_vocab):
    m = init_model(tiny_config(), small_vocab, LABEL_NAMES, KEYWORDS, Rng(0))
    ids = keyword_token_ids(KEYWORDS["medium"], small_vocab)
    assert len(ids) > 0
    np.testing.assert_allclose(m.label_emb.data[1], m.embeddings.token_emb.data[ids].mean(axis=0),
                               rtol=1e-6)


def test_no_keywords_gives_random_rows(small_vocab):
    a = init_model(tiny_config(), small_vocab, LABEL_NAMES, None, Rng(0))
    b = init_model(tiny_config(), small_vocab, LABEL_NAMES, KEYWORDS, Rng(0))
    assert a.keyword_classes == []
    assert not np.allclose(a.label_emb.data[2], b.label_emb.data[2])
    # the random draw is the same whether or not keywords replace it
    np.testing.assert_array_equal(a.label_emb.data[0], b.label_emb.data[0])


def test_all_oov_keywords_fall_back_to_random(small_vocab):
    m = init_model(tiny_config(), small_vocab, LABEL_NAMES, {"urgent": ["zzz qqq"]}, Rng(0))
    ref = init_model(tiny_config(), small_vocab, LABEL_NAMES, None, Rng(0))
    np.testing.assert_array_equal(m.label_emb.data, ref.label_emb.data)
    assert m.keyword_classes == []


def test_unknown_keyword_class(small_vocab):
    with pytest.raises(ValueError, match="severe"):
        init_model(tiny_config(), small_vocab, LABEL_NAMES, {"severe": ["x"]})


def test_bias_only_logits(tiny_model, small_vocab):
    tiny_model.w_cls.data[...] = 0
    tiny_model.b_cls.data[...] = [1, 2, 3]
    b = encode_batch(["chest pain", "w001", ""], small_vocab, 12)
    np.testing.assert_array_equal(forward_logits(tiny_model, b).data, np.tile([1, 2, 3], (3, 1)))


def test_logit_shape_and_duplicates(tiny_model, small_vocab):
    texts = ["chest pain w002"] * 4 + ["headache"] * 4
    z = forward_logits(tiny_model, encode_batch(texts, small_vocab, 12)).data
    assert z.shape == (8, 3)
    np.testing.assert_array_equal(z[0], z[3])


def test_trimming_padding_does_not_change_logits(tiny_model, small_vocab):
    b = encode_batch(["chest pain w003", "headache"], small_vocab, 12)
    z_trim = forward_logits(tiny_model, b).data
    # append an extra all-live row to force the full width
    wide = encode_batch(["chest pain w003", "headache", " ".join(["w001"] * 12)], small_vocab, 12)
    z_full = forward_logits(tiny_model, wide).data[:2]
    np.testing.assert_allclose(z_trim, z_full, atol=1e-6)


@pytest.mark.parametrize("row,label", [([0.1, 0.9, 0.2], 1), ([0.5, 0.5, 0.1], 0)])
def test_predict(row, label):
    assert predict(np.array([row]))[0] == label


def test_predict_shape():
    assert predict(np.zeros((5, 3))).shape == (5,)


def test_cross_entropy_uniform_logits_is_log_c():
    from lesa.tensor import Tensor
    assert float(cross_entropy(Tensor(np.zeros((4, 3))), [0, 1, 2, 0]).data) == pytest.approx(np.log(3))


def test_param_count_formula_matches_enumeration(small_vocab):
    for mode in ("standard", "lesa"):
        for n in (1, 3):
            c = tiny_config(mode=mode, n_layers=n)
            m = init_model(c, small_vocab, LABEL_NAMES)
            assert param_count(m) == closed_form_param_count(c, len(small_vocab))


def test_lr_zero_keeps_parameters(tiny_model, small_dataset):
    before = [p.data.copy() for p in tiny_model.parameters()]
    log = train_supervised(tiny_model, small_dataset, None, TrainHyper(lr=0.0, epochs=3, batch_size=7))
    for p, b in zip(tiny_model.parameters(), before):
        np.testing.assert_array_equal(p.data, b)
    losses = [e["train_loss"] for e in log["epochs"]]
    np.testing.assert_allclose(losses, losses[0], rtol=1e-6)


def test_memorises_single_example(tiny_model, one_example):
    log = train_supervised(tiny_model, one_example, None,
                           TrainHyper(lr=1e-2, epochs=200, batch_size=1, seed=0))
    assert log["epochs"][-1]["train_loss"] < 0.01
    assert evaluate(tiny_model, one_example)["accuracy"] == 1.0


def test_training_deterministic(small_vocab, small_dataset):
    logs = []
    for _ in range(2):
        m = init_model(tiny_config(dropout=0.1), small_vocab, LABEL_NAMES, KEYWORDS, Rng(4))
        logs.append(train_supervised(m, small_dataset, None, TrainHyper(epochs=3, seed=4)))
    assert [e["train_loss"] for e in logs[0]["epochs"]] == [e["train_loss"] for e in logs[1]["epochs"]]


def test_empty_training_set(tiny_model):
    from lesa.text import LabeledDataset
    with pytest.raises(ValueError, match="empty"):
        train_supervised(tiny_model, LabeledDataset([], LABEL_NAMES))


def test_validation_keeps_best_epoch(tiny_model, small_dataset):
    log = train_supervised(tiny_model, small_dataset, small_dataset,
                           TrainHyper(lr=3e-3, epochs=4, batch_size=8))
    best = max(e["val_macro_f1"] for e in log["epochs"])
    assert log["best_val_macro_f1"] == best
    assert evaluate(tiny_model, small_dataset)["macro_f1"] == pytest.approx(best)


def test_keyword_labels_change_cls_row(tiny_model, small_vocab):
    # with keyword-initialised label rows, the merged row differs from S somewhere
    b = encode_batch(["w001 chest pain w002 headache"], small_vocab, 12)
    rec = {}
    forward_logits(tiny_model, b, record=rec)
    assert any((w > 0).any() for w in rec["winners"])


def test_class_weighting_flag(tiny_model, small_dataset):
    log = train_supervised(tiny_model, small_dataset, None,
                           TrainHyper(epochs=1, class_weighting=True))
    assert np.isfinite(log["epochs"][0]["train_loss"])
