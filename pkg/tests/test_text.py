import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lesa.rng import Rng
from lesa.text import (
    CLS_ID,
    PAD_ID,
    UNK_ID,
    LabeledDataset,
    Vocab,
    batches,
    build_vocab,
    decode,
    encode,
    load_jsonl,
    load_keywords,
    split,
    stratified_test_counts,
    tokenize,
)

NAMES = ["non-urgent", "medium", "urgent"]


@pytest.mark.parametrize("text,expected", [
    ("Chest pain!", ["chest", "pain", "!"]),
    ("", []),
    ("I   have\tpain", ["i", "have", "pain"]),
    ("Loss of coordination/balance", ["loss", "of", "coordination", "/", "balance"]),
])
def test_tokenize(text, expected):
    assert tokenize(text) == expected


def test_vocab_threshold():
    v = build_vocab(["a a b"], min_freq=2)
    assert "a" in v and "b" not in v


def test_vocab_counts_distinct_tokens():
    v = build_vocab(["the cat saw the dog"], min_freq=1)
    assert len(v) == 3 + 4


def test_vocab_tie_break_lexicographic():
    v = build_vocab(["y x " * 5])
    assert v.id("x") < v.id("y")
    assert v.id("x") == 3


def test_vocab_frequency_order():
    v = build_vocab(["b b b a a c"])
    assert [v.token(i) for i in range(3, 6)] == ["b", "a", "c"]


def test_vocab_reserved_ids():
    v = Vocab()
    assert (v.id("[PAD]"), v.id("[CLS]"), v.id("[UNK]")) == (0, 1, 2)
    assert len(Vocab(["a"])) >= 4


def test_vocab_empty_corpus():
    with pytest.raises(ValueError):
        build_vocab([])


def test_vocab_min_freq_validation():
    with pytest.raises(ValueError):
        build_vocab(["a"], min_freq=0)


def test_vocab_list_round_trip():
    v = build_vocab(["alpha beta beta"])
    assert Vocab.from_list(v.to_list()).to_list() == v.to_list()


def test_encode_pads_and_prepends_cls():
    v = build_vocab(["chest pain"])
    ex = encode("chest pain", v, max_len=4)
    assert ex.ids == [CLS_ID, v.id("chest"), v.id("pain"), PAD_ID, PAD_ID]
    assert ex.mask == [1, 1, 1, 0, 0]


def test_encode_truncates():
    v = build_vocab(["w"])
    ex = encode(" ".join(["w"] * 300), v, max_len=256)
    assert len(ex.ids) == 257
    assert all(m == 1 for m in ex.mask)


def test_encode_unknown_token():
    v = build_vocab(["chest pain"])
    ex = encode("chest cramps", v, max_len=3)
    assert ex.ids[2] == UNK_ID


def test_encode_empty_text():
    ex = encode("", build_vocab(["a"]), max_len=3)
    assert ex.ids == [CLS_ID, 0, 0, 0] and ex.mask == [1, 0, 0, 0]


words = st.lists(st.sampled_from(["chest", "pain", "blue", "lips", "headache", "!", "ok"]),
                 min_size=0, max_size=12)


@settings(max_examples=50, deadline=None)
@given(words)
def test_encode_decode_round_trip(toks):
    v = build_vocab(["chest pain blue lips headache ! ok"])
    text = " ".join(toks)
    ex = encode(text, v, max_len=16)
    assert decode(ex.ids, v) == tokenize(text)
    assert ex.mask[0] == 1
    n = sum(ex.mask)
    assert ex.mask == [1] * n + [0] * (len(ex.mask) - n)
    assert max(ex.ids) < len(v)


def _write(tmp_path, lines, name="d.jsonl"):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


def test_load_jsonl(tmp_path):
    p = _write(tmp_path, [json.dumps({"text": "hi", "label": "medium"}),
                          json.dumps({"text": "chest pain", "label": "urgent"})])
    ds = load_jsonl(p, NAMES)
    assert ds.examples == [("hi", 1), ("chest pain", 2)]


def test_load_jsonl_malformed_line_number(tmp_path):
    p = _write(tmp_path, [json.dumps({"text": "hi", "label": "medium"}), "{oops"])
    with pytest.raises(ValueError, match=":2:"):
        load_jsonl(p, NAMES)


def test_load_jsonl_unknown_label_lists_names(tmp_path):
    p = _write(tmp_path, [json.dumps({"text": "hi", "label": "severe"})])
    with pytest.raises(ValueError, match="non-urgent"):
        load_jsonl(p, NAMES)


def test_load_keywords(tmp_path):
    p = tmp_path / "kw.json"
    p.write_text(json.dumps({"urgent": ["chest pain"]}))
    assert load_keywords(p) == {"urgent": ["chest pain"]}
    p.write_text(json.dumps({"urgent": "chest pain"}))
    with pytest.raises(ValueError):
        load_keywords(p)


def stratified_oracle(counts, frac):
    # nearest-integer share per class, a singleton class stays in training
    return [0 if n <= 1 else min(n, int(n * frac + 0.5)) for n in counts]


def test_stratified_counts_on_reference_cohort():
    expected = stratified_oracle([631, 955, 170], 0.2)
    assert expected == [126, 191, 34]
    assert stratified_test_counts([631, 955, 170], 0.2) == expected


def _dataset(counts):
    return LabeledDataset([(f"m{c}_{i}", c) for c, n in enumerate(counts) for i in range(n)], NAMES)


def test_split_reference_cohort():
    ds = _dataset([631, 955, 170])
    train, test = split(ds, 0.2, Rng(0))
    assert test.class_counts() == [126, 191, 34]
    assert train.class_counts() == [505, 764, 136]
    assert not set(train.texts) & set(test.texts)


def test_split_singleton_class_goes_to_train():
    train, test = split(_dataset([10, 10, 1]), 0.2, Rng(0))
    assert test.class_counts()[2] == 0 and train.class_counts()[2] == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 60), min_size=2, max_size=4), st.floats(0.05, 0.95))
def test_split_proportions_within_one(counts, frac):
    names = [f"c{i}" for i in range(len(counts))]
    ds = LabeledDataset([(f"{c}-{i}", c) for c, n in enumerate(counts) for i in range(n)], names)
    _, test = split(ds, frac, Rng(1))
    for n, k in zip(counts, test.class_counts()):
        assert abs(k - n * frac) <= 1


def test_split_frac_validation():
    with pytest.raises(ValueError):
        split(_dataset([3, 3, 3]), 1.0, Rng(0))


def test_batches_sizes():
    ds = _dataset([10, 10, 0])
    v = build_vocab(ds)
    sizes = [len(b) for b in batches(ds, v, 4, 8, Rng(0))]
    assert sizes == [8, 8, 4]


def test_batches_are_permutation_each_epoch():
    ds = _dataset([7, 5, 3])
    v = build_vocab(ds)
    rng = Rng(3)
    for _ in range(3):
        seen = np.concatenate([b.index for b in batches(ds, v, 4, 4, rng)])
        assert sorted(seen.tolist()) == list(range(len(ds)))
        labels = np.concatenate([b.labels for b in batches(ds, v, 4, 4, rng)])
        assert sorted(labels.tolist()) == sorted(ds.labels.tolist())


def test_batch_arrays_shape():
    ds = _dataset([3, 2, 0])
    v = build_vocab(ds)
    b = next(batches(ds, v, 6, 5))
    assert b.ids.shape == (5, 7) and b.mask.shape == (5, 7)
    assert (b.ids[:, 0] == CLS_ID).all()


def test_dataset_rejects_bad_labels():
    with pytest.raises(ValueError):
        LabeledDataset([("x", 3)], NAMES)
    with pytest.raises(ValueError):
        LabeledDataset([], ["only"])
