"""Synthetic keyword-triage corpus for exercising the full pipeline.

Messages are runs of noise words; "medium" and "urgent" messages also carry
one or two keyword phrases of their class, "non-urgent" messages carry none.
Default class sizes follow the 631/955/170 imbalance scaled to 1500 messages.
"""
from __future__ import annotations

from .rng import Rng
from .text import LabeledDataset, tokenize

LABEL_NAMES = ["non-urgent", "medium", "urgent"]

KEYWORDS = {
    "medium": ["loss of coordination", "dizziness", "near syncope", "leg swelling", "headache"],
    "urgent": ["blue lips", "chest pain", "disorientation", "paralysis", "loss of consciousness"],
}

REFERENCE_COUNTS = (631, 955, 170)


def class_sizes(n_messages: int, proportions=REFERENCE_COUNTS) -> list[int]:
    """Split ``n_messages`` in the given proportions (largest remainder)."""
    total = sum(proportions)
    raw = [n_messages * p / total for p in proportions]
    sizes = [int(r) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (sizes[i] - raw[i], i))
    for i in order[:n_messages - sum(sizes)]:
        sizes[i] += 1
    return sizes


def noise_words(vocab_size: int = 200, keywords=KEYWORDS) -> list[str]:
    """Filler words so that filler plus keyword tokens make ``vocab_size`` distinct words."""
    kw_tokens = {t for phrases in keywords.values() for ph in phrases for t in tokenize(ph)}
    n = vocab_size - len(kw_tokens)
    if n < 1:
        raise ValueError("vocabulary too small for the keyword set")
    return [f"w{i:03d}" for i in range(n)]


def make_dataset(n_messages: int = 1500, vocab_size: int = 200, seed: int = 0,
                 noise_range=(20, 40), keywords_per_message=(1, 2),
                 sizes=None) -> LabeledDataset:
    rng = Rng(seed)
    fillers = noise_words(vocab_size)
    sizes = sizes or class_sizes(n_messages)
    examples = []
    for label, n in enumerate(sizes):
        phrases = KEYWORDS.get(LABEL_NAMES[label], [])
        for _ in range(n):
            words = [fillers[i] for i in rng.integers(0, len(fillers), int(rng.integers(
                noise_range[0], noise_range[1] + 1)))]
            if phrases:
                k = int(rng.integers(keywords_per_message[0], keywords_per_message[1] + 1))
                for _ in range(k):
                    pos = int(rng.integers(0, len(words) + 1))
                    words.insert(pos, phrases[int(rng.integers(0, len(phrases)))])
            examples.append((" ".join(words), label))
    order = rng.permutation(len(examples))
    return LabeledDataset([examples[i] for i in order], list(LABEL_NAMES))
