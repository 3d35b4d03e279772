"""Embeddings and the transformer encoder stack in Standard and LESA attention modes.

Shapes: a single sequence is ``T x D`` with ``T = L + 1`` (row 0 is [CLS]); a
batch adds a leading axis, ``B x T x D``. ``mask`` is 1 for live positions and
0 for padding, shaped ``(T,)`` or ``(B, T)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .tensor import (
    Parameter,
    Tensor,
    add,
    columnwise_max,
    concat_cols,
    concat_rows,
    dropout,
    embedding,
    layer_norm,
    masked_fill,
    matmul,
    relu,
    row_softmax,
    scale,
    transpose,
)

NEG_INF = -np.inf


class AttentionMode(str, enum.Enum):
    STANDARD = "standard"
    LESA = "lesa"


@dataclass
class EmbeddingTable:
    token_emb: Parameter  # V x D
    pos_emb: Parameter    # (max_len+1) x D

    def parameters(self) -> list[Parameter]:
        return [self.token_emb, self.pos_emb]


@dataclass
class AttentionHeadParams:
    w_k: Parameter  # D x d
    w_q: Parameter
    w_v: Parameter

    def parameters(self) -> list[Parameter]:
        return [self.w_k, self.w_q, self.w_v]


@dataclass
class EncoderLayerParams:
    heads: list[AttentionHeadParams]
    w_out: Parameter   # (h*d) x D
    w_1: Parameter     # D x D_ff
    b_1: Parameter
    w_2: Parameter     # D_ff x D
    b_2: Parameter
    ln1_gain: Parameter
    ln1_bias: Parameter
    ln2_gain: Parameter
    ln2_bias: Parameter

    def parameters(self) -> list[Parameter]:
        out = []
        for h in self.heads:
            out.extend(h.parameters())
        out += [self.w_out, self.w_1, self.b_1, self.w_2, self.b_2,
                self.ln1_gain, self.ln1_bias, self.ln2_gain, self.ln2_bias]
        return out


def init_layer(prefix: str, D: int, d: int, h: int, D_ff: int, rng, std: float = 0.02,
               dtype=np.float32) -> EncoderLayerParams:
    """Normal(0, std) projections, zero biases, unit layer-norm gains."""
    def w(name, shape):
        return Parameter(f"{prefix}.{name}", rng.normal(shape, std, dtype))

    def const(name, n, value):
        return Parameter(f"{prefix}.{name}", np.full(n, value, dtype=dtype))

    heads = [AttentionHeadParams(w(f"heads.{i}.w_k", (D, d)), w(f"heads.{i}.w_q", (D, d)),
                                 w(f"heads.{i}.w_v", (D, d))) for i in range(h)]
    return EncoderLayerParams(
        heads=heads,
        w_out=w("w_out", (h * d, D)),
        w_1=w("w_1", (D, D_ff)), b_1=const("b_1", D_ff, 0.0),
        w_2=w("w_2", (D_ff, D)), b_2=const("b_2", D, 0.0),
        ln1_gain=const("ln1_gain", D, 1.0), ln1_bias=const("ln1_bias", D, 0.0),
        ln2_gain=const("ln2_gain", D, 1.0), ln2_bias=const("ln2_bias", D, 0.0),
    )


def _pad_mask(mask) -> np.ndarray:
    """Boolean 'is padding' array with a singleton query axis for broadcasting."""
    pad = np.asarray(mask) == 0
    return pad[..., None, :]


def embed(ids, mask, table: EmbeddingTable) -> Tensor:
    """Token plus position embeddings for each position of ``ids``."""
    ids = np.asarray(ids, dtype=np.int64)
    T = ids.shape[-1]
    capacity = table.pos_emb.shape[0]
    if T > capacity:
        raise ValueError(f"sequence of {T} positions exceeds positional capacity {capacity}")
    tok = embedding(table.token_emb, ids)
    pos = embedding(table.pos_emb, np.arange(T))
    return add(tok, pos)


def head_kqv(X: Tensor, head: AttentionHeadParams) -> tuple[Tensor, Tensor, Tensor]:
    return matmul(X, head.w_k), matmul(X, head.w_q), matmul(X, head.w_v)


def scores_standard(K: Tensor, Q: Tensor, mask) -> Tensor:
    """``Q K^T / sqrt(d)`` with padded key columns set to -inf."""
    return _scale_and_mask(matmul(Q, transpose(K)), K.shape[-1], mask)


def _scale_and_mask(raw: Tensor, d: int, mask) -> Tensor:
    A = scale(raw, 1.0 / np.sqrt(d))
    if mask is None:
        return A
    return masked_fill(A, _pad_mask(mask), NEG_INF)


def label_cross_attention(X_l: Tensor, W_Q: Tensor, K_w: Tensor, mask_w=None,
                          suppress: bool = False) -> Tensor:
    """Unscaled label-to-token scores ``(X_l W_Q) K_w^T``; padded token columns are -inf.

    ``suppress`` replaces every score by -inf, which turns LESA back into
    standard attention (used by the reduction checks).
    """
    A_l = matmul(matmul(X_l, W_Q), transpose(K_w))
    if suppress:
        return masked_fill(A_l, np.ones(A_l.shape, dtype=bool), NEG_INF)
    if mask_w is not None:
        A_l = masked_fill(A_l, _pad_mask(mask_w), NEG_INF)
    return A_l


def merge_cls_row(S: Tensor, A_l: Tensor) -> tuple[Tensor, np.ndarray]:
    """Columnwise max of ``[S; A_l]``.

    Returns ``S'`` and, per token column, the winning source row: 0 for the
    [CLS] query, ``c + 1`` for label ``c``. Ties resolve to ``S``.
    """
    if S.shape[-1] != A_l.shape[-1]:
        raise ValueError(f"column counts differ: S {S.shape} vs A_l {A_l.shape}")
    return columnwise_max(concat_rows([S, A_l]))


def scores_lesa(K: Tensor, Q: Tensor, X_l: Tensor, W_Q: Tensor, mask,
                suppress_labels: bool = False) -> tuple[Tensor, np.ndarray]:
    """Attention scores with the [CLS] -> token row replaced by the label-merged row.

    ``S`` and the label scores are merged unscaled and the result is scaled
    by ``1/sqrt(d)`` once. Every other entry is taken from the standard score
    matrix unchanged.
    """
    d = K.shape[-1]
    raw = matmul(Q, transpose(K))
    A = _scale_and_mask(raw, d, mask)
    K_w = K[..., 1:, :]
    mask_w = None if mask is None else np.asarray(mask)[..., 1:]
    # slice S from the full product so S' >= S holds bit for bit
    S = raw[..., 0:1, 1:]
    if mask_w is not None:
        S = masked_fill(S, _pad_mask(mask_w), NEG_INF)
    A_l = label_cross_attention(X_l, W_Q, K_w, mask_w, suppress=suppress_labels)
    S_prime, winners = merge_cls_row(S, A_l)
    row0 = concat_cols([A[..., 0:1, 0:1], scale(S_prime, 1.0 / np.sqrt(d))])
    return concat_rows([row0, A[..., 1:, :]]), winners


def attention_block(X: Tensor, layer: EncoderLayerParams, X_l: Tensor | None, mode, mask,
                    rng=None, training: bool = False, p: float = 0.0,
                    suppress_labels: bool = False, record: dict | None = None) -> Tensor:
    """Multi-head attention, output projection, dropout, then ``LayerNorm(X + O)``."""
    mode = AttentionMode(mode)
    outs = []
    probs, wins = [], []
    for head in layer.heads:
        K, Q, V = head_kqv(X, head)
        if mode is AttentionMode.LESA:
            if X_l is None:
                raise ValueError("LESA attention needs a label embedding")
            A, winners = scores_lesa(K, Q, X_l, head.w_q, mask, suppress_labels)
            wins.append(winners)
        else:
            A = scores_standard(K, Q, mask)
        P = row_softmax(A)
        if record is not None:
            probs.append(P.data)
        outs.append(matmul(P, V))
    O = matmul(concat_cols(outs) if len(outs) > 1 else outs[0], layer.w_out)
    O = dropout(O, p, rng, training)
    if record is not None:
        record.setdefault("attention", []).append(np.stack(probs, axis=-3))
        if wins:
            record.setdefault("winners", []).append(np.stack(wins, axis=-2))
    return layer_norm(add(X, O), layer.ln1_gain, layer.ln1_bias)


def ffn_block(U: Tensor, layer: EncoderLayerParams, rng=None, training: bool = False,
              p: float = 0.0) -> Tensor:
    """``LayerNorm(U + dropout(relu(U W_1 + b_1) W_2 + b_2))``."""
    hidden = relu(add(matmul(U, layer.w_1), layer.b_1))
    F = add(matmul(hidden, layer.w_2), layer.b_2)
    F = dropout(F, p, rng, training)
    return layer_norm(add(U, F), layer.ln2_gain, layer.ln2_bias)


def encoder_forward(X: Tensor, layers: list[EncoderLayerParams], X_l: Tensor | None, mode, mask,
                    rng=None, training: bool = False, p: float = 0.0,
                    suppress_labels: bool = False, record: dict | None = None) -> Tensor:
    """Apply every layer in order; row 0 of the result is the [CLS] representation."""
    if len(layers) < 1:
        raise ValueError("encoder needs at least one layer")
    H = X
    for layer in layers:
        U = attention_block(H, layer, X_l, mode, mask, rng, training, p, suppress_labels, record)
        H = ffn_block(U, layer, rng, training, p)
    return H
