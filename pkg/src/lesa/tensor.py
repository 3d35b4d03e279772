"""Dense numpy-backed tensors with reverse-mode gradient accumulation.

Tensors hold rank 0-3 arrays (rank 0 only for scalar losses). Storage is
float32 by default; float64 arrays are kept as float64 so gradient checks can
run the same graph in double precision.

Every differentiable op records its parents and a closure mapping the output
gradient to one gradient per parent. ``backward`` walks the graph in reverse
topological order and accumulates into ``.grad`` of leaf tensors that have
``requires_grad`` set.
"""
from __future__ import annotations

import contextlib
import math

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, frozen teachers)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class ShapeError(ValueError):
    pass


class DegenerateRowError(ValueError):
    pass


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype == np.float64 or arr.dtype == np.float32:
        return arr
    return arr.astype(np.float32)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        if self.data.ndim > 3:
            raise ShapeError(f"rank {self.data.ndim} tensors are not supported (max 3)")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __getitem__(self, idx):
        return take(self, idx)

    def backward(self) -> None:
        backward(self)


class Parameter(Tensor):
    """A named trainable tensor."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _result(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _sum_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # reduce leading broadcast axes back to the operand's shape
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad


def _check_trailing(a: Tensor, b: Tensor, opname: str) -> None:
    if a.shape == b.shape:
        return
    if b.data.ndim < a.data.ndim and a.shape[a.data.ndim - b.data.ndim:] == b.shape:
        return
    raise ShapeError(f"{opname}: incompatible shapes {a.shape} and {b.shape}")


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may match only the trailing axes of ``a`` (bias add)."""
    _check_trailing(a, b, "add")

    def bw(g):
        return g, _sum_to(g, b.shape)

    return _result(a.data + b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_trailing(a, b, "mul")

    def bw(g):
        return g * b.data, _sum_to(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * a.data.dtype.type(c), (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _result(np.where(pos, x.data, 0).astype(x.dtype, copy=False), (x,),
                   lambda g: (g * pos,))


def dropout(x: Tensor, p: float, rng, training: bool) -> Tensor:
    """Inverted dropout: zero with probability ``p``, rescale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


def masked_fill(a: Tensor, where: np.ndarray, value: float) -> Tensor:
    """Set entries where ``where`` is true to ``value``; no gradient flows to them."""
    where = np.broadcast_to(np.asarray(where, dtype=bool), a.shape)
    keep = ~where
    return _result(np.where(where, a.dtype.type(value), a.data), (a,),
                   lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# shape ops


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.data.ndim < 2:
        raise ShapeError(f"transpose needs rank >= 2, got shape {a.shape}")
    return _result(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def take(a: Tensor, idx) -> Tensor:
    """Basic slicing/indexing with gradient scattered back into place."""
    out = a.data[idx]

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _result(np.ascontiguousarray(out), (a,), bw)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: list, axis: int) -> Tensor:
    arrays = [t.data for t in tensors]
    ref = arrays[0].shape
    ax = axis % len(ref)
    for arr in arrays[1:]:
        if arr.ndim != len(ref) or any(arr.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat along axis {axis}: incompatible shapes {ref} and {arr.shape}")
    bounds = np.cumsum([arr.shape[ax] for arr in arrays])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _result(np.concatenate(arrays, axis=ax), tuple(tensors), bw)


def concat_rows(tensors: list) -> Tensor:
    """Stack matrices vertically (axis -2); column counts must agree."""
    return concat(tensors, axis=-2)


def concat_cols(tensors: list) -> Tensor:
    return concat(tensors, axis=-1)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    Rank-3 operands carry a leading batch axis; a rank-2 operand is shared
    across the batch and receives the batch-summed gradient.
    """
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    if a.data.ndim == 3 and b.data.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ShapeError(f"matmul: batch sizes differ in {a.shape} and {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _sum_to(ga, a.shape), _sum_to(gb, b.shape)

    return _result(a.data @ b.data, (a, b), bw)


# ---------------------------------------------------------------------------
# reductions and normalisation


def sum_all(a: Tensor) -> Tensor:
    return _result(np.asarray(a.data.sum(), dtype=a.dtype), (a,),
                   lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return _result(np.asarray(a.data.mean(), dtype=a.dtype), (a,),
                   lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def row_softmax(a: Tensor) -> Tensor:
    """Softmax along the last axis with per-row max subtraction.

    ``-inf`` entries act as masks and map to exactly 0. A row with no finite
    entry raises :class:`DegenerateRowError`.
    """
    mx = a.data.max(axis=-1, keepdims=True)
    if np.isneginf(mx).any():
        raise DegenerateRowError("softmax row has no finite entry (fully masked)")
    e = np.exp(a.data - mx)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (a,), bw)


def log_softmax(a: Tensor) -> Tensor:
    mx = a.data.max(axis=-1, keepdims=True)
    if np.isneginf(mx).any():
        raise DegenerateRowError("log_softmax row has no finite entry")
    shifted = a.data - mx
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse
    sm = np.exp(y)

    def bw(g):
        return (g - sm * g.sum(axis=-1, keepdims=True),)

    return _result(y, (a,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, epsilon: float = 1e-5) -> Tensor:
    """Normalise each row over the last axis (population variance), then gain*x + bias."""
    D = x.shape[-1]
    if D < 2:
        raise ShapeError(f"layer_norm needs at least 2 features, got {D}")
    if gain.shape != (D,) or bias.shape != (D,):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match width {D}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(epsilon))
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        ggain = (g * xhat).reshape(-1, D).sum(axis=0)
        gbias = g.reshape(-1, D).sum(axis=0)
        return gx, ggain, gbias

    return _result(out, (x, gain, bias), bw)


def columnwise_max(a: Tensor) -> tuple[Tensor, np.ndarray]:
    """Max over rows (axis -2) for every column, keeping the row axis.

    Returns the ``1 x n`` (or ``B x 1 x n``) maxima and the winning row index
    per column. Ties go to the smallest row index; gradient flows only to the
    winning entry.
    """
    if a.shape[-2] < 1:
        raise ShapeError("columnwise_max needs at least one row")
    arg = np.argmax(a.data, axis=-2)  # first occurrence on ties
    vals = np.take_along_axis(a.data, arg[..., None, :], axis=-2)

    def bw(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, arg[..., None, :], g, axis=-2)
        return (full,)

    return _result(vals, (a,), bw), arg


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` by integer ids (any rank up to 2)."""
    ids = np.asarray(ids, dtype=np.int64)
    V = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise IndexError(f"embedding id out of range [0, {V})")

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _result(table.data[ids], (table,), bw)


# ---------------------------------------------------------------------------
# losses


def cross_entropy(logits: Tensor, labels, weights=None) -> Tensor:
    """Mean softmax cross-entropy of ``B x C`` logits against integer labels.

    ``weights`` (length C) reweights each example by its true class; the mean
    is then taken over the weight sum.
    """
    labels = np.asarray(labels, dtype=np.int64)
    B, C = logits.shape
    if labels.shape != (B,):
        raise ShapeError(f"cross_entropy: {B} logit rows but labels of shape {labels.shape}")
    mx = logits.data.max(axis=-1, keepdims=True)
    shifted = logits.data - mx
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    w = np.ones(B, dtype=logits.dtype) if weights is None else np.asarray(weights, dtype=logits.dtype)[labels]
    denom = w.sum()
    loss = -(w * logp[np.arange(B), labels]).sum() / denom

    def bw(g):
        p = np.exp(logp)
        p[np.arange(B), labels] -= 1
        return (g * p * (w / denom)[:, None],)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), bw)


def soft_cross_entropy(logits: Tensor, target_probs: np.ndarray) -> Tensor:
    """Mean over rows of ``-sum(target * log_softmax(logits))``; targets are constants."""
    target = np.asarray(target_probs, dtype=logits.dtype)
    if target.shape != logits.shape:
        raise ShapeError(f"soft_cross_entropy: logits {logits.shape} vs targets {target.shape}")
    B = logits.shape[0]
    mx = logits.data.max(axis=-1, keepdims=True)
    shifted = logits.data - mx
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    loss = -(target * logp).sum() / B

    def bw(g):
        p = np.exp(logp)
        return (g * (p * target.sum(axis=-1, keepdims=True) - target) / B,)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), bw)


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked leaf tensor."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.array(g, dtype=node.dtype, copy=True).reshape(node.shape)
            else:
                node.grad += g.reshape(node.shape)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def inv_sqrt(d: int) -> float:
    return 1.0 / math.sqrt(d)
