"""Central finite-difference gradient checks in float64."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward


def numerical_grad(loss_fn, param: Tensor, h: float = 1e-3) -> np.ndarray:
    """Central differences of the scalar ``loss_fn()`` with respect to ``param.data``."""
    grad = np.zeros(param.shape, dtype=np.float64)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(loss_fn().data)
        flat[i] = orig - h
        down = float(loss_fn().data)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``; 0 when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-12:
        return float(np.linalg.norm(analytic - numeric))
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(loss_fn, params, h: float = 1e-3) -> dict[str, float]:
    """Relative error between backprop and finite differences for each tensor in ``params``.

    ``params`` maps names to float64 tensors with ``requires_grad`` set; the
    loss is rebuilt by ``loss_fn()`` on every evaluation.
    """
    for p in params.values():
        if p.dtype != np.float64:
            raise TypeError("gradient checks need float64 tensors")
        p.grad = None
    backward(loss_fn())
    errors = {}
    for name, p in params.items():
        analytic = np.zeros(p.shape) if p.grad is None else p.grad.astype(np.float64)
        errors[name] = relative_error(analytic, numerical_grad(loss_fn, p, h))
    return errors
