"""Training losses."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, StructuralError
from .tensor import Tensor, as_tensor, log_softmax


def weighted_l1(pred, target, y_weight: float = 2.0) -> Tensor:
    """Mean over every coordinate of ``|dx| + y_weight * |dy| + |dz|``.

    Works on any array whose last axis holds (x, y, z).
    """
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape or pred.shape[-1] != 3:
        raise StructuralError(f"weighted_l1 shapes {pred.shape} vs {target.shape}")
    if y_weight < 1:
        raise DomainError(f"y_weight must be >= 1, got {y_weight}")
    weights = np.array([1.0, y_weight, 1.0])
    return ((pred - target).abs() * weights).mean()


def l1(pred, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise StructuralError(f"l1 shapes {pred.shape} vs {target.shape}")
    return (pred - target).abs().mean()


def _check_targets(targets, n: int, classes: int) -> np.ndarray:
    t = np.atleast_1d(np.asarray(targets, dtype=int))
    if t.shape != (n,):
        raise StructuralError(f"expected {n} targets, got shape {t.shape}")
    if t.min() < 0 or t.max() >= classes:
        raise DomainError(f"target class outside [0, {classes - 1}]")
    return t


def cross_entropy(probabilities, targets) -> Tensor:
    """Batch mean of ``-log p[target]`` for probability rows (N, C) or one row (C,)."""
    p = as_tensor(probabilities)
    if p.data.ndim == 1:
        p = p.reshape(1, -1)
    t = _check_targets(targets, p.shape[0], p.shape[1])
    return -(p[np.arange(len(t)), t].log().mean())


def softmax_cross_entropy(logits, targets) -> Tensor:
    """``cross_entropy(softmax(logits), targets)`` computed through log-softmax."""
    z = as_tensor(logits)
    if z.data.ndim == 1:
        z = z.reshape(1, -1)
    t = _check_targets(targets, z.shape[0], z.shape[1])
    return -(log_softmax(z, axis=-1)[np.arange(len(t)), t].mean())
