from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import UsageError
from .tensor import Tensor, no_grad


def grad_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Largest relative gap between reverse-mode and central-difference gradients.

    ``fn`` rebuilds the graph from the current parameter values and must return
    a scalar. The relative error of one entry is ``|a - n| / max(|a|, |n|, floor)``.
    ``max_entries`` samples that many entries per parameter (seeded) instead of
    probing every one.
    """
    for p in params:
        p.zero_grad()
    out = fn()
    if out.size != 1:
        raise UsageError(f"grad_check needs a scalar output, got shape {out.shape}")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            entries = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                entries = rng.choice(flat.size, size=max_entries, replace=False)
            for i in entries:
                original = flat[i]
                flat[i] = original + step
                up = fn().item()
                flat[i] = original - step
                down = fn().item()
                flat[i] = original
                numeric = (up - down) / (2.0 * step)
                exact = a.reshape(-1)[i]
                rel = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
                worst = max(worst, rel)
    for p in params:
        p.zero_grad()
    return worst
