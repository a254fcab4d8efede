"""Trainable layers built on :mod:`emocue.neural.tensor`."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, StructuralError
from .tensor import Tensor, as_tensor, concat


class Module:
    """Parameter container. Attributes that are trainable tensors, modules or
    lists of modules are discovered in assignment order."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise StructuralError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, p in own.items():
            if state[name].shape != p.shape:
                raise StructuralError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=np.float64)


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = _uniform(rng, in_features, (in_features, out_features))
        self.bias = _uniform(rng, in_features, (out_features,))

    def __call__(self, x) -> Tensor:
        return as_tensor(x) @ self.weight + self.bias


class MLP(Module):
    """Linear -> tanh -> Linear."""

    def __init__(self, in_features: int, hidden: int, out_features: int, rng: np.random.Generator):
        self.inner = Linear(in_features, hidden, rng)
        self.outer = Linear(hidden, out_features, rng)

    def __call__(self, x) -> Tensor:
        return self.outer(self.inner(x).tanh())


class Embedding(Module):
    """Row lookup table, ``table[index]``."""

    def __init__(self, num: int, dim: int, rng: np.random.Generator):
        self.num = num
        self.table = Tensor(rng.normal(0.0, 1.0, size=(num, dim)), requires_grad=True)

    def __call__(self, index) -> Tensor:
        idx = np.asarray(index, dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= self.num):
            raise DomainError(f"embedding index outside [0, {self.num - 1}]")
        return self.table[idx]


class EmotionEmbedding(Module):
    """Emotion dictionary ``E`` of shape (D, K); label k selects column k."""

    def __init__(self, dim: int, n_emotions: int, rng: np.random.Generator):
        self.n_emotions = n_emotions
        self.matrix = Tensor(rng.normal(0.0, 1.0, size=(dim, n_emotions)), requires_grad=True)

    def __call__(self, labels) -> Tensor:
        k = np.asarray(labels, dtype=int)
        if k.size and (k.min() < 0 or k.max() >= self.n_emotions):
            raise DomainError(f"emotion label outside [0, {self.n_emotions - 1}]")
        if k.ndim == 0:
            return self.matrix[:, int(k)]
        return self.matrix[:, k].T


class LSTMCell(Module):
    """One recurrent step; gate order input, forget, cell, output."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.w_input = _uniform(rng, hidden_size, (input_size, 4 * hidden_size))
        self.w_hidden = _uniform(rng, hidden_size, (hidden_size, 4 * hidden_size))
        self.bias = _uniform(rng, hidden_size, (4 * hidden_size,))

    def initial_state(self, batch: int) -> tuple[Tensor, Tensor]:
        zeros = np.zeros((batch, self.hidden_size))
        return Tensor(zeros), Tensor(zeros)

    def __call__(self, x, state) -> tuple[Tensor, Tensor]:
        h, c = state
        H = self.hidden_size
        gates = as_tensor(x) @ self.w_input + h @ self.w_hidden + self.bias
        i = gates[:, :H].sigmoid()
        f = gates[:, H : 2 * H].sigmoid()
        g = gates[:, 2 * H : 3 * H].tanh()
        o = gates[:, 3 * H :].sigmoid()
        c = f * c + i * g
        h = o * c.tanh()
        return h, c


class BiLSTMEncoder(Module):
    """Bidirectional recurrence over a fixed window of frames.

    Input (batch, window, features); output the concatenated final hidden
    states of the forward and backward passes, (batch, 2 * hidden).
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.forward_cell = LSTMCell(input_size, hidden_size, rng)
        self.backward_cell = LSTMCell(input_size, hidden_size, rng)

    def __call__(self, window) -> Tensor:
        window = as_tensor(window)
        batch, steps = window.shape[0], window.shape[1]
        fwd = self.forward_cell.initial_state(batch)
        bwd = self.backward_cell.initial_state(batch)
        for t in range(steps):
            fwd = self.forward_cell(window[:, t, :], fwd)
            bwd = self.backward_cell(window[:, steps - 1 - t, :], bwd)
        return concat([fwd[0], bwd[0]], axis=-1)
