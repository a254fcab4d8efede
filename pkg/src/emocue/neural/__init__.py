"""Minimal differentiable-computation core: tensors with reverse-mode
gradients, recurrent and linear layers, losses, Adam, checkpoints."""

from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import MLP, BiLSTMEncoder, Embedding, EmotionEmbedding, Linear, LSTMCell, Module
from .losses import cross_entropy, l1, softmax_cross_entropy, weighted_l1
from .optim import Adam
from .tensor import Tensor, concat, log_softmax, no_grad, softmax, stack

__all__ = [
    "Adam",
    "BiLSTMEncoder",
    "Embedding",
    "EmotionEmbedding",
    "LSTMCell",
    "Linear",
    "MLP",
    "Module",
    "Tensor",
    "checkpoint_hash",
    "concat",
    "cross_entropy",
    "grad_check",
    "l1",
    "load_checkpoint",
    "log_softmax",
    "no_grad",
    "save_checkpoint",
    "softmax",
    "softmax_cross_entropy",
    "stack",
    "weighted_l1",
]
