# core/optimizers.py
# Parameter updaters for the linear head

from dataclasses import dataclass
from enum import Enum
from typing import Dict

import numpy as np

from utils.errors import MarginModelError


class OptimizerKind(Enum):
    ADADELTA = "adadelta"
    SGD = "sgd"


@dataclass
class OptimizerConfig:
    """Optimizer settings; AdaDelta with lr=0.5, rho=0.9, eps=1e-6 by default"""
    kind: OptimizerKind = OptimizerKind.ADADELTA
    learning_rate: float = 0.5
    rho: float = 0.9
    eps: float = 1e-6
    epochs: int = 50
    batch_size: int = 32
    margin: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.kind, str):
            try:
                self.kind = OptimizerKind(self.kind.lower())
            except ValueError:
                raise MarginModelError(f"unknown optimizer '{self.kind}'")
        if self.learning_rate < 0:
            raise MarginModelError(f"learning rate must be non-negative, got {self.learning_rate}")
        if not 0.0 <= self.rho < 1.0:
            raise MarginModelError(f"rho must lie in [0,1), got {self.rho}")
        if self.eps <= 0:
            raise MarginModelError(f"eps must be positive, got {self.eps}")
        if self.epochs < 0 or self.batch_size < 1:
            raise MarginModelError(f"invalid schedule: epochs={self.epochs}, batch_size={self.batch_size}")
        if self.margin <= 0:
            raise MarginModelError(f"margin must be positive, got {self.margin}")


class SGD:
    """Plain gradient descent: p <- p - lr * g"""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        if self.learning_rate == 0:
            return
        for name, grad in grads.items():
            params[name] -= self.learning_rate * grad


class AdaDelta:
    """
    AdaDelta updates with running averages of squared gradients and squared updates.

    E[g^2] <- rho E[g^2] + (1-rho) g^2
    delta  <- sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    p      <- p - lr * delta
    E[dx^2] <- rho E[dx^2] + (1-rho) delta^2
    """

    def __init__(self, learning_rate: float = 0.5, rho: float = 0.9, eps: float = 1e-6):
        self.learning_rate = learning_rate
        self.rho = rho
        self.eps = eps
        self.state: Dict[str, Dict[str, np.ndarray]] = {}
        self.steps = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        self.steps += 1
        for name, grad in grads.items():
            state = self.state.setdefault(name, {
                "square_avg": np.zeros_like(grad),
                "acc_delta": np.zeros_like(grad),
            })
            square_avg = state["square_avg"]
            acc_delta = state["acc_delta"]
            square_avg *= self.rho
            square_avg += (1.0 - self.rho) * grad * grad
            delta = np.sqrt(acc_delta + self.eps) / np.sqrt(square_avg + self.eps) * grad
            if self.learning_rate != 0:
                params[name] -= self.learning_rate * delta
            acc_delta *= self.rho
            acc_delta += (1.0 - self.rho) * delta * delta


def build_optimizer(config: OptimizerConfig):
    if config.kind is OptimizerKind.ADADELTA:
        return AdaDelta(config.learning_rate, config.rho, config.eps)
    return SGD(config.learning_rate)
