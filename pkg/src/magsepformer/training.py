"""Adam, global-norm clipping, plateau halving and a small training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateInputError
from .pipeline import EnhancementModel, enhance, si_sdr, si_sdr_loss
from .tensor import Tape, Tensor

DEFAULT_LR = 1e-3
DEFAULT_CLIP = 5.0
DEFAULT_PATIENCE = 5
IMPROVEMENT_THRESHOLD = 1e-4


class Adam:
    def __init__(self, params: list[Tensor], lr: float = DEFAULT_LR, betas=(0.9, 0.999),
                 eps: float = 1e-8):
        if lr <= 0:
            raise ConfigError("learning rate must be positive")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def global_grad_norm(params) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None)))


def clip_grad_norm(params, max_norm: float = DEFAULT_CLIP) -> float:
    """Scale all gradients together so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    if max_norm <= 0:
        raise ConfigError("max_norm must be positive")
    norm = global_grad_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


class PlateauScheduler:
    """Halve the learning rate after ``patience`` epochs without improvement.

    An epoch improves when its loss is more than ``threshold`` below the best
    loss seen so far. The counter restarts after every halving.
    """

    def __init__(self, optimizer: Adam, patience: int = DEFAULT_PATIENCE, factor: float = 0.5,
                 threshold: float = IMPROVEMENT_THRESHOLD):
        self.optimizer = optimizer
        self.patience = patience
        self.factor = factor
        self.threshold = threshold
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, loss: float) -> bool:
        """Record one epoch loss; returns True when the rate was halved."""
        if loss < self.best - self.threshold:
            self.best = loss
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.optimizer.lr *= self.factor
            self.bad_epochs = 0
            return True
        return False


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)


def train_step(model: EnhancementModel, optimizer: Adam, noisy, clean, clip: float) -> tuple[float, float]:
    optimizer.zero_grad()
    with Tape() as tape:
        loss = si_sdr_loss(enhance(model, noisy), clean)
    if not tape.nodes:
        # estimate already at the SI-SDR cap: nothing to learn from this pair
        return loss.item(), 0.0
    tape.backward(loss)
    norm = clip_grad_norm(optimizer.params, clip)
    optimizer.step()
    return loss.item(), norm


def train_toy(model: EnhancementModel, dataset, steps: int, lr: float = DEFAULT_LR,
              clip: float = DEFAULT_CLIP, patience: int = DEFAULT_PATIENCE,
              validation=None, log=None) -> TrainResult:
    """Train on (noisy, clean) pairs, one pair per step, cycling through the set.

    At every epoch end the plateau scheduler sees the mean validation loss, or
    the mean training loss of that epoch when no validation pairs are given.
    """
    dataset = list(dataset)
    if not dataset:
        raise DegenerateInputError("training set is empty")
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    optimizer = Adam(model.parameters(), lr)
    scheduler = PlateauScheduler(optimizer, patience)
    result = TrainResult()
    epoch_losses = []
    for step in range(steps):
        noisy, clean = dataset[step % len(dataset)]
        loss, norm = train_step(model, optimizer, noisy, clean, clip)
        result.losses.append(loss)
        result.learning_rates.append(optimizer.lr)
        result.grad_norms.append(norm)
        epoch_losses.append(loss)
        if log is not None:
            log(step, loss, optimizer.lr)
        if len(epoch_losses) == len(dataset):
            if validation:
                score = float(np.mean([evaluate_loss(model, n, c) for n, c in validation]))
            else:
                score = float(np.mean(epoch_losses))
            scheduler.step(score)
            epoch_losses = []
    return result


def evaluate_loss(model: EnhancementModel, noisy, clean) -> float:
    return -si_sdr(enhance(model, noisy).data, clean)


def si_sdr_improvement(model: EnhancementModel, noisy, clean) -> float:
    return si_sdr(enhance(model, noisy).data, clean) - si_sdr(noisy, clean)
