"""Training objective: cross-entropy plus truncated temporal smoothing,
summed over all prediction heads with equal weight."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .model import ModelOutput


@dataclass
class LossConfig:
    smoothing_weight: float = 0.638  # lambda; 0.933 for the L variant
    tau: float = 4.0  # bound on adjacent-frame log-probability differences
    detach_prev_frame: bool = False  # stop the gradient through the t-1 term

    def __post_init__(self):
        if self.smoothing_weight < 0:
            raise ValueError("smoothing weight must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    @classmethod
    def for_variant(cls, variant: str) -> "LossConfig":
        return cls(smoothing_weight=0.933 if variant == "L" else 0.638)


def head_loss(y_hat: Tensor, labels: np.ndarray, cfg: LossConfig) -> Tensor:
    """Mean cross-entropy plus the truncated smoothing term for one head.

    y_hat holds per-frame class probabilities (C, T).  The smoothing term
    averages min(tau, |log y[t,c] - log y[t-1,c]|)^2 over all classes and
    frames t >= 1, normalized by T*C per the loss definition (not by the
    number of difference terms).
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_classes, n_frames = y_hat.shape
    if labels.shape != (n_frames,):
        raise ValueError(f"labels length {labels.shape} does not match "
                         f"head output length {n_frames}")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("label id outside [0, C)")
    ce = -(y_hat.take_per_column(labels).log().mean())
    if cfg.smoothing_weight == 0.0 or n_frames < 2:
        return ce
    log_p = y_hat.log()
    prev = log_p.narrow(1, 0, n_frames - 1)
    if cfg.detach_prev_frame:
        prev = Tensor(prev.data.copy(), dtype=prev.data.dtype)
    delta = (log_p.narrow(1, 1, n_frames - 1) - prev).abs().clamp_max(cfg.tau)
    smooth = delta.square().sum() * (1.0 / (n_frames * n_classes))
    return ce + smooth * cfg.smoothing_weight


def total_loss(heads: list[tuple[Tensor, np.ndarray]], cfg: LossConfig) -> Tensor:
    """Unweighted sum of head losses (ISR heads, stage head, refinements)."""
    if not heads:
        raise ValueError("no prediction heads given")
    total = None
    for y_hat, labels in heads:
        term = head_loss(y_hat, labels, cfg)
        total = term if total is None else total + term
    return total


def model_loss(output: ModelOutput, labels_work: np.ndarray,
               cfg: LossConfig) -> Tensor:
    """Total loss of a forward pass; all heads share the working-resolution
    labels (the input labels downsampled by the primary factor)."""
    return total_loss([(h, labels_work) for h in output.heads], cfg)
