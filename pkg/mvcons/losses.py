# -*- coding: utf-8 -*-
"""
Training objectives.

- classification_loss: cross-entropy against one-hot or soft targets, taken from
  logits through log-softmax.
- consistency_loss: squared L2 distance between paired latents, summed over the
  latent axis and averaged over the batch.
- combined_loss: L_class + lambda * L_cons.
"""

from typing import Union

import numpy as np

from . import functional as F
from .errors import ConfigurationError, DimensionError, EmptyDatasetError
from .tensor import Tensor, as_tensor

# --- Constants ---
CONSISTENCY_REDUCTIONS = ("sum", "mean")

Scalar = Union[Tensor, float]


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DimensionError(f"Labels must lie in [0, {num_classes}), got range "
                             f"[{labels.min()}, {labels.max()}]")
    return np.eye(num_classes)[labels]


def classification_loss(logits: Tensor, targets) -> Tensor:
    """-(1/N) sum_i sum_c y_ic log p_ic with p = softmax(logits).

    ``targets`` is an [N,C] one-hot/soft distribution or a length-N integer label vector.
    """
    if logits.ndim != 2:
        raise DimensionError(f"classification_loss expects logits [N,C], got shape {logits.shape}")
    n, c = logits.shape
    if n == 0:
        raise EmptyDatasetError("classification_loss received an empty batch")
    if not isinstance(targets, Tensor):
        targets = np.asarray(targets)
        if targets.ndim == 1:
            targets = one_hot(targets, c)
        targets = Tensor(targets)
    if targets.shape != logits.shape:
        raise DimensionError(f"Targets shape {targets.shape} does not match logits {logits.shape}")
    return -(targets * F.log_softmax(logits)).sum() / float(n)


def consistency_loss(z_a: Tensor, z_b: Tensor, reduction: str = "sum") -> Tensor:
    """(1/N) sum_i ||z_a[i] - z_b[i]||^2.

    ``reduction="mean"`` additionally divides by the latent width (mean squared error).
    """
    if z_a.shape != z_b.shape:
        raise DimensionError(f"consistency_loss needs equal shapes, got {z_a.shape} and {z_b.shape}")
    if z_a.ndim != 2 or z_a.shape[0] == 0:
        raise DimensionError(f"consistency_loss expects non-empty [N,l] latents, got shape {z_a.shape}")
    if reduction not in CONSISTENCY_REDUCTIONS:
        raise ConfigurationError(f"Unknown consistency reduction {reduction!r}; "
                                 f"expected one of {CONSISTENCY_REDUCTIONS}")
    n, width = z_a.shape
    diff = z_a - z_b
    loss = (diff * diff).sum() / float(n)
    if reduction == "mean":
        loss = loss / float(width)
    return loss


def combined_loss(l_class: Scalar, l_cons: Scalar, lam: float) -> Tensor:
    if lam < 0:
        raise ConfigurationError(f"lambda must be >= 0, got {lam}")
    l_class = as_tensor(l_class)
    if lam == 0:
        return l_class
    return l_class + as_tensor(l_cons) * float(lam)
