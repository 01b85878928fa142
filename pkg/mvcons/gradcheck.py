# -*- coding: utf-8 -*-
"""
Finite-difference gradient checks.

Analytic gradients from the tensor engine are compared against central
differences in 64-bit precision. The error per entry is
|analytic - numeric| / max(|analytic|, |numeric|, REL_ERR_FLOOR); the floor keeps
entries whose true gradient is ~0 from dividing round-off by round-off.

The floor makes the check mixed absolute/relative. An entry with
|analytic| and |numeric| both below REL_ERR_FLOOR passes when
|analytic - numeric| < PASS_THRESHOLD * REL_ERR_FLOOR = 1e-6 (absolute). At or
above the floor the bound is PASS_THRESHOLD relative. Central-difference
round-off at FD_EPS in float64 is about 1e-10 * |loss|.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import functional as F
from .tensor import CHECK_DTYPE, Tensor, no_grad, precision

logger = logging.getLogger(__name__)

# --- Constants ---
FD_EPS = 1e-6
REL_ERR_FLOOR = 1e-2
PASS_THRESHOLD = 1e-4
INPUT_RANGE = 2.0


@dataclass
class GradcheckResult:
    name: str
    max_rel_error: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error) and self.max_rel_error < PASS_THRESHOLD)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_ERR_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, indices: np.ndarray,
                       eps: float = FD_EPS) -> np.ndarray:
    """Central difference of the scalar ``fn()`` w.r.t. the given flat entries of ``tensor``."""
    flat = tensor.data.reshape(-1)
    out = np.empty(len(indices), dtype=np.float64)
    with no_grad():
        for k, idx in enumerate(indices):
            original = flat[idx]
            flat[idx] = original + eps
            plus = fn().item()
            flat[idx] = original - eps
            minus = fn().item()
            flat[idx] = original
            out[k] = (plus - minus) / (2.0 * eps)
    return out


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = FD_EPS,
              max_entries: Optional[int] = None, seed: int = 0) -> float:
    """Max relative error between backward() and central differences over ``inputs``.

    ``max_entries`` caps how many entries per input are checked (chosen at random,
    seeded); None checks every entry.
    """
    rng = np.random.default_rng(seed)
    for t in inputs:
        t.zero_grad()
    fn().backward()
    worst = 0.0
    for t in inputs:
        analytic_full = np.zeros(t.size) if t.grad is None else t.grad.reshape(-1).astype(np.float64)
        if max_entries is None or t.size <= max_entries:
            indices = np.arange(t.size)
        else:
            indices = np.sort(rng.choice(t.size, size=max_entries, replace=False))
        numeric = numerical_gradient(fn, t, indices, eps=eps)
        err = relative_error(analytic_full[indices], numeric)
        if err.size:
            worst = max(worst, float(err.max()))
    return worst


# --- Suite ---

def _leaf(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.uniform(-INPUT_RANGE, INPUT_RANGE, size=shape), requires_grad=True)


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    return (out * Tensor(weights)).sum()


def _primitive_cases(rng: np.random.Generator):
    x = _leaf(rng, 2, 4, 8, 8)
    w = _leaf(rng, 8, 4, 3, 3)
    b = _leaf(rng, 8)
    r = rng.standard_normal((2, 8, 8, 8))
    yield "conv2d", lambda: _weighted_sum(F.conv2d(x, w, b, padding=1), r), [x, w, b]

    xd = _leaf(rng, 2, 3, 9, 9)
    wd = _leaf(rng, 3, 1, 7, 7)
    bd = _leaf(rng, 3)
    rd = rng.standard_normal((2, 3, 5, 5))
    yield "conv2d_depthwise_stride2", \
        lambda: _weighted_sum(F.conv2d(xd, wd, bd, stride=2, padding=3, groups=3), rd), [xd, wd, bd]

    xl = _leaf(rng, 4, 10)
    wl = _leaf(rng, 6, 10)
    bl = _leaf(rng, 6)
    rl = rng.standard_normal((4, 6))
    yield "linear", lambda: _weighted_sum(F.linear(xl, wl, bl), rl), [xl, wl, bl]

    xn = _leaf(rng, 3, 8)
    gn = _leaf(rng, 8)
    bn = _leaf(rng, 8)
    rn = rng.standard_normal((3, 8))
    yield "layer_norm", lambda: _weighted_sum(F.layer_norm(xn, gn, bn), rn), [xn, gn, bn]

    for kind in F.ACTIVATION_KINDS:
        xa = _leaf(rng, 3, 5)
        ra = rng.standard_normal((3, 5))
        yield kind, (lambda xa=xa, ra=ra, kind=kind: _weighted_sum(F.activation(xa, kind), ra)), [xa]

    xm = _leaf(rng, 3, 4)
    yield "mean_all", lambda: F.reduction(xm, "mean_all") * 3.0, [xm]
    xs = _leaf(rng, 3, 4)
    yield "sum_all", lambda: F.reduction(xs, "sum_all") * 0.5, [xs]
    xp = _leaf(rng, 2, 3, 4, 4)
    rp = rng.standard_normal((2, 3))
    yield "global_avg_pool_spatial", lambda: _weighted_sum(F.global_avg_pool(xp), rp), [xp]


def _composite_case(rng: np.random.Generator):
    from .losses import classification_loss, combined_loss, consistency_loss
    from .model import Model, ModelConfig

    config = ModelConfig(image_size=16, stem_channels=4, stage_blocks=[1, 1], stage_dims=[4, 8],
                         latent_dim=4, hidden_dim=6, num_classes=3)
    model = Model.create(config, seed=int(rng.integers(2 ** 31)))
    view_a = Tensor(rng.uniform(0.0, 1.0, size=(2, 3, 16, 16)))
    view_b = Tensor(rng.uniform(0.0, 1.0, size=(2, 3, 16, 16)))
    targets = Tensor(np.eye(3)[[0, 2]])

    def loss():
        out_a = model.forward(view_a)
        out_b = model.forward(view_b)
        return combined_loss(classification_loss(out_a.logits, targets),
                             consistency_loss(out_a.latent, out_b.latent), 0.5)

    return "encoder_head_combined_loss", loss, list(model.params.values())


def run_gradient_suite(seed: int = 0, composite_entries: int = 6) -> List[GradcheckResult]:
    """Check every primitive plus one encoder+head+combined-loss composite at 64-bit."""
    results = []
    with precision(CHECK_DTYPE):
        rng = np.random.default_rng(seed)
        cases = list(_primitive_cases(rng)) + [_composite_case(rng)]
        for name, fn, inputs in cases:
            started = time.perf_counter()
            entries = composite_entries if name == "encoder_head_combined_loss" else None
            err = gradcheck(fn, inputs, max_entries=entries, seed=seed)
            result = GradcheckResult(name, err, time.perf_counter() - started)
            logger.debug("gradcheck %s: max rel err %.3e (%.2fs)", name, err, result.seconds)
            results.append(result)

        from .tsne import kl_gradient_check
        started = time.perf_counter()
        err = kl_gradient_check(seed=seed)
        results.append(GradcheckResult("tsne_kl", err, time.perf_counter() - started))
    return results
