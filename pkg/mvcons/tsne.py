# -*- coding: utf-8 -*-
"""
Exact t-SNE.

High-dimensional affinities P come from per-point Gaussians whose precision is
bisected until the conditional entropy matches log(perplexity); the conditionals
are symmetrised and normalised. Low-dimensional affinities Q use a Student-t
kernel with one degree of freedom. The embedding descends KL(P || Q) with
momentum, per-coordinate gains and early exaggeration.
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .analysis import EmbeddingSet, write_embeddings_csv
from .errors import ConfigurationError, DimensionError
from .tensor import CHECK_DTYPE, Tensor, precision

logger = logging.getLogger(__name__)

# --- Constants ---
DEFAULT_PERPLEXITY = 30.0
DEFAULT_ITERATIONS = 1000
LEARNING_RATE = 200.0
INITIAL_MOMENTUM = 0.5
FINAL_MOMENTUM = 0.8
EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
INIT_STD = 1e-4
P_FLOOR = 1e-12
ENTROPY_TOL = 1e-5
MAX_BISECTION_STEPS = 50
MIN_GAIN = 0.01
MIN_POINTS = 4
OUTPUT_DIMS = 2


@dataclass
class TsneState:
    P: np.ndarray
    Q: np.ndarray
    Y: np.ndarray
    iteration: int
    kl: float


@dataclass
class TsneResult:
    embedding: np.ndarray
    kl_initial: float
    kl_final: float
    iterations: int
    seconds: float


def max_perplexity(n: int) -> float:
    return (n - 1) / 3.0


def check_perplexity(perplexity: float, n: int) -> None:
    if n < MIN_POINTS:
        raise ConfigurationError(f"t-SNE needs at least {MIN_POINTS} points, got {n}")
    if not 1.0 <= perplexity <= max_perplexity(n):
        raise ConfigurationError(f"perplexity must lie in [1, {max_perplexity(n):.4g}] for {n} points, "
                                 f"got {perplexity}")


def clamp_perplexity(perplexity: float, n: int) -> float:
    """Largest admissible perplexity not above the requested one."""
    if n < MIN_POINTS:
        raise ConfigurationError(f"t-SNE needs at least {MIN_POINTS} points, got {n}")
    clamped = min(max(perplexity, 1.0), max_perplexity(n))
    if clamped != perplexity:
        logger.warning("perplexity %.4g clamped to %.4g for %d points", perplexity, clamped, n)
    return clamped


# --- Affinities ---

def _row_entropy(d2_row: np.ndarray, beta: float) -> Tuple[float, np.ndarray]:
    shifted = d2_row - d2_row.min()
    p = np.exp(-shifted * beta)
    total = p.sum()
    entropy = np.log(total) + beta * float((shifted * p).sum()) / total
    return float(entropy), p / total


def conditional_probabilities(sq_dists: np.ndarray, perplexity: float) -> Tuple[np.ndarray, np.ndarray]:
    """Row-stochastic P_{j|i} and the bisected precisions beta_i = 1 / (2 sigma_i^2)."""
    n = len(sq_dists)
    target = np.log(perplexity)
    cond = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        row = np.delete(sq_dists[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        entropy, p = _row_entropy(row, beta)
        for _ in range(MAX_BISECTION_STEPS):
            if abs(entropy - target) < ENTROPY_TOL:
                break
            if entropy > target:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
            entropy, p = _row_entropy(row, beta)
        cond[i, np.arange(n) != i] = p
        betas[i] = beta
    return cond, betas


def joint_probabilities(vectors: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetric P with zero diagonal, entries floored at P_FLOOR, summing to 1."""
    sq_dists = squareform(pdist(vectors, "sqeuclidean"))
    cond, _ = conditional_probabilities(sq_dists, perplexity)
    P = (cond + cond.T) / (2.0 * len(vectors))
    P = np.maximum(P, P_FLOOR)
    np.fill_diagonal(P, 0.0)
    return P / P.sum()


def _student_kernel(Y: np.ndarray) -> np.ndarray:
    num = 1.0 / (1.0 + squareform(pdist(Y, "sqeuclidean")))
    np.fill_diagonal(num, 0.0)
    return num


def student_t_affinities(Y: np.ndarray) -> np.ndarray:
    num = _student_kernel(Y)
    return num / num.sum()


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    """sum_{i != j} P_ij log(P_ij / Q_ij); zero entries of P contribute nothing."""
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], np.finfo(np.float64).tiny))))


def kl_gradient(P: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """dKL/dY_i = 4 sum_j (P_ij - Q_ij)(1 + |y_i - y_j|^2)^-1 (y_i - y_j)."""
    num = _student_kernel(Y)
    weights = (P - num / num.sum()) * num
    return 4.0 * (weights.sum(axis=1)[:, None] * Y - weights @ Y)


# --- Optimisation ---

def _as_vectors(data: Union[EmbeddingSet, np.ndarray]) -> np.ndarray:
    vectors = data.vectors if isinstance(data, EmbeddingSet) else np.asarray(data, dtype=np.float64)
    if vectors.ndim != 2:
        raise DimensionError(f"t-SNE input must be N x l, got shape {vectors.shape}")
    return vectors


def tsne(data: Union[EmbeddingSet, np.ndarray], perplexity: float = DEFAULT_PERPLEXITY,
         iterations: int = DEFAULT_ITERATIONS, seed: int = 0,
         on_iteration: Optional[callable] = None) -> TsneResult:
    """N x 2 embedding minimising KL(P || Q); ``on_iteration`` receives a TsneState per step."""
    vectors = _as_vectors(data)
    n = len(vectors)
    check_perplexity(perplexity, n)
    if iterations < 0:
        raise ConfigurationError(f"iterations must be >= 0, got {iterations}")

    started = time.perf_counter()
    P = joint_probabilities(vectors, perplexity)
    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, INIT_STD, size=(n, OUTPUT_DIMS))
    kl_initial = kl_divergence(P, student_t_affinities(Y))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)

    for it in range(iterations):
        exaggerated = it < EXAGGERATION_ITERS
        momentum = INITIAL_MOMENTUM if exaggerated else FINAL_MOMENTUM
        grad = kl_gradient(P * EXAGGERATION if exaggerated else P, Y)
        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        update = momentum * update - LEARNING_RATE * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        if on_iteration is not None:
            Q = student_t_affinities(Y)
            on_iteration(TsneState(P, Q, Y, it + 1, kl_divergence(P, Q)))

    kl_final = kl_divergence(P, student_t_affinities(Y))
    seconds = time.perf_counter() - started
    logger.info("t-SNE on %d points: KL %.4f -> %.4f after %d iterations (%.1fs)",
                n, kl_initial, kl_final, iterations, seconds)
    return TsneResult(Y, kl_initial, kl_final, iterations, seconds)


def tsne_embedding_set(emb: EmbeddingSet, result: TsneResult) -> EmbeddingSet:
    return EmbeddingSet(result.embedding, emb.labels, list(emb.domains), list(emb.ids))


def write_tsne_csv(emb: EmbeddingSet, result: TsneResult, path: Union[str, Path]) -> Path:
    """``id,label,domain,y0,y1,kl_final``."""
    return write_embeddings_csv(tsne_embedding_set(emb, result), path, prefix="y",
                                extra=[("kl_final", result.kl_final)])


def kl_gradient_check(seed: int = 0, n: int = 10, perplexity: float = 2.5) -> float:
    """Max relative error of kl_gradient against central differences on random points."""
    from .gradcheck import numerical_gradient, relative_error

    rng = np.random.default_rng(seed)
    P = joint_probabilities(rng.normal(size=(n, 5)), perplexity)
    with precision(CHECK_DTYPE):
        Y = Tensor(rng.normal(size=(n, OUTPUT_DIMS)))
        analytic = kl_gradient(P, Y.data).reshape(-1)
        numeric = numerical_gradient(lambda: Tensor(kl_divergence(P, student_t_affinities(Y.data))),
                                     Y, np.arange(Y.size))
    return float(relative_error(analytic, numeric).max())
