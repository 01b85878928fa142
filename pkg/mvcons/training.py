# -*- coding: utf-8 -*-
"""
Source training and source-free target adaptation.

train_source minimises cross-entropy on a labeled split. adapt_target sees only
the source-trained model and target images: every batch is turned into two
augmented views, the views' projected latents are pulled together by the
consistency loss, and a classification term keeps the head discriminative.
By default that term distils the soft predictions the incoming model makes on
the clean images; they are computed once, before the first step, so the targets
do not drift with the model being adapted. Both phases use Adam with the
step-decay schedule and return a fresh Model; the input model is never mutated.
"""

import csv
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .augment import AugmentSpec, ImageSample, make_view_batch, to_batch
from .data import DatasetSplit, iterate_batches
from .errors import ConfigurationError, EmptyDatasetError, NonFiniteGradientError
from .losses import CONSISTENCY_REDUCTIONS, classification_loss, combined_loss, consistency_loss
from .model import Model
from .optim import DEFAULT_LR_STEP_EPOCHS, DEFAULT_LR_STEP_FACTOR, OptimizerState, StepDecaySchedule, adam_step
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

# --- Constants ---
DEFAULT_LEARNING_RATE = 1e-4
DEFAULT_WEIGHT_DECAY = 1e-4
DEFAULT_BATCH_SIZE = 4
DEFAULT_LAMBDA = 0.5
DEFAULT_EPOCHS = 20
DEFAULT_SEED = 0

SELF_DISTILL = "self_distill"
LABELED_PROBE = "labeled_probe"
CLASS_MODE_OFF = "off"
ADAPT_CLASS_MODES = (SELF_DISTILL, LABELED_PROBE, CLASS_MODE_OFF)

LOG_COLUMNS = ("epoch", "lr", "l_class", "l_cons", "combined", "mean_pair_dist", "accuracy")


@dataclass
class TrainConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    batch_size: int = DEFAULT_BATCH_SIZE
    lambda_: float = DEFAULT_LAMBDA
    epochs: int = DEFAULT_EPOCHS
    lr_step_epochs: int = DEFAULT_LR_STEP_EPOCHS
    lr_step_factor: float = DEFAULT_LR_STEP_FACTOR
    seed: int = DEFAULT_SEED
    adapt_class_mode: str = SELF_DISTILL
    consistency_reduction: str = "sum"

    def validate(self) -> "TrainConfig":
        if not self.learning_rate > 0:
            raise ConfigurationError(f"train.learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"train.weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigurationError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if not self.lambda_ >= 0:
            raise ConfigurationError(f"train.lambda must be >= 0, got {self.lambda_}")
        if self.epochs < 0:
            raise ConfigurationError(f"train.epochs must be >= 0, got {self.epochs}")
        if self.lr_step_epochs < 1:
            raise ConfigurationError(f"train.lr_step_epochs must be >= 1, got {self.lr_step_epochs}")
        if not 0 < self.lr_step_factor <= 1:
            raise ConfigurationError(f"train.lr_step_factor must lie in (0, 1], got {self.lr_step_factor}")
        if self.seed < 0:
            raise ConfigurationError(f"train.seed must be >= 0, got {self.seed}")
        if self.adapt_class_mode not in ADAPT_CLASS_MODES:
            raise ConfigurationError(f"train.adapt_class_mode must be one of {ADAPT_CLASS_MODES}, "
                                     f"got {self.adapt_class_mode!r}")
        if self.consistency_reduction not in CONSISTENCY_REDUCTIONS:
            raise ConfigurationError(f"train.consistency_reduction must be one of {CONSISTENCY_REDUCTIONS}, "
                                     f"got {self.consistency_reduction!r}")
        return self

    def schedule(self) -> StepDecaySchedule:
        return StepDecaySchedule(self.learning_rate, self.lr_step_epochs, self.lr_step_factor)

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["lambda"] = raw.pop("lambda_")
        return raw


@dataclass
class EpochLog:
    epoch: int
    lr: float
    l_class: float
    l_cons: Optional[float] = None
    combined: Optional[float] = None
    mean_pair_dist: Optional[float] = None
    accuracy: Optional[float] = None

    def row(self) -> List[str]:
        return [_format_cell(getattr(self, column)) for column in LOG_COLUMNS]


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _progress(batches, desc: str):
    return tqdm(batches, desc=desc, leave=False, disable=not sys.stderr.isatty())


def _labels(batch: Sequence[ImageSample]) -> np.ndarray:
    return np.array([s.label for s in batch], dtype=np.int64)


def _check_loss(loss: Tensor, phase: str, epoch: int) -> None:
    if not np.isfinite(loss.item()):
        raise NonFiniteGradientError(f"{phase} loss became non-finite in epoch {epoch}")


def _check_image_size(model: Model, split: DatasetSplit) -> None:
    size = model.config.image_size
    shape = split.samples[0].pixels.shape
    if shape != (size, size, 3):
        raise ConfigurationError(f"Split {split.domain!r} holds {shape} images; model expects ({size}, {size}, 3)")


# --- Source phase ---

def train_source(model: Model, split: DatasetSplit, cfg: TrainConfig) -> Tuple[Model, List[EpochLog]]:
    """Cross-entropy training on a labeled split; returns the trained copy and one log row per epoch."""
    cfg.validate()
    if not split.samples:
        raise EmptyDatasetError(f"Split {split.domain!r} has no samples")
    if not split.has_labels:
        raise ConfigurationError(f"train-source needs a labeled split; {split.domain!r} has unlabeled samples")
    _check_image_size(model, split)

    model = model.copy()
    state = OptimizerState.for_params(model.params)
    schedule = cfg.schedule()
    logs: List[EpochLog] = []
    for epoch in range(cfg.epochs):
        lr = schedule.lr_at(epoch)
        total_loss, correct, seen = 0.0, 0, 0
        for batch in _progress(iterate_batches(split, cfg.batch_size, cfg.seed, epoch), f"source epoch {epoch}"):
            labels = _labels(batch)
            out = model.forward(to_batch(batch))
            loss = classification_loss(out.logits, labels)
            _check_loss(loss, "Source", epoch)
            loss.backward()
            adam_step(model.params, state, lr, cfg.weight_decay)
            total_loss += loss.item() * len(batch)
            correct += int((out.logits.data.argmax(axis=1) == labels).sum())
            seen += len(batch)
        entry = EpochLog(epoch, lr, total_loss / seen, combined=total_loss / seen, accuracy=correct / seen)
        logger.info("source epoch %d lr=%.3g loss=%.4f acc=%.3f", epoch, lr, entry.l_class, entry.accuracy)
        logs.append(entry)
    return model, logs


# --- Adaptation phase ---

def distillation_targets(model: Model, split: DatasetSplit, batch_size: int = 64) -> Dict[str, np.ndarray]:
    """Softmax of ``model`` on every clean image, keyed by sample id."""
    _, probs = model.predict(split.images(), batch_size=batch_size)
    return {s.id: p for s, p in zip(split.samples, probs)}


def _class_term(batch: Sequence[ImageSample], logits_a: Tensor, logits_b: Tensor, mode: str,
                soft_targets: Optional[Dict[str, np.ndarray]]) -> Optional[Tensor]:
    if mode == CLASS_MODE_OFF:
        return None
    if mode == LABELED_PROBE:
        targets = _labels(batch)
    else:
        targets = np.stack([soft_targets[s.id] for s in batch])
    return (classification_loss(logits_a, targets) + classification_loss(logits_b, targets)) * 0.5


def adapt_target(model: Model, split: DatasetSplit, cfg: TrainConfig,
                 augment: Optional[AugmentSpec] = None) -> Tuple[Model, List[EpochLog]]:
    """Source-free adaptation on target images only.

    Labels are read only in ``labeled_probe`` mode. In ``self_distill`` mode the
    soft targets come from the model as handed in (see distillation_targets) and
    stay fixed for the whole run. When lambda is 0 and the
    classification term is off there is nothing to optimise: epochs are still
    logged, but no optimizer step is taken.
    """
    cfg.validate()
    if not split.samples:
        raise EmptyDatasetError(f"Split {split.domain!r} has no samples")
    if cfg.adapt_class_mode == LABELED_PROBE and not split.has_labels:
        raise ConfigurationError("adapt_class_mode=labeled_probe needs a labeled target split")
    _check_image_size(model, split)
    augment = (augment or AugmentSpec(out_size=model.config.image_size)).validate()
    if augment.out_size != model.config.image_size:
        raise ConfigurationError(f"augment.out_size {augment.out_size} must equal model.image_size "
                                 f"{model.config.image_size}")
    if cfg.adapt_class_mode != LABELED_PROBE:
        split = split.without_labels()

    soft_targets = distillation_targets(model, split) if cfg.adapt_class_mode == SELF_DISTILL else None
    null_objective = cfg.lambda_ == 0 and cfg.adapt_class_mode == CLASS_MODE_OFF
    if null_objective:
        logger.warning("lambda=0 with adapt_class_mode=off leaves nothing to optimise; parameters stay fixed")

    model = model.copy()
    state = OptimizerState.for_params(model.params)
    schedule = cfg.schedule()
    logs: List[EpochLog] = []
    for epoch in range(cfg.epochs):
        lr = schedule.lr_at(epoch)
        sums = {"l_class": 0.0, "l_cons": 0.0, "combined": 0.0, "dist": 0.0}
        correct, seen = 0, 0
        for batch in _progress(iterate_batches(split, cfg.batch_size, cfg.seed, epoch), f"adapt epoch {epoch}"):
            views_a, views_b = make_view_batch(batch, augment, cfg.seed, epoch)
            if null_objective:
                with no_grad():
                    out_a, out_b = model.forward(to_batch(views_a)), model.forward(to_batch(views_b))
                    l_cons = consistency_loss(out_a.latent, out_b.latent, cfg.consistency_reduction)
                l_class, loss = None, combined_loss(0.0, l_cons, 0.0)
            else:
                out_a, out_b = model.forward(to_batch(views_a)), model.forward(to_batch(views_b))
                l_cons = consistency_loss(out_a.latent, out_b.latent, cfg.consistency_reduction)
                l_class = _class_term(batch, out_a.logits, out_b.logits, cfg.adapt_class_mode, soft_targets)
                loss = combined_loss(0.0 if l_class is None else l_class, l_cons, cfg.lambda_)
                _check_loss(loss, "Adaptation", epoch)
                loss.backward()
                adam_step(model.params, state, lr, cfg.weight_decay)

            n = len(batch)
            gaps = out_a.latent.data.astype(np.float64) - out_b.latent.data
            sums["dist"] += float(np.linalg.norm(gaps, axis=1).sum())
            sums["l_cons"] += l_cons.item() * n
            sums["l_class"] += (0.0 if l_class is None else l_class.item()) * n
            sums["combined"] += loss.item() * n
            if cfg.adapt_class_mode == LABELED_PROBE:
                correct += int((out_a.logits.data.argmax(axis=1) == _labels(batch)).sum())
            seen += n

        entry = EpochLog(epoch, lr, sums["l_class"] / seen, sums["l_cons"] / seen, sums["combined"] / seen,
                         sums["dist"] / seen, correct / seen if cfg.adapt_class_mode == LABELED_PROBE else None)
        logger.info("adapt epoch %d lr=%.3g l_class=%.4f l_cons=%.4f pair_dist=%.4f",
                    epoch, lr, entry.l_class, entry.l_cons, entry.mean_pair_dist)
        logs.append(entry)
    return model, logs


def write_log_csv(logs: Sequence[EpochLog], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for entry in logs:
            writer.writerow(entry.row())
    logger.info("Wrote %d epoch rows to %s", len(logs), path)
    return path
