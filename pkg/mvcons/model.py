# -*- coding: utf-8 -*-
"""
The classifier f = head ∘ latent projection ∘ encoder.

- Encoder: 4x4 stride-4 stem, stages of ConvNeXt blocks (depthwise 7x7 conv,
  LayerNorm, pointwise expand x4, GELU, pointwise project, residual add) with
  2x2 stride-2 downsampling between stages, final LayerNorm, global average pool.
- Latent projection: z = W_l g + b_l.
- Head: hidden = ReLU(W_1 z + b_1); logits = W_2 hidden + b_2; probabilities = softmax.

Parameters live in a flat, ordered name -> Tensor mapping; the order is fixed by
the config alone, which makes initialisation and checkpoints deterministic.
"""

import logging
from collections import OrderedDict
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from . import functional as F
from .errors import ConfigurationError, DimensionError, NonFiniteGradientError
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

# --- Constants ---
DEFAULT_IMAGE_SIZE = 32
DEFAULT_STEM_CHANNELS = 32
DEFAULT_STAGE_BLOCKS = (2, 2)
DEFAULT_STAGE_DIMS = (32, 64)
DEFAULT_LATENT_DIM = 32
DEFAULT_HIDDEN_DIM = 64
DEFAULT_NUM_CLASSES = 4

STEM_KERNEL = 4
DEPTHWISE_KERNEL = 7
DOWNSAMPLE_KERNEL = 2
EXPANSION = 4
LN_EPS = 1e-6

# Parameter kinds decide the initialiser.
WEIGHT, BIAS, GAMMA, BETA = "weight", "bias", "gamma", "beta"


@dataclass
class ModelConfig:
    image_size: int = DEFAULT_IMAGE_SIZE
    stem_channels: int = DEFAULT_STEM_CHANNELS
    stage_blocks: List[int] = field(default_factory=lambda: list(DEFAULT_STAGE_BLOCKS))
    stage_dims: List[int] = field(default_factory=lambda: list(DEFAULT_STAGE_DIMS))
    latent_dim: int = DEFAULT_LATENT_DIM
    hidden_dim: int = DEFAULT_HIDDEN_DIM
    num_classes: int = DEFAULT_NUM_CLASSES

    def validate(self) -> "ModelConfig":
        if len(self.stage_blocks) != len(self.stage_dims) or not self.stage_dims:
            raise ConfigurationError(
                f"model.stage_blocks {self.stage_blocks} and model.stage_dims {self.stage_dims} "
                f"must be non-empty and of equal length")
        for name in ("image_size", "stem_channels", "latent_dim", "hidden_dim", "num_classes"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"model.{name} must be >= 1, got {getattr(self, name)}")
        if any(int(v) < 1 for v in list(self.stage_blocks) + list(self.stage_dims)):
            raise ConfigurationError("model.stage_blocks and model.stage_dims entries must be >= 1")
        if self.stem_channels != self.stage_dims[0]:
            raise ConfigurationError(
                f"model.stem_channels ({self.stem_channels}) must equal model.stage_dims[0] "
                f"({self.stage_dims[0]})")
        reduction = STEM_KERNEL * DOWNSAMPLE_KERNEL ** (len(self.stage_dims) - 1)
        if self.image_size % reduction != 0:
            raise ConfigurationError(
                f"model.image_size {self.image_size} must be divisible by {reduction} "
                f"for {len(self.stage_dims)} stages")
        return self

    @property
    def feature_dim(self) -> int:
        """d: width of the pooled encoder output."""
        return int(self.stage_dims[-1])

    def to_dict(self) -> dict:
        return asdict(self)


def parameter_layout(config: ModelConfig) -> "OrderedDict[str, Tuple[Tuple[int, ...], str, int]]":
    """name -> (shape, kind, fan_in) in canonical order; a pure function of the config."""
    config.validate()
    layout: "OrderedDict[str, Tuple[Tuple[int, ...], str, int]]" = OrderedDict()

    def conv(prefix, c_out, c_in_per_group, k):
        fan_in = c_in_per_group * k * k
        layout[f"{prefix}.weight"] = ((c_out, c_in_per_group, k, k), WEIGHT, fan_in)
        layout[f"{prefix}.bias"] = ((c_out,), BIAS, fan_in)

    def dense(prefix, f_out, f_in):
        layout[f"{prefix}.weight"] = ((f_out, f_in), WEIGHT, f_in)
        layout[f"{prefix}.bias"] = ((f_out,), BIAS, f_in)

    def norm(prefix, features):
        layout[f"{prefix}.gamma"] = ((features,), GAMMA, features)
        layout[f"{prefix}.beta"] = ((features,), BETA, features)

    conv("stem", config.stem_channels, 3, STEM_KERNEL)
    for s, (blocks, dim) in enumerate(zip(config.stage_blocks, config.stage_dims)):
        if s > 0:
            conv(f"downsample.{s - 1}", dim, config.stage_dims[s - 1], DOWNSAMPLE_KERNEL)
        for b in range(blocks):
            prefix = f"stages.{s}.blocks.{b}"
            conv(f"{prefix}.dw", dim, 1, DEPTHWISE_KERNEL)
            norm(f"{prefix}.norm", dim)
            dense(f"{prefix}.expand", EXPANSION * dim, dim)
            dense(f"{prefix}.project", dim, EXPANSION * dim)
    norm("final_norm", config.feature_dim)
    dense("latent", config.latent_dim, config.feature_dim)
    dense("head.fc1", config.hidden_dim, config.latent_dim)
    dense("head.fc2", config.num_classes, config.hidden_dim)
    return layout


class ModelParams(Mapping):
    """Named parameter tensors of encoder, latent projection and head."""

    def __init__(self, config: ModelConfig, tensors: "OrderedDict[str, Tensor]"):
        self.config = config
        self._tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self._tensors.values()))

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def astype(self, dtype) -> "ModelParams":
        """Deep copy with every array converted to ``dtype``."""
        copies = OrderedDict()
        for name, t in self._tensors.items():
            copy = Tensor(np.zeros(0), requires_grad=True, name=name)
            copy.data = t.data.astype(dtype, copy=True)
            copies[name] = copy
        return ModelParams(self.config, copies)

    def copy(self) -> "ModelParams":
        return self.astype(next(iter(self._tensors.values())).dtype)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self._tensors.items()}

    def check_finite(self) -> None:
        for name, t in self._tensors.items():
            if not np.all(np.isfinite(t.data)):
                raise NonFiniteGradientError(f"Parameter {name} contains NaN or Inf")


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)); zero biases; LN gamma=1, beta=0."""
    rng = np.random.default_rng(seed)
    tensors: "OrderedDict[str, Tensor]" = OrderedDict()
    for name, (shape, kind, fan_in) in parameter_layout(config).items():
        if kind == WEIGHT:
            bound = 1.0 / np.sqrt(fan_in)
            values = rng.uniform(-bound, bound, size=shape)
        elif kind == GAMMA:
            values = np.ones(shape)
        else:
            values = np.zeros(shape)
        tensors[name] = Tensor(values, requires_grad=True, name=name)
    return ModelParams(config, tensors)


def params_from_arrays(config: ModelConfig, arrays: Dict[str, np.ndarray]) -> ModelParams:
    """Rebuild ModelParams from raw arrays, checking names and shapes against the config."""
    layout = parameter_layout(config)
    missing = [n for n in layout if n not in arrays]
    extra = [n for n in arrays if n not in layout]
    if missing or extra:
        raise DimensionError(f"Parameter set does not match config (missing {missing}, unexpected {extra})")
    tensors: "OrderedDict[str, Tensor]" = OrderedDict()
    for name, (shape, _, _) in layout.items():
        if tuple(arrays[name].shape) != shape:
            raise DimensionError(f"Parameter {name} has shape {arrays[name].shape}, expected {shape}")
        tensors[name] = Tensor(arrays[name], requires_grad=True, name=name)
    return ModelParams(config, tensors)


# --- Forward pieces ---

def convnext_block(params: ModelParams, prefix: str, x: Tensor) -> Tensor:
    channels = x.shape[1]
    pad = DEPTHWISE_KERNEL // 2
    h = F.conv2d(x, params[f"{prefix}.dw.weight"], params[f"{prefix}.dw.bias"],
                 padding=pad, groups=channels)
    h = h.transpose(0, 2, 3, 1)
    h = F.layer_norm(h, params[f"{prefix}.norm.gamma"], params[f"{prefix}.norm.beta"], eps=LN_EPS)
    h = F.linear(h, params[f"{prefix}.expand.weight"], params[f"{prefix}.expand.bias"])
    h = F.gelu(h)
    h = F.linear(h, params[f"{prefix}.project.weight"], params[f"{prefix}.project.bias"])
    return x + h.transpose(0, 3, 1, 2)


def encoder_forward(params: ModelParams, images: Union[Tensor, np.ndarray]) -> Tensor:
    """[N,3,S,S] images -> [N,d] pooled features."""
    config = params.config
    images = images if isinstance(images, Tensor) else Tensor(images)
    expected = (3, config.image_size, config.image_size)
    if images.ndim != 4 or tuple(images.shape[1:]) != expected:
        raise DimensionError(f"Encoder expects images [N,{expected[0]},{expected[1]},{expected[2]}], "
                             f"got shape {images.shape}")
    x = F.conv2d(images, params["stem.weight"], params["stem.bias"], stride=STEM_KERNEL)
    for s, blocks in enumerate(config.stage_blocks):
        if s > 0:
            x = F.conv2d(x, params[f"downsample.{s - 1}.weight"], params[f"downsample.{s - 1}.bias"],
                         stride=DOWNSAMPLE_KERNEL)
        for b in range(blocks):
            x = convnext_block(params, f"stages.{s}.blocks.{b}", x)
    x = x.transpose(0, 2, 3, 1)
    x = F.layer_norm(x, params["final_norm.gamma"], params["final_norm.beta"], eps=LN_EPS)
    return F.global_avg_pool(x.transpose(0, 3, 1, 2))


def latent_project(params: ModelParams, features: Tensor) -> Tensor:
    """z = W_l g + b_l, [N,d] -> [N,l]."""
    d = params.config.feature_dim
    if features.ndim != 2 or features.shape[1] != d:
        raise DimensionError(f"Latent projection expects features [N,{d}], got shape {features.shape}")
    return F.linear(features, params["latent.weight"], params["latent.bias"])


def classify(params: ModelParams, z: Tensor) -> Tuple[Tensor, Tensor]:
    """Two-layer ReLU head; returns (logits [N,C], probabilities [N,C])."""
    l = params.config.latent_dim
    if z.ndim != 2 or z.shape[1] != l:
        raise DimensionError(f"Classifier expects latents [N,{l}], got shape {z.shape}")
    hidden = F.relu(F.linear(z, params["head.fc1.weight"], params["head.fc1.bias"]))
    logits = F.linear(hidden, params["head.fc2.weight"], params["head.fc2.bias"])
    return logits, F.softmax(logits)


@dataclass
class ModelOutput:
    features: Tensor
    latent: Tensor
    logits: Tensor
    probs: Tensor


class Model:
    """Owns a ModelParams and runs the full forward pass."""

    def __init__(self, params: ModelParams):
        self.params = params

    @classmethod
    def create(cls, config: ModelConfig, seed: int) -> "Model":
        return cls(init_params(config, seed))

    @property
    def config(self) -> ModelConfig:
        return self.params.config

    def copy(self) -> "Model":
        return Model(self.params.copy())

    def forward(self, images: Union[Tensor, np.ndarray]) -> ModelOutput:
        features = encoder_forward(self.params, images)
        latent = latent_project(self.params, features)
        logits, probs = classify(self.params, latent)
        return ModelOutput(features, latent, logits, probs)

    def predict(self, images: np.ndarray, batch_size: int = 64) -> Tuple[np.ndarray, np.ndarray]:
        """Gradient-free (latents, probabilities) for an [N,3,S,S] array, in fixed-size chunks."""
        latents, probs = [], []
        with no_grad():
            for start in range(0, len(images), batch_size):
                out = self.forward(images[start:start + batch_size])
                latents.append(out.latent.data)
                probs.append(out.probs.data)
        if not latents:
            width = (self.config.latent_dim, self.config.num_classes)
            return np.zeros((0, width[0])), np.zeros((0, width[1]))
        return np.concatenate(latents), np.concatenate(probs)
