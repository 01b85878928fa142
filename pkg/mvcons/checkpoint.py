# -*- coding: utf-8 -*-
"""
MVCK checkpoint files.

Layout (all integers little-endian):
    b"MVCK" | u32 format version | u32 record count | records...
    record = u32 name length | UTF-8 name | u32 rank | rank x u64 dims | float32 payload

The first record, ``__model_config__``, stores the ModelConfig as a float32 vector
(every field is a small integer, exact in float32). Parameter records follow in
canonical layout order, so save -> load -> save is byte-identical.
"""

import logging
import struct
from pathlib import Path
from typing import BinaryIO, List, Tuple, Union

import numpy as np

from .errors import CheckpointFormatError
from .model import Model, ModelConfig, params_from_arrays

logger = logging.getLogger(__name__)

# --- Constants ---
MAGIC = b"MVCK"
FORMAT_VERSION = 1
CONFIG_RECORD = "__model_config__"
PAYLOAD_DTYPE = np.dtype("<f4")


def _encode_config(config: ModelConfig) -> np.ndarray:
    stages = len(config.stage_dims)
    values = [config.image_size, config.stem_channels, config.latent_dim, config.hidden_dim,
              config.num_classes, stages, *config.stage_blocks, *config.stage_dims]
    return np.asarray(values, dtype=PAYLOAD_DTYPE)


def _decode_config(values: np.ndarray) -> ModelConfig:
    ints = [int(v) for v in values]
    if len(ints) < 6:
        raise CheckpointFormatError("Model config record is truncated")
    image_size, stem, latent, hidden, classes, stages = ints[:6]
    if len(ints) != 6 + 2 * stages:
        raise CheckpointFormatError(f"Model config record has {len(ints)} values, expected {6 + 2 * stages}")
    return ModelConfig(image_size=image_size, stem_channels=stem, latent_dim=latent, hidden_dim=hidden,
                       num_classes=classes, stage_blocks=ints[6:6 + stages],
                       stage_dims=ints[6 + stages:]).validate()


def _write_record(fh: BinaryIO, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", array.ndim))
    fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
    fh.write(np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE).tobytes())


def _read_exact(fh: BinaryIO, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise CheckpointFormatError(f"Checkpoint truncated while reading {what}")
    return data


def _read_record(fh: BinaryIO) -> Tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "record name length"))
    try:
        name = _read_exact(fh, name_len, "record name").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointFormatError("Record name is not valid UTF-8") from exc
    (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"rank of {name}"))
    dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, f"dims of {name}"))
    count = int(np.prod(dims)) if rank else 1
    payload = _read_exact(fh, count * PAYLOAD_DTYPE.itemsize, f"payload of {name}")
    return name, np.frombuffer(payload, dtype=PAYLOAD_DTYPE).reshape(dims).copy()


def save_checkpoint(model: Model, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records: List[Tuple[str, np.ndarray]] = [(CONFIG_RECORD, _encode_config(model.config))]
    records.extend((name, t.data) for name, t in model.params.items())
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(records)))
        for name, array in records:
            _write_record(fh, name, array)
    logger.info("Saved checkpoint %s (%d parameters)", path, model.params.num_parameters())
    return path


def load_checkpoint(path: Union[str, Path]) -> Model:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointFormatError(f"{path} is not an MVCK checkpoint (magic {magic!r})")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != FORMAT_VERSION:
            raise CheckpointFormatError(f"{path} has format version {version}, expected {FORMAT_VERSION}")
        records = dict(_read_record(fh) for _ in range(count))
        if fh.read(1):
            raise CheckpointFormatError(f"{path} has trailing bytes after {count} records")
    if CONFIG_RECORD not in records:
        raise CheckpointFormatError(f"{path} has no {CONFIG_RECORD} record")
    config = _decode_config(records.pop(CONFIG_RECORD))
    logger.info("Loaded checkpoint %s", path)
    return Model(params_from_arrays(config, records))
