import struct

import numpy as np
import pytest

from mvcons.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from mvcons.errors import CheckpointFormatError
from mvcons.model import Model


@pytest.fixture
def saved(tmp_path, tiny_config):
    model = Model.create(tiny_config, seed=11)
    return model, save_checkpoint(model, tmp_path / "m.ckpt")


def test_save_load_save_is_byte_identical(tmp_path, saved):
    model, path = saved
    assert path.read_bytes()[:4] == MAGIC
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    for name, t in model.params.items():
        np.testing.assert_array_equal(loaded.params[name].data, t.data)
    again = save_checkpoint(loaded, tmp_path / "again.ckpt")
    assert again.read_bytes() == path.read_bytes()


def test_missing_checkpoint_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.ckpt"):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_wrong_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(CheckpointFormatError, match="magic"):
        load_checkpoint(path)


def test_unknown_version(tmp_path, saved):
    _, path = saved
    data = bytearray(path.read_bytes())
    data[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointFormatError, match="version 99"):
        load_checkpoint(path)


def test_truncated_file(saved):
    _, path = saved
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(CheckpointFormatError, match="truncated"):
        load_checkpoint(path)
