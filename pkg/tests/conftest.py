import numpy as np
import pytest

from mvcons.data import DomainShift, SynthSpec, generate_synthetic
from mvcons.model import ModelConfig
from mvcons.tensor import CHECK_DTYPE, precision


@pytest.fixture
def f64():
    """Create tensors in 64-bit floats for the duration of the test."""
    with precision(CHECK_DTYPE):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return ModelConfig(image_size=16, stem_channels=4, stage_blocks=[1, 1], stage_dims=[4, 8],
                       latent_dim=4, hidden_dim=6, num_classes=2)


@pytest.fixture
def tiny_spec():
    return SynthSpec(num_classes=2, per_class=4, image_size=16, domain_shift=DomainShift(), seed=3)


@pytest.fixture
def synth_data(tmp_path, tiny_spec):
    """(root, source split, target split) of a small two-class synthetic dataset."""
    root = tmp_path / "data"
    source, target = generate_synthetic(tiny_spec, root)
    return root, source, target
