import json

import numpy as np
import pytest

from mvcons.analysis import raw_embedding, silhouette
from mvcons.data import (MANIFEST_NAME, DomainShift, SynthSpec, apply_domain_shift, generate_synthetic,
                         iterate_batches, load_image_folder, raw_pixel_vectors)
from mvcons.errors import ConfigurationError, EmptyDatasetError, ImageDecodeError
from mvcons.parallel import THREADS_ENV_VAR


def test_generator_writes_layout_and_manifest(synth_data, tiny_spec):
    root, source, target = synth_data
    assert len(source) == len(target) == 8
    assert source.classes == sorted(source.classes) == ["circle", "square"]
    assert len(list((root / "target" / "circle").glob("*.png"))) == 4
    manifest = json.loads((root / MANIFEST_NAME).read_text())
    assert manifest["seed"] == tiny_spec.seed
    assert manifest["spec"]["domain_shift"]["hue_shift"] == tiny_spec.domain_shift.hue_shift
    assert manifest["domains"] == {"source": 8, "target": 8}


def test_loading_recovers_generated_samples(synth_data):
    root, _, target = synth_data
    loaded = load_image_folder(root / "target", 16)
    assert loaded.domain == "target"
    assert [s.id for s in loaded.samples] == [s.id for s in target.samples]
    np.testing.assert_array_equal(loaded.labels, target.labels)
    for a, b in zip(loaded.samples, target.samples):
        np.testing.assert_array_equal(a.pixels, b.pixels)


def test_generation_is_deterministic(tmp_path, tiny_spec):
    generate_synthetic(tiny_spec, tmp_path / "a")
    generate_synthetic(tiny_spec, tmp_path / "b")
    for path in sorted((tmp_path / "a").rglob("*.png")):
        twin = tmp_path / "b" / path.relative_to(tmp_path / "a")
        assert twin.read_bytes() == path.read_bytes()


def test_target_domain_is_shifted(synth_data):
    _, source, target = synth_data
    assert abs(source.images().mean() - target.images().mean()) > 0.01


def test_target_shift_blurs_raw_pixel_classes(tmp_path):
    shift = DomainShift(noise_std=0.2)
    spec = SynthSpec(num_classes=4, per_class=10, image_size=16, domain_shift=shift, seed=7)
    source, target = generate_synthetic(spec, tmp_path)
    assert silhouette(raw_embedding(target)) < silhouette(raw_embedding(source))


def test_zero_shift_is_identity(rng):
    img = rng.uniform(size=(8, 8, 3))
    shift = DomainShift(hue_shift=0.0, brightness_scale=1.0, rotation_deg=0.0, noise_std=0.0)
    assert shift.is_zero()
    np.testing.assert_array_equal(apply_domain_shift(img, shift, rng), img)


@pytest.mark.parametrize("changes", [
    {"num_classes": 0}, {"num_classes": 99}, {"per_class": 0}, {"image_size": 2}, {"seed": -1},
    {"domain_shift": DomainShift(brightness_scale=0.0)},
])
def test_synth_spec_validation(changes):
    with pytest.raises(ConfigurationError):
        SynthSpec(**changes).validate()


def test_parallel_loading_matches_serial(monkeypatch, synth_data):
    root, _, _ = synth_data
    monkeypatch.setenv(THREADS_ENV_VAR, "1")
    serial = load_image_folder(root / "source", 16)
    monkeypatch.setenv(THREADS_ENV_VAR, "4")
    parallel = load_image_folder(root / "source", 16)
    assert [s.id for s in serial.samples] == [s.id for s in parallel.samples]
    np.testing.assert_array_equal(serial.images(), parallel.images())


def test_loader_resizes_to_requested_size(synth_data):
    root, _, _ = synth_data
    assert load_image_folder(root / "source", 8).images().shape == (8, 3, 8, 8)


def test_missing_and_empty_directories(tmp_path):
    with pytest.raises(FileNotFoundError, match="absent"):
        load_image_folder(tmp_path / "absent", 16)
    (tmp_path / "empty" / "cls").mkdir(parents=True)
    with pytest.raises(EmptyDatasetError):
        load_image_folder(tmp_path / "empty", 16)


def test_corrupt_image_names_the_file(tmp_path):
    (tmp_path / "dom" / "cls").mkdir(parents=True)
    (tmp_path / "dom" / "cls" / "broken.png").write_bytes(b"not a png")
    with pytest.raises(ImageDecodeError, match="broken.png"):
        load_image_folder(tmp_path / "dom", 16)


def test_batches_cover_split_once_and_are_seeded(synth_data):
    _, source, _ = synth_data
    batches = iterate_batches(source, batch_size=3, seed=0, epoch=0)
    assert [len(b) for b in batches] == [3, 3, 2]
    ids = [s.id for b in batches for s in b]
    assert sorted(ids) == sorted(s.id for s in source.samples)
    again = iterate_batches(source, batch_size=3, seed=0, epoch=0)
    assert ids == [s.id for b in again for s in b]
    with pytest.raises(ConfigurationError):
        iterate_batches(source, batch_size=0, seed=0, epoch=0)


def test_without_labels_hides_labels(synth_data):
    _, _, target = synth_data
    unlabeled = target.without_labels()
    assert not unlabeled.has_labels
    assert target.has_labels
    with pytest.raises(ConfigurationError):
        unlabeled.labels


def test_raw_pixel_vectors_are_flattened(synth_data):
    _, source, _ = synth_data
    assert raw_pixel_vectors(source).shape == (8, 16 * 16 * 3)
