import json
import math
from dataclasses import replace

import numpy as np
import pytest

from mvcons.analysis import (
    UNLABELED, EmbeddingSet, MetricsReport, accuracy, calinski_harabasz, davies_bouldin, embed,
    metrics_report, raw_embedding, read_embeddings_csv, silhouette, write_embeddings_csv,
)
from mvcons.data import DatasetSplit
from mvcons.errors import DimensionError, MetricUndefinedError
from mvcons.model import Model


def make_set(points, labels, domain="target"):
    points = np.asarray(points, dtype=float)
    return EmbeddingSet(points, labels, [domain] * len(points), [f"s{i}" for i in range(len(points))])


# Direct transcriptions of the definitions, used as oracles.

def naive_silhouette(X, y):
    scores = []
    for i in range(len(X)):
        own = [j for j in range(len(X)) if y[j] == y[i] and j != i]
        if not own:
            scores.append(0.0)
            continue
        a = np.mean([np.linalg.norm(X[i] - X[j]) for j in own])
        b = min(np.mean([np.linalg.norm(X[i] - X[j]) for j in range(len(X)) if y[j] == c])
                for c in set(y) if c != y[i])
        scores.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return float(np.mean(scores))


def naive_davies_bouldin(X, y):
    clusters = sorted(set(y))
    cent = {c: X[y == c].mean(axis=0) for c in clusters}
    scat = {c: np.mean([np.linalg.norm(x - cent[c]) for x in X[y == c]]) for c in clusters}
    worst = [max((scat[i] + scat[j]) / np.linalg.norm(cent[i] - cent[j]) for j in clusters if j != i)
             for i in clusters]
    return float(np.mean(worst))


def naive_calinski_harabasz(X, y):
    clusters = sorted(set(y))
    mean = X.mean(axis=0)
    between = sum((y == c).sum() * np.sum((X[y == c].mean(axis=0) - mean) ** 2) for c in clusters)
    within = sum(np.sum((X[y == c] - X[y == c].mean(axis=0)) ** 2) for c in clusters)
    return float(between * (len(X) - len(clusters)) / (within * (len(clusters) - 1)))


TWO_PAIRS = [[0, 0], [0, 2], [4, 0], [4, 2]]


def test_silhouette_hand_value():
    # a = 2, b = (4 + sqrt(20)) / 2 for every point
    b = (4 + math.sqrt(20)) / 2
    assert silhouette(make_set(TWO_PAIRS, [0, 0, 1, 1])) == pytest.approx(1 - 2 / b, abs=1e-12)


def test_silhouette_degenerate_cases():
    assert silhouette(make_set(np.zeros((4, 3)), [0, 0, 1, 1])) == 0.0
    assert silhouette(make_set([[0, 0], [1, 0], [5, 5]], [0, 1, 2])) == 0.0


def test_davies_bouldin_hand_value():
    emb = make_set([[0, 0], [0, 2], [10, 0], [10, 2]], [0, 0, 1, 1])
    assert davies_bouldin(emb) == pytest.approx(0.2, abs=1e-12)


def test_davies_bouldin_degenerate_cases():
    assert davies_bouldin(make_set([[0, 0], [1, 0], [5, 5]], [0, 1, 2])) == 0.0
    crossed = make_set([[-1, 0], [1, 0], [0, -1], [0, 1]], [0, 0, 1, 1])
    with pytest.warns(RuntimeWarning, match="coincident"):
        assert davies_bouldin(crossed) == math.inf


def test_calinski_harabasz_hand_value():
    # between = 9, within = 4, (9 / 1) / (4 / 2)
    emb = make_set([[0, 1], [0, -1], [3, 1], [3, -1]], [0, 0, 1, 1])
    assert calinski_harabasz(emb) == pytest.approx(4.5, abs=1e-12)


def test_calinski_harabasz_degenerate_cases():
    with pytest.warns(RuntimeWarning, match="zero within-cluster"):
        assert calinski_harabasz(make_set([[0, 0], [0, 0], [1, 1], [1, 1]], [0, 0, 1, 1])) == math.inf
    with pytest.raises(MetricUndefinedError, match="more samples than clusters"):
        calinski_harabasz(make_set([[0, 0], [1, 1]], [0, 1]))


@pytest.mark.parametrize("metric", [silhouette, davies_bouldin, calinski_harabasz])
def test_metrics_need_two_labelled_clusters(metric):
    with pytest.raises(MetricUndefinedError):
        metric(make_set(np.eye(4), [0, 0, 0, 0]))
    with pytest.raises(MetricUndefinedError):
        metric(make_set(np.eye(4), [0, 1, UNLABELED, 1]))


@pytest.mark.parametrize("seed", range(50))
def test_metrics_match_definitions(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 6))
    sizes = rng.integers(2, 12, size=k)
    centers = rng.normal(0.0, 3.0, size=(k, 5))
    X = np.concatenate([rng.normal(c, rng.uniform(0.3, 2.0), size=(m, 5)) for c, m in zip(centers, sizes)])
    y = np.repeat(np.arange(k), sizes)
    emb = make_set(X, y)
    assert silhouette(emb) == pytest.approx(naive_silhouette(X, y), rel=1e-9, abs=1e-12)
    assert davies_bouldin(emb) == pytest.approx(naive_davies_bouldin(X, y), rel=1e-9)
    assert calinski_harabasz(emb) == pytest.approx(naive_calinski_harabasz(X, y), rel=1e-9)


def test_metrics_invariant_under_rigid_motion(rng):
    X = rng.normal(size=(20, 4)) + np.repeat(np.eye(4)[:2] * 3, 10, axis=0)
    y = np.repeat([0, 1], 10)
    rotation, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    before = metrics_report(make_set(X, y))
    after = metrics_report(make_set(X @ rotation + 7.5, y))
    for key in ("silhouette", "dbi", "chi"):
        assert getattr(after, key) == pytest.approx(getattr(before, key), rel=1e-9)
    assert (before.n_samples, before.n_clusters) == (20, 2)


def relabel(split: DatasetSplit, labels) -> DatasetSplit:
    samples = [replace(s, label=int(label)) for s, label in zip(split.samples, labels)]
    return DatasetSplit(samples, list(split.classes), split.domain)


def test_accuracy_against_model_predictions(tiny_config, synth_data):
    _, _, target = synth_data
    model = Model.create(tiny_config, seed=0)
    _, probs = model.predict(target.images())
    predicted = probs.argmax(axis=1)
    assert accuracy(model, relabel(target, predicted)) == 1.0
    assert accuracy(model, relabel(target, 1 - predicted)) == 0.0
    mixed = predicted.copy()
    mixed[:2] = 1 - mixed[:2]
    assert accuracy(model, relabel(target, mixed)) == pytest.approx(0.75)


def test_embeddings_keep_sample_order(tiny_config, synth_data):
    _, source, target = synth_data
    emb = embed(Model.create(tiny_config, seed=0), target.without_labels())
    assert emb.vectors.shape == (len(target), tiny_config.latent_dim)
    assert emb.ids == [s.id for s in target.samples]
    assert np.all(emb.labels == UNLABELED)
    raw = raw_embedding(source)
    assert raw.vectors.shape == (len(source), 16 * 16 * 3)
    assert set(raw.domains) == {source.domain}


def test_embedding_set_rejects_misaligned_rows():
    with pytest.raises(DimensionError):
        EmbeddingSet(np.zeros((3, 2)), [0, 1], ["a"] * 3, ["x", "y", "z"])
    with pytest.raises(DimensionError):
        EmbeddingSet(np.array([[0.0, np.nan]]), [0], ["a"], ["x"])


def test_csv_roundtrip_keeps_unlabeled_rows(tmp_path):
    emb = make_set([[0.5, -1.25], [3.0, 4.0]], [2, UNLABELED])
    path = write_embeddings_csv(emb, tmp_path / "emb.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "id,label,domain,z0,z1"
    assert lines[2].split(",")[1] == ""
    back = read_embeddings_csv(path)
    np.testing.assert_array_equal(back.vectors, emb.vectors)
    np.testing.assert_array_equal(back.labels, [2, UNLABELED])
    assert back.ids == emb.ids and back.domains == emb.domains


def test_csv_reader_names_bad_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,label,domain,z0\na,0,t,1.0\nb,1,t,oops\n")
    with pytest.raises(DimensionError, match="line 3"):
        read_embeddings_csv(path)
    with pytest.raises(FileNotFoundError):
        read_embeddings_csv(tmp_path / "missing.csv")


def test_report_json_spells_infinity_as_string(tmp_path):
    path = MetricsReport(0.1, math.inf, 2.0, 4, 2).write_json(tmp_path / "m.json")
    assert "Infinity" not in path.read_text()
    scores = json.loads(path.read_text())
    assert scores["dbi"] == "inf" and scores["chi"] == 2.0
    assert float(scores["dbi"]) == math.inf


def test_concat_joins_domains():
    both = EmbeddingSet.concat([make_set([[0, 0]], [0], "source"), make_set([[1, 1]], [1], "target")])
    assert len(both) == 2
    assert both.domain == "source+target"


def test_well_separated_pairs():
    emb = make_set([[0, 0], [0, 1], [10, 10], [10, 11]], [0, 0, 1, 1])
    assert silhouette(emb) == pytest.approx(0.92929, abs=1e-4)
    far = make_set([[0, 0], [1, 0], [20, 0], [21, 0]], [0, 0, 1, 1])
    assert davies_bouldin(far) == pytest.approx(0.05, abs=1e-12)
