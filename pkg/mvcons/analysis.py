# -*- coding: utf-8 -*-
"""
Evaluation: top-1 accuracy, latent and raw-pixel embeddings, clustering metrics.

The three scores are scikit-learn's (Euclidean distance). Degenerate labellings
that scikit-learn either rejects or silently scores are resolved here first:
- silhouette: every cluster a singleton -> 0.
- Davies-Bouldin: every cluster a singleton -> 0.
- Davies-Bouldin: two coincident centroids with non-zero scatter -> +inf, RuntimeWarning.
- Calinski-Harabasz: zero within-cluster scatter -> +inf, RuntimeWarning.
"""

import csv
import json
import logging
import math
import re
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
from scipy.spatial.distance import pdist
from sklearn.metrics import calinski_harabasz_score, davies_bouldin_score, silhouette_score

from .data import DatasetSplit, raw_pixel_vectors
from .errors import DimensionError, EmptyDatasetError, MetricUndefinedError
from .model import Model

logger = logging.getLogger(__name__)

# --- Constants ---
UNLABELED = -1
VECTOR_COLUMN = re.compile(r"^[zy](\d+)$")


@dataclass
class EmbeddingSet:
    """N x l vectors with aligned labels (-1 = unknown), domain tags and sample ids."""
    vectors: np.ndarray
    labels: np.ndarray
    domains: List[str]
    ids: List[str]

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.vectors)
        if self.vectors.ndim != 2:
            raise DimensionError(f"Embedding vectors must be N x l, got shape {self.vectors.shape}")
        if not (len(self.labels) == len(self.domains) == len(self.ids) == n):
            raise DimensionError(f"Embedding has {n} rows but {len(self.labels)} labels, "
                                 f"{len(self.domains)} domains and {len(self.ids)} ids")
        if not np.all(np.isfinite(self.vectors)):
            raise DimensionError("Embedding vectors contain NaN or Inf")

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def domain(self) -> str:
        return "+".join(sorted(set(self.domains)))

    @classmethod
    def concat(cls, sets: Sequence["EmbeddingSet"]) -> "EmbeddingSet":
        return cls(np.concatenate([s.vectors for s in sets]), np.concatenate([s.labels for s in sets]),
                   [d for s in sets for d in s.domains], [i for s in sets for i in s.ids])


@dataclass
class MetricsReport:
    """Clustering scores of one embedding set. JSON spells unbounded scores as "inf"."""
    silhouette: float
    dbi: float
    chi: float
    n_samples: int
    n_clusters: int

    def to_dict(self) -> dict:
        return {k: _json_number(v) for k, v in asdict(self).items()}

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n")
        return path


def _json_number(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


# --- Model evaluation ---

def accuracy(model: Model, split: DatasetSplit, batch_size: int = 64) -> float:
    """Top-1 accuracy on clean (un-augmented) images."""
    if not split.samples:
        raise EmptyDatasetError(f"Split {split.domain!r} has no samples")
    labels = split.labels
    _, probs = model.predict(split.images(), batch_size=batch_size)
    return float(np.mean(probs.argmax(axis=1) == labels))


def _split_labels(split: DatasetSplit) -> np.ndarray:
    return np.array([UNLABELED if s.label is None else s.label for s in split.samples], dtype=np.int64)


def embed(model: Model, split: DatasetSplit, batch_size: int = 64) -> EmbeddingSet:
    """Projected latents z of every sample."""
    latents, _ = model.predict(split.images(), batch_size=batch_size)
    return EmbeddingSet(latents, _split_labels(split), [s.domain for s in split.samples],
                        [s.id for s in split.samples])


def raw_embedding(split: DatasetSplit) -> EmbeddingSet:
    """Flattened pixels as the embedding, the baseline latents are compared against."""
    if not split.samples:
        raise EmptyDatasetError(f"Split {split.domain!r} has no samples")
    return EmbeddingSet(raw_pixel_vectors(split), _split_labels(split), [s.domain for s in split.samples],
                        [s.id for s in split.samples])


# --- Clustering metrics ---

def _clusters(emb: EmbeddingSet, metric: str) -> np.ndarray:
    if len(emb) == 0:
        raise MetricUndefinedError(f"{metric} is undefined for an empty embedding")
    if np.any(emb.labels < 0):
        raise MetricUndefinedError(f"{metric} needs a label for every sample")
    clusters = np.unique(emb.labels)
    if len(clusters) < 2:
        raise MetricUndefinedError(f"{metric} needs at least 2 clusters, got {len(clusters)}")
    return clusters


def silhouette(emb: EmbeddingSet) -> float:
    clusters = _clusters(emb, "silhouette")
    if len(clusters) == len(emb):
        return 0.0
    return float(silhouette_score(emb.vectors, emb.labels, metric="euclidean"))


def davies_bouldin(emb: EmbeddingSet) -> float:
    clusters = _clusters(emb, "Davies-Bouldin")
    centroids = np.stack([emb.vectors[emb.labels == c].mean(axis=0) for c in clusters])
    scatter = np.array([np.linalg.norm(emb.vectors[emb.labels == c] - centroids[k], axis=1).mean()
                        for k, c in enumerate(clusters)])
    gaps = pdist(centroids)
    rows, cols = np.triu_indices(len(clusters), k=1)
    if np.any((gaps == 0) & (scatter[rows] + scatter[cols] > 0)):
        warnings.warn("Davies-Bouldin index undefined: coincident centroids with non-zero scatter",
                      RuntimeWarning, stacklevel=2)
        return float("inf")
    if len(clusters) == len(emb):
        return 0.0
    return float(davies_bouldin_score(emb.vectors, emb.labels))


def calinski_harabasz(emb: EmbeddingSet) -> float:
    clusters = _clusters(emb, "Calinski-Harabasz")
    if len(emb) <= len(clusters):
        raise MetricUndefinedError(f"Calinski-Harabasz needs more samples than clusters "
                                   f"({len(emb)} samples, {len(clusters)} clusters)")
    if all(np.ptp(emb.vectors[emb.labels == c], axis=0).max() == 0 for c in clusters):
        warnings.warn("Calinski-Harabasz index undefined: zero within-cluster scatter",
                      RuntimeWarning, stacklevel=2)
        return float("inf")
    return float(calinski_harabasz_score(emb.vectors, emb.labels))


def metrics_report(emb: EmbeddingSet) -> MetricsReport:
    report = MetricsReport(silhouette(emb), davies_bouldin(emb), calinski_harabasz(emb),
                           len(emb), len(np.unique(emb.labels)))
    logger.info("metrics on %d samples / %d clusters: silhouette=%.4f dbi=%.4f chi=%.4f",
                report.n_samples, report.n_clusters, report.silhouette, report.dbi, report.chi)
    return report


# --- CSV ---

def _label_cell(label: int) -> str:
    return "" if label < 0 else str(int(label))


def write_embeddings_csv(emb: EmbeddingSet, path: Union[str, Path], prefix: str = "z",
                         extra: Sequence[tuple] = ()) -> Path:
    """``id,label,domain,<prefix>0..`` plus constant ``extra`` (name, value) columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label", "domain"] + [f"{prefix}{k}" for k in range(emb.vectors.shape[1])]
                        + [name for name, _ in extra])
        for i in range(len(emb)):
            writer.writerow([emb.ids[i], _label_cell(emb.labels[i]), emb.domains[i]]
                            + [repr(float(v)) for v in emb.vectors[i]] + [repr(float(v)) for _, v in extra])
    logger.info("Wrote %d embedding rows to %s", len(emb), path)
    return path


def read_embeddings_csv(path: Union[str, Path]) -> EmbeddingSet:
    """Read an embeddings or 2-D t-SNE CSV; non-vector extra columns are ignored."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Embeddings file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path} is empty") from None
        if header[:3] != ["id", "label", "domain"]:
            raise DimensionError(f"{path} must start with columns id,label,domain; got {header[:3]}")
        columns = [k for k, name in enumerate(header) if VECTOR_COLUMN.match(name)]
        ids, labels, domains, rows = [], [], [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DimensionError(f"{path} line {line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                labels.append(int(row[1]) if row[1] else UNLABELED)
                rows.append([float(row[k]) for k in columns])
            except ValueError as exc:
                raise DimensionError(f"{path} line {line_no}: {exc}") from exc
            ids.append(row[0])
            domains.append(row[2])
    vectors = np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return EmbeddingSet(vectors, np.array(labels, dtype=np.int64), domains, ids)
