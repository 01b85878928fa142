# -*- coding: utf-8 -*-
"""SVG scatter of a 2-D embedding: colour encodes the class label, marker shape the domain."""

import logging
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import UNLABELED, EmbeddingSet  # noqa: E402
from .errors import DimensionError, EmptyDatasetError  # noqa: E402

logger = logging.getLogger(__name__)

# --- Constants ---
MARKERS = ("o", "^", "s", "D", "v", "P", "X", "*")
POINT_GROUP_PREFIX = "points-"
FIGURE_SIZE = (6.0, 6.0)
MARKER_SIZE = 18
UNLABELED_COLOR = "#808080"
SVG_HASH_SALT = "mvcons"


def scatter_svg(emb: EmbeddingSet, path: Union[str, Path], title: str = "") -> Path:
    """Write one marker per row; each domain's markers sit in an SVG group ``points-<domain>``."""
    if len(emb) == 0:
        raise EmptyDatasetError("Nothing to plot: embedding has no rows")
    if emb.vectors.shape[1] != 2:
        raise DimensionError(f"scatter_svg needs 2-D points, got {emb.vectors.shape[1]} columns")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    labels = sorted(set(int(l) for l in emb.labels if l != UNLABELED))
    cmap = plt.get_cmap("tab10" if len(labels) <= 10 else "viridis")
    palette = {label: cmap(k / max(len(labels) - 1, 1) if len(labels) > 10 else k)
               for k, label in enumerate(labels)}
    domains = sorted(set(emb.domains))
    domain_tags = np.array(emb.domains)

    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=FIGURE_SIZE)
        for k, domain in enumerate(domains):
            mask = domain_tags == domain
            colors = [palette.get(int(l), UNLABELED_COLOR) for l in emb.labels[mask]]
            ax.scatter(emb.vectors[mask, 0], emb.vectors[mask, 1], c=colors, s=MARKER_SIZE,
                       marker=MARKERS[k % len(MARKERS)], gid=f"{POINT_GROUP_PREFIX}{domain}")
        ax.set_xticks([])
        ax.set_yticks([])
        if title:
            ax.set_title(title)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    logger.info("Wrote scatter of %d points (%d domains) to %s", len(emb), len(domains), path)
    return path
