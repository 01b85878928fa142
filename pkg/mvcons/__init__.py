# -*- coding: utf-8 -*-
"""
mvcons: source-free domain adaptation by multiview latent consistency.

A small ConvNeXt-style classifier is trained on a labeled source domain, then
adapted to an unlabeled target domain by pulling together the latents of two
augmented views of every target image. Evaluation covers accuracy, clustering
metrics and t-SNE.
"""

import logging

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
