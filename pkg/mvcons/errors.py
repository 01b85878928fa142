# -*- coding: utf-8 -*-
"""Exception hierarchy for mvcons.

All library errors derive from :class:`MvconsError` so the command-line front end
can map them onto exit codes (configuration problems exit with 2, everything
else with 1).
"""


class MvconsError(RuntimeError):
    """Root of every error raised by mvcons."""


class ConfigurationError(MvconsError):
    """Invalid configuration value, unknown key or unusable parameter range."""


class DimensionError(MvconsError, ValueError):
    """Tensor or array shapes do not agree."""


class UsageError(MvconsError):
    """API used outside its contract (e.g. backward on a non-scalar)."""


class EmptyDatasetError(MvconsError):
    """A dataset, split or batch has no samples."""


class ImageDecodeError(MvconsError):
    """An image file could not be read or decoded."""


class NonFiniteGradientError(MvconsError):
    """A gradient contains NaN or Inf; the optimizer refuses to step."""


class MetricUndefinedError(MvconsError, ValueError):
    """A clustering metric is undefined for the given labelling."""


class CheckpointFormatError(MvconsError):
    """A checkpoint file is truncated, has the wrong magic or an unknown version."""
