"""uvcd: unsupervised open-vocabulary change detection.

Frozen spatial and semantic encoders, a lightweight trained alignment
module, per-pixel category scoring against text prompts, bi-temporal
change likelihoods, deterministic post-processing, metrics, and a
mask-matching baseline.
"""

__version__ = "0.1.0"

from .core import BBox, BinaryMask, DegenerateInputError, PointPrompt, Raster

__all__ = [
    "__version__",
    "BBox",
    "BinaryMask",
    "DegenerateInputError",
    "PointPrompt",
    "Raster",
]
