"""Desk-scale self-training segmentation with attention-based feature refinement.

A small, exactly-reproducible library: reverse-mode autodiff over float64
numpy arrays (with an optional compiled kernel core), Gaussian
high-frequency filtering, a two-branch toy segmentation net refined by
logit- and feature-guided attention, a mean-teacher adaptation loop on a
synthetic two-domain dataset, and the metrics/serialization/CLI around it.
"""

from .tensor import Param, ShapeError, Tape, Tensor, backward

__version__ = "0.1.0"

__all__ = ["Tensor", "Param", "Tape", "backward", "ShapeError", "__version__"]
