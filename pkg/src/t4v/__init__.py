"""Frozen-classifier transfer learning on pre-extracted video features.

Build c x d classifier matrices four ways (random normal, random
orthogonal, multi-class Fisher LDA, text embeddings), train temporal heads
against them with cross-entropy or gathered InfoNCE, and evaluate under
general, zero-shot, and few-shot protocols.
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
