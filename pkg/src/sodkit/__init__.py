"""Desk-scale salient-object-detection toolkit.

Training pipeline built around a self-guided auxiliary loss: a small
reverse-mode autodiff engine, morphological target generation, a
pyramid-style saliency model with branch-attention aggregation modules,
a deterministic trainer, and a thresholded precision/recall evaluator.
"""

__version__ = "0.1.0"
