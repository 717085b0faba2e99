"""Desk-scale laboratory for long-tailed image classification.

Pieces: a minimal float64 autodiff engine, a synthetic long-tailed dataset
generator with a portable on-disk format, a toy vision transformer with
frozen-backbone bottleneck adapters and penultimate/final feature taps, a
gated dual-head fusion classifier, six rebalancing training criteria,
entropic optimal-transport feature diagnostics, Rademacher-complexity
capacity checks, and a deterministic training/evaluation harness with a CLI.
"""

__version__ = "0.1.0"

from .autodiff import Param, Rng, Tensor, grad_check, no_grad

__all__ = ["Param", "Rng", "Tensor", "grad_check", "no_grad", "__version__"]
