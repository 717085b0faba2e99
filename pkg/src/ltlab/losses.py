"""Training criteria for class-imbalanced classification.

Six interchangeable objectives over raw logits: plain cross-entropy, prior
logit adjustment, effective-number class reweighting, count-dependent
margins, hard-example focal modulation, and prior-removed training. All are
mean-reduced over the batch, differentiable w.r.t. logits, shift-invariant
in the logits, and collapse to cross-entropy when their knob is neutral.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, log_softmax, power, texp
from .data import ClassPrior
from .errors import ConfigError, ContractError, DegenerateClassError

LOSS_KINDS = ("CE", "LA", "CB", "LDAM", "Focal", "LADE")


@dataclass
class LossConfig:
    kind: str = "CE"
    tau: float = 1.0  # logit-adjustment strength
    beta: float = 0.999  # effective-number smoothing
    gamma: float = 2.0  # focal modulation exponent
    margin_scale: float = 0.5  # numerator of the count-dependent margin
    ldam_logit_scale: float = 1.0  # applied after margin subtraction

    def validate(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}; expected {LOSS_KINDS}")
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if not (0.0 <= self.beta < 1.0):
            raise ConfigError(f"beta must lie in [0, 1), got {self.beta}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.margin_scale <= 0:
            raise ConfigError(f"margin_scale must be > 0, got {self.margin_scale}")
        return self


def _check_batch(logits: Tensor, labels: np.ndarray) -> tuple[int, int, np.ndarray]:
    if logits.ndim != 2:
        raise ContractError(f"logits must be [batch, classes], got {logits.shape}")
    n, c = logits.shape
    if n == 0:
        raise ContractError("empty batch")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ContractError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= c:
        raise ContractError(f"labels out of range [0, {c})")
    return n, c, labels


def _onehot(n: int, c: int, labels: np.ndarray) -> np.ndarray:
    oh = np.zeros((n, c))
    oh[np.arange(n), labels] = 1.0
    return oh


def _check_priors(priors: ClassPrior, c: int):
    if priors.num_classes != c:
        raise DegenerateClassError(
            f"priors cover {priors.num_classes} classes, logits have {c}"
        )
    if np.any(priors.priors <= 0):
        raise DegenerateClassError("priors must be strictly positive")


def _per_sample_nll(logits: Tensor, onehot: np.ndarray) -> Tensor:
    """-log p(true class) per sample, shape [batch]."""
    return -(log_softmax(logits) * Tensor(onehot)).sum(axis=-1)


def ce_loss(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy."""
    n, c, labels = _check_batch(logits, labels)
    return _per_sample_nll(logits, _onehot(n, c, labels)).mean()


def la_loss(logits: Tensor, labels, priors: ClassPrior, tau: float = 1.0) -> Tensor:
    """Cross-entropy on prior-adjusted logits z_k + tau * log(pi_k)."""
    n, c, labels = _check_batch(logits, labels)
    _check_priors(priors, c)
    adjusted = logits + Tensor(tau * np.log(priors.priors))
    return _per_sample_nll(adjusted, _onehot(n, c, labels)).mean()


def cb_weights(counts, beta: float) -> np.ndarray:
    """Effective-number weights (1 - beta) / (1 - beta^n_k)."""
    if not (0.0 <= beta < 1.0):
        raise ConfigError(f"beta must lie in [0, 1), got {beta}")
    counts = np.asarray(counts, dtype=np.float64)
    if beta == 0.0:
        return np.ones_like(counts)
    return (1.0 - beta) / (1.0 - beta**counts)


def cb_loss(logits: Tensor, labels, priors: ClassPrior, beta: float) -> Tensor:
    """Cross-entropy with each sample weighted by its class's effective-number weight."""
    n, c, labels = _check_batch(logits, labels)
    _check_priors(priors, c)
    w = cb_weights(priors.counts, beta)[labels]
    nll = _per_sample_nll(logits, _onehot(n, c, labels))
    return (nll * Tensor(w)).mean()


def ldam_loss(
    logits: Tensor,
    labels,
    priors: ClassPrior,
    margin_scale: float,
    logit_scale: float = 1.0,
) -> Tensor:
    """Cross-entropy with the true-class logit pushed down by a count margin.

    The margin is margin_scale / n_y^(1/4); rarer classes get larger margins.
    ``logit_scale`` multiplies the margin-adjusted logits before the softmax.
    """
    n, c, labels = _check_batch(logits, labels)
    _check_priors(priors, c)
    margins = margin_scale / priors.counts.astype(np.float64) ** 0.25
    onehot = _onehot(n, c, labels)
    adjusted = (logits - Tensor(onehot * margins[labels][:, None])) * logit_scale
    return _per_sample_nll(adjusted, onehot).mean()


def focal_loss(logits: Tensor, labels, gamma: float) -> Tensor:
    """Cross-entropy modulated by (1 - p_true)^gamma to damp easy samples."""
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    n, c, labels = _check_batch(logits, labels)
    nll = _per_sample_nll(logits, _onehot(n, c, labels))
    p_true = texp(-nll)
    return (power(1.0 - p_true, gamma) * nll).mean()


def lade_approx_loss(logits: Tensor, labels, priors: ClassPrior) -> Tensor:
    """Prior-removed training: cross-entropy on z_k - log(pi_k).

    Equivalent to ``la_loss`` evaluated at tau = -1; the name is explicit
    about this being an approximation of distribution disentanglement.
    """
    n, c, labels = _check_batch(logits, labels)
    _check_priors(priors, c)
    adjusted = logits - Tensor(np.log(priors.priors))
    return _per_sample_nll(adjusted, _onehot(n, c, labels)).mean()


def compute_loss(
    logits: Tensor, labels, priors: ClassPrior, cfg: LossConfig
) -> Tensor:
    """Dispatch on ``cfg.kind`` with the corresponding hyperparameters."""
    cfg.validate()
    if cfg.kind == "CE":
        return ce_loss(logits, labels)
    if cfg.kind == "LA":
        return la_loss(logits, labels, priors, cfg.tau)
    if cfg.kind == "CB":
        return cb_loss(logits, labels, priors, cfg.beta)
    if cfg.kind == "LDAM":
        return ldam_loss(logits, labels, priors, cfg.margin_scale, cfg.ldam_logit_scale)
    if cfg.kind == "Focal":
        return focal_loss(logits, labels, cfg.gamma)
    if cfg.kind == "LADE":
        return lade_approx_loss(logits, labels, priors)
    raise ConfigError(f"unknown loss kind {cfg.kind!r}")
