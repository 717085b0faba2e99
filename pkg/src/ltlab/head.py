"""Gated fusion of the two feature taps plus dual-supervised classifiers.

The fused representation is
``alpha_pen * z_pen + alpha_fin * z_fin + (z_pen + z_fin) / 2`` with scalar
gates ``alpha = sigmoid(w^T z)`` learned per branch; with zero gate weights
both alphas are 0.5 and the expression collapses to ``z_pen + z_fin``
exactly. Classifier one scores the fused feature and trains under
prior-adjusted cross-entropy; classifier two scores the final-layer feature
under plain cross-entropy; inference takes the argmax of the summed logits.

``fusion_mode`` selects what feeds classifier one: "gated" (the fusion
above), "penultimate" (raw z_pen, the ablation that drops the fusion), or
"final" (raw z_fin).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Param, Rng, Tensor
from .data import ClassPrior
from .errors import ConfigError, DimensionError
from .losses import ce_loss, la_loss

FUSION_MODES = ("gated", "penultimate", "final")
_NORM_EPS = 1e-30  # keeps zero vectors finite without disturbing cosines


@dataclass
class FusionGate:
    """Per-branch scalar gates; zero-initialized so training starts symmetric."""

    w1: Param  # gates the penultimate feature, shape [D, 1]
    w2: Param  # gates the final feature, shape [D, 1]

    @classmethod
    def create(cls, dim: int) -> "FusionGate":
        return cls(
            w1=Param(Tensor(np.zeros((dim, 1)), requires_grad=True), "head.gate.w1"),
            w2=Param(Tensor(np.zeros((dim, 1)), requires_grad=True), "head.gate.w2"),
        )


def fuse(z_pen: Tensor, z_fin: Tensor, gate: FusionGate) -> Tensor:
    if z_pen.shape != z_fin.shape:
        raise DimensionError(f"tap shapes disagree: {z_pen.shape} vs {z_fin.shape}")
    alpha_pen = ad.sigmoid(z_pen @ gate.w1.tensor)  # [b, 1]
    alpha_fin = ad.sigmoid(z_fin @ gate.w2.tensor)
    return alpha_pen * z_pen + alpha_fin * z_fin + 0.5 * (z_pen + z_fin)


class CosineClassifier:
    """Logits are scaled cosine similarities to per-class weight vectors."""

    def __init__(self, num_classes: int, dim: int, rng: Rng, scale: float = 16.0, name: str = "head.g"):
        if scale <= 0:
            raise ConfigError(f"cosine scale must be > 0, got {scale}")
        self.scale = float(scale)
        self.weight = Param(
            Tensor(rng.normal((num_classes, dim), scale=0.05), requires_grad=True),
            f"{name}.weight",
        )

    def __call__(self, z: Tensor) -> Tensor:
        zn = z * ad.power((z * z).sum(axis=-1, keepdims=True) + _NORM_EPS, -0.5)
        w = self.weight.tensor
        wn = w * ad.power((w * w).sum(axis=-1, keepdims=True) + _NORM_EPS, -0.5)
        return self.scale * (zn @ wn.transpose())

    def param_list(self) -> list[Param]:
        return [self.weight]


class LinearClassifier:
    """Plain affine classifier, selectable in place of the cosine one."""

    def __init__(self, num_classes: int, dim: int, rng: Rng, name: str = "head.g"):
        self.weight = Param(
            Tensor(rng.normal((dim, num_classes), scale=0.05), requires_grad=True),
            f"{name}.weight",
        )
        self.bias = Param(
            Tensor(np.zeros(num_classes), requires_grad=True), f"{name}.bias"
        )

    def __call__(self, z: Tensor) -> Tensor:
        return ad.linear(z, self.weight, self.bias)

    def param_list(self) -> list[Param]:
        return [self.weight, self.bias]


def _make_classifier(kind: str, num_classes: int, dim: int, rng: Rng, scale: float, name: str):
    if kind == "cosine":
        return CosineClassifier(num_classes, dim, rng, scale=scale, name=name)
    if kind == "linear":
        return LinearClassifier(num_classes, dim, rng, name=name)
    raise ConfigError(f"unknown classifier kind {kind!r}")


class DualHead:
    """Two classifiers over the taps with decoupled supervision."""

    def __init__(
        self,
        num_classes: int,
        dim: int,
        rng: Rng,
        tau: float = 1.0,
        classifier_scale: float = 16.0,
        classifier: str = "cosine",
        fusion_mode: str = "gated",
    ):
        if fusion_mode not in FUSION_MODES:
            raise ConfigError(
                f"fusion_mode must be one of {FUSION_MODES}, got {fusion_mode!r}"
            )
        self.num_classes = num_classes
        self.dim = dim
        self.tau = float(tau)
        self.fusion_mode = fusion_mode
        self.gate = FusionGate.create(dim)
        hr = rng.substream("head")
        self.g1 = _make_classifier(
            classifier, num_classes, dim, hr.substream("g1"), classifier_scale, "head.g1"
        )
        self.g2 = _make_classifier(
            classifier, num_classes, dim, hr.substream("g2"), classifier_scale, "head.g2"
        )

    def predict(self, taps) -> tuple[Tensor, Tensor]:
        """Returns (s1, s2): fused-branch logits and final-branch logits."""
        if self.fusion_mode == "gated":
            branch1 = fuse(taps.penultimate, taps.final, self.gate)
        elif self.fusion_mode == "penultimate":
            branch1 = taps.penultimate
        else:
            branch1 = taps.final
        return self.g1(branch1), self.g2(taps.final)

    def loss(self, s1: Tensor, s2: Tensor, labels, priors: ClassPrior) -> Tensor:
        return total_loss(s1, s2, labels, priors, self.tau)

    def param_list(self) -> list[Param]:
        return [self.gate.w1, self.gate.w2] + self.g1.param_list() + self.g2.param_list()


def total_loss(s1: Tensor, s2: Tensor, labels, priors: ClassPrior, tau: float) -> Tensor:
    """Prior-adjusted CE on the fused branch plus plain CE on the final branch."""
    return la_loss(s1, labels, priors, tau) + ce_loss(s2, labels)


def infer(s1, s2) -> np.ndarray:
    """Ensemble prediction: argmax of summed logits (ties to the lowest index)."""
    a = s1.data if isinstance(s1, Tensor) else np.asarray(s1)
    b = s2.data if isinstance(s2, Tensor) else np.asarray(s2)
    if a.shape != b.shape:
        raise DimensionError(f"logit shapes disagree: {a.shape} vs {b.shape}")
    return np.argmax(a + b, axis=-1)


class SingleHead:
    """Baseline: one classifier on the final tap trained with one criterion."""

    def __init__(
        self,
        num_classes: int,
        dim: int,
        rng: Rng,
        loss_cfg,
        classifier_scale: float = 16.0,
        classifier: str = "cosine",
    ):
        from .losses import LossConfig

        self.num_classes = num_classes
        self.dim = dim
        self.loss_cfg: LossConfig = loss_cfg.validate()
        self.g = _make_classifier(
            classifier, num_classes, dim, rng.substream("head", "g"), classifier_scale, "head.g"
        )

    def predict(self, taps) -> Tensor:
        return self.g(taps.final)

    def loss(self, logits: Tensor, labels, priors: ClassPrior) -> Tensor:
        from .losses import compute_loss

        return compute_loss(logits, labels, priors, self.loss_cfg)

    def param_list(self) -> list[Param]:
        return self.g.param_list()
