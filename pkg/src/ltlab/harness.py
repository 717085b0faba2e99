"""Experiment harness: configuration, deterministic training, evaluation.

Configs are strict JSON (unknown keys are rejected, fail-fast) mirroring the
dataclasses below. Training runs single-threaded SGD with momentum and a
per-epoch cosine-annealed learning rate over the parameter-efficient
partition: the backbone is frozen after initialization and only adapters,
tap norms, and head parameters move. Everything is keyed off one seed, so an
identical config reproduces identical metrics and a bit-identical
checkpoint.

A run directory holds ``config.json``, ``run_record.json``, the selected
checkpoint (``checkpoint/``), the final test report (``eval_report.json``)
and its per-class CSV. The environment variable ``LTLAB_OUTPUT_ROOT``, when
set, anchors relative output directories.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .autodiff import Param, Rng, no_grad
from .backbone import (
    AdapterConfig,
    ViTConfig,
    VisionTransformer,
    assign_params,
    load_params,
    partition_params,
    save_params,
)
from .data import (
    DatasetBundle,
    GroupAssignment,
    LongTailProfile,
    SynthConfig,
    class_priors,
    group_split,
    read_dataset,
    atomic_write_json,
)
from .errors import ConfigError, FormatError, TrainingDiverged
from .head import DualHead, SingleHead, infer
from .losses import LossConfig
from .metrics import (
    EvalReport,
    evaluate_predictions,
    format_summary,
    write_per_class_csv,
    write_report_json,
)
from .ot import SinkhornConfig, layer_discrepancy
from .rademacher import HypothesisSample, subadditivity_check

OUTPUT_ROOT_ENV = "LTLAB_OUTPUT_ROOT"
SELECTION_MODES = ("bscore", "ovacc", "last")
PREDICT_MODES = ("ensemble", "s1", "s2")


def _strict_keys(d: dict, allowed: set[str], context: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {context}")


def _dataclass_from(cls, d: dict, context: str):
    _strict_keys(d, {f.name for f in fields(cls)}, context)
    return cls(**d)


@dataclass
class DataConfig:
    """Either a path to an LTDS bundle or a synthesis recipe."""

    path: str | None = None
    profile: LongTailProfile | None = None
    gen: SynthConfig = field(default_factory=SynthConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "DataConfig":
        _strict_keys(d, {"path", "profile", "gen"}, "dataset")
        path = d.get("path")
        profile = (
            _dataclass_from(LongTailProfile, d["profile"], "dataset.profile")
            if "profile" in d
            else None
        )
        gen = (
            _dataclass_from(SynthConfig, d["gen"], "dataset.gen")
            if "gen" in d
            else SynthConfig()
        )
        if (path is None) == (profile is None):
            raise ConfigError("dataset needs exactly one of 'path' or 'profile'")
        return cls(path=path, profile=profile, gen=gen)

    def to_dict(self) -> dict:
        if self.path is not None:
            return {"path": self.path}
        return {"profile": asdict(self.profile), "gen": asdict(self.gen)}

    def load(self, rng: Rng) -> DatasetBundle:
        from .data import synth_longtail

        if self.path is not None:
            if not os.path.exists(self.path):
                raise ConfigError(f"dataset path does not exist: {self.path}")
            return read_dataset(self.path)
        return synth_longtail(self.profile, self.gen, rng.substream("data"))


@dataclass
class BackboneConfig:
    vit: ViTConfig = field(default_factory=ViTConfig)
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    weights_path: str | None = None  # optional pretrained toy weights (checkpoint dir)

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneConfig":
        _strict_keys(
            d,
            {f.name for f in fields(ViTConfig)} | {"adapter", "weights_path"},
            "backbone",
        )
        adapter = (
            _dataclass_from(AdapterConfig, d.pop("adapter"), "backbone.adapter")
            if "adapter" in d
            else AdapterConfig()
        )
        weights_path = d.pop("weights_path", None)
        return cls(
            vit=_dataclass_from(ViTConfig, d, "backbone"),
            adapter=adapter,
            weights_path=weights_path,
        )

    def to_dict(self) -> dict:
        out = asdict(self.vit)
        out["adapter"] = asdict(self.adapter)
        if self.weights_path is not None:
            out["weights_path"] = self.weights_path
        return out


@dataclass
class HeadConfig:
    kind: str = "dual"  # "dual" (fusion + two criteria) or "single" (one criterion)
    tau: float = 1.0
    classifier_scale: float = 16.0
    classifier: str = "cosine"  # or "linear"
    fusion: str = "gated"  # "gated" | "penultimate" | "final" (dual head only)
    ensemble: bool = True  # dual head: predict from s1 + s2; False -> s1 only
    loss: LossConfig = field(default_factory=LossConfig)  # single head criterion

    @classmethod
    def from_dict(cls, d: dict) -> "HeadConfig":
        _strict_keys(
            d,
            {"kind", "tau", "classifier_scale", "classifier", "fusion", "ensemble", "loss"},
            "head",
        )
        loss = (
            _dataclass_from(LossConfig, d.pop("loss"), "head.loss")
            if "loss" in d
            else LossConfig()
        )
        cfg = cls(loss=loss, **d)
        if cfg.kind not in ("dual", "single"):
            raise ConfigError(f"head.kind must be 'dual' or 'single', got {cfg.kind!r}")
        cfg.loss.validate()
        return cfg

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "tau": self.tau,
            "classifier_scale": self.classifier_scale,
            "classifier": self.classifier,
            "fusion": self.fusion,
            "ensemble": self.ensemble,
        }
        if self.kind == "single":
            out["loss"] = asdict(self.loss)
        return out


@dataclass
class OptimizerConfig:
    kind: str = "sgd"
    lr: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 0.0005
    schedule: str = "cosine"  # per-epoch cosine annealing to zero
    epochs: int = 15
    batch_size: int = 32

    def validate(self):
        if self.kind != "sgd":
            raise ConfigError(f"optimizer.kind must be 'sgd', got {self.kind!r}")
        if self.schedule not in ("cosine", "constant"):
            raise ConfigError(
                f"optimizer.schedule must be 'cosine' or 'constant', got {self.schedule!r}"
            )
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        return self


@dataclass
class ExperimentConfig:
    dataset: DataConfig
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    output_dir: str = "runs/run"
    selection: str = "bscore"  # "bscore" | "ovacc" | "last"
    t_many: int = 100
    t_few: int = 20

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _strict_keys(
            d,
            {
                "dataset", "backbone", "head", "optimizer",
                "seed", "output_dir", "selection", "t_many", "t_few",
            },
            "config",
        )
        if "dataset" not in d:
            raise ConfigError("config requires a 'dataset' section")
        cfg = cls(
            dataset=DataConfig.from_dict(d["dataset"]),
            backbone=BackboneConfig.from_dict(d.get("backbone", {})),
            head=HeadConfig.from_dict(d.get("head", {})),
            optimizer=_dataclass_from(
                OptimizerConfig, d.get("optimizer", {}), "optimizer"
            ).validate(),
            seed=int(d.get("seed", 0)),
            output_dir=d.get("output_dir", "runs/run"),
            selection=d.get("selection", "bscore"),
            t_many=int(d.get("t_many", 100)),
            t_few=int(d.get("t_few", 20)),
        )
        if cfg.selection not in SELECTION_MODES:
            raise ConfigError(
                f"selection must be one of {SELECTION_MODES}, got {cfg.selection!r}"
            )
        return cfg

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        if not os.path.exists(path):
            raise ConfigError(f"config file does not exist: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset.to_dict(),
            "backbone": self.backbone.to_dict(),
            "head": self.head.to_dict(),
            "optimizer": asdict(self.optimizer),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "selection": self.selection,
            "t_many": self.t_many,
            "t_few": self.t_few,
        }

    def resolved_output_dir(self) -> str:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not os.path.isabs(self.output_dir):
            return os.path.join(root, self.output_dir)
        return self.output_dir


class SGD:
    """SGD with momentum and L2 weight decay over the trainable partition."""

    def __init__(self, params: list[Param], momentum: float, weight_decay: float):
        self.params = [p for p in params if p.trainable]
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float):
        for p, vel in zip(self.params, self._velocity):
            g = p.grad + self.weight_decay * p.data
            vel *= self.momentum
            vel += g
            p.data[...] -= lr * vel


def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    return 0.5 * base_lr * (1.0 + np.cos(np.pi * epoch / total_epochs))


def build_model(cfg: ExperimentConfig, num_classes: int):
    """Construct backbone + head from config and apply the freeze contract."""
    rng = Rng(cfg.seed).substream("model")
    backbone = VisionTransformer(cfg.backbone.vit, cfg.backbone.adapter, rng)
    if cfg.backbone.weights_path:
        arrays, _ = load_params(cfg.backbone.weights_path)
        assign_params(backbone.params, arrays, strict=False)
    if cfg.head.kind == "dual":
        head = DualHead(
            num_classes,
            cfg.backbone.vit.embed_dim,
            rng,
            tau=cfg.head.tau,
            classifier_scale=cfg.head.classifier_scale,
            classifier=cfg.head.classifier,
            fusion_mode=cfg.head.fusion,
        )
    else:
        head = SingleHead(
            num_classes,
            cfg.backbone.vit.embed_dim,
            rng,
            loss_cfg=cfg.head.loss,
            classifier_scale=cfg.head.classifier_scale,
            classifier=cfg.head.classifier,
        )
    backbone.freeze_backbone()
    return backbone, head


def _named_params(backbone: VisionTransformer, head) -> list[Param]:
    return backbone.param_list() + head.param_list()


def predict_dataset(
    backbone: VisionTransformer,
    head,
    images: np.ndarray,
    batch_size: int,
    predict_from: str = "ensemble",
) -> np.ndarray:
    """Forward a whole split without recording gradients."""
    if predict_from not in PREDICT_MODES:
        raise ConfigError(f"predict_from must be one of {PREDICT_MODES}")
    preds = []
    with no_grad():
        for start in range(0, images.shape[0], batch_size):
            batch = images[start : start + batch_size]
            taps = backbone.forward_with_taps(batch)
            if isinstance(head, DualHead):
                s1, s2 = head.predict(taps)
                if predict_from == "ensemble":
                    preds.append(infer(s1, s2))
                elif predict_from == "s1":
                    preds.append(np.argmax(s1.data, axis=-1))
                else:
                    preds.append(np.argmax(s2.data, axis=-1))
            else:
                preds.append(np.argmax(head.predict(taps).data, axis=-1))
    return np.concatenate(preds)


def _eval_split(
    backbone, head, ds, batch_size, num_classes, assignment, predict_from="ensemble"
) -> EvalReport:
    preds = predict_dataset(backbone, head, ds.images, batch_size, predict_from)
    return evaluate_predictions(preds, ds.labels, num_classes, assignment)


def _selection_metric(report: EvalReport, selection: str) -> float:
    return report.ovacc if selection == "ovacc" else report.bscore


def checkpoint_hash(path: str) -> str:
    """SHA-256 over the checkpoint manifest and parameter blob."""
    digest = hashlib.sha256()
    for name in ("manifest.json", "params.bin"):
        with open(os.path.join(path, name), "rb") as fh:
            digest.update(fh.read())
    return digest.hexdigest()


def train(cfg: ExperimentConfig, verbose: bool = True) -> dict:
    """Run one experiment end to end; returns the run record."""
    t_start = time.monotonic()
    out_dir = cfg.resolved_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    rng = Rng(cfg.seed)

    bundle = cfg.dataset.load(rng)
    train_ds, val_ds, test_ds = bundle["train"], bundle["val"], bundle["test"]
    num_classes = bundle.num_classes
    priors = class_priors(train_ds.labels, num_classes)
    assignment = group_split(bundle.counts, cfg.t_many, cfg.t_few)
    if train_ds.images.shape[1] != cfg.backbone.vit.image_size:
        raise ConfigError(
            f"dataset images are {train_ds.images.shape[1]}px but backbone expects "
            f"{cfg.backbone.vit.image_size}px"
        )

    backbone, head = build_model(cfg, num_classes)
    frozen, trainable = partition_params(_named_params(backbone, head))
    frozen_snapshot = {p.name: p.data.copy() for p in frozen}
    opt = SGD(trainable, cfg.optimizer.momentum, cfg.optimizer.weight_decay)

    predict_from = "ensemble"
    if isinstance(head, DualHead) and not cfg.head.ensemble:
        predict_from = "s1"

    n_train = train_ds.labels.size
    opt_cfg = cfg.optimizer
    history = []
    best_metric = -np.inf
    best_epoch = -1
    best_state: dict[str, np.ndarray] | None = None
    step = 0

    for epoch in range(opt_cfg.epochs):
        lr = (
            cosine_lr(opt_cfg.lr, epoch, opt_cfg.epochs)
            if opt_cfg.schedule == "cosine"
            else opt_cfg.lr
        )
        order = rng.substream("shuffle", epoch).permutation(n_train)
        epoch_loss = 0.0  # sample-weighted, so it is batching-independent
        for start in range(0, n_train, opt_cfg.batch_size):
            idx = order[start : start + opt_cfg.batch_size]
            images = train_ds.images[idx]
            labels = train_ds.labels[idx]
            taps = backbone.forward_with_taps(images)
            if isinstance(head, DualHead):
                s1, s2 = head.predict(taps)
                loss = head.loss(s1, s2, labels, priors)
            else:
                loss = head.loss(head.predict(taps), labels, priors)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingDiverged(step=step, lr=lr, loss=loss_value)
            opt.zero_grad()
            loss.backward()
            opt.step(lr)
            epoch_loss += loss_value * idx.size
            step += 1

        val_report = _eval_split(
            backbone, head, val_ds, opt_cfg.batch_size, num_classes, assignment, predict_from
        )
        history.append(
            {
                "epoch": epoch,
                "lr": lr,
                "train_loss": epoch_loss / n_train,
                "val": val_report.to_dict(),
            }
        )
        if verbose:
            print(
                f"epoch {epoch:3d}  lr {lr:.5f}  loss {epoch_loss / n_train:.4f}  "
                f"val: {format_summary(val_report)}"
            )
        metric = _selection_metric(val_report, cfg.selection)
        if cfg.selection == "last" or metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_state = {p.name: p.data.copy() for p in trainable}

    # restore the selected epoch's trainable parameters
    for p in trainable:
        p.data[...] = best_state[p.name]
    for p in frozen:
        if not np.array_equal(p.data, frozen_snapshot[p.name]):
            raise AssertionError(f"frozen parameter {p.name} changed during training")

    ckpt_dir = os.path.join(out_dir, "checkpoint")
    save_params(
        _named_params(backbone, head),
        ckpt_dir,
        extra={
            "model": {
                "backbone": cfg.backbone.to_dict(),
                "head": cfg.head.to_dict(),
                "num_classes": num_classes,
            }
        },
    )

    final_train = _eval_split(
        backbone, head, train_ds, opt_cfg.batch_size, num_classes, assignment, predict_from
    )
    final_test = _eval_split(
        backbone, head, test_ds, opt_cfg.batch_size, num_classes, assignment, predict_from
    )
    record = {
        "config": cfg.to_dict(),
        "class_counts": [int(n) for n in bundle.counts],
        "history": history,
        "selected_epoch": best_epoch,
        "final": {"train": final_train.to_dict(), "test": final_test.to_dict()},
        "num_params": {
            "frozen": int(sum(p.data.size for p in frozen)),
            "trainable": int(sum(p.data.size for p in trainable)),
        },
        "checkpoint_hash": checkpoint_hash(ckpt_dir),
        "wall_clock_sec": time.monotonic() - t_start,
    }
    atomic_write_json(os.path.join(out_dir, "config.json"), cfg.to_dict())
    atomic_write_json(os.path.join(out_dir, "run_record.json"), record)
    write_report_json(final_test, os.path.join(out_dir, "eval_report.json"))
    write_per_class_csv(
        final_test,
        bundle.counts,
        os.path.join(out_dir, "per_class.csv"),
        assignment,
    )
    if verbose:
        print(f"test: {format_summary(final_test)}")
        print(f"wrote {out_dir}")
    return record


# ---------------------------------------------------------------------------
# standalone evaluation / analysis over saved checkpoints
# ---------------------------------------------------------------------------


def load_checkpoint_model(ckpt_path: str):
    """Rebuild backbone + head from a checkpoint's embedded model section."""
    arrays, manifest = load_params(ckpt_path)
    model_info = manifest.get("model")
    if not model_info:
        raise FormatError("checkpoint manifest lacks a 'model' section")
    backbone_cfg = BackboneConfig.from_dict(dict(model_info["backbone"]))
    head_cfg = HeadConfig.from_dict(dict(model_info["head"]))
    num_classes = int(model_info["num_classes"])
    stub = ExperimentConfig(
        dataset=DataConfig(path="unused", profile=None),
        backbone=backbone_cfg,
        head=head_cfg,
    )
    backbone, head = build_model(stub, num_classes)
    named = {p.name: p for p in _named_params(backbone, head)}
    assign_params(named, arrays, strict=True)
    return backbone, head, head_cfg, num_classes


def evaluate_checkpoint(
    ckpt_path: str,
    data_path: str,
    split: str = "test",
    t_many: int = 100,
    t_few: int = 20,
    with_groups: bool = True,
    predict_from: str | None = None,
    batch_size: int = 64,
) -> tuple[EvalReport, DatasetBundle, GroupAssignment | None]:
    backbone, head, head_cfg, num_classes = load_checkpoint_model(ckpt_path)
    bundle = read_dataset(data_path)
    if bundle.num_classes != num_classes:
        raise ConfigError(
            f"dataset has {bundle.num_classes} classes, checkpoint expects {num_classes}"
        )
    if split not in bundle.splits:
        raise ConfigError(f"split {split!r} not in dataset ({sorted(bundle.splits)})")
    assignment = group_split(bundle.counts, t_many, t_few) if with_groups else None
    if predict_from is None:
        predict_from = (
            "ensemble" if (head_cfg.kind == "single" or head_cfg.ensemble) else "s1"
        )
    report = _eval_split(
        backbone, head, bundle[split], batch_size, num_classes, assignment, predict_from
    )
    return report, bundle, assignment


def compute_taps(backbone, images: np.ndarray, batch_size: int = 64):
    """Penultimate/final features for a stack of images, gradient-free."""
    pens, fins = [], []
    with no_grad():
        for start in range(0, images.shape[0], batch_size):
            taps = backbone.forward_with_taps(images[start : start + batch_size])
            pens.append(taps.penultimate.data)
            fins.append(taps.final.data)
    return np.concatenate(pens), np.concatenate(fins)


def analyze_ot(
    ckpt_path: str,
    data_path: str,
    split: str = "test",
    epsilon: float = 1e-2,
    p: float = 2.0,
    max_iters: int = 100_000,
    marginal_tol: float = 1e-8,
    normalization: str = "joint_standardize",
    max_samples: int = 128,
    seed: int = 0,
) -> dict:
    """Transport cost between penultimate and final features of a checkpoint."""
    backbone, _head, _head_cfg, _c = load_checkpoint_model(ckpt_path)
    bundle = read_dataset(data_path)
    if split not in bundle.splits:
        raise ConfigError(f"split {split!r} not in dataset ({sorted(bundle.splits)})")
    images = bundle[split].images
    if images.shape[0] > max_samples:
        keep = Rng(seed).substream("ot").permutation(images.shape[0])[:max_samples]
        images = images[np.sort(keep)]
    z_pen, z_fin = compute_taps(backbone, images)
    cfg = SinkhornConfig(
        epsilon=epsilon, p=p, max_iters=max_iters, marginal_tol=marginal_tol
    )
    result = layer_discrepancy(z_pen, z_fin, cfg, normalization=normalization)
    return {
        "epsilon": epsilon,
        "p": p,
        "iterations": result.iterations,
        "marginal_violation": result.marginal_violation,
        "cost": result.cost,
        "cost_root": result.cost_root,
        "normalization": normalization,
        "num_samples": int(images.shape[0]),
    }


def sample_head_hypotheses(
    backbone,
    head: DualHead,
    images: np.ndarray,
    labels: np.ndarray,
    num_hypotheses: int,
    noise: float,
    rng: Rng,
) -> tuple[HypothesisSample, HypothesisSample]:
    """Hypothesis samples around the trained head.

    Branch one perturbs the gates and fused-feature classifier, branch two
    the final-feature classifier; each hypothesis maps a sample to its
    true-class logit. Draw 0 is the unperturbed trained head.
    """
    from .backbone import FeatureTaps
    from .autodiff import Tensor

    z_pen, z_fin = compute_taps(backbone, images)
    taps = FeatureTaps(penultimate=Tensor(z_pen), final=Tensor(z_fin))
    idx = np.arange(labels.size)

    branch1 = np.empty((num_hypotheses, labels.size))
    branch2 = np.empty((num_hypotheses, labels.size))
    perturbed1 = [head.gate.w1, head.gate.w2] + head.g1.param_list()
    perturbed2 = head.g2.param_list()
    saved = {p.name: p.data.copy() for p in perturbed1 + perturbed2}
    try:
        with no_grad():
            for k in range(num_hypotheses):
                draw = rng.substream("hyp", k)
                for p in perturbed1 + perturbed2:
                    p.data[...] = saved[p.name]
                    if k > 0:
                        p.data[...] += draw.substream(p.name).normal(p.data.shape, scale=noise)
                s1, s2 = head.predict(taps)
                branch1[k] = s1.data[idx, labels]
                branch2[k] = s2.data[idx, labels]
    finally:
        for p in perturbed1 + perturbed2:
            p.data[...] = saved[p.name]
    return HypothesisSample(branch1), HypothesisSample(branch2)


def check_theory(
    ckpt_path: str,
    data_path: str,
    split: str = "test",
    num_samples: int = 64,
    num_hypotheses: int = 24,
    noise: float = 0.1,
    num_sigma_draws: int = 10_000,
    seed: int = 0,
) -> dict:
    """Sum-class complexity check on hypothesis sets sampled around a trained head."""
    backbone, head, head_cfg, _c = load_checkpoint_model(ckpt_path)
    if head_cfg.kind != "dual":
        raise ConfigError("theory check requires a dual-head checkpoint")
    bundle = read_dataset(data_path)
    ds = bundle[split]
    rng = Rng(seed)
    keep = rng.substream("subset").permutation(ds.labels.size)[:num_samples]
    images, labels = ds.images[keep], ds.labels[keep]
    h1, h2 = sample_head_hypotheses(
        backbone, head, images, labels, num_hypotheses, noise, rng
    )
    res = subadditivity_check(h1, h2, num_sigma_draws, rng.substream("sigma"))
    return {
        "r1": res.r1.estimate,
        "r2": res.r2.estimate,
        "r_sum": res.r_sum_class.estimate,
        "stderrs": {
            "r1": res.r1.stderr,
            "r2": res.r2.stderr,
            "r_sum": res.r_sum_class.stderr,
            "combined": res.combined_stderr,
        },
        "margin": res.margin,
        "per_draw_holds": res.per_draw_holds,
        "holds": res.holds,
        "num_samples": int(labels.size),
        "num_hypotheses": num_hypotheses,
        "num_sigma_draws": num_sigma_draws,
    }
