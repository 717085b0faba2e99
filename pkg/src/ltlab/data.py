"""Synthetic long-tailed image datasets, class statistics, and the LTDS v1 format.

Class counts follow the usual geometric profile: the head class keeps
``n_max`` samples and counts decay so that the head/tail ratio equals the
requested imbalance factor. Images are per-class Gaussian texture prototypes
(a low-resolution random grid upsampled to full size) plus pixel noise,
rendered deterministically from per-(seed, class, split) substreams so the
result is independent of generation order or worker count.

On disk a dataset is an "LTDS v1" bundle: a directory holding
``manifest.json``, an ``images.bin`` blob of little-endian float32 pixels
(splits concatenated in manifest order), and a ``labels.bin`` array of
little-endian uint32 labels. The manifest records split shapes, per-class
training counts, and a CRC32 checksum of the image blob; round trips are
bit-exact.
"""

from __future__ import annotations

import json
import os
import tempfile
import zlib
from dataclasses import dataclass

import numpy as np

from .autodiff import Rng
from .errors import ConfigError, DegenerateClassError, FormatError

MANY = "Many"
MEDIUM = "Medium"
FEW = "Few"

LTDS_VERSION = 1
_MANIFEST = "manifest.json"
_IMAGES = "images.bin"
_LABELS = "labels.bin"


@dataclass(frozen=True)
class ClassPrior:
    """Per-class sample counts and their normalized empirical frequencies."""

    counts: np.ndarray
    priors: np.ndarray

    @classmethod
    def from_counts(cls, counts) -> "ClassPrior":
        counts = np.asarray(counts, dtype=np.int64)
        if counts.size == 0 or np.any(counts < 1):
            raise DegenerateClassError(
                f"every class needs at least one sample, got counts={counts.tolist()}"
            )
        priors = counts.astype(np.float64) / counts.sum()
        return cls(counts=counts, priors=priors)

    @property
    def num_classes(self) -> int:
        return int(self.counts.size)


@dataclass(frozen=True)
class LongTailProfile:
    """Shape of a long-tailed label distribution."""

    num_classes: int
    n_max: int
    imbalance_factor: float

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.imbalance_factor < 1.0:
            raise ConfigError(
                f"imbalance_factor must be >= 1, got {self.imbalance_factor}"
            )
        if self.n_max < self.imbalance_factor:
            raise ConfigError(
                f"n_max ({self.n_max}) must be >= imbalance_factor "
                f"({self.imbalance_factor}) so the tail class keeps a sample"
            )


@dataclass
class LabeledDataset:
    """One split: images in [0,1] with integer labels."""

    images: np.ndarray  # [n, H, W, C] float64, values exactly float32-representable
    labels: np.ndarray  # [n] int64 in [0, num_classes)
    split: str


@dataclass(frozen=True)
class GroupAssignment:
    """Many/Medium/Few tags from thresholding per-class sample counts.

    A class is Many iff count > t_many, Few iff count < t_few, else Medium;
    boundary counts deliberately fall in the middle group.
    """

    tags: tuple[str, ...]
    t_many: int
    t_few: int


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic texture-cluster generator."""

    image_size: int = 16
    channels: int = 1
    grid: int = 4  # prototype resolution before upsampling
    contrast: float = 0.5
    noise_std: float = 0.15
    val_fraction: float = 0.15
    test_fraction: float = 0.25
    balanced_test: bool = False

    def __post_init__(self):
        if self.image_size % self.grid != 0:
            raise ConfigError(
                f"image_size {self.image_size} must be divisible by grid {self.grid}"
            )
        if self.noise_std < 0 or self.contrast <= 0:
            raise ConfigError("noise_std must be >= 0 and contrast > 0")
        if self.val_fraction <= 0 or self.test_fraction <= 0:
            raise ConfigError("val_fraction and test_fraction must be positive")


@dataclass
class DatasetBundle:
    """All splits of one dataset plus its training-class counts."""

    splits: dict[str, LabeledDataset]
    counts: np.ndarray  # per-class *training* counts
    num_classes: int

    def __getitem__(self, split: str) -> LabeledDataset:
        return self.splits[split]


def make_exponential_counts(profile: LongTailProfile) -> np.ndarray:
    """Geometric class counts: n_k = round(n_max * IF^(-k/(C-1)))."""
    c = profile.num_classes
    k = np.arange(c, dtype=np.float64)
    raw = profile.n_max * profile.imbalance_factor ** (-k / (c - 1))
    counts = np.rint(raw).astype(np.int64)
    return counts


def imbalance_factor(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0 or counts.min() < 1:
        raise ConfigError("counts must be nonempty with min >= 1")
    return float(counts.max() / counts.min())


def class_priors(ds_or_labels, num_classes: int | None = None) -> ClassPrior:
    """Empirical per-class counts/frequencies; every class must appear."""
    labels = (
        ds_or_labels.labels
        if isinstance(ds_or_labels, LabeledDataset)
        else np.asarray(ds_or_labels, dtype=np.int64)
    )
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 0
    counts = np.bincount(labels, minlength=num_classes)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise DegenerateClassError(
            f"classes {missing} have no samples; priors would contain zeros"
        )
    return ClassPrior.from_counts(counts)


def group_split(counts, t_many: int = 100, t_few: int = 20) -> GroupAssignment:
    if t_many <= t_few or t_few < 1:
        raise ConfigError(f"need t_many > t_few >= 1, got ({t_many}, {t_few})")
    counts = np.asarray(counts, dtype=np.int64)
    tags = tuple(
        MANY if n > t_many else FEW if n < t_few else MEDIUM for n in counts
    )
    return GroupAssignment(tags=tags, t_many=int(t_many), t_few=int(t_few))


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------


def _prototype(rng: Rng, gen: SynthConfig) -> np.ndarray:
    """Smooth-ish class texture: coarse random grid upsampled to full size."""
    coarse = rng.normal((gen.grid, gen.grid, gen.channels))
    scale = gen.image_size // gen.grid
    up = np.kron(coarse, np.ones((scale, scale, 1)))
    return 0.5 + gen.contrast * np.tanh(up)


def _render(rng: Rng, proto: np.ndarray, n: int, gen: SynthConfig) -> np.ndarray:
    noise = rng.normal((n,) + proto.shape, scale=gen.noise_std)
    imgs = np.clip(proto[None, ...] + noise, 0.0, 1.0)
    # quantize to float32 so the on-disk format round-trips bit-exactly
    return imgs.astype(np.float32).astype(np.float64)


def synth_longtail(
    profile: LongTailProfile, gen: SynthConfig, rng: Rng
) -> DatasetBundle:
    """Deterministically synthesize train/val/test splits.

    Train follows the geometric long-tail counts; val and test mirror the
    same imbalanced distribution (per-class fractions of the train count)
    unless ``gen.balanced_test`` forces equal test counts per class.
    """
    counts = make_exponential_counts(profile)
    c = profile.num_classes
    if round(profile.n_max * gen.val_fraction) < 1 or round(
        profile.n_max * gen.test_fraction
    ) < 1:
        raise ConfigError(
            f"n_max={profile.n_max} too small for val/test fractions "
            f"({gen.val_fraction}, {gen.test_fraction})"
        )

    balanced_count = int(max(1, np.rint(gen.test_fraction * profile.n_max)))
    split_counts: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for k in range(c):
        split_counts["train"].append(int(counts[k]))
        split_counts["val"].append(int(max(1, np.rint(gen.val_fraction * counts[k]))))
        split_counts["test"].append(
            balanced_count
            if gen.balanced_test
            else int(max(1, np.rint(gen.test_fraction * counts[k])))
        )

    splits: dict[str, LabeledDataset] = {}
    for s_idx, split in enumerate(("train", "val", "test")):
        images, labels = [], []
        for k in range(c):
            proto = _prototype(rng.substream("proto", k), gen)
            n = split_counts[split][k]
            images.append(_render(rng.substream("pixels", k, s_idx), proto, n, gen))
            labels.append(np.full(n, k, dtype=np.int64))
        splits[split] = LabeledDataset(
            images=np.concatenate(images, axis=0),
            labels=np.concatenate(labels, axis=0),
            split=split,
        )
    return DatasetBundle(splits=splits, counts=counts, num_classes=c)


# ---------------------------------------------------------------------------
# LTDS v1 bundle format
# ---------------------------------------------------------------------------


def atomic_write_bytes(path: str, payload: bytes):
    """Write via a temp file in the same directory, then rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: str, obj):
    atomic_write_bytes(path, json.dumps(obj, indent=2).encode("utf-8"))


def write_dataset(bundle: DatasetBundle, path: str):
    """Serialize a bundle as an LTDS v1 directory."""
    os.makedirs(path, exist_ok=True)
    split_entries = []
    image_parts, label_parts = [], []
    for name, ds in bundle.splits.items():
        split_entries.append(
            {
                "name": name,
                "num_samples": int(ds.labels.size),
                "image_shape": list(ds.images.shape[1:]),
            }
        )
        image_parts.append(ds.images.astype("<f4").tobytes())
        label_parts.append(ds.labels.astype("<u4").tobytes())
    blob = b"".join(image_parts)
    manifest = {
        "version": LTDS_VERSION,
        "num_classes": int(bundle.num_classes),
        "splits": split_entries,
        "counts": [int(n) for n in bundle.counts],
        "checksum": zlib.crc32(blob),
    }
    atomic_write_bytes(os.path.join(path, _IMAGES), blob)
    atomic_write_bytes(os.path.join(path, _LABELS), b"".join(label_parts))
    atomic_write_json(os.path.join(path, _MANIFEST), manifest)


def read_dataset(path: str) -> DatasetBundle:
    """Load an LTDS v1 directory, validating shapes and the blob checksum."""
    manifest_path = os.path.join(path, _MANIFEST)
    if not os.path.exists(manifest_path):
        raise FormatError(f"no LTDS manifest at {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in ("version", "num_classes", "splits", "counts", "checksum"):
        if key not in manifest:
            raise FormatError(f"manifest missing key {key!r}")
    if manifest["version"] != LTDS_VERSION:
        raise FormatError(f"unsupported LTDS version {manifest['version']}")

    with open(os.path.join(path, _IMAGES), "rb") as fh:
        blob = fh.read()
    if zlib.crc32(blob) != manifest["checksum"]:
        raise FormatError("image blob checksum mismatch")
    with open(os.path.join(path, _LABELS), "rb") as fh:
        label_blob = fh.read()

    expected_floats = sum(
        entry["num_samples"] * int(np.prod(entry["image_shape"]))
        for entry in manifest["splits"]
    )
    if len(blob) != 4 * expected_floats:
        raise FormatError(
            f"image blob holds {len(blob) // 4} floats, manifest expects {expected_floats}"
        )
    total_samples = sum(entry["num_samples"] for entry in manifest["splits"])
    if len(label_blob) != 4 * total_samples:
        raise FormatError(
            f"label array holds {len(label_blob) // 4} entries, manifest expects {total_samples}"
        )

    images_flat = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    labels_flat = np.frombuffer(label_blob, dtype="<u4").astype(np.int64)
    num_classes = int(manifest["num_classes"])
    if labels_flat.size and (labels_flat.min() < 0 or labels_flat.max() >= num_classes):
        raise FormatError("labels out of range for num_classes")

    splits: dict[str, LabeledDataset] = {}
    img_off = lab_off = 0
    for entry in manifest["splits"]:
        n = entry["num_samples"]
        shape = tuple(entry["image_shape"])
        size = n * int(np.prod(shape))
        splits[entry["name"]] = LabeledDataset(
            images=images_flat[img_off : img_off + size].reshape((n,) + shape),
            labels=labels_flat[lab_off : lab_off + n],
            split=entry["name"],
        )
        img_off += size
        lab_off += n
    return DatasetBundle(
        splits=splits,
        counts=np.asarray(manifest["counts"], dtype=np.int64),
        num_classes=num_classes,
    )
