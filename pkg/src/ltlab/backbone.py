"""Toy vision transformer with bottleneck adapters and two feature taps.

The backbone is a standard pre-norm transformer over non-overlapping image
patches plus a learnable class token. A bottleneck adapter
``h + s * W_up relu(W_down h)`` follows each feed-forward sub-layer; its
up-projection starts at zero so the adapted network reproduces the plain
one exactly at initialization. ``forward_with_taps`` returns the class-token
representation after the second-to-last and last blocks (each through its
own trainable normalization by default, selectable via ``tap_norm``).

Parameter-efficient training freezes every backbone weight; only adapters,
tap normalizations, and whatever head sits on top stay trainable.

Checkpoints are a directory with ``manifest.json`` (named parameter shapes,
blob checksum, optional extra metadata) next to ``params.bin``, a
little-endian float64 blob; round trips are bit-exact.

Weights are read-shareable across threads for inference; training mutates
them from one thread.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Param, Rng, Tensor
from .data import atomic_write_bytes, atomic_write_json
from .errors import ConfigError, DimensionError, FormatError

CHECKPOINT_MANIFEST = "manifest.json"
CHECKPOINT_BLOB = "params.bin"


@dataclass(frozen=True)
class ViTConfig:
    image_size: int = 16
    patch_size: int = 4
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4
    ffn_hidden: int = 128
    channels: int = 1
    tap_norm: bool = True  # pass taps through their own trainable LayerNorm

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.depth < 2:
            raise ConfigError(f"depth must be >= 2 for a penultimate tap, got {self.depth}")
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}"
            )

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels


@dataclass(frozen=True)
class AdapterConfig:
    bottleneck_dim: int = 8
    scaling: float = 1.0
    # activation is fixed to ReLU

    def validate(self, embed_dim: int):
        if not (1 <= self.bottleneck_dim < embed_dim):
            raise ConfigError(
                f"bottleneck_dim must satisfy 1 <= r < {embed_dim}, got {self.bottleneck_dim}"
            )
        return self


@dataclass
class FeatureTaps:
    penultimate: Tensor  # [batch, embed_dim]
    final: Tensor  # [batch, embed_dim]


def patchify(images: np.ndarray, patch_size: int) -> np.ndarray:
    """[n, H, W, C] -> [n, num_patches, patch_size^2 * C], row-major patches."""
    n, h, w, c = images.shape
    if h % patch_size or w % patch_size:
        raise DimensionError(f"image {h}x{w} not divisible by patch size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    x = images.reshape(n, gh, patch_size, gw, patch_size, c)
    x = x.transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(n, gh * gw, patch_size * patch_size * c)


def mhsa(tokens: Tensor, wq, bq, wk, bk, wv, bv, wo, bo, num_heads: int) -> Tensor:
    """Multi-head self-attention over [batch, tokens, dim] (no residual)."""
    b, t, d = tokens.shape
    if d % num_heads:
        raise ConfigError(f"dim {d} not divisible by heads {num_heads}")
    hd = d // num_heads

    def split_heads(x: Tensor) -> Tensor:
        return x.reshape(b, t, num_heads, hd).transpose((0, 2, 1, 3))

    q = split_heads(ad.linear(tokens, wq, bq))
    k = split_heads(ad.linear(tokens, wk, bk))
    v = split_heads(ad.linear(tokens, wv, bv))
    scores = (q @ k.transpose((0, 1, 3, 2))) * (hd**-0.5)
    attn = ad.softmax(scores, axis=-1)
    mixed = (attn @ v).transpose((0, 2, 1, 3)).reshape(b, t, d)
    return ad.linear(mixed, wo, bo)


def ffn(x: Tensor, w1, b1, w2, b2) -> Tensor:
    """Two-layer feed-forward with GELU."""
    return ad.linear(ad.gelu(ad.linear(x, w1, b1)), w2, b2)


def adapter(h: Tensor, down, up, scaling: float) -> Tensor:
    """Residual bottleneck: h + scaling * (relu(h @ down) @ up)."""
    return h + scaling * (ad.relu(h @ ad._tensor_of(down)) @ ad._tensor_of(up))


class VisionTransformer:
    """Patch-token transformer exposing penultimate and final class-token taps."""

    def __init__(self, cfg: ViTConfig, adapter_cfg: AdapterConfig, rng: Rng):
        adapter_cfg.validate(cfg.embed_dim)
        self.cfg = cfg
        self.adapter_cfg = adapter_cfg
        self.params: dict[str, Param] = {}
        d = cfg.embed_dim

        def xavier(r: Rng, fan_in: int, fan_out: int) -> np.ndarray:
            return r.normal((fan_in, fan_out), scale=np.sqrt(2.0 / (fan_in + fan_out)))

        def p(name: str, value: np.ndarray) -> Param:
            param = Param(Tensor(value, requires_grad=True), name=name)
            self.params[name] = param
            return param

        r = rng.substream("backbone")
        p("patch_embed.weight", xavier(r.substream("embed"), cfg.patch_dim, d))
        p("pos_embed", r.substream("pos").normal((cfg.num_patches, d), scale=0.02))
        p("cls_token", r.substream("cls").normal((1, 1, d), scale=0.02))
        for i in range(cfg.depth):
            br = r.substream("block", i)
            prefix = f"blocks.{i}"
            p(f"{prefix}.ln1.gain", np.ones(d))
            p(f"{prefix}.ln1.bias", np.zeros(d))
            for w_name in ("wq", "wk", "wv", "wo"):
                p(f"{prefix}.attn.{w_name}", xavier(br.substream(w_name), d, d))
                p(f"{prefix}.attn.{w_name[1]}b", np.zeros(d))
            p(f"{prefix}.ln2.gain", np.ones(d))
            p(f"{prefix}.ln2.bias", np.zeros(d))
            p(f"{prefix}.ffn.w1", xavier(br.substream("ffn1"), d, cfg.ffn_hidden))
            p(f"{prefix}.ffn.b1", np.zeros(cfg.ffn_hidden))
            p(f"{prefix}.ffn.w2", xavier(br.substream("ffn2"), cfg.ffn_hidden, d))
            p(f"{prefix}.ffn.b2", np.zeros(d))
            # down small-random, up zero: the adapter is an exact identity at init
            p(
                f"{prefix}.adapter.down",
                br.substream("adown").normal((d, adapter_cfg.bottleneck_dim), scale=0.1),
            )
            p(f"{prefix}.adapter.up", np.zeros((adapter_cfg.bottleneck_dim, d)))
        for tap in ("pen", "fin"):
            p(f"tap_norm.{tap}.gain", np.ones(d))
            p(f"tap_norm.{tap}.bias", np.zeros(d))

    def _g(self, name: str) -> Param:
        return self.params[name]

    def patch_embed(self, images: np.ndarray) -> Tensor:
        """Patch projection + positional offsets, class token prepended.

        Pixel values (dataset contract: [0, 1]) are mapped to [-1, 1] first,
        the usual input normalization; without it the shared background mean
        dominates every token and class directions collapse angularly.
        """
        cfg = self.cfg
        if images.ndim != 4 or images.shape[1:] != (
            cfg.image_size,
            cfg.image_size,
            cfg.channels,
        ):
            raise ConfigError(
                f"expected images [n, {cfg.image_size}, {cfg.image_size}, "
                f"{cfg.channels}], got {images.shape}"
            )
        patches = Tensor(patchify(2.0 * images - 1.0, cfg.patch_size))
        tokens = ad.linear(patches, self._g("patch_embed.weight")) + self._g(
            "pos_embed"
        ).tensor
        cls = ad.broadcast_to(
            self._g("cls_token").tensor, (images.shape[0], 1, cfg.embed_dim)
        )
        return ad.concat([cls, tokens], axis=1)

    def _block(self, z: Tensor, i: int) -> Tensor:
        g = self._g
        prefix = f"blocks.{i}"
        attn_in = ad.layer_norm(z, g(f"{prefix}.ln1.gain"), g(f"{prefix}.ln1.bias"))
        z = z + mhsa(
            attn_in,
            g(f"{prefix}.attn.wq"), g(f"{prefix}.attn.qb"),
            g(f"{prefix}.attn.wk"), g(f"{prefix}.attn.kb"),
            g(f"{prefix}.attn.wv"), g(f"{prefix}.attn.vb"),
            g(f"{prefix}.attn.wo"), g(f"{prefix}.attn.ob"),
            self.cfg.heads,
        )
        ffn_in = ad.layer_norm(z, g(f"{prefix}.ln2.gain"), g(f"{prefix}.ln2.bias"))
        z = z + ffn(
            ffn_in,
            g(f"{prefix}.ffn.w1"), g(f"{prefix}.ffn.b1"),
            g(f"{prefix}.ffn.w2"), g(f"{prefix}.ffn.b2"),
        )
        return adapter(
            z,
            g(f"{prefix}.adapter.down"),
            g(f"{prefix}.adapter.up"),
            self.adapter_cfg.scaling,
        )

    def forward_with_taps(self, images: np.ndarray) -> FeatureTaps:
        z = self.patch_embed(images)
        pen_cls = None
        for i in range(self.cfg.depth):
            z = self._block(z, i)
            if i == self.cfg.depth - 2:
                pen_cls = z[:, 0, :]
        fin_cls = z[:, 0, :]
        if self.cfg.tap_norm:
            g = self._g
            pen_cls = ad.layer_norm(
                pen_cls, g("tap_norm.pen.gain"), g("tap_norm.pen.bias")
            )
            fin_cls = ad.layer_norm(
                fin_cls, g("tap_norm.fin.gain"), g("tap_norm.fin.bias")
            )
        return FeatureTaps(penultimate=pen_cls, final=fin_cls)

    def freeze_backbone(self):
        """Freeze everything except adapters and tap normalizations."""
        for name, param in self.params.items():
            if ".adapter." in name or name.startswith("tap_norm."):
                continue
            param.freeze()

    def param_list(self) -> list[Param]:
        return list(self.params.values())


def partition_params(params) -> tuple[list[Param], list[Param]]:
    """Split a parameter collection into (frozen, trainable) by flag."""
    params = list(params)
    frozen = [p for p in params if not p.trainable]
    trainable = [p for p in params if p.trainable]
    return frozen, trainable


# ---------------------------------------------------------------------------
# checkpoint I/O (manifest + little-endian float64 blob)
# ---------------------------------------------------------------------------


def save_params(params: list[Param], path: str, extra: dict | None = None):
    os.makedirs(path, exist_ok=True)
    entries = []
    chunks = []
    for p in params:
        entries.append({"name": p.name, "shape": list(p.data.shape)})
        chunks.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    blob = b"".join(chunks)
    manifest = {
        "version": 1,
        "params": entries,
        "checksum": zlib.crc32(blob),
    }
    if extra:
        manifest.update(extra)
    atomic_write_bytes(os.path.join(path, CHECKPOINT_BLOB), blob)
    atomic_write_json(os.path.join(path, CHECKPOINT_MANIFEST), manifest)


def load_params(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (name -> float64 array, manifest)."""
    manifest_path = os.path.join(path, CHECKPOINT_MANIFEST)
    if not os.path.exists(manifest_path):
        raise FormatError(f"no checkpoint manifest at {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    with open(os.path.join(path, CHECKPOINT_BLOB), "rb") as fh:
        blob = fh.read()
    if zlib.crc32(blob) != manifest.get("checksum"):
        raise FormatError("checkpoint blob checksum mismatch")
    flat = np.frombuffer(blob, dtype="<f8")
    expected = sum(int(np.prod(e["shape"])) for e in manifest["params"])
    if flat.size != expected:
        raise FormatError(
            f"checkpoint blob holds {flat.size} floats, manifest expects {expected}"
        )
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape))
        arrays[entry["name"]] = flat[offset : offset + size].reshape(shape).copy()
        offset += size
    return arrays, manifest


def assign_params(params: dict[str, Param], arrays: dict[str, np.ndarray], strict: bool = True):
    """Copy loaded arrays into matching named parameters."""
    for name, value in arrays.items():
        if name not in params:
            if strict:
                raise FormatError(f"checkpoint parameter {name!r} not in model")
            continue
        target = params[name]
        if target.data.shape != value.shape:
            raise FormatError(
                f"shape mismatch for {name!r}: model {target.data.shape}, "
                f"checkpoint {value.shape}"
            )
        target.data[...] = value
    if strict:
        missing = set(params) - set(arrays)
        if missing:
            raise FormatError(f"checkpoint missing parameters: {sorted(missing)}")
