"""Tests for the toy transformer: patching, adapters, taps, freezing, checkpoints."""

import numpy as np
import pytest

from ltlab import autodiff as ad
from ltlab.autodiff import Rng, Tensor, grad_check
from ltlab.backbone import (
    AdapterConfig,
    ViTConfig,
    VisionTransformer,
    adapter,
    assign_params,
    load_params,
    mhsa,
    partition_params,
    patchify,
    save_params,
)
from ltlab.errors import ConfigError, FormatError


def small_model(seed=0, tap_norm=True):
    cfg = ViTConfig(
        image_size=16, patch_size=4, embed_dim=8, depth=2, heads=2,
        ffn_hidden=16, tap_norm=tap_norm,
    )
    return VisionTransformer(cfg, AdapterConfig(bottleneck_dim=4), Rng(seed)), cfg


class TestConfigValidation:
    def test_rejects_indivisible_patch(self):
        with pytest.raises(ConfigError):
            ViTConfig(image_size=10, patch_size=4)

    def test_rejects_depth_one(self):
        with pytest.raises(ConfigError):
            ViTConfig(depth=1)

    def test_rejects_head_mismatch(self):
        with pytest.raises(ConfigError):
            ViTConfig(embed_dim=10, heads=4)

    def test_rejects_adapter_bottleneck_out_of_range(self):
        with pytest.raises(ConfigError):
            AdapterConfig(bottleneck_dim=64).validate(64)


class TestPatchEmbed:
    def test_token_count(self):
        model, cfg = small_model()
        tokens = model.patch_embed(np.zeros((3, 16, 16, 1)))
        assert tokens.shape == (3, 17, 8)  # 16 patches + class token

    def test_patchify_layout(self):
        img = np.arange(16.0).reshape(1, 4, 4, 1)
        patches = patchify(img, 2)
        assert patches.shape == (1, 4, 4)
        np.testing.assert_array_equal(patches[0, 0], [0, 1, 4, 5])
        np.testing.assert_array_equal(patches[0, 3], [10, 11, 14, 15])

    def test_zero_everything_keeps_learned_constants(self):
        model, cfg = small_model()
        model.params["patch_embed.weight"].data[...] = 0.0
        model.params["pos_embed"].data[...] = 0.0
        imgs = np.full((2, 16, 16, 1), 0.5)  # maps to 0 after input normalization
        tokens = model.patch_embed(imgs).data
        cls = model.params["cls_token"].data[0, 0]
        np.testing.assert_allclose(tokens[:, 0, :], np.tile(cls, (2, 1)))
        np.testing.assert_allclose(tokens[:, 1:, :], 0.0, atol=1e-15)

    def test_size_mismatch_rejected(self):
        model, _ = small_model()
        with pytest.raises(ConfigError):
            model.patch_embed(np.zeros((2, 8, 8, 1)))

    def test_gradients_through_embedding(self):
        model, _ = small_model()
        imgs = Rng(3).uniform((2, 16, 16, 1))
        wrt = [
            model.params["patch_embed.weight"],
            model.params["pos_embed"],
            model.params["cls_token"],
        ]
        err = grad_check(lambda *p: (model.patch_embed(imgs) ** 2).sum(), wrt)
        assert err < 1e-5


class TestAdapter:
    def test_zero_up_projection_is_identity(self):
        rng = Rng(1)
        h = Tensor(rng.normal((3, 8)))
        out = adapter(h, Tensor(rng.normal((8, 4))), Tensor(np.zeros((4, 8))), 1.0)
        np.testing.assert_array_equal(out.data, h.data)

    def test_zero_scaling_is_identity(self):
        rng = Rng(2)
        h = Tensor(rng.normal((3, 8)))
        out = adapter(h, Tensor(rng.normal((8, 4))), Tensor(rng.normal((4, 8))), 0.0)
        np.testing.assert_array_equal(out.data, h.data)

    def test_gradients(self):
        rng = Rng(3)
        h = Tensor(rng.normal((3, 8)), requires_grad=True)
        down = Tensor(rng.normal((8, 4), scale=0.5), requires_grad=True)
        up = Tensor(rng.normal((4, 8), scale=0.5), requires_grad=True)
        err = grad_check(lambda h, d, u: (adapter(h, d, u, 0.7) ** 2).sum(), [h, down, up])
        assert err < 1e-5


class TestMhsa:
    def test_single_token_identity_projections(self):
        d = 4
        eye = Tensor(np.eye(d))
        zero = Tensor(np.zeros(d))
        token = Tensor(Rng(5).normal((1, 1, d)))
        out = mhsa(token, eye, zero, eye, zero, eye, zero, eye, zero, num_heads=1)
        np.testing.assert_allclose(out.data, token.data, atol=1e-14)

    def test_head_divisibility(self):
        token = Tensor(np.zeros((1, 2, 6)))
        eye = Tensor(np.eye(6))
        zero = Tensor(np.zeros(6))
        with pytest.raises(ConfigError):
            mhsa(token, eye, zero, eye, zero, eye, zero, eye, zero, num_heads=4)


class TestTaps:
    def test_shapes_and_finiteness(self):
        model, cfg = small_model()
        taps = model.forward_with_taps(Rng(4).uniform((5, 16, 16, 1)))
        assert taps.penultimate.shape == (5, 8)
        assert taps.final.shape == (5, 8)
        assert np.all(np.isfinite(taps.penultimate.data))
        assert np.all(np.isfinite(taps.final.data))

    def test_depth_two_indexing(self):
        """At depth 2 the taps come from blocks 1 and 2 respectively."""
        model, cfg = small_model(tap_norm=False)
        imgs = Rng(5).uniform((2, 16, 16, 1))
        z = model.patch_embed(imgs)
        z1 = model._block(z, 0)
        z2 = model._block(z1, 1)
        taps = model.forward_with_taps(imgs)
        np.testing.assert_array_equal(taps.penultimate.data, z1.data[:, 0, :])
        np.testing.assert_array_equal(taps.final.data, z2.data[:, 0, :])

    def test_zero_init_adapters_match_adapter_free_forward(self):
        model, cfg = small_model()
        imgs = Rng(6).uniform((3, 16, 16, 1))
        with_adapters = model.forward_with_taps(imgs)
        for name, p in model.params.items():
            if ".adapter.down" in name:
                p.data[...] = 0.0  # kill the remaining adapter path entirely
        without = model.forward_with_taps(imgs)
        np.testing.assert_array_equal(with_adapters.final.data, without.final.data)
        np.testing.assert_array_equal(
            with_adapters.penultimate.data, without.penultimate.data
        )


class TestFreezeContract:
    def test_partition_is_disjoint_and_exhaustive(self):
        model, _ = small_model()
        model.freeze_backbone()
        frozen, trainable = partition_params(model.param_list())
        names_frozen = {p.name for p in frozen}
        names_trainable = {p.name for p in trainable}
        assert not (names_frozen & names_trainable)
        assert names_frozen | names_trainable == set(model.params)
        assert all(".adapter." in n or n.startswith("tap_norm.") for n in names_trainable)
        assert any(".adapter.down" in n for n in names_trainable)
        assert any(".adapter.up" in n for n in names_trainable)

    def test_frozen_params_receive_no_gradients(self):
        model, _ = small_model()
        model.freeze_backbone()
        imgs = Rng(7).uniform((2, 16, 16, 1))
        taps = model.forward_with_taps(imgs)
        loss = (taps.final * taps.final).sum() + taps.penultimate.sum()
        loss.backward()
        frozen, trainable = partition_params(model.param_list())
        for p in frozen:
            assert p.grad is None
        got_grad = [p for p in trainable if np.any(p.grad != 0)]
        assert got_grad  # adapters and tap norms actually receive gradient


class TestFullModelGradient:
    def test_depth2_d8_end_to_end(self):
        model, _ = small_model()
        imgs = Rng(8).uniform((2, 16, 16, 1))

        def f(*params):
            taps = model.forward_with_taps(imgs)
            return (taps.penultimate ** 2).sum() + (taps.final ** 2).mean()

        err = grad_check(f, model.param_list())
        assert err < 1e-4


class TestCheckpointFormat:
    def test_bitwise_round_trip(self, tmp_path):
        model, _ = small_model()
        path = str(tmp_path / "ckpt")
        save_params(model.param_list(), path, extra={"note": "x"})
        arrays, manifest = load_params(path)
        assert manifest["note"] == "x"
        for p in model.param_list():
            np.testing.assert_array_equal(arrays[p.name], p.data)

    def test_assign_restores_model(self, tmp_path):
        model, _ = small_model(seed=0)
        other, _ = small_model(seed=1)
        path = str(tmp_path / "ckpt")
        save_params(model.param_list(), path)
        arrays, _ = load_params(path)
        assign_params(other.params, arrays, strict=True)
        for name in model.params:
            np.testing.assert_array_equal(other.params[name].data, model.params[name].data)

    def test_corrupted_blob_rejected(self, tmp_path):
        model, _ = small_model()
        path = str(tmp_path / "ckpt")
        save_params(model.param_list(), path)
        with open(str(tmp_path / "ckpt" / "params.bin"), "r+b") as fh:
            fh.seek(8)
            fh.write(b"\xff" * 8)
        with pytest.raises(FormatError):
            load_params(path)

    def test_shape_mismatch_rejected(self, tmp_path):
        model, _ = small_model()
        path = str(tmp_path / "ckpt")
        save_params(model.param_list(), path)
        arrays, _ = load_params(path)
        arrays["cls_token"] = np.zeros((1, 1, 3))
        with pytest.raises(FormatError):
            assign_params(model.params, arrays, strict=True)
