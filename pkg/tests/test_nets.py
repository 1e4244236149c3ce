import numpy as np
import pytest
import torch

from ugan import nets
from ugan.nets import CriticSpec, GeneratorSpec

SMALL_G = GeneratorSpec(input_size=(32, 32, 3), encoder_channels=(24, 16, 16, 16, 16))
SMALL_D = CriticSpec(input_size=(32, 32, 3), down_channels=(8, 8, 8), tail_channels=8)


def nhwc(rng, b, size):
    return torch.from_numpy(rng.uniform(-1, 1, (b, *size)).astype(np.float32))


class TestGenerator:
    def test_full_size_shape_and_range(self):
        g = nets.build_generator(GeneratorSpec(), seed=0).eval()
        x = nhwc(np.random.default_rng(0), 1, (256, 256, 3))
        with torch.no_grad():
            y = nets.forward_generator(g, x)
        assert y.shape == (1, 256, 256, 3)
        assert torch.all(y > -1) and torch.all(y < 1)

    def test_batch_permutation_equivariance(self):
        spec = GeneratorSpec(input_size=(64, 64, 3), encoder_channels=(32, 64, 128, 128, 128, 128))
        g = nets.build_generator(spec, seed=1).eval()
        x = nhwc(np.random.default_rng(1), 32, (64, 64, 3))
        perm = torch.from_numpy(np.random.default_rng(2).permutation(32))
        with torch.no_grad():
            y = nets.forward_generator(g, x)
            y_perm = nets.forward_generator(g, x[perm])
        assert y_perm.shape == (32, 64, 64, 3)
        torch.testing.assert_close(y_perm, y[perm], rtol=0, atol=1e-6)

    def test_eval_mode_is_deterministic(self):
        x = nhwc(np.random.default_rng(3), 2, SMALL_G.input_size)
        outs = []
        for _ in range(2):
            g = nets.build_generator(SMALL_G, seed=7).eval()
            with torch.no_grad():
                outs.append(nets.forward_generator(g, x))
            with torch.no_grad():
                outs.append(nets.forward_generator(g, x))
        assert all(torch.equal(outs[0], o) for o in outs[1:])

    def test_shape_mismatch(self):
        g = nets.build_generator(SMALL_G).eval()
        with pytest.raises(ValueError):
            nets.forward_generator(g, torch.zeros(1, 16, 32, 3))
        with pytest.raises(ValueError):
            nets.forward_generator(g, torch.zeros(32, 32, 3))

    @pytest.mark.parametrize("size", [32, 64, 96])
    def test_output_shape_equals_input_shape(self, size):
        spec = GeneratorSpec(input_size=(size, size, 3), encoder_channels=(8, 8, 8, 8, 8))
        g = nets.build_generator(spec).eval()
        with torch.no_grad():
            assert g(torch.zeros(1, 3, size, size)).shape == (1, 3, size, size)

    def test_indivisible_size_rejected(self):
        with pytest.raises(ValueError):
            GeneratorSpec(input_size=(48, 48, 3), encoder_channels=(8,) * 5)

    def test_channel_ledger(self):
        spec = GeneratorSpec()
        assert spec.decoder_channels == (512, 512, 512, 512, 256, 128, 64, 3)
        assert spec.decoder_in_channels == (512, 1024, 1024, 1024, 1024, 512, 256, 128)
        g = nets.UNetGenerator(spec)
        assert [blk[0].in_channels for blk in g.decoder] == list(spec.decoder_in_channels)

    def test_layer_structure(self):
        g = nets.UNetGenerator(GeneratorSpec())
        for i, blk in enumerate(g.encoder):
            conv = blk[0]
            assert conv.kernel_size == (4, 4) and conv.stride == (2, 2)
            has_bn = any(isinstance(m, torch.nn.BatchNorm2d) for m in blk)
            assert has_bn == (i > 0)
            assert isinstance(blk[-1], torch.nn.LeakyReLU) and blk[-1].negative_slope == 0.2
        for j, blk in enumerate(g.decoder):
            assert isinstance(blk[0], torch.nn.ConvTranspose2d) and blk[0].kernel_size == (4, 4)
            assert not any(isinstance(m, torch.nn.BatchNorm2d) for m in blk)
            last = j == len(g.decoder) - 1
            assert isinstance(blk[-1], torch.nn.Tanh if last else torch.nn.ReLU)


class TestCritic:
    def test_full_size_output_shape(self):
        d = nets.build_critic(CriticSpec(), seed=0)
        with torch.no_grad():
            out = nets.forward_critic(d, torch.zeros(2, 256, 256, 3))
        assert out.shape == (2, 32, 32, 1)
        assert CriticSpec().output_size == (32, 32, 1)

    def test_no_normalization_layers(self):
        assert nets.normalization_layers(nets.PatchCritic(CriticSpec())) == []
        assert len(nets.normalization_layers(nets.UNetGenerator(GeneratorSpec()))) == 7

    def test_identical_inputs_identical_maps(self):
        d = nets.build_critic(SMALL_D, seed=0)
        x = nhwc(np.random.default_rng(0), 1, SMALL_D.input_size)
        with torch.no_grad():
            out = nets.forward_critic(d, torch.cat([x, x]))
        assert torch.equal(out[0], out[1])

    def test_input_gradient_matches_finite_differences(self):
        d = nets.build_critic(SMALL_D, seed=3).double()
        with torch.no_grad():
            for p in d.parameters():
                p.mul_(10)  # lift the response well above float64 round-off
        rng = np.random.default_rng(4)
        x0 = rng.uniform(-1, 1, (1, 32, 32, 3))
        x = torch.from_numpy(x0).requires_grad_(True)
        nets.forward_critic(d, x).sum().backward()
        h = 1e-4

        def f(arr):
            with torch.no_grad():
                return nets.forward_critic(d, torch.from_numpy(arr)).sum().item()
        for _ in range(10):
            idx = (0, *(int(rng.integers(s)) for s in (32, 32, 3)))
            vals = []
            for k in (-2, -1, 1, 2):
                xk = x0.copy()
                xk[idx] += k * h
                vals.append(f(xk))
            fd = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)
            assert x.grad[idx].item() == pytest.approx(fd, rel=1e-3, abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nets.forward_critic(nets.build_critic(SMALL_D), torch.zeros(1, 32, 32, 4))


class TestInit:
    def test_seeded(self):
        a = nets.build_generator(SMALL_G, seed=5).state_dict()
        b = nets.build_generator(SMALL_G, seed=5).state_dict()
        c = nets.build_generator(SMALL_G, seed=6).state_dict()
        assert all(torch.equal(a[k], b[k]) for k in a)
        assert not all(torch.equal(a[k], c[k]) for k in a)

    def test_gaussian_std(self):
        g = nets.build_generator(GeneratorSpec(), seed=0)
        w = g.encoder[4][0].weight  # 512 -> 512 channel convolution
        assert w.shape[0] == 512
        assert 0.018 <= w.std().item() <= 0.022
        assert abs(w.mean().item()) < 1e-3
        assert torch.all(g.encoder[4][0].bias == 0)


def test_identity_generator_passes_input_through_tanh():
    spec = GeneratorSpec(input_size=(32, 32, 3), encoder_channels=(24, 16, 16, 16, 16))
    g = nets.identity_generator(spec).eval()
    x = nhwc(np.random.default_rng(0), 2, spec.input_size)
    with torch.no_grad():
        y = nets.forward_generator(g, x)
    torch.testing.assert_close(y, torch.tanh(x), rtol=0, atol=1e-5)


def test_identity_generator_needs_room():
    with pytest.raises(ValueError):
        nets.identity_generator(GeneratorSpec(input_size=(32, 32, 3), encoder_channels=(16,) * 5))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        g = nets.build_generator(SMALL_G, seed=1)
        d = nets.build_critic(SMALL_D, seed=2)
        with torch.no_grad():
            g(torch.zeros(2, 3, 32, 32) + 0.1)  # non-trivial running stats
        path = nets.save_checkpoint(tmp_path / "c.npz", g, d, iteration=17)
        ck = nets.load_checkpoint(path)
        assert ck.iteration == 17
        assert ck.generator_spec == SMALL_G and ck.critic_spec == SMALL_D
        for src, dst in ((g, ck.generator()), (d, ck.critic())):
            a, b = src.state_dict(), dst.state_dict()
            assert a.keys() == b.keys()
            assert all(torch.equal(a[k], b[k]) for k in a)

    def test_magic_string_in_archive(self, tmp_path):
        path = nets.save_checkpoint(tmp_path / "c.npz", nets.build_generator(SMALL_G))
        with np.load(path) as z:
            assert str(z["__magic__"]) == "UGAN-CKPT-1"

    def test_no_temp_files_left(self, tmp_path):
        nets.save_checkpoint(tmp_path / "c.npz", nets.build_generator(SMALL_G))
        assert [p.name for p in tmp_path.iterdir()] == ["c.npz"]

    def test_corrupt_file(self, tmp_path):
        p = tmp_path / "bad.npz"
        p.write_bytes(b"garbage")
        with pytest.raises(nets.CheckpointError):
            nets.load_checkpoint(p)

    def test_wrong_version(self, tmp_path):
        p = tmp_path / "old.npz"
        np.savez(p, __magic__=np.array("UGAN-CKPT-0"), __meta__=np.array("{}"))
        with pytest.raises(nets.CheckpointError, match="UGAN-CKPT-1"):
            nets.load_checkpoint(p)
