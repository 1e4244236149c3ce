import numpy as np
import pytest
from PIL import Image

from ugan import imageio, infer, nets
from ugan.nets import GeneratorSpec

SPEC = GeneratorSpec(input_size=(32, 32, 3), encoder_channels=(24, 16, 16, 16, 16))

# tanh(x) departs from x by at most 0.5 - tanh(0.5) ~= 0.038 on [-0.5, 0.5];
# one 8-bit quantization step (1/127.5) is allowed on top of that
IDENTITY_TOL = 0.5 - np.tanh(0.5) + 1 / 127.5 + 1e-6


@pytest.fixture
def checkpoint(tmp_path):
    return nets.save_checkpoint(tmp_path / "g.npz", nets.build_generator(SPEC, seed=0))


def write_inputs(directory, n, size=(40, 48), lo=-1.0, hi=1.0, seed=0):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n):
        img = rng.uniform(lo, hi, (*size, 3)).astype(np.float32)
        paths.append(imageio.save_image(img, directory / f"img{i:02d}.png"))
    return paths


class TestRestore:
    def test_count_and_format(self, tmp_path, checkpoint):
        inputs = write_inputs(tmp_path / "in", 10)
        out = infer.restore(checkpoint, inputs, tmp_path / "out")
        assert len(out) == 10
        assert [p.name for p in out] == [p.name for p in inputs]
        for p in out:
            with Image.open(p) as im:
                assert im.mode == "RGB" and im.size == (32, 32)

    def test_bit_identical_reruns(self, tmp_path, checkpoint):
        inputs = write_inputs(tmp_path / "in", 3)
        a = [p.read_bytes() for p in infer.restore(checkpoint, inputs, tmp_path / "a")]
        b = [p.read_bytes() for p in infer.restore(checkpoint, inputs, tmp_path / "a")]
        assert a == b

    def test_resize_to_source(self, tmp_path, checkpoint):
        inputs = write_inputs(tmp_path / "in", 1, size=(40, 48))
        (out,) = infer.restore(checkpoint, inputs, tmp_path / "out", resize_to_source=True)
        with Image.open(out) as im:
            assert im.size == (48, 40)

    def test_corrupt_checkpoint(self, tmp_path):
        bad = tmp_path / "bad.npz"
        bad.write_bytes(b"\x00" * 64)
        with pytest.raises(nets.CheckpointError):
            infer.restore(bad, write_inputs(tmp_path / "in", 1), tmp_path / "out")

    def test_undecodable_input_skipped(self, tmp_path, checkpoint, caplog):
        inputs = write_inputs(tmp_path / "in", 2)
        broken = tmp_path / "in" / "broken.png"
        broken.write_bytes(b"not a png")
        out = infer.restore(checkpoint, [inputs[0], broken, inputs[1]], tmp_path / "out")
        assert len(out) == 2
        assert "broken" in caplog.text

    def test_identity_generator_round_trip(self, tmp_path):
        ckpt = nets.save_checkpoint(tmp_path / "id.npz", nets.identity_generator(SPEC))
        inputs = write_inputs(tmp_path / "in", 3, size=(32, 32), lo=-0.5, hi=0.5)
        for src, dst in zip(inputs, infer.restore(ckpt, inputs, tmp_path / "out")):
            a, b = imageio.load_image(src, None), imageio.load_image(dst, None)
            assert np.abs(a - b).max() <= IDENTITY_TOL

    def test_directory_inputs(self, tmp_path):
        write_inputs(tmp_path / "in", 3)
        (tmp_path / "in" / "notes.txt").write_text("x")
        assert len(infer.expand_inputs([tmp_path / "in"])) == 3


class TestBenchmark:
    def test_fps_is_reciprocal(self, checkpoint):
        r = infer.benchmark(checkpoint, trials=10, device_label="cpu")
        assert r.fps == 1.0 / r.mean_seconds_per_image
        assert r.trials == 10 and r.image_size == (32, 32, 3) and r.device_label == "cpu"

    def test_needs_ten_trials(self, checkpoint):
        with pytest.raises(ValueError):
            infer.benchmark(checkpoint, trials=9)

    def test_short_and_long_runs_agree(self, checkpoint):
        short = infer.benchmark(checkpoint, trials=10, device_label="cpu").mean_seconds_per_image
        long = infer.benchmark(checkpoint, trials=100, device_label="cpu").mean_seconds_per_image
        assert 1 / 3 <= short / long <= 3


def test_export_drops_critic(tmp_path):
    g = nets.build_generator(SPEC, seed=1)
    full = nets.save_checkpoint(tmp_path / "full.npz", g, nets.build_critic(nets.CriticSpec(input_size=(32, 32, 3))),
                                iteration=9)
    slim = nets.load_checkpoint(infer.export_generator(full, tmp_path / "slim.npz"))
    assert slim.critic_spec is None and slim.iteration == 9
    a, b = g.state_dict(), slim.generator().state_dict()
    assert all((a[k] == b[k]).all() for k in a)
