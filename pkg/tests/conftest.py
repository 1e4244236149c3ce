import numpy as np
import pytest
import torch

from ugan import pairgen
from ugan.losses import LossWeights
from ugan.nets import CriticSpec, GeneratorSpec
from ugan.pairgen import TOY_DISTORTION, PairSet
from ugan.trainer import TrainConfig


def toy_pairs(n=8, size=64, seed=0, params=TOY_DISTORTION) -> PairSet:
    clean = pairgen.make_toy_corpus(n, size, seed=seed)
    dist = [pairgen.synth_distort(c, params, seed=seed * 1000 + i) for i, c in enumerate(clean)]
    return PairSet(np.stack(clean).transpose(0, 3, 1, 2).copy(),
                   np.stack(dist).transpose(0, 3, 1, 2).copy(),
                   [f"toy{i}" for i in range(n)])


def tiny_config(**kw) -> TrainConfig:
    """16 x 16 images and very small networks, for mechanics tests."""
    base = dict(
        batch_size=2, image_size=16, n_critic=5, epochs=100,
        generator=GeneratorSpec(input_size=(16, 16, 3), encoder_channels=(8, 8, 8, 8)),
        critic=CriticSpec(input_size=(16, 16, 3), down_channels=(8, 8), tail_channels=8),
        weights=LossWeights.ugan_p(),
    )
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def tiny_pairs():
    return toy_pairs(n=6, size=16, seed=1)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield


# -- acceptance summary -------------------------------------------------------------

_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
