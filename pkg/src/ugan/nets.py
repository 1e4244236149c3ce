"""U-Net generator and PatchGAN critic.

Both networks take NCHW float tensors. The helpers :func:`forward_generator`
and :func:`forward_critic` accept NHWC batches (the layout of
:mod:`ugan.imageio` tensors) and validate shapes.
"""

from __future__ import annotations

import dataclasses
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

CHECKPOINT_MAGIC = "UGAN-CKPT-1"
NORM_TYPES = (nn.BatchNorm2d, nn.InstanceNorm2d, nn.LayerNorm, nn.GroupNorm,
              nn.modules.batchnorm._NormBase)


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    input_size: tuple[int, int, int] = (256, 256, 3)
    kernel: int = 4
    stride: int = 2
    encoder_channels: tuple[int, ...] = (64, 128, 256, 512, 512, 512, 512, 512)
    norm_first_layer: bool = False
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(self.input_size))
        object.__setattr__(self, "encoder_channels", tuple(self.encoder_channels))
        h, w, _ = self.input_size
        n = len(self.encoder_channels)
        if n < 1 or h % 2 ** n or w % 2 ** n:
            raise ValueError(f"{n} stride-2 layers do not divide input size {h}x{w}")

    @property
    def depth(self) -> int:
        return len(self.encoder_channels)

    @property
    def decoder_channels(self) -> tuple[int, ...]:
        """Output channels of decoder layers 1..n (last one is RGB)."""
        return tuple(reversed(self.encoder_channels[:-1])) + (self.input_size[2],)

    @property
    def decoder_in_channels(self) -> tuple[int, ...]:
        enc, dec = self.encoder_channels, self.decoder_channels
        n = self.depth
        # decoder layer j (1-based) sees encoder layer n - j + 1; for j = 1 that
        # is the bottleneck itself, so nothing is concatenated.
        return (enc[-1],) + tuple(dec[j - 2] + enc[n - j] for j in range(2, n + 1))


@dataclass(frozen=True)
class CriticSpec:
    input_size: tuple[int, int, int] = (256, 256, 3)
    kernel: int = 4
    down_channels: tuple[int, ...] = (64, 128, 256)
    tail_channels: int = 512
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(self.input_size))
        object.__setattr__(self, "down_channels", tuple(self.down_channels))

    @property
    def output_size(self) -> tuple[int, int, int]:
        f = 2 ** len(self.down_channels)
        return (self.input_size[0] // f, self.input_size[1] // f, 1)


class UNetGenerator(nn.Module):
    def __init__(self, spec: GeneratorSpec = GeneratorSpec()):
        super().__init__()
        self.spec = spec
        k, s = spec.kernel, spec.stride
        pad = (k - s) // 2
        self.encoder = nn.ModuleList()
        in_ch = spec.input_size[2]
        for i, ch in enumerate(spec.encoder_channels):
            layers = [nn.Conv2d(in_ch, ch, k, s, pad)]
            if i > 0 or spec.norm_first_layer:
                layers.append(nn.BatchNorm2d(ch))
            layers.append(nn.LeakyReLU(spec.leaky_slope))
            self.encoder.append(nn.Sequential(*layers))
            in_ch = ch
        self.decoder = nn.ModuleList()
        outs = spec.decoder_channels
        for j, (cin, cout) in enumerate(zip(spec.decoder_in_channels, outs)):
            act = nn.Tanh() if j == len(outs) - 1 else nn.ReLU()
            self.decoder.append(nn.Sequential(nn.ConvTranspose2d(cin, cout, k, s, pad), act))
        self._check_channel_ledger()

    def _check_channel_ledger(self):
        enc = [blk[0] for blk in self.encoder]
        dec = [blk[0] for blk in self.decoder]
        n = len(enc)
        assert dec[0].in_channels == enc[-1].out_channels
        for j in range(2, n + 1):
            upstream = dec[j - 2].out_channels
            skip = enc[n - j].out_channels
            assert dec[j - 1].in_channels == upstream + skip, (j, dec[j - 1].in_channels, upstream, skip)
        assert dec[-1].out_channels == self.spec.input_size[2]

    def forward(self, x):
        skips = []
        for blk in self.encoder:
            x = blk(x)
            skips.append(x)
        x = self.decoder[0](skips[-1])
        for j, blk in enumerate(self.decoder[1:], start=2):
            x = blk(torch.cat([x, skips[-j]], dim=1))
        return x


class PatchCritic(nn.Module):
    """Fully convolutional critic emitting an unbounded patch score map.

    Stride-2 blocks shrink the input 2**len(down_channels) times; two
    stride-1 convolutions with 'same' padding follow, the last to one channel.
    """

    def __init__(self, spec: CriticSpec = CriticSpec()):
        super().__init__()
        self.spec = spec
        k = spec.kernel
        layers = []
        in_ch = spec.input_size[2]
        for ch in spec.down_channels:
            layers += [nn.Conv2d(in_ch, ch, k, 2, (k - 2) // 2), nn.LeakyReLU(spec.leaky_slope)]
            in_ch = ch
        # even kernel at stride 1: pad one more on the bottom/right to keep size
        same = (k // 2 - 1, k // 2, k // 2 - 1, k // 2)
        layers += [nn.ZeroPad2d(same), nn.Conv2d(in_ch, spec.tail_channels, k, 1),
                   nn.LeakyReLU(spec.leaky_slope),
                   nn.ZeroPad2d(same), nn.Conv2d(spec.tail_channels, 1, k, 1)]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


def resolve_device(label: str | None = None) -> torch.device:
    """Device from ``label``, else ``$UGAN_DEVICE``, else CUDA when available."""
    label = label or os.environ.get("UGAN_DEVICE") or ("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(label)


def normalization_layers(module: nn.Module) -> list[nn.Module]:
    return [m for m in module.modules() if isinstance(m, NORM_TYPES)]


def init_weights(module: nn.Module, seed: int, std: float = 0.02) -> nn.Module:
    """Re-draw every conv weight from N(0, std); zero biases; unit norm scales."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * std)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.BatchNorm2d):
                m.weight.fill_(1.0)
                m.bias.zero_()
                m.reset_running_stats()
    return module


def build_generator(spec: GeneratorSpec = GeneratorSpec(), seed: int = 0) -> UNetGenerator:
    return init_weights(UNetGenerator(spec), seed)


def build_critic(spec: CriticSpec = CriticSpec(), seed: int = 0) -> PatchCritic:
    return init_weights(PatchCritic(spec), seed)


def _as_nchw(x, size, name):
    x = torch.as_tensor(x)
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(size):
        raise ValueError(f"{name} expects a batch of shape (B, {', '.join(map(str, size))}), "
                         f"got {tuple(x.shape)}")
    return x.permute(0, 3, 1, 2)


def forward_generator(model: UNetGenerator, x) -> torch.Tensor:
    """Run the generator on an NHWC batch and return an NHWC batch."""
    x = _as_nchw(x, model.spec.input_size, "generator")
    param = next(model.parameters())
    return model(x.to(param.dtype)).permute(0, 2, 3, 1)


def forward_critic(model: PatchCritic, x) -> torch.Tensor:
    """Run the critic on an NHWC batch; returns (B, h, w, 1) score maps."""
    x = _as_nchw(x, model.spec.input_size, "critic")
    param = next(model.parameters())
    return model(x.to(param.dtype)).permute(0, 2, 3, 1)


def identity_generator(spec: GeneratorSpec) -> UNetGenerator:
    """Debug generator whose output is ``tanh(input)``.

    The first encoder layer packs every 2x2 block into channels (space to
    depth, both signs so the leaky rectifier can be undone linearly) and the
    last decoder layer unpacks it again; every other path into the output is
    zeroed. Needs ``encoder_channels[0] >= 24`` for RGB input.
    """
    c = spec.input_size[2]
    if spec.kernel != 4 or spec.stride != 2 or spec.encoder_channels[0] < 8 * c:
        raise ValueError("identity preset needs kernel 4, stride 2 and >= 8*C first-layer channels")
    g = UNetGenerator(spec)
    with torch.no_grad():
        for p in g.parameters():
            p.zero_()
        for m in g.modules():
            if isinstance(m, nn.BatchNorm2d):
                m.weight.fill_(1.0)
        conv = g.encoder[0][0]
        deconv = g.decoder[-1][0]
        slope = spec.leaky_slope
        skip_offset = deconv.in_channels - spec.encoder_channels[0]
        ch = 0
        for color in range(c):
            for dy in (0, 1):
                for dx in (0, 1):
                    for sign in (1.0, -1.0):
                        # input (2p+dy, 2q+dx) sits at kernel tap (dy+1, dx+1)
                        conv.weight[ch, color, dy + 1, dx + 1] = sign
                        deconv.weight[skip_offset + ch, color, dy + 1, dx + 1] = sign / (1.0 + slope)
                        ch += 1
    return g


# -- checkpoints ---------------------------------------------------------------

def _spec_to_dict(spec) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(spec).items()}


def save_checkpoint(path, generator: UNetGenerator, critic: PatchCritic | None = None,
                    iteration: int = 0, extra_arrays: dict | None = None,
                    extra_meta: dict | None = None) -> Path:
    """Write an ``.npz`` archive atomically (temp file then rename)."""
    path = Path(path)
    arrays = {f"generator/{k}": v.detach().cpu().numpy() for k, v in generator.state_dict().items()}
    if critic is not None:
        arrays.update({f"critic/{k}": v.detach().cpu().numpy() for k, v in critic.state_dict().items()})
    arrays.update(extra_arrays or {})
    meta = {
        "magic": CHECKPOINT_MAGIC,
        "iteration": int(iteration),
        "generator_spec": _spec_to_dict(generator.spec),
        "critic_spec": _spec_to_dict(critic.spec) if critic is not None else None,
        **(extra_meta or {}),
    }
    arrays["__magic__"] = np.array(CHECKPOINT_MAGIC)
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


@dataclass
class Checkpoint:
    meta: dict
    arrays: dict[str, np.ndarray] = field(repr=False)

    @property
    def iteration(self) -> int:
        return self.meta["iteration"]

    @property
    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(**self.meta["generator_spec"])

    @property
    def critic_spec(self) -> CriticSpec | None:
        s = self.meta.get("critic_spec")
        return CriticSpec(**s) if s else None

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        p = prefix + "/"
        return {k[len(p):]: v for k, v in self.arrays.items() if k.startswith(p)}

    def generator(self) -> UNetGenerator:
        g = UNetGenerator(self.generator_spec)
        g.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in self.group("generator").items()})
        return g

    def critic(self) -> PatchCritic:
        spec = self.critic_spec
        if spec is None:
            raise CheckpointError("checkpoint holds no critic")
        d = PatchCritic(spec)
        d.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in self.group("critic").items()})
        return d


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
        with np.load(io.BytesIO(data), allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"{path} is not a readable checkpoint archive: {exc}") from exc
    magic = str(arrays.pop("__magic__", ""))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: unsupported checkpoint format {magic!r}, expected {CHECKPOINT_MAGIC}")
    try:
        meta = json.loads(str(arrays.pop("__meta__")))
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: missing or corrupt metadata") from exc
    return Checkpoint(meta, arrays)
