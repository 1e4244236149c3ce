"""Adversarial training loop.

Each iteration takes ``n_critic`` critic steps, every one on a fresh batch,
then one generator step. All randomness (batch order, interpolation weights)
flows from one numpy ``Generator`` held in the train state, so a checkpoint
restores the exact trajectory.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses, nets
from .losses import LossWeights
from .nets import CriticSpec, GeneratorSpec
from .pairgen import DatasetManifest, PairSet, load_pairs

log = logging.getLogger(__name__)

LOG_FIELDS = ("iteration", "epoch", "critic_loss", "gen_loss", "l1", "gdl", "gp", "wall_time")


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    n_critic: int = 5
    epochs: int = 100
    weights: LossWeights = field(default_factory=LossWeights.ugan_p)
    seed: int = 0
    image_size: int = 256
    checkpoint_every: int = 1000
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    critic: CriticSpec = field(default_factory=CriticSpec)
    max_iterations: int | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.n_critic < 1:
            raise ValueError("batch_size and n_critic must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        size = (self.image_size, self.image_size, 3)
        if self.generator.input_size != size:
            self.generator = dataclasses.replace(self.generator, input_size=size)
        if self.critic.input_size != size:
            self.critic = dataclasses.replace(self.critic, input_size=size)

    @classmethod
    def paper(cls, **overrides) -> "TrainConfig":
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Small profile for CPU smoke runs: 64x64 images, batch 4.

        The learning rate is raised to 2e-3 so that a few hundred iterations
        make visible progress; at 1e-4 the adversarial term dominates that long.
        """
        base = dict(
            batch_size=4,
            learning_rate=2e-3,
            image_size=64,
            checkpoint_every=100,
            generator=GeneratorSpec(input_size=(64, 64, 3), encoder_channels=(32, 64, 128, 128, 128, 128)),
            critic=CriticSpec(input_size=(64, 64, 3), down_channels=(32, 64, 128), tail_channels=128),
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("generator", "critic"):
            d[key] = {k: list(v) if isinstance(v, tuple) else v for k, v in d[key].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("weights"), dict):
            d["weights"] = LossWeights(**d["weights"])
        if isinstance(d.get("generator"), dict):
            d["generator"] = GeneratorSpec(**d["generator"])
        if isinstance(d.get("critic"), dict):
            d["critic"] = CriticSpec(**d["critic"])
        return cls(**d)


class PairSampler:
    """Shuffled mini-batches over an in-memory pair set.

    When fewer than ``batch_size`` unseen pairs remain, the order is
    reshuffled and sampling restarts; a batch never straddles two passes.
    """

    def __init__(self, pairs: PairSet, batch_size: int, rng: np.random.Generator, device="cpu"):
        if len(pairs) < batch_size:
            raise ValueError(f"dataset has {len(pairs)} pairs, fewer than one batch of {batch_size}; "
                             f"reduce batch_size")
        self.pairs = pairs
        self.batch_size = batch_size
        self.rng = rng
        self.device = torch.device(device)
        self.order = np.arange(0)
        self.cursor = 0
        self.passes = 0

    def next_batch(self) -> tuple[torch.Tensor, torch.Tensor]:
        if self.cursor + self.batch_size > len(self.order):
            self.order = self.rng.permutation(len(self.pairs))
            self.cursor = 0
            self.passes += 1
        idx = np.sort(self.order[self.cursor:self.cursor + self.batch_size])
        self.cursor += self.batch_size
        return (torch.from_numpy(self.pairs.clean[idx]).to(self.device),
                torch.from_numpy(self.pairs.distorted[idx]).to(self.device))

    def state(self) -> dict:
        return {"order": self.order.tolist(), "cursor": self.cursor, "passes": self.passes}

    def restore(self, s: dict) -> None:
        self.order = np.asarray(s["order"], dtype=np.int64)
        self.cursor = s["cursor"]
        self.passes = s["passes"]


@dataclass
class TrainState:
    generator: nets.UNetGenerator
    critic: nets.PatchCritic
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    rng: np.random.Generator
    iteration: int = 0
    epoch: int = 0
    critic_updates: int = 0
    generator_updates: int = 0


def _adam(params, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=config.learning_rate,
                            betas=(config.adam_beta1, config.adam_beta2))


def init_state(config: TrainConfig) -> TrainState:
    g = nets.build_generator(config.generator, seed=config.seed)
    d = nets.build_critic(config.critic, seed=config.seed + 1)
    return TrainState(g, d, _adam(g.parameters(), config), _adam(d.parameters(), config),
                      rng=np.random.default_rng(config.seed))


def _set_trainable(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def train_iteration(state: TrainState, sampler: PairSampler, config: TrainConfig) -> dict:
    """Advance ``state`` by one iteration in place and return its log record."""
    g, d = state.generator, state.critic
    w = config.weights
    g.train()
    d.train()

    _set_trainable(d, True)
    critic_losses, gps = [], []
    for _ in range(config.n_critic):
        clean, distorted = sampler.next_batch()
        with torch.no_grad():
            fake = g(distorted)
        gp = losses.gradient_penalty(d, clean, fake, w.lambda_gp,
                                     epsilon_seed=int(state.rng.integers(2 ** 62)))
        loss = losses.critic_loss(d(clean), d(fake), gp)
        state.opt_d.zero_grad(set_to_none=True)
        loss.backward()
        state.opt_d.step()
        state.critic_updates += 1
        critic_losses.append(loss.item())
        gps.append(gp.item())

    _set_trainable(d, False)
    clean, distorted = sampler.next_batch()
    fake = g(distorted)
    terms = losses.generator_loss_terms(d(fake), clean, fake, w)
    state.opt_g.zero_grad(set_to_none=True)
    terms.total.backward()
    state.opt_g.step()
    state.generator_updates += 1
    _set_trainable(d, True)

    state.iteration += 1
    return {
        "iteration": state.iteration,
        "epoch": state.epoch,
        "critic_loss": float(np.mean(critic_losses)),
        "gen_loss": terms.total.item(),
        "l1": terms.l1.item(),
        "gdl": terms.gdl.item(),
        "gp": float(np.mean(gps)),
    }


# -- checkpointing ---------------------------------------------------------------

def _optimizer_arrays(prefix: str, opt: torch.optim.Optimizer) -> tuple[dict, list]:
    sd = opt.state_dict()
    arrays = {}
    for idx, st in sd["state"].items():
        for key, val in st.items():
            arrays[f"{prefix}/{idx}/{key}"] = torch.as_tensor(val).detach().cpu().numpy()
    groups = [{k: list(v) if isinstance(v, tuple) else v for k, v in grp.items()}
              for grp in sd["param_groups"]]
    return arrays, groups


def _restore_optimizer(opt: torch.optim.Optimizer, ckpt: nets.Checkpoint, prefix: str, groups: list):
    state: dict = {}
    for key, arr in ckpt.group(prefix).items():
        idx, name = key.split("/", 1)
        state.setdefault(int(idx), {})[name] = torch.from_numpy(arr.copy())
    for grp in groups:
        if "betas" in grp:
            grp["betas"] = tuple(grp["betas"])
    opt.load_state_dict({"state": state, "param_groups": groups})


def save_train_state(path, state: TrainState, sampler: PairSampler, config: TrainConfig) -> Path:
    g_arrays, g_groups = _optimizer_arrays("opt_g", state.opt_g)
    d_arrays, d_groups = _optimizer_arrays("opt_d", state.opt_d)
    meta = {
        "epoch": state.epoch,
        "critic_updates": state.critic_updates,
        "generator_updates": state.generator_updates,
        "rng_state": state.rng.bit_generator.state,
        "sampler": sampler.state(),
        "opt_g_groups": g_groups,
        "opt_d_groups": d_groups,
        "config": config.to_dict(),
    }
    return nets.save_checkpoint(path, state.generator, state.critic, iteration=state.iteration,
                                extra_arrays={**g_arrays, **d_arrays}, extra_meta=meta)


def load_train_state(path, sampler: PairSampler, config: TrainConfig) -> TrainState:
    """Rebuild a :class:`TrainState` and rewind ``sampler`` from a checkpoint."""
    ckpt = nets.load_checkpoint(path)
    if "rng_state" not in ckpt.meta:
        raise nets.CheckpointError(f"{path} holds inference weights only, not a training state")
    g, d = ckpt.generator(), ckpt.critic()
    state = TrainState(g, d, _adam(g.parameters(), config), _adam(d.parameters(), config),
                       rng=np.random.default_rng())
    _restore_optimizer(state.opt_g, ckpt, "opt_g", ckpt.meta["opt_g_groups"])
    _restore_optimizer(state.opt_d, ckpt, "opt_d", ckpt.meta["opt_d_groups"])
    state.rng.bit_generator.state = ckpt.meta["rng_state"]
    state.iteration = ckpt.iteration
    state.epoch = ckpt.meta["epoch"]
    state.critic_updates = ckpt.meta["critic_updates"]
    state.generator_updates = ckpt.meta["generator_updates"]
    sampler.rng = state.rng
    sampler.restore(ckpt.meta["sampler"])
    return state


# -- driver ----------------------------------------------------------------------

@dataclass
class TrainResult:
    state: TrainState
    records: list[dict]
    checkpoints: list[Path]
    metrics_path: Path | None


def iterations_per_epoch(n_pairs: int, batch_size: int) -> int:
    """Epochs count generator batches only."""
    return max(n_pairs // batch_size, 1)


def train(manifest: DatasetManifest | PairSet, config: TrainConfig, out_dir=None,
          resume_from=None, device=None) -> TrainResult:
    """Train for ``epochs * (N // batch_size)`` iterations.

    ``config.max_iterations`` caps the run (counted from iteration 0). With
    ``out_dir`` set, checkpoints are written every ``checkpoint_every``
    iterations and at termination, and one JSON record per iteration is
    appended to ``metrics.jsonl``. ``device`` defaults to the ``UGAN_DEVICE``
    environment variable, else automatic selection.
    """
    torch.manual_seed(config.seed)
    device = nets.resolve_device(device)
    pairs = manifest if isinstance(manifest, PairSet) else load_pairs(manifest, "train", config.image_size)
    if len(pairs) == 0:
        raise ValueError("manifest has no train entries")
    rng = np.random.default_rng(config.seed)
    sampler = PairSampler(pairs, config.batch_size, rng, device)
    if resume_from is not None:
        state = load_train_state(resume_from, sampler, config)
    else:
        state = init_state(config)
        state.rng = rng
    state.generator.to(device)
    state.critic.to(device)
    per_epoch = iterations_per_epoch(len(pairs), config.batch_size)
    total = config.epochs * per_epoch
    if config.max_iterations is not None:
        total = min(total, config.max_iterations)

    out = Path(out_dir) if out_dir is not None else None
    metrics_path = None
    checkpoints: list[Path] = []
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_path = out / "metrics.jsonl"
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))

    records = []
    t0 = time.perf_counter()
    fh = open(metrics_path, "a") if metrics_path else None
    try:
        while state.iteration < total:
            state.epoch = state.iteration // per_epoch
            rec = train_iteration(state, sampler, config)
            rec["wall_time"] = time.perf_counter() - t0
            records.append(rec)
            if not all(np.isfinite(rec[k]) for k in ("critic_loss", "gen_loss", "l1", "gdl", "gp")):
                log.warning("non-finite loss at iteration %d: %s", state.iteration, rec)
            if fh:
                fh.write(json.dumps({k: rec[k] for k in LOG_FIELDS}) + "\n")
                fh.flush()
            if out is not None and state.iteration % config.checkpoint_every == 0:
                checkpoints.append(save_train_state(out / f"checkpoint_{state.iteration:07d}.npz",
                                                    state, sampler, config))
        state.epoch = state.iteration // per_epoch
        if out is not None:
            checkpoints.append(save_train_state(out / "final.npz", state, sampler, config))
    finally:
        if fh:
            fh.close()
    return TrainResult(state, records, checkpoints, metrics_path)


def read_metrics(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def dataset_l1(generator: nets.UNetGenerator, pairs: PairSet, batch_size: int = 8) -> float:
    """Mean L1 between generator output and clean images over a pair set (eval mode)."""
    device = next(generator.parameters()).device
    was_training = generator.training
    generator.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(pairs), batch_size):
            clean = torch.from_numpy(pairs.clean[i:i + batch_size]).to(device)
            pred = generator(torch.from_numpy(pairs.distorted[i:i + batch_size]).to(device))
            total += (clean - pred).abs().sum().item()
            count += clean.numel()
    generator.train(was_training)
    return total / count
