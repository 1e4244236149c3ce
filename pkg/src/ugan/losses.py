"""Training objectives: WGAN-GP critic loss, L1, gradient difference loss.

Image batches are torch tensors whose last two axes are (rows, columns);
any leading axes (batch, channel) are reduced along with the pixels.

UGAN minimizes ``-E[D(G(x))] + lambda_1 * L1``; UGAN-P adds
``lambda_2 * GDL``. The original minimax GAN value (log-loss discriminator)
is the lineage this replaces and is not implemented.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


class NonDifferentiableCriticError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossWeights:
    lambda_1: float = 100.0
    lambda_2: float = 0.0
    lambda_gp: float = 10.0
    alpha: int = 1

    def __post_init__(self):
        if min(self.lambda_1, self.lambda_2, self.lambda_gp) < 0:
            raise ValueError("loss weights must be non-negative")
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise ValueError("alpha must be an integer >= 1")

    @classmethod
    def ugan(cls, **kw) -> "LossWeights":
        return cls(**{**kw, "lambda_2": 0.0})

    @classmethod
    def ugan_p(cls, **kw) -> "LossWeights":
        kw.setdefault("lambda_2", 1.0)
        kw.setdefault("alpha", 1)
        return cls(**kw)


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def l1_loss(clean: torch.Tensor, predicted: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over every element."""
    _check_shapes(clean, predicted)
    return (clean - predicted).abs().mean()


def gdl_sum(clean: torch.Tensor, predicted: torch.Tensor, alpha: int = 1) -> torch.Tensor:
    """Unnormalized gradient difference loss.

    Row terms use ``I[i, j] - I[i-1, j]`` for i >= 1, column terms
    ``I[i, j-1] - I[i, j]`` for j >= 1; each sum runs only where its
    neighbour exists (no padding).
    """
    _check_shapes(clean, predicted)
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    if clean.ndim < 2:
        raise ValueError("images need at least two spatial axes")
    rows_c = (clean[..., 1:, :] - clean[..., :-1, :]).abs()
    rows_p = (predicted[..., 1:, :] - predicted[..., :-1, :]).abs()
    cols_c = (clean[..., :, :-1] - clean[..., :, 1:]).abs()
    cols_p = (predicted[..., :, :-1] - predicted[..., :, 1:]).abs()
    return ((rows_c - rows_p).abs() ** alpha).sum() + ((cols_c - cols_p).abs() ** alpha).sum()


def gdl(clean: torch.Tensor, predicted: torch.Tensor, alpha: int = 1) -> torch.Tensor:
    """Gradient difference loss divided by the element count of the batch."""
    return gdl_sum(clean, predicted, alpha) / clean.numel()


def _per_sample_score(out: torch.Tensor, batch: int) -> torch.Tensor:
    if out.ndim == 0:
        raise ValueError("critic must return one score (or score map) per sample")
    if out.shape[0] != batch:
        raise ValueError(f"critic returned {out.shape[0]} scores for a batch of {batch}")
    return out.reshape(batch, -1).mean(dim=1)


def gradient_penalty(critic, real: torch.Tensor, fake: torch.Tensor, lambda_gp: float,
                     epsilon_seed: int) -> torch.Tensor:
    """``lambda_gp * mean_b (||grad D(x_hat_b)||_2 - 1)^2`` on random interpolates.

    One mixing weight u ~ U[0, 1] is drawn per sample from a generator seeded
    with ``epsilon_seed``; ``x_hat = u * real + (1 - u) * fake``. A patch-map
    output is averaged to one score per sample before differentiation. The
    graph is kept so the penalty can be backpropagated into the critic.
    """
    _check_shapes(real, fake)
    b = real.shape[0]
    gen = torch.Generator().manual_seed(int(epsilon_seed))
    u = torch.rand(b, generator=gen, dtype=torch.float64).to(dtype=real.dtype, device=real.device)
    u = u.reshape(b, *([1] * (real.ndim - 1)))
    x_hat = (u * real.detach() + (1 - u) * fake.detach()).requires_grad_(True)
    scores = _per_sample_score(critic(x_hat), b)
    if not scores.requires_grad:
        raise NonDifferentiableCriticError("critic output does not depend differentiably on its input")
    grad, = torch.autograd.grad(scores.sum(), x_hat, create_graph=True, allow_unused=True)
    if grad is None:
        raise NonDifferentiableCriticError("critic output does not depend on its input")
    norms = grad.reshape(b, -1).norm(2, dim=1)
    return lambda_gp * ((norms - 1) ** 2).mean()


def critic_loss(d_real: torch.Tensor, d_fake: torch.Tensor, gp) -> torch.Tensor:
    """Quantity the critic minimizes: ``mean(D(fake)) - mean(D(real)) + gp``.

    Every patch in the score map counts as one critic sample.
    """
    if d_real.shape[0] != d_fake.shape[0]:
        raise ValueError("real and fake batches differ in size")
    return d_fake.mean() - d_real.mean() + gp


@dataclass
class GeneratorLossTerms:
    total: torch.Tensor
    adversarial: torch.Tensor
    l1: torch.Tensor  # weighted contribution lambda_1 * L1
    gdl: torch.Tensor  # weighted contribution lambda_2 * GDL


def generator_loss_terms(d_fake, clean, predicted, weights: LossWeights) -> GeneratorLossTerms:
    adv = -d_fake.mean()
    l1 = weights.lambda_1 * l1_loss(clean, predicted)
    if weights.lambda_2 > 0:
        g = weights.lambda_2 * gdl(clean, predicted, weights.alpha)
    else:
        g = torch.zeros((), dtype=adv.dtype, device=adv.device)
    return GeneratorLossTerms(adv + l1 + g, adv, l1, g)


def generator_loss(d_fake, clean, predicted, weights: LossWeights) -> torch.Tensor:
    """``-mean(D(fake)) + lambda_1 * L1 + lambda_2 * GDL``."""
    return generator_loss_terms(d_fake, clean, predicted, weights).total
