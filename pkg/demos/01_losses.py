"""
Loss terms on tiny tensors
==========================

L1, the gradient difference loss and the gradient penalty, evaluated on
inputs small enough to check by hand.
"""

import numpy as np
import torch

from ugan import losses
from ugan.losses import LossWeights

# a 2x2 checkerboard against a flat image: every neighbour pair differs by 1
clean = torch.zeros(2, 2, dtype=torch.float64)
pred = torch.tensor([[0.0, 1.0], [1.0, 0.0]], dtype=torch.float64)
print("L1       ", losses.l1_loss(clean, pred).item())        # 0.5
print("GDL sum  ", losses.gdl_sum(clean, pred).item())        # 4 neighbour pairs -> 4.0
print("GDL mean ", losses.gdl(clean, pred).item())            # 4.0 / 4 elements

# shifting both images by a constant leaves GDL unchanged, L1 too
print("shifted  ", losses.gdl_sum(clean + 0.3, pred + 0.3).item())

# gradient penalty of a linear critic: the gradient is the weight vector everywhere
real = torch.ones(3, 4, dtype=torch.float64)
fake = torch.zeros(3, 4, dtype=torch.float64)
for name, critic in [("mean", lambda x: x.mean(1)), ("sum", lambda x: x.sum(1))]:
    gp = losses.gradient_penalty(critic, real, fake, lambda_gp=10.0, epsilon_seed=0)
    print(f"GP {name:4s}  ", gp.item())  # 10 * (0.5 - 1)^2 = 2.5, 10 * (2 - 1)^2 = 10

# full generator objective: adversarial + weighted L1 + weighted GDL
rng = np.random.default_rng(0)
a = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 8, 8)))
b = torch.from_numpy(rng.uniform(-1, 1, (1, 3, 8, 8)))
d_fake = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
for w in (LossWeights.ugan(), LossWeights.ugan_p()):
    terms = losses.generator_loss_terms(d_fake, a, b, w)
    print(f"lambda_2={w.lambda_2}: total {terms.total.item():.3f} "
          f"= l1 {terms.l1.item():.3f} + gdl {terms.gdl.item():.3f}")
