"""Keeping (W^T W)^-1 up to date cheaply.

After a small weight update, the previous inverse is an excellent starting
guess.  One hyper-power step, Sigma <- 2 Sigma - Sigma G Sigma, squares the
residual |Sigma G - I|.  That is far cheaper than refactorizing.
"""

import numpy as np

from cappronet import CapsuleSubspace, SigmaMode, hyperpower_step
from cappronet.capsule import gram_residual
from cappronet.bench import bench_sigma

rng = np.random.default_rng(2)
s = CapsuleSubspace.random(rng, dim=64, capsule_dim=8, sigma_mode=SigmaMode.HYPERPOWER)
drifted = s.with_weight(s.weight + 0.02 * rng.standard_normal(s.weight.shape))
print("residual after a weight update, then per hyper-power step:")
cur = drifted
for k in range(5):
    print(f"  step {k}: {gram_residual(cur.sigma, cur.gram):.3e}")
    cur = hyperpower_step(cur)

# Scalar picture: with orthonormal columns G = I, starting from Sigma = 0.5 I.
t = CapsuleSubspace(np.eye(4, 2), 0.5 * np.eye(2), SigmaMode.HYPERPOWER)
seq = [0.5]
for _ in range(3):
    t = hyperpower_step(t)
    seq.append(t.sigma[0, 0])
print("orthonormal case:", " -> ".join(f"{v:g}" for v in seq))

print("\nmean maintenance cost per update (200 small updates):")
for row in bench_sigma(grid=((64, 2), (64, 8)), steps=200):
    print(f"  d={row.dim} c={row.capsule_dim}: exact {row.exact_time * 1e6:.1f} us, "
          f"hyper-power {row.hyperpower_time * 1e6:.1f} us, max residual {row.max_residual:.1e}")
