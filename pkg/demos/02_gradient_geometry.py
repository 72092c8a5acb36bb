"""Where the capsule-length gradient points.

d|v|/dx is the unit capsule direction v/|v|, and d|v|/dW is x_perp times
the subspace coordinates of x.  So learning rotates the subspace toward
the part of x it cannot yet represent.  Here the analytic gradients are
compared with central differences.
"""

import numpy as np

from cappronet import CapsuleSubspace, length_gradient, project
from cappronet.gradcheck import numeric_gradient, oracle_length, relative_error

rng = np.random.default_rng(1)
w = rng.standard_normal((12, 2))
x = rng.standard_normal(12)
s = CapsuleSubspace.from_weight(w)
gw, gx = length_gradient(s, x)
p = project(s, x)

print("grad_x parallel to v :", np.allclose(gx, p.capsule / p.length))
print("grad_W columns lie along x_perp:",
      np.allclose(gw - np.outer(p.complement, p.complement @ gw) / (p.complement @ p.complement), 0))

wp, xp = w.copy(), x.copy()
nw = numeric_gradient(lambda: oracle_length(wp, x), wp)
nx = numeric_gradient(lambda: oracle_length(w, xp), xp)
print(f"relative error vs finite differences: W {relative_error(gw, nw):.1e}, x {relative_error(gx, nx):.1e}")

# A small gradient-ascent step on W increases the length of x's capsule.
step = CapsuleSubspace.from_weight(w + 0.05 * gw)
print(f"length before {p.length:.4f}, after one ascent step {project(step, x).length:.4f}")
