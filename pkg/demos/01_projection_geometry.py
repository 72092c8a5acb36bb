"""Projecting a feature onto a capsule subspace.

A capsule is a c-dimensional subspace of feature space, spanned by the
columns of a d x c weight matrix W.  The capsule for input x is its
orthogonal projection v = W (W^T W)^-1 W^T x, and the class score is |v|.
"""

import numpy as np

from cappronet import CapsuleSubspace, capsule_length, project

rng = np.random.default_rng(0)
s = CapsuleSubspace.random(rng, dim=16, capsule_dim=3)
x = rng.standard_normal(16)

p = project(s, x)
print(f"|x|          = {np.linalg.norm(x):.6f}")
print(f"|v|          = {p.length:.6f}")
print(f"|x_perp|     = {np.linalg.norm(p.complement):.6f}")
print(f"Pythagoras   : |v|^2 + |x_perp|^2 - |x|^2 = "
      f"{p.length**2 + p.complement @ p.complement - x @ x:.2e}")
print(f"<v, x_perp>  = {p.capsule @ p.complement:.2e}")

# Vectors inside the subspace keep their full length; the length does not
# depend on which basis of the subspace W happens to use.
inside = s.weight @ rng.standard_normal(3)
print(f"in-subspace  : |v| / |x| = {capsule_length(s, inside) / np.linalg.norm(inside):.12f}")
R = rng.standard_normal((3, 3)) + 2 * np.eye(3)
rotated = CapsuleSubspace.from_weight(s.weight @ R)
print(f"basis change : length difference {abs(capsule_length(rotated, x) - p.length):.2e}")
