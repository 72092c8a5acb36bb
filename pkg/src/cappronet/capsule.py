"""Capsule subspaces: orthogonal projection, capsule length and its gradient.

A capsule subspace for one class is the column span of a ``d x c`` weight
matrix ``W``.  Feature vectors are projected onto it with
``v = W (W^T W)^-1 W^T x``; the length ``||v||`` scores the class.  The
``c x c`` matrix ``sigma = (W^T W)^-1`` is cached on the subspace and kept in
sync with ``W`` either exactly (Cholesky) or by one hyper-power step per
weight update.

The ``d x d`` projector is never formed here.  Every product is staged as
``W @ (sigma @ (W.T @ x))``.
"""

import dataclasses
import enum
from typing import NamedTuple

import numpy as np

from . import linalg
from .errors import DivergenceError, ShapeError, SingularityError


class SigmaMode(str, enum.Enum):
    EXACT = "exact"
    HYPERPOWER = "hyperpower"


LENGTH_GUARD_REL = 1e-12
LENGTH_GUARD_ABS = 1e-300
DEFAULT_REINIT_EVERY = 1000


def length_guard(x_norm):
    """Capsule lengths at or below this value get zero gradient."""
    return max(LENGTH_GUARD_REL * x_norm, LENGTH_GUARD_ABS)


@dataclasses.dataclass(frozen=True, eq=False)
class CapsuleSubspace:
    """One class's subspace: ``weight`` (d x c) and its cached ``sigma`` (c x c).

    ``eps_used`` is the diagonal shift that was needed to invert the Gram
    matrix the last time sigma was computed exactly (0.0 almost always).
    ``steps_since_exact`` counts hyper-power steps since that refresh.
    """

    weight: np.ndarray
    sigma: np.ndarray
    sigma_mode: SigmaMode = SigmaMode.EXACT
    eps: float = linalg.DEFAULT_EPS
    eps_used: float = 0.0
    steps_since_exact: int = 0
    index: int = 0

    @property
    def dim(self):
        return self.weight.shape[0]

    @property
    def capsule_dim(self):
        return self.weight.shape[1]

    @property
    def gram(self):
        return self.weight.T @ self.weight

    @classmethod
    def from_weight(cls, weight, sigma_mode=SigmaMode.EXACT, eps=linalg.DEFAULT_EPS, index=0):
        weight = linalg.as_matrix(weight, "weight")
        d, c = weight.shape
        if not 1 <= c < d:
            raise ShapeError(f"capsule dimension must satisfy 1 <= c < d, got c={c}, d={d}")
        placeholder = np.zeros((c, c))
        s = cls(weight.copy(), placeholder, SigmaMode(sigma_mode), eps, 0.0, 0, index)
        return refresh_sigma(s)

    @classmethod
    def random(cls, rng, dim, capsule_dim, **kwargs):
        """Standard normal entries scaled by ``1/sqrt(dim)``."""
        w = rng.standard_normal((dim, capsule_dim)) / np.sqrt(dim)
        return cls.from_weight(w, **kwargs)

    def with_weight(self, weight):
        """Return a copy holding ``weight`` with sigma maintained per the mode policy."""
        weight = linalg.as_matrix(weight, "weight")
        if weight.shape != self.weight.shape:
            raise ShapeError(f"weight shape {weight.shape} != {self.weight.shape}")
        moved = dataclasses.replace(self, weight=weight.copy())
        return maintain_sigma(moved)


class ProjectionResult(NamedTuple):
    capsule: np.ndarray
    length: float
    complement: np.ndarray


def gram_residual(sigma, gram):
    """Frobenius norm of ``sigma @ gram - I``."""
    return float(np.linalg.norm(sigma @ gram - np.eye(gram.shape[0]), "fro"))


def refresh_sigma(s):
    """Recompute sigma from the current weight by Cholesky inversion.

    The ``eps`` shift is applied only if the unshifted Gram matrix fails to
    factor.
    """
    try:
        sigma, used = linalg.regularized_inverse(s.gram, s.eps)
    except SingularityError as exc:
        raise SingularityError(f"capsule subspace {s.index}: Gram matrix is singular") from exc
    return dataclasses.replace(s, sigma=sigma, eps_used=used, steps_since_exact=0)


def hyperpower_step(s):
    """Apply one step of ``sigma <- 2 sigma - sigma G sigma`` with ``G = W^T W``.

    Converges quadratically to ``G^-1`` whenever the spectral radius of
    ``I - sigma G`` is below one.  Raises :class:`DivergenceError` if the
    step produces non-finite entries.
    """
    sigma = s.sigma
    g = s.gram
    if s.eps_used:
        g = g + s.eps_used * np.eye(g.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        new = 2.0 * sigma - (sigma @ g) @ sigma
        new = 0.5 * (new + new.T)
    if not np.all(np.isfinite(new)):
        raise DivergenceError(f"capsule subspace {s.index}: hyper-power iteration diverged")
    return dataclasses.replace(s, sigma=new, steps_since_exact=s.steps_since_exact + 1)


def maintain_sigma(s, reinit_every=DEFAULT_REINIT_EVERY):
    """Bring sigma up to date after a weight change.

    Exact mode refreshes.  Hyper-power mode takes a single step, falling back
    to an exact refresh every ``reinit_every`` steps or when the step diverges
    or starts from outside the contraction region.
    """
    if s.sigma_mode is SigmaMode.EXACT:
        return refresh_sigma(s)
    if s.steps_since_exact + 1 >= reinit_every:
        return refresh_sigma(s)
    g = s.gram + s.eps_used * np.eye(s.capsule_dim)
    if gram_residual(s.sigma, g) >= 0.5:
        return refresh_sigma(s)
    try:
        return hyperpower_step(s)
    except DivergenceError:
        return refresh_sigma(s)


def project(s, x):
    """Orthogonally decompose ``x`` into its capsule and complement parts."""
    x = linalg.as_vector(x, "x")
    if x.shape[0] != s.dim:
        raise ShapeError(f"feature dim {x.shape[0]} != subspace dim {s.dim}")
    capsule = s.weight @ (s.sigma @ (s.weight.T @ x))
    return ProjectionResult(capsule, float(np.linalg.norm(capsule)), x - capsule)


def capsule_length(s, x):
    """Capsule length as ``sqrt(x^T W sigma W^T x)``, without forming the capsule."""
    x = linalg.as_vector(x, "x")
    if x.shape[0] != s.dim:
        raise ShapeError(f"feature dim {x.shape[0]} != subspace dim {s.dim}")
    t = s.weight.T @ x
    return float(np.sqrt(max(t @ (s.sigma @ t), 0.0)))


def length_gradient(s, x):
    """Gradients of the capsule length with respect to ``W`` and ``x``.

    ``grad_w = x_perp (sigma W^T x)^T / ||v||`` (every column is a multiple
    of the complement ``x_perp``) and ``grad_x = v / ||v||``.  Both are zero
    when the capsule length falls under :func:`length_guard`.
    """
    x = linalg.as_vector(x, "x")
    proj = project(s, x)
    if proj.length <= length_guard(float(np.linalg.norm(x))):
        return np.zeros_like(s.weight), np.zeros_like(x)
    coeffs = s.sigma @ (s.weight.T @ x)
    grad_w = np.outer(proj.complement, coeffs) / proj.length
    grad_x = proj.capsule / proj.length
    return grad_w, grad_x


def weight_norm_length(w, x):
    """Weight-normalized response ``|w^T x| / ||w||``."""
    w, x = linalg.as_vector(w, "w"), linalg.as_vector(x, "x")
    if w.shape != x.shape:
        raise ShapeError(f"dims differ: {w.shape[0]} vs {x.shape[0]}")
    wn = float(np.linalg.norm(w))
    if wn == 0.0:
        raise SingularityError("weight vector is zero")
    return abs(float(w @ x)) / wn


def visualize_coords(s, x):
    """Length-preserving coordinates of the capsule in R^c: ``G^(-1/2) W^T x``."""
    x = linalg.as_vector(x, "x")
    if x.shape[0] != s.dim:
        raise ShapeError(f"feature dim {x.shape[0]} != subspace dim {s.dim}")
    return linalg.sym_inv_sqrt(s.gram, s.eps_used) @ (s.weight.T @ x)


def maintain_sigmas(subspaces, weights, reinit_every=DEFAULT_REINIT_EVERY):
    """Stacked form of ``[s.with_weight(w) for s, w in ...]`` for equal-shape subspaces.

    Subspaces needing special handling (eps fallback, scheduled re-init,
    drift outside the contraction region) go through :func:`maintain_sigma`
    one at a time; the rest are updated together.
    """
    W = np.stack([linalg.as_matrix(w, "weight") for w in weights])
    if W.shape[1:] != subspaces[0].weight.shape or len(W) != len(subspaces):
        raise ShapeError("weights do not match the subspaces")
    G = W.transpose(0, 2, 1) @ W
    c = G.shape[1]
    eye = np.eye(c)
    moved = [dataclasses.replace(s, weight=W[i]) for i, s in enumerate(subspaces)]
    out = [None] * len(moved)
    batch = []
    for i, s in enumerate(moved):
        if s.eps_used or (s.sigma_mode is SigmaMode.HYPERPOWER and s.steps_since_exact + 1 >= reinit_every):
            out[i] = maintain_sigma(s, reinit_every)
        else:
            batch.append(i)
    if not batch:
        return out
    idx = np.array(batch)
    Gb = G[idx]
    if moved[0].sigma_mode is SigmaMode.EXACT:
        try:
            chol = np.linalg.cholesky(Gb)
        except np.linalg.LinAlgError:
            chol = None
        if chol is not None:
            piv = np.diagonal(chol, axis1=1, axis2=2) ** 2
            ok = np.all(np.isfinite(chol), axis=(1, 2)) & (
                piv.min(axis=1) > c * np.finfo(float).eps * np.diagonal(Gb, axis1=1, axis2=2).max(axis=1))
        if chol is None or not ok.all():
            for i in batch:
                out[i] = refresh_sigma(moved[i])
            return out
        linv = np.linalg.solve(chol, np.broadcast_to(eye, chol.shape))
        sig = linv.transpose(0, 2, 1) @ linv
        sig = 0.5 * (sig + sig.transpose(0, 2, 1))
        for j, i in enumerate(batch):
            out[i] = dataclasses.replace(moved[i], sigma=sig[j], eps_used=0.0, steps_since_exact=0)
        return out
    S = np.stack([moved[i].sigma for i in batch])
    SG = S @ Gb
    resid = np.linalg.norm(SG - eye, axis=(1, 2))
    with np.errstate(over="ignore", invalid="ignore"):
        new = 2.0 * S - SG @ S
        new = 0.5 * (new + new.transpose(0, 2, 1))
    finite = np.all(np.isfinite(new), axis=(1, 2))
    for j, i in enumerate(batch):
        if resid[j] >= 0.5 or not finite[j]:
            out[i] = refresh_sigma(moved[i])
        else:
            out[i] = dataclasses.replace(moved[i], sigma=new[j], steps_since_exact=moved[i].steps_since_exact + 1)
    return out
