"""Dense float64 matrix helpers used by the capsule math.

Matrices and vectors are plain ``numpy.ndarray`` objects (2-D and 1-D,
float64).  The functions here add the shape checks and the small symmetric
solves the capsule layer needs; everything heavier is delegated to numpy.
"""

import numpy as np

from .errors import ShapeError, SingularityError

DEFAULT_EPS = 1e-7


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    return a


def as_vector(v, name="vector"):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ShapeError(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    return v


def matmul(a, b):
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def matvec(a, v):
    a, v = as_matrix(a, "a"), as_vector(v, "v")
    if a.shape[1] != v.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by vector of dim {v.shape[0]}")
    return a @ v


def transpose(a):
    return as_matrix(a).T.copy()


def dot(u, v):
    u, v = as_vector(u, "u"), as_vector(v, "v")
    if u.shape != v.shape:
        raise ShapeError(f"dot of dims {u.shape[0]} and {v.shape[0]}")
    return float(u @ v)


def norm2(v):
    return float(np.linalg.norm(as_vector(v)))


def frobenius_norm(a):
    return float(np.linalg.norm(as_matrix(a), "fro"))


def _check_symmetric(g, tol=1e-10):
    g = as_matrix(g, "g")
    if g.shape[0] != g.shape[1]:
        raise ShapeError(f"expected a square matrix, got {g.shape}")
    scale = max(np.abs(g).max(), np.finfo(float).tiny)
    if np.abs(g - g.T).max() > tol * scale:
        raise ShapeError("matrix is not symmetric")
    return g


def _cholesky(g):
    # Treat a pivot that is lost in rounding as breakdown; numpy alone only
    # notices strictly non-positive pivots.
    try:
        chol = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise SingularityError("Cholesky factorization failed") from exc
    piv = np.diag(chol) ** 2
    if not np.all(np.isfinite(chol)) or piv.min() <= g.shape[0] * np.finfo(float).eps * np.diag(g).max():
        raise SingularityError("Cholesky pivot is non-finite or numerically zero")
    return chol


def sym_inverse(g, eps=0.0):
    """Return ``(g + eps*I)^-1`` for a symmetric positive (semi-)definite ``g``.

    Uses a Cholesky factorization of the shifted matrix; the result is
    symmetrized before returning.
    """
    g = _check_symmetric(g)
    n = g.shape[0]
    shifted = g + eps * np.eye(n) if eps else g
    chol = _cholesky(shifted)
    linv = np.linalg.solve(chol, np.eye(n))
    inv = linv.T @ linv
    return 0.5 * (inv + inv.T)


def regularized_inverse(g, eps=DEFAULT_EPS):
    """Invert ``g``, retrying with ``g + eps*I`` only if that fails.

    Returns ``(inverse, used_eps)`` where ``used_eps`` is 0.0 when the plain
    factorization succeeded.
    """
    try:
        return sym_inverse(g, 0.0), 0.0
    except SingularityError:
        if eps <= 0:
            raise
    return sym_inverse(g, eps), eps


def sym_inv_sqrt(g, eps=0.0):
    """Return the symmetric inverse square root ``(g + eps*I)^(-1/2)``."""
    g = _check_symmetric(g)
    n = g.shape[0]
    evals, evecs = np.linalg.eigh(0.5 * (g + g.T) + eps * np.eye(n))
    floor = n * np.finfo(float).eps * max(abs(evals).max(), np.finfo(float).tiny)
    if not np.all(np.isfinite(evals)) or evals.min() <= floor:
        raise SingularityError(f"matrix is not positive definite (min eigenvalue {evals.min():.3g})")
    s = (evecs / np.sqrt(evals)) @ evecs.T
    return 0.5 * (s + s.T)
