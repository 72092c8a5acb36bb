"""Timing and tracking benchmark: exact sigma refresh vs one hyper-power step.

For each ``(d, c)`` the benchmark walks a weight matrix through ``steps``
small random updates (relative size ``step_size``, mimicking SGD) and keeps
two sigmas in sync with it: an exact Cholesky refresh and a single
hyper-power step per update.  It reports the mean time of each maintenance
route and the worst residual ``||sigma_hp G - I||_F`` seen along the way.
"""

import dataclasses
import time

import numpy as np

from . import capsule as cap


@dataclasses.dataclass
class BenchRow:
    dim: int
    capsule_dim: int
    steps: int
    exact_time: float
    hyperpower_time: float
    max_residual: float
    eps_fallbacks: int

    @property
    def time_ratio(self):
        """Hyper-power time over exact-refresh time."""
        return self.hyperpower_time / self.exact_time if self.exact_time else float("nan")


def bench_sigma(grid=((64, 1), (64, 2), (64, 4), (64, 8), (256, 8)), steps=500, step_size=1e-4,
                seed=0, adversarial=False):
    """Run the benchmark over ``grid``.

    With ``adversarial=True`` the last column of ``W`` duplicates the first
    (for ``c >= 2``), so the Gram matrix is exactly singular and every exact
    refresh needs the eps fallback; ``eps_fallbacks`` counts those.
    """
    rows = []
    for d, c in grid:
        rng = np.random.default_rng([seed, d, c])
        w = rng.standard_normal((d, c)) / np.sqrt(d)
        if adversarial and c >= 2:
            w[:, -1] = w[:, 0]
        exact = cap.CapsuleSubspace.from_weight(w)
        hp = cap.CapsuleSubspace.from_weight(w, sigma_mode=cap.SigmaMode.HYPERPOWER)
        fallbacks = int(exact.eps_used > 0)
        t_exact = t_hp = 0.0
        max_res = 0.0
        for _ in range(steps):
            delta = rng.standard_normal((d, c))
            delta *= step_size * np.linalg.norm(w) / np.linalg.norm(delta)
            if adversarial and c >= 2:
                delta[:, -1] = delta[:, 0]
            w = w + delta
            exact = dataclasses.replace(exact, weight=w)
            hp = dataclasses.replace(hp, weight=w)
            t0 = time.perf_counter()
            exact = cap.refresh_sigma(exact)
            t1 = time.perf_counter()
            hp = cap.hyperpower_step(hp)
            t2 = time.perf_counter()
            t_exact += t1 - t0
            t_hp += t2 - t1
            fallbacks += int(exact.eps_used > 0)
            g = hp.gram + hp.eps_used * np.eye(c)
            max_res = max(max_res, cap.gram_residual(hp.sigma, g))
        rows.append(BenchRow(d, c, steps, t_exact / steps, t_hp / steps, max_res, fallbacks))
    return rows
