"""Export 2-D capsule coordinates for plotting, one file pair per subspace.

For a head with ``c = 2`` every test feature ``x`` is mapped into each
subspace's plane by ``G^(-1/2) W^T x``, which keeps the capsule length.
Per subspace ``l`` the exporter writes ``subspace_<l>.csv`` with columns
``x, y, is_own_class, length`` and a ``subspace_<l>.svg`` scatter (own class
red, others green).
"""

import csv
import os

import numpy as np

from . import capsule as cap
from .errors import InputError, SingularityError, UnsupportedDimensionError
from .heads import CapsuleHead

LENGTH_TOL = 1e-8


def subspace_coords(subspace, X):
    """Length-preserving plane coordinates for every row of ``X``."""
    root = cap.linalg.sym_inv_sqrt(subspace.gram, subspace.eps_used)
    return (X @ subspace.weight) @ root


def _svg(points, own, path, size=320):
    pad = 12
    r = np.abs(points).max() if len(points) else 1.0
    r = r or 1.0
    scale = (size / 2 - pad) / r
    mid = size / 2
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>',
           f'<line x1="0" y1="{mid}" x2="{size}" y2="{mid}" stroke="#bbb"/>',
           f'<line x1="{mid}" y1="0" x2="{mid}" y2="{size}" stroke="#bbb"/>']
    # others first so own-class points sit on top
    for flag, color in ((False, "#2a2"), (True, "#d22")):
        for (px, py) in points[own == flag]:
            out.append(f'<circle cx="{mid + scale * px:.2f}" cy="{mid - scale * py:.2f}" r="1.6" fill="{color}"/>')
    out.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(out) + "\n")


def export_projections(model, X, y, out_dir, pairs=None):
    """Write per-subspace CSV/SVG files for features of inputs ``X``.

    ``pairs`` optionally restricts subspace ``l`` to its own class plus one
    other class ``m`` (given as ``(l, m)`` tuples).  Returns a dict mapping
    subspace index to ``(own_mean_length, other_mean_length)``.
    """
    head = model.head
    if not isinstance(head, CapsuleHead) or head.capsule_dim != 2:
        raise UnsupportedDimensionError("visualization needs a capsule head with c = 2")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(y) == 0:
        raise InputError("no samples to visualize")
    feats = model.features(X)
    scores = head.forward_batch(feats)[0]
    selected = {l: None for l in range(head.num_classes)}
    if pairs:
        selected = {l: m for l, m in pairs}
    os.makedirs(out_dir, exist_ok=True)
    summary = {}
    for l, other in selected.items():
        pts = subspace_coords(head.subspaces[l], feats)
        lengths = np.linalg.norm(pts, axis=1)
        err = np.abs(lengths - scores[:, l]) / np.maximum(scores[:, l], 1.0)
        if err.max() > LENGTH_TOL:
            raise SingularityError(f"subspace {l}: plane coordinates lost the capsule length ({err.max():.2e})")
        own = y == l
        keep = own | (y == other) if other is not None else np.ones_like(own)
        with open(os.path.join(out_dir, f"subspace_{l}.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["x", "y", "is_own_class", "length"])
            for (px, py), o, ln in zip(pts[keep], own[keep], lengths[keep]):
                w.writerow([repr(float(px)), repr(float(py)), int(o), repr(float(ln))])
        _svg(pts[keep], own[keep], os.path.join(out_dir, f"subspace_{l}.svg"))
        others = keep & ~own
        summary[l] = (float(lengths[own].mean()) if own.any() else float("nan"),
                      float(lengths[others].mean()) if others.any() else float("nan"))
    return summary
