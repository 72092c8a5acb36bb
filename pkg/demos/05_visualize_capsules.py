"""Looking inside two-dimensional capsules.

With c = 2 each subspace can be drawn in the plane.  The coordinates
G^(-1/2) W^T x have the same norm as the capsule, so the distance from the
origin is the class score.  Samples of the subspace's own class should sit
farther out than everything else.
"""

import sys
import tempfile

from cappronet import TrainConfig, train
from cappronet.train import build_data
from cappronet.visualize import export_projections

config = TrainConfig(capsule_dim=2, epochs=10)
record = train(config)
data = build_data(config)
out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="capsules-")
summary = export_projections(record.model, data.x_test, data.y_test, out)
print(f"test error {record.test_error:.4f}; CSV and SVG files written to {out}")
for label, (own, other) in summary.items():
    print(f"  subspace {label}: mean length own class {own:.3f}, other classes {other:.3f}")
