"""
Shrinking the layer thickness
=============================

A flat slab heated through its faces.  As the thickness goes to zero the
mid-surface temperature approaches the solution of a 2D problem whose
source is the net face flux.
"""
import numpy as np

from thinlayer import FluxFamily, SourceFamily, SweepConfig, gamma_sweep, make_chart

chart = make_chart("plane", {"a1": 0, "b1": np.pi, "a2": 0, "b2": np.pi}, (32, 32))
cfg = SweepConfig(chart, [0.4, 0.2, 0.1, 0.05], 8, SourceFamily(), FluxFamily("sin_sin"),
                  exact_limit=lambda x: -0.5 * np.sin(x[:, 0]) * np.sin(x[:, 1]))
rep = gamma_sweep(cfg)
for r in rep.records:
    print(f"eps={r['eps']:.3f}  err={r['l2_err_exact']:.3e}  energy gap={r['energy_gap']:.2e}")
print(f"discretisation floor {rep.floor:.3e}, fitted order {rep.fitted_order:.2f}")
