"""
When dominated convergence fails
================================

For a source that blows up like 1/(|t| log|t|) near the mid-surface the
weighted integral over the layer grows without bound as eps -> 0.  A smooth
source stays bounded by twice its mid-surface value.
"""
from thinlayer import (SourceFamily, build_surface_mesh, counterexample_source,
                       lebesgue_diagnostic, make_chart)

mesh = build_surface_mesh(make_chart("sphere_cap", {"kind": "gnomonic"}, (16, 16)))
eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]

smooth = lebesgue_diagnostic(mesh, SourceFamily("x3", 1.0, (1.0, 0.0, -1.0)), eps, slack=0.0)
bad = lebesgue_diagnostic(mesh, counterexample_source, eps)
for e, a, b in zip(eps, smooth.F_eps, bad.F_eps):
    print(f"eps={e:.0e}  smooth {a / (2 * smooth.F0):.4f} x 2F(0)   counterexample {b:.3g}")
print("smooth bounded:", smooth.bounded, "  counterexample divergent:", bad.divergent)
