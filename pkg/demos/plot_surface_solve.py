"""
Heat conduction on a polar cap
==============================

Solve -Delta T = f on a cap of the unit sphere with T = z - 1/2 on the rim.
The manufactured solution is z - 1/2 itself, so f = -2z.
"""
import numpy as np

from thinlayer import MixedBVPSpec, build_surface_mesh, make_chart, solve_mixed_bvp

for n in (16, 32, 64):
    mesh = build_surface_mesh(make_chart("sphere_cap", {"kind": "gnomonic"}, (n, n)))
    z = mesh.points[:, 2]
    T = solve_mixed_bvp(mesh, None, MixedBVPSpec(f=-2 * z, g=z - 0.5))
    print(f"n={n:3d}  max error {np.abs(T - (z - 0.5)).max():.3e}")
