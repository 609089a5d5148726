"""
Curvatures of a sphere cap under refinement
===========================================

Mean and Gauss curvature from the discrete Weingarten map on a gnomonic
chart of the unit sphere.  Exact values are H0 = 2, H = 1, G = 1.
"""
from thinlayer import geometry_study, make_chart

chart = make_chart("sphere_cap", {"kind": "gnomonic"}, (16, 16))
rep = geometry_study(chart, [(16, 16), (32, 32), (64, 64)], {"H0": 2.0, "H": 1.0, "G": 1.0})

for r in rep.records:
    print(f"grid {r['grid']}  h={r['h']:.4f}  H err={r['H_err']:.2e}  G err={r['G_err']:.2e}")

# the errors drop by about four per halving of h
print("orders:", {k: round(v, 3) for k, v in rep.orders.items() if v is not None})
