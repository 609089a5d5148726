"""Tangential calculus on parametrized surfaces and thin-layer heat conduction.

The package provides chart-based surface geometry, Günter and Stokes
derivatives, a Q1 finite element solver for anisotropic Laplace-Beltrami
problems, a tensor-product solver for thin layers around a surface and a
harness that sweeps the layer thickness towards its surface limit.
"""
from .errors import (ConfigError, EmptyDirichletBoundary, LayerTooThick, NoConvergence,
                     NonTangentInput, NotPositiveDefinite, RankDeficientChart, SolverDiverged,
                     ThinLayerError)
from .gamma import (FluxFamily, GammaReport, SourceFamily, SweepConfig, compute_q0,
                    counterexample_source, gamma_sweep, lebesgue_diagnostic, solve_limit_bvp)
from .geometry import (Chart, SurfaceMesh, build_surface_mesh, curvatures, geometry_study,
                       make_chart, normal, proper_extension, weingarten)
from .layer import LayerMesh, extended_gradient, layer_laplacian, scaled_energy, solve_layer_bvp
from .reports import emit_report
from .surface_solver import AnisotropyField, MixedBVPSpec, assemble, energy, solve_mixed_bvp
from .tangential import (gunter_adjoint, gunter_derivative, laplace_beltrami, stokes_derivative,
                         surface_divergence, surface_gradient, verify_identities)

__version__ = "0.1.0"
