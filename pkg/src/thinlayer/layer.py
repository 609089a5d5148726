"""Thin layer ``C x (-eps, eps)`` around a surface patch.

The layer is always meshed in the stretched transverse variable
``tau = t / eps`` on ``[-1, 1]``, so one mesh serves every thickness and eps
only enters as weights.  The discrete problem minimizes

    E_eps(T) = int_{-1}^{1} int_C [ 1/2 (|D_C T|^2 + eps^-2 |d_tau T|^2) + f_eps T ]
               + 1/eps int_C [ q(x, +eps) T(x, +1) - q(x, -eps) T(x, -1) ]

over bilinear surface elements times linear transverse elements, with
``T = 0`` on the lateral boundary.  Quadrature uses the mid-surface metric
on every slice (the product splitting ``Delta = Delta_C + d_t^2``); the
differential operators below can instead use the exact parallel-surface
geometry of each slice.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import LayerTooThick
from .geometry import SurfaceMesh, _diff, chart_partials, contravariant_from
from .surface_solver import (CellQuadrature, cell_quadrature, mass_matrix, pcg,
                             stiffness_matrix)
from .tangential import laplace_beltrami, surface_gradient


@dataclass(frozen=True, eq=False)
class LayerMesh:
    base: SurfaceMesh
    eps: float
    n_t: int = 8

    def __post_init__(self):
        if self.n_t < 4 or self.n_t % 2:
            raise ValueError(f"n_t must be even and at least 4, got {self.n_t}")
        if not (0.0 < self.eps < self.base.eps_max):
            raise LayerTooThick(self.eps, self.base.eps_max)

    @property
    def tau(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.n_t + 1)

    @property
    def t(self) -> np.ndarray:
        return self.eps * self.tau

    @property
    def dtau(self) -> float:
        return 2.0 / self.n_t

    @property
    def shape(self) -> tuple[int, int]:
        return (self.base.n_nodes, self.n_t + 1)

    @property
    def mid(self) -> int:
        return self.n_t // 2

    def with_eps(self, eps: float) -> "LayerMesh":
        return LayerMesh(self.base, eps, self.n_t)

    def fiber_points(self) -> np.ndarray:
        """Ambient position ``x + t nu(x)`` of every layer node, shape ``(N, n_t + 1, 3)``."""
        return (self.base.points[:, None, :]
                + self.t[None, :, None] * self.base.normal[:, None, :])

    @cached_property
    def slice_con(self) -> np.ndarray:
        """Contravariant bases of the parallel surfaces, ``(n_t + 1, N, 2, 3)``."""
        base = self.base
        dnu1, dnu2 = chart_partials(base.normal, base.shape, base.spacing)
        dnu = np.stack([dnu1, dnu2], axis=1)                      # (N, 2, 3)
        g_t = base.g_cov[None] + self.t[:, None, None, None] * dnu[None]
        return contravariant_from(g_t)[1]


# ---------------------------------------------------------------------------
# differential operators

def _slice_gradient(layer: LayerMesh, F: np.ndarray, exact_slices: bool) -> np.ndarray:
    """Tangential gradient on every slice, ``(N, n_t + 1, 3, ...)``."""
    base = layer.base
    if not exact_slices:
        return np.swapaxes(surface_gradient(base, F), 1, 2) if F.ndim == 2 else \
            np.moveaxis(surface_gradient(base, F), 1, 2)
    d1, d2 = chart_partials(F, base.shape, base.spacing)       # (N, n_t+1, ...)
    con = np.moveaxis(layer.slice_con, 0, 1)                     # (N, n_t+1, 2, 3)
    extra = F.ndim - 2
    g1 = con[:, :, 0].reshape(con.shape[:2] + (3,) + (1,) * extra)
    g2 = con[:, :, 1].reshape(g1.shape)
    return d1[:, :, None] * g1 + d2[:, :, None] * g2


def transverse_derivative(layer: LayerMesh, F) -> np.ndarray:
    """``d_t F = eps^-1 d_tau F`` by second-order differences along fibres."""
    return _diff(np.asarray(F, dtype=float), layer.dtau, 1) / layer.eps


def extended_gradient(layer: LayerMesh, F, exact_slices: bool = True) -> np.ndarray:
    """``(D_1 F, D_2 F, D_3 F, d_N F)`` at every layer node, shape ``(N, n_t + 1, 4)``.

    With ``exact_slices`` the Günter derivatives use the geometry of the
    parallel surface through each node; otherwise the mid-surface metric.
    """
    F = np.asarray(F, dtype=float)
    D = _slice_gradient(layer, F, exact_slices)
    return np.concatenate([D, transverse_derivative(layer, F)[..., None]], axis=-1)


def slice_mean_curvature(layer: LayerMesh) -> np.ndarray:
    """``H0`` of every parallel surface, ``sum_j D_j N_j`` with the extended normal."""
    N = np.broadcast_to(layer.base.normal[:, None, :], layer.shape + (3,))
    D = _slice_gradient(layer, N, True)                           # (N, n_t+1, 3, 3)
    return np.einsum("nmjj->nm", D)


def extended_divergence(layer: LayerMesh, U) -> np.ndarray:
    """Divergence of an ambient vector field ``U`` of shape ``(N, n_t + 1, 3)``.

    ``U`` is split as ``U0_j = U_j - <N, U> N_j`` plus the normal part
    ``<N, U>``; the result is ``sum_j D_j U0_j + d_N <N, U> + H0 <N, U>``.
    """
    U = np.asarray(U, dtype=float)
    nu = layer.base.normal[:, None, :]
    un = np.einsum("nmk,nk->nm", U, layer.base.normal)
    U0 = U - un[..., None] * nu
    D = _slice_gradient(layer, U0, True)
    return (np.einsum("nmjj->nm", D) + transverse_derivative(layer, un)
            + slice_mean_curvature(layer) * un)


def _second_tau(F: np.ndarray, h: float) -> np.ndarray:
    F = np.moveaxis(F, 1, 0)
    out = np.empty_like(F)
    out[1:-1] = (F[2:] - 2.0 * F[1:-1] + F[:-2]) / h ** 2
    out[0] = (2.0 * F[0] - 5.0 * F[1] + 4.0 * F[2] - F[3]) / h ** 2
    out[-1] = (2.0 * F[-1] - 5.0 * F[-2] + 4.0 * F[-3] - F[-4]) / h ** 2
    return np.moveaxis(out, 0, 1)


def layer_laplacian(layer: LayerMesh, F) -> np.ndarray:
    """``Delta_C F`` slice by slice plus ``d_t^2 F``; face rows are one-sided."""
    F = np.asarray(F, dtype=float)
    lap_c = np.stack([laplace_beltrami(layer.base, F[:, m]) for m in range(F.shape[1])], axis=1)
    return lap_c + _second_tau(F, layer.dtau) / layer.eps ** 2


# ---------------------------------------------------------------------------
# discrete problem

def transverse_matrices(n_t: int, length: float = 2.0):
    """P1 stiffness and consistent mass on a uniform grid of ``length``."""
    h = length / n_t
    main = np.full(n_t + 1, 2.0)
    main[[0, -1]] = 1.0
    off = np.ones(n_t)
    K = sp.diags([-off, main, -off], [-1, 0, 1]) / h
    M = sp.diags([off, 2.0 * main, off], [-1, 0, 1]) * (h / 6.0)
    return K.tocsr(), M.tocsr()


@dataclass
class LayerOperators:
    K_c: sp.csr_matrix
    M_c: sp.csr_matrix
    K_tau: sp.csr_matrix
    M_tau: sp.csr_matrix

    def stiffness(self, eps: float) -> sp.csr_matrix:
        return (sp.kron(self.K_c, self.M_tau) + sp.kron(self.M_c, self.K_tau) / eps ** 2).tocsr()

    def mass(self) -> sp.csr_matrix:
        return sp.kron(self.M_c, self.M_tau).tocsr()


def layer_operators(layer: LayerMesh) -> LayerOperators:
    K_tau, M_tau = transverse_matrices(layer.n_t)
    return LayerOperators(stiffness_matrix(layer.base), mass_matrix(layer.base), K_tau, M_tau)


def layer_load(layer: LayerMesh, ops: LayerOperators, f, q_plus, q_minus) -> np.ndarray:
    """Gradient of the linear part of ``E_eps``."""
    f = np.asarray(f, dtype=float)
    load = (ops.M_c @ f @ ops.M_tau.T)   # (N, n_t+1) == kron(M_c, M_tau) vec(f)
    load = np.array(load)
    load[:, -1] += (ops.M_c @ np.asarray(q_plus, dtype=float)) / layer.eps
    load[:, 0] -= (ops.M_c @ np.asarray(q_minus, dtype=float)) / layer.eps
    return load.ravel()


def lateral_nodes(layer: LayerMesh) -> np.ndarray:
    nt1 = layer.n_t + 1
    b = layer.base.boundary_nodes
    return (b[:, None] * nt1 + np.arange(nt1)[None]).ravel()


@dataclass
class LayerSolution:
    T: np.ndarray            # (N, n_t + 1)
    iterations: int
    residual: float


def solve_layer_bvp(layer: LayerMesh, f, q_plus, q_minus, tol: float = 1e-10,
                    ops: LayerOperators | None = None, return_info: bool = False):
    """Minimize ``E_eps`` with zero lateral Dirichlet data.

    ``f`` is given on the stretched mesh, ``f[n, m] = f(x_n, eps * tau_m)``;
    ``q_plus`` and ``q_minus`` are ``q(., +eps)`` and ``q(., -eps)``.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != layer.shape:
        raise ValueError(f"source must have shape {layer.shape}, got {f.shape}")
    for arr in (f, q_plus, q_minus):
        if not np.all(np.isfinite(arr)):
            raise ValueError("layer data contains non-finite values")
    ops = ops or layer_operators(layer)
    K = ops.stiffness(layer.eps)
    load = layer_load(layer, ops, f, q_plus, q_minus)
    fixed = lateral_nodes(layer)
    free = np.setdiff1d(np.arange(load.size), fixed)
    x, info = pcg(K[free][:, free].tocsr(), -load[free], tol=tol)
    T = np.zeros(load.size)
    T[free] = x
    T = T.reshape(layer.shape)
    if return_info:
        return LayerSolution(T, info.iterations, info.residual)
    return T


def scaled_energy(layer: LayerMesh, T, f, q_plus, q_minus,
                  ops: LayerOperators | None = None) -> float:
    """``E_eps(T)`` on the stretched mesh (matrix form)."""
    ops = ops or layer_operators(layer)
    v = np.asarray(T, dtype=float).ravel()
    K = ops.stiffness(layer.eps)
    return float(0.5 * v @ (K @ v) + layer_load(layer, ops, f, q_plus, q_minus) @ v)


def _gauss_1d():
    p = 0.5 * (1.0 + np.array([-1.0, 1.0]) / np.sqrt(3.0))
    return p, np.array([0.5, 0.5])


def physical_energy(layer: LayerMesh, T, f, q_plus, q_minus) -> float:
    """Unscaled energy ``E(T)`` over ``C x (-eps, eps)`` by direct Gauss quadrature.

    Nodal arrays are indexed like the stretched mesh, the transverse
    coordinate being ``t = eps * tau``.  Independent of the assembled
    matrices; ``scaled_energy = physical_energy / eps``.
    """
    T = np.asarray(T, dtype=float)
    f = np.asarray(f, dtype=float)
    quad: CellQuadrature = cell_quadrature(layer.base)
    tp, tw = _gauss_1d()
    dt = layer.eps * layer.dtau
    Nt = np.stack([1.0 - tp, tp], axis=1)                 # (2 gauss, 2 ends)

    Tc = T[quad.conn]                                      # (C, 4, n_t+1)
    fc = f[quad.conn]
    # values and surface gradients at surface Gauss points on every node plane
    Tg = np.einsum("ga,cam->cgm", quad.N, Tc)
    fg = np.einsum("ga,cam->cgm", quad.N, fc)
    dT = np.einsum("gab,cam->cgmb", quad.dN, Tc)           # chart partials
    gradT = np.einsum("cgmb,cgbk->cgmk", dT, quad.g_con)   # (C, G, n_t+1, 3)

    total = 0.0
    for m in range(layer.n_t):
        for e in range(2):
            a, b = Nt[e]
            w = tw[e] * dt
            Tv = a * Tg[:, :, m] + b * Tg[:, :, m + 1]
            fv = a * fg[:, :, m] + b * fg[:, :, m + 1]
            gv = a * gradT[:, :, m] + b * gradT[:, :, m + 1]
            dtv = (Tg[:, :, m + 1] - Tg[:, :, m]) / dt
            dens = 0.5 * (np.einsum("cgk,cgk->cg", gv, gv) + dtv ** 2) + fv * Tv
            total += w * float(np.sum(dens * quad.jw))
    qp = np.einsum("ga,ca->cg", quad.N, np.asarray(q_plus, float)[quad.conn])
    qm = np.einsum("ga,ca->cg", quad.N, np.asarray(q_minus, float)[quad.conn])
    total += float(np.sum((qp * Tg[:, :, -1] - qm * Tg[:, :, 0]) * quad.jw))
    return total


def t_independence_ratio(layer: LayerMesh, T, ops: LayerOperators | None = None) -> float:
    """``int |d_tau T|^2 / int |T|^2`` over the stretched layer."""
    ops = ops or layer_operators(layer)
    T = np.asarray(T, dtype=float)
    den = float(np.sum(T * (ops.M_c @ T @ ops.M_tau.T)))
    if den == 0.0:
        return 0.0
    return float(np.sum(T * (ops.M_c @ T @ ops.K_tau.T))) / den


def h1_norm_sq(layer: LayerMesh, T, ops: LayerOperators | None = None) -> float:
    """``||T||^2_{H^1}`` on the stretched layer ``C x (-1, 1)``."""
    ops = ops or layer_operators(layer)
    T = np.asarray(T, dtype=float)
    S = ops.M_c @ T @ ops.M_tau.T + ops.K_c @ T @ ops.M_tau.T + ops.M_c @ T @ ops.K_tau.T
    return float(np.sum(T * S))


def discrete_poincare_constant(layer: LayerMesh, ops: LayerOperators | None = None) -> float:
    """Smallest ratio of the scaled gradient energy to the H^1 norm on the constrained space.

    The gradient energy is ``int 1/2 (|D_C T|^2 + eps^-2 |d_tau T|^2)``.
    """
    from scipy.sparse.linalg import eigsh

    ops = ops or layer_operators(layer)
    A = 0.5 * ops.stiffness(layer.eps)
    B = (sp.kron(ops.M_c, ops.M_tau) + sp.kron(ops.K_c, ops.M_tau)
         + sp.kron(ops.M_c, ops.K_tau)).tocsr()
    free = np.setdiff1d(np.arange(A.shape[0]), lateral_nodes(layer))
    Af = A[free][:, free].tocsc()
    Bf = B[free][:, free].tocsc()
    if free.size <= 1500:
        from scipy.linalg import eigh
        return float(eigh(Af.toarray(), Bf.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0])
    return float(eigsh(Af, k=1, M=Bf, sigma=0.0, which="LM", return_eigenvectors=False)[0])


def write_layer_csv(layer: LayerMesh, T, path) -> None:
    """Columns: surface node, tau, value."""
    T = np.asarray(T, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "tau", "value"])
        for n in range(T.shape[0]):
            for m, tau in enumerate(layer.tau):
                w.writerow([n, format(float(tau), ".17g"), format(float(T[n, m]), ".17g")])
