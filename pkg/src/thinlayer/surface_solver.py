"""Mixed Dirichlet/Neumann problem for the anisotropic Laplace-Beltrami equation.

The solution minimizes

    Phi(T) = int_C [ 1/2 <A grad_C T, grad_C T> + f T ] + int_{Gamma_N} h T

over bilinear elements on the chart grid, with ``T = g`` on the Dirichlet
edges.  Its Euler-Lagrange equation is ``Div_C(A grad_C T) = f`` with the
conormal flux ``<nu_Gamma, A grad_C T> = -h`` on the Neumann edges.
Geometry is evaluated exactly at 2x2 Gauss points of every cell.
"""
from __future__ import annotations

import csv
import weakref
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import EmptyDirichletBoundary, NotPositiveDefinite, SolverDiverged
from .geometry import EDGES, SurfaceMesh, contravariant_from

_GP = 0.5 * (1.0 + np.array([-1.0, 1.0]) / np.sqrt(3.0))   # Gauss points on [0, 1]
_GW = np.array([0.5, 0.5])


# ---------------------------------------------------------------------------
# reference element

def _reference_q1():
    """Shape values/derivatives of the four corner functions at the 2x2 Gauss points.

    Corner order: (i, j), (i+1, j), (i, j+1), (i+1, j+1).
    """
    s, t = np.meshgrid(_GP, _GP, indexing="ij")
    s, t = s.ravel(), t.ravel()
    w = np.outer(_GW, _GW).ravel()
    N = np.stack([(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t], axis=1)
    dNs = np.stack([-(1 - t), (1 - t), -t, t], axis=1)
    dNt = np.stack([-(1 - s), -s, (1 - s), s], axis=1)
    return s, t, w, N, dNs, dNt


@dataclass(frozen=True, eq=False)
class CellQuadrature:
    """Per-cell Gauss-point data shared by every assembly on one mesh."""

    conn: np.ndarray       # (C, 4) node indices
    points: np.ndarray     # (C, G, 3)
    g_con: np.ndarray      # (C, G, 2, 3)
    jw: np.ndarray         # (C, G) area density * weight * h1 * h2
    N: np.ndarray          # (G, 4)
    dN: np.ndarray         # (G, 4, 2) chart-space derivatives


_QUAD_CACHE: "weakref.WeakKeyDictionary[SurfaceMesh, CellQuadrature]" = weakref.WeakKeyDictionary()


def cell_quadrature(mesh: SurfaceMesh) -> CellQuadrature:
    hit = _QUAD_CACHE.get(mesh)
    if hit is not None:
        return hit
    n1, n2 = mesh.chart.grid
    h1, h2 = mesh.spacing
    idx = np.arange((n1 + 1) * (n2 + 1)).reshape(n1 + 1, n2 + 1)
    conn = np.stack([idx[:-1, :-1].ravel(), idx[1:, :-1].ravel(),
                     idx[:-1, 1:].ravel(), idx[1:, 1:].ravel()], axis=1)
    s, t, w, N, dNs, dNt = _reference_q1()
    I, J = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    U1 = mesh.u1[0] + (I.ravel()[:, None] + s[None]) * h1
    U2 = mesh.u2[0] + (J.ravel()[:, None] + t[None]) * h2
    ch = mesh.chart
    C, G = U1.shape
    points = np.broadcast_to(ch.map(U1, U2), (C, G, 3)).astype(float)
    g_cov = np.stack([np.broadcast_to(ch.d1(U1, U2), (C, G, 3)),
                      np.broadcast_to(ch.d2(U1, U2), (C, G, 3))], axis=2).astype(float)
    gram, g_con = contravariant_from(g_cov)
    jw = np.sqrt(np.linalg.det(gram)) * w[None] * h1 * h2
    dN = np.stack([dNs / h1, dNt / h2], axis=-1)
    quad = CellQuadrature(conn, points, g_con, jw, N, dN)
    _QUAD_CACHE[mesh] = quad
    return quad


# ---------------------------------------------------------------------------
# data types

class AnisotropyField:
    """Symmetric positive definite 3x3 conductivity on the surface.

    Built from a function of ambient points (evaluated exactly at
    quadrature points) or from nodal values (interpolated bilinearly).
    """

    def __init__(self, func: Callable | None = None, node_values=None, pd_floor: float = 1e-10):
        if (func is None) == (node_values is None):
            raise ValueError("give exactly one of func or node_values")
        self.func = func
        self.node_values = None if node_values is None else np.asarray(node_values, float)
        self.pd_floor = pd_floor

    @classmethod
    def identity(cls):
        return cls.constant(np.eye(3))

    @classmethod
    def constant(cls, matrix, pd_floor: float = 1e-10):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim == 0:
            matrix = matrix * np.eye(3)
        return cls(func=lambda x: np.broadcast_to(matrix, x.shape[:-1] + (3, 3)), pd_floor=pd_floor)

    def at_nodes(self, mesh: SurfaceMesh) -> np.ndarray:
        if self.node_values is not None:
            return self.node_values
        return np.asarray(self.func(mesh.points), dtype=float)

    def at_quadrature(self, mesh: SurfaceMesh, quad: CellQuadrature) -> np.ndarray:
        if self.node_values is not None:
            return np.einsum("ga,cajk->cgjk", quad.N, self.node_values[quad.conn])
        return np.asarray(self.func(quad.points), dtype=float)

    def validate(self, mesh: SurfaceMesh) -> None:
        A = self.at_nodes(mesh)
        asym = np.abs(A - np.swapaxes(A, -1, -2)).max(axis=(-2, -1))
        bad = np.flatnonzero(asym > 1e-12)
        if bad.size:
            raise NotPositiveDefinite(int(bad[0]), reason="matrix is not symmetric")
        lam = np.linalg.eigvalsh(A)[:, 0]
        bad = np.flatnonzero(~(lam >= self.pd_floor))
        if bad.size:
            raise NotPositiveDefinite(int(bad[0]), float(lam[bad[0]]))


@dataclass
class MixedBVPSpec:
    """Data of the mixed problem.  ``g`` and ``h`` are nodal arrays (or scalars);
    only their values on Dirichlet resp. Neumann edges are used."""

    f: np.ndarray
    g: np.ndarray | float = 0.0
    h: np.ndarray | float = 0.0
    dirichlet_edges: tuple = EDGES

    @property
    def neumann_edges(self) -> tuple:
        return tuple(e for e in EDGES if e not in self.dirichlet_edges)

    def validate(self, mesh: SurfaceMesh) -> None:
        unknown = set(self.dirichlet_edges) - set(EDGES)
        if unknown:
            raise ValueError(f"unknown edge tags {sorted(unknown)}")
        if not self.dirichlet_edges:
            raise EmptyDirichletBoundary()
        if np.shape(self.f) != (mesh.n_nodes,):
            raise ValueError(f"source must have one value per node ({mesh.n_nodes})")
        if not np.all(np.isfinite(self.f)):
            raise ValueError("source contains non-finite values")


@dataclass
class LinearSystem:
    K: sp.csr_matrix          # full stiffness
    M: sp.csr_matrix          # full consistent mass
    load: np.ndarray          # <f, phi_i> + <h, phi_i>_Gamma_N
    fixed: np.ndarray
    free: np.ndarray
    g_fixed: np.ndarray
    K_red: sp.csr_matrix = field(repr=False, default=None)
    b_red: np.ndarray = field(repr=False, default=None)

    def lift(self, x_free: np.ndarray) -> np.ndarray:
        T = np.zeros(self.K.shape[0])
        T[self.fixed] = self.g_fixed
        T[self.free] = x_free
        return T


# ---------------------------------------------------------------------------
# assembly

def _assemble_cells(quad: CellQuadrature, Ke: np.ndarray, n: int) -> sp.csr_matrix:
    rows = np.repeat(quad.conn, 4, axis=1).ravel()
    cols = np.tile(quad.conn, (1, 4)).ravel()
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness_matrix(mesh: SurfaceMesh, A: AnisotropyField | None = None) -> sp.csr_matrix:
    """``K_ij = int <A grad_C phi_i, grad_C phi_j>`` over the patch."""
    quad = cell_quadrature(mesh)
    if A is None:
        B = np.einsum("cgak,cgbk->cgab", quad.g_con, quad.g_con)
    else:
        Aq = A.at_quadrature(mesh, quad)
        B = np.einsum("cgak,cgkl,cgbl->cgab", quad.g_con, Aq, quad.g_con)
    B = 0.5 * (B + np.swapaxes(B, -1, -2)) * quad.jw[..., None, None]
    Ke = np.einsum("gia,cgab,gjb->cij", quad.dN, B, quad.dN)
    Ke = 0.5 * (Ke + np.swapaxes(Ke, 1, 2))
    return _assemble_cells(quad, Ke, mesh.n_nodes)


def mass_matrix(mesh: SurfaceMesh) -> sp.csr_matrix:
    quad = cell_quadrature(mesh)
    Me = np.einsum("gi,cg,gj->cij", quad.N, quad.jw, quad.N)
    Me = 0.5 * (Me + np.swapaxes(Me, 1, 2))
    return _assemble_cells(quad, Me, mesh.n_nodes)


def lumped_mass(mesh: SurfaceMesh) -> np.ndarray:
    return np.asarray(mass_matrix(mesh).sum(axis=1)).ravel()


def boundary_mass_matrix(mesh: SurfaceMesh, edges) -> sp.csr_matrix:
    """Line mass matrix along the given edges, exact arclength at Gauss points."""
    n = mesh.n_nodes
    rows, cols, vals = [], [], []
    ch = mesh.chart
    for edge in edges:
        nodes = mesh.boundary[edge]
        along = 1 if edge.startswith("u1") else 0     # chart direction running along the edge
        step = mesh.spacing[along]
        coords = mesh.u2 if along == 1 else mesh.u1
        fixed = (mesh.u1[0] if edge == "u1_min" else mesh.u1[-1] if edge == "u1_max"
                 else mesh.u2[0] if edge == "u2_min" else mesh.u2[-1])
        a = coords[:-1, None] + _GP[None] * step          # (S, 2)
        if along == 1:
            tang = np.broadcast_to(ch.d2(np.full_like(a, fixed), a), a.shape + (3,))
        else:
            tang = np.broadcast_to(ch.d1(a, np.full_like(a, fixed)), a.shape + (3,))
        ds = np.linalg.norm(tang, axis=-1) * _GW[None] * step
        N0, N1 = 1.0 - _GP, _GP
        loc = np.stack([np.stack([N0 * N0, N0 * N1], -1), np.stack([N1 * N0, N1 * N1], -1)], 1)
        Me = np.einsum("sg,ijg->sij", ds, loc)
        seg = np.stack([nodes[:-1], nodes[1:]], axis=1)
        rows.append(np.repeat(seg, 2, axis=1).ravel())
        cols.append(np.tile(seg, (1, 2)).ravel())
        vals.append(Me.ravel())
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def dirichlet_nodes(mesh: SurfaceMesh, edges) -> np.ndarray:
    if not edges:
        return np.zeros(0, dtype=int)
    return np.unique(np.concatenate([mesh.boundary[e] for e in edges]))


def _nodal(value, n):
    return np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()


def assemble(mesh: SurfaceMesh, A: AnisotropyField | None, spec: MixedBVPSpec) -> LinearSystem:
    """Assemble the reduced symmetric system with Dirichlet values eliminated."""
    A = A or AnisotropyField.identity()
    A.validate(mesh)
    spec.validate(mesh)
    n = mesh.n_nodes
    K = stiffness_matrix(mesh, A)
    M = mass_matrix(mesh)
    f = np.asarray(spec.f, dtype=float)
    load = M @ f
    if spec.neumann_edges:
        load = load + boundary_mass_matrix(mesh, spec.neumann_edges) @ _nodal(spec.h, n)
    fixed = dirichlet_nodes(mesh, spec.dirichlet_edges)
    free = np.setdiff1d(np.arange(n), fixed)
    g_fixed = _nodal(spec.g, n)[fixed]
    K_red = K[free][:, free].tocsr()
    b_red = -load[free] - K[free][:, fixed] @ g_fixed
    return LinearSystem(K, M, load, fixed, free, g_fixed, K_red, b_red)


# ---------------------------------------------------------------------------
# solver

@dataclass
class CGInfo:
    iterations: int
    residual: float


def pcg(K, b, tol: float = 1e-10, maxiter: int | None = None, x0=None):
    """Jacobi-preconditioned conjugate gradients for SPD ``K``.

    Stops on ``||b - K x|| <= tol ||b||``; raises :class:`SolverDiverged` at
    the iteration cap ``20 sqrt(n) + 500``.
    """
    n = b.shape[0]
    if maxiter is None:
        maxiter = int(20 * np.sqrt(n) + 500)
    normb = np.linalg.norm(b)
    if normb == 0.0:
        return np.zeros(n), CGInfo(0, 0.0)
    inv_diag = 1.0 / K.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - K @ x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Kp = K @ p
        alpha = rz / (p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        if np.linalg.norm(r) <= tol * normb:
            true_res = np.linalg.norm(b - K @ x) / normb
            if true_res <= tol:
                return x, CGInfo(it, true_res)
            r = b - K @ x
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverDiverged(maxiter, float(np.linalg.norm(b - K @ x) / normb))


def solve_system(system: LinearSystem, tol: float = 1e-10, maxiter=None):
    x, info = pcg(system.K_red, system.b_red, tol=tol, maxiter=maxiter)
    return system.lift(x), info


def solve_mixed_bvp(mesh: SurfaceMesh, A: AnisotropyField | None, spec: MixedBVPSpec,
                    tol: float = 1e-10, return_info: bool = False):
    """Discrete minimizer of the mixed-problem energy on ``mesh``."""
    system = assemble(mesh, A, spec)
    T, info = solve_system(system, tol=tol)
    return (T, info) if return_info else T


def energy(mesh: SurfaceMesh, A: AnisotropyField | None, spec: MixedBVPSpec, T,
           system: LinearSystem | None = None) -> float:
    """``Phi(T)`` for the bilinear interpolant of nodal values ``T``."""
    system = system or assemble(mesh, A, spec)
    T = np.asarray(T, dtype=float)
    return float(0.5 * T @ (system.K @ T) + system.load @ T)


def gradient_form(mesh: SurfaceMesh, A: AnisotropyField | None, u) -> float:
    """``int <A grad_C u, grad_C u>`` by Gauss quadrature, without a matrix."""
    quad = cell_quadrature(mesh)
    u = np.asarray(u, dtype=float)
    du = np.einsum("gia,ci->cga", quad.dN, u[quad.conn])          # chart partials
    grad = np.einsum("cga,cgak->cgk", du, quad.g_con)               # ambient surface gradient
    if A is None:
        dens = np.einsum("cgk,cgk->cg", grad, grad)
    else:
        dens = np.einsum("cgk,cgkl,cgl->cg", grad, A.at_quadrature(mesh, quad), grad)
    return float(np.sum(dens * quad.jw))


def midpoint_convexity_gap(mesh: SurfaceMesh, A: AnisotropyField | None, spec: MixedBVPSpec,
                           T1, T2, system: LinearSystem | None = None) -> tuple[float, float]:
    """``(gap, Q(T1 - T2) / 4)`` with ``gap = Phi(T1)/2 + Phi(T2)/2 - Phi((T1 + T2)/2)``.

    ``Q(u) = 1/2 int <A grad u, grad u>`` is the quadratic part of ``Phi``,
    evaluated by :func:`gradient_form` rather than through ``K``.
    """
    system = system or assemble(mesh, A, spec)
    T1 = np.asarray(T1, dtype=float)
    T2 = np.asarray(T2, dtype=float)
    gap = (0.5 * energy(mesh, A, spec, T1, system) + 0.5 * energy(mesh, A, spec, T2, system)
           - energy(mesh, A, spec, 0.5 * (T1 + T2), system))
    return float(gap), 0.25 * 0.5 * gradient_form(mesh, A, T1 - T2)


def min_rayleigh_quotient(mesh: SurfaceMesh, A: AnisotropyField | None = None,
                          dirichlet_edges=EDGES) -> float:
    """Smallest ``x^T K x / x^T M_L x`` over nodal vectors vanishing on the Dirichlet edges."""
    from scipy.linalg import eigh
    from scipy.sparse.linalg import eigsh

    K = stiffness_matrix(mesh, A)
    ML = lumped_mass(mesh)
    free = np.setdiff1d(np.arange(mesh.n_nodes), dirichlet_nodes(mesh, dirichlet_edges))
    Kf = K[free][:, free]
    Mf = ML[free]
    if free.size <= 1500:
        return float(eigh(Kf.toarray(), np.diag(Mf), eigvals_only=True, subset_by_index=[0, 0])[0])
    vals = eigsh(Kf.tocsc(), k=1, M=sp.diags(Mf).tocsc(), sigma=0.0, which="LM",
                 return_eigenvectors=False)
    return float(vals[0])


# ---------------------------------------------------------------------------
# export

def write_solution_csv(mesh: SurfaceMesh, T, path) -> None:
    """Columns: node, u1, u2, x, y, z, value."""
    U1, U2 = mesh.grid_coords()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "u1", "u2", "x", "y", "z", "value"])
        for i in range(mesh.n_nodes):
            x = mesh.points[i]
            w.writerow([i] + [format(float(v), ".17g") for v in (U1[i], U2[i], x[0], x[1], x[2], T[i])])


def write_matrix_market(K, path) -> None:
    from scipy.io import mmwrite
    mmwrite(str(path), sp.coo_matrix(K), symmetry="symmetric")
