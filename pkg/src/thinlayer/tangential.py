"""Günter and Stokes derivatives and the operators built from them.

All vector quantities are in global Cartesian components.  The Günter
derivative of a nodal field is computed from chart-space differences,
``D_j f = sum_a (d_a f) (g^a)_j``, so tangency ``sum_j nu_j D_j f = 0`` holds
to roundoff at every node.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NonTangentInput
from .geometry import SurfaceMesh, chart_partials

TANG_TOL = 1e-8


def _check_j(j):
    if j not in (1, 2, 3):
        raise ValueError(f"Cartesian index must be 1, 2 or 3, got {j}")


def surface_gradient(mesh: SurfaceMesh, f) -> np.ndarray:
    """``(N, 3)`` array whose column ``j-1`` is ``D_j f``."""
    f = np.asarray(f, dtype=float)
    d1, d2 = chart_partials(f, mesh.shape, mesh.spacing)
    if f.ndim == 1:
        return d1[:, None] * mesh.g_con[:, 0] + d2[:, None] * mesh.g_con[:, 1]
    # trailing component axes: (N, ...) -> (N, 3, ...)
    g1 = mesh.g_con[:, 0].reshape(mesh.g_con.shape[0], 3, *([1] * (f.ndim - 1)))
    g2 = mesh.g_con[:, 1].reshape(g1.shape)
    return d1[:, None] * g1 + d2[:, None] * g2


def gunter_derivative(mesh: SurfaceMesh, f, j: int) -> np.ndarray:
    _check_j(j)
    return surface_gradient(mesh, f)[:, j - 1]


def stokes_derivative(mesh: SurfaceMesh, f, j: int, k: int) -> np.ndarray:
    """``M_jk f = nu_j D_k f - nu_k D_j f``."""
    _check_j(j)
    _check_j(k)
    if j == k:
        return np.zeros(np.shape(f)[0])
    grad = surface_gradient(mesh, f)
    nu = mesh.normal
    return nu[:, j - 1] * grad[:, k - 1] - nu[:, k - 1] * grad[:, j - 1]


def stokes_all(mesh: SurfaceMesh, f) -> np.ndarray:
    """``(N, 3, 3)`` array of all Stokes derivatives ``M_jk f``."""
    grad = surface_gradient(mesh, f)
    nu = mesh.normal
    return nu[:, :, None] * grad[:, None, :] - grad[:, :, None] * nu[:, None, :]


def tangency_defect(mesh: SurfaceMesh, V) -> float:
    V = np.asarray(V, dtype=float)
    scale = np.abs(V).max()
    if scale == 0.0:
        return 0.0
    return float(np.abs(np.einsum("nj,nj->n", V, mesh.normal)).max() / scale)


def surface_divergence(mesh: SurfaceMesh, V, tang_tol: float = TANG_TOL) -> np.ndarray:
    """``Div V = sum_j D_j V_j`` for a tangent field ``V`` of shape ``(N, 3)``.

    Non-tangent input is rejected rather than projected.
    """
    V = np.asarray(V, dtype=float)
    defect = tangency_defect(mesh, V)
    if defect > tang_tol:
        raise NonTangentInput(defect, tang_tol)
    grad = surface_gradient(mesh, V)          # (N, 3 [derivative], 3 [component])
    return np.einsum("njj->n", grad)


def laplace_beltrami(mesh: SurfaceMesh, f) -> np.ndarray:
    """``sum_j D_j D_j f``; reliable away from the first two boundary rows."""
    return surface_divergence(mesh, surface_gradient(mesh, f), tang_tol=np.inf)


def laplace_beltrami_stokes(mesh: SurfaceMesh, f) -> np.ndarray:
    """The same operator written as ``1/2 sum_jk M_jk M_jk f``."""
    M = stokes_all(mesh, f)                    # (N, j, k)
    out = np.zeros(mesh.n_nodes)
    nu = mesh.normal
    for j in range(3):
        for k in range(3):
            if j == k:
                continue
            g = surface_gradient(mesh, M[:, j, k])
            out += nu[:, j] * g[:, k] - nu[:, k] * g[:, j]
    return 0.5 * out


def gunter_adjoint(mesh: SurfaceMesh, f, j: int) -> np.ndarray:
    """Surface adjoint of ``D_j`` on a closed surface.

    Writing ``D_j = sum_k (delta_jk - nu_j nu_k) d_k`` and taking the formal
    adjoint with a normal field constant along fibres gives
    ``D_j^* f = -D_j f + nu_j H0 f`` with ``H0 = sum_k D_k nu_k``.  The
    curvature term is invariant under flipping the orientation.
    """
    f = np.asarray(f, dtype=float)
    return -gunter_derivative(mesh, f, j) + mesh.normal[:, j - 1] * mesh.H0 * f


def inner(mesh: SurfaceMesh, a, b=None) -> float:
    """Surface inner product by area-weighted trapezoid node sums."""
    a = np.asarray(a, dtype=float)
    b = a if b is None else np.asarray(b, dtype=float)
    prod = a * b
    if prod.ndim > 1:
        prod = prod.reshape(prod.shape[0], -1).sum(axis=1)
    return float(np.sum(mesh.weights * prod))


def boundary_inner(mesh: SurfaceMesh, a, b, edges=None) -> float:
    """Boundary pairing by trapezoid sums along the chosen edges (diagnostics only)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    edges = edges or ("u1_min", "u1_max", "u2_min", "u2_max")
    total = 0.0
    for edge in edges:
        nodes = mesh.boundary[edge]
        axis = 1 if edge.startswith("u1") else 0
        step = mesh.spacing[axis]
        speed = np.linalg.norm(mesh.g_cov[nodes, axis], axis=1)
        w = np.full(nodes.size, step)
        w[[0, -1]] *= 0.5
        total += float(np.sum(w * speed * a[nodes] * b[nodes]))
    return total


def is_closed(mesh: SurfaceMesh, tol: float = 1e-12) -> bool:
    """True when both pairs of opposite chart edges coincide in space."""
    p = mesh.points
    b = mesh.boundary
    return (np.abs(p[b["u1_min"]] - p[b["u1_max"]]).max() < tol
            and np.abs(p[b["u2_min"]] - p[b["u2_max"]]).max() < tol)


def deep_interior(mesh: SurfaceMesh, depth: int = 2) -> np.ndarray:
    n1, n2 = mesh.shape
    mask = np.zeros((n1, n2), dtype=bool)
    mask[depth:n1 - depth, depth:n2 - depth] = True
    return mask.ravel()


# ---------------------------------------------------------------------------
# identity verification

class PolynomialField:
    """Random polynomial in the ambient coordinates with analytic gradient."""

    def __init__(self, rng: np.random.Generator, degree: int = 3):
        exps = [(a, b, c) for a in range(degree + 1) for b in range(degree + 1)
                for c in range(degree + 1) if 0 < a + b + c <= degree]
        self.exps = np.array(exps, dtype=int)
        self.coefs = rng.uniform(-1.0, 1.0, len(exps))
        self.const = rng.uniform(-1.0, 1.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        mono = np.prod(x[:, None, :] ** self.exps[None], axis=2)
        return self.const + mono @ self.coefs

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for d in range(3):
            e = self.exps.copy()
            factor = e[:, d].astype(float)
            e[:, d] = np.maximum(e[:, d] - 1, 0)
            mono = np.prod(x[:, None, :] ** e[None], axis=2)
            out[:, d] = mono @ (self.coefs * factor)
        return out


@dataclass
class IdentityResult:
    identity_name: str
    max_residual: float
    nodes_checked: int
    tol: float
    exact: bool = False

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_residual) and self.max_residual <= self.tol)

    def to_dict(self) -> dict:
        return {"identity_name": self.identity_name,
                "max_residual": float(self.max_residual),
                "nodes_checked": int(self.nodes_checked),
                "pass": self.passed}


@dataclass
class IdentityReport:
    chart: str
    grid: tuple
    results: list = field(default_factory=list)

    csv_columns = ("identity_name", "max_residual", "nodes_checked", "pass")

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name) -> IdentityResult:
        for r in self.results:
            if r.identity_name == name:
                return r
        raise KeyError(name)

    def names(self):
        return [r.identity_name for r in self.results]

    def to_records(self) -> list:
        return [r.to_dict() for r in self.results]

    def to_dict(self) -> dict:
        return {"chart": self.chart, "grid": list(self.grid),
                "records": self.to_records(), "pass": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=2)


def verify_identities(mesh: SurfaceMesh, tol: float = 1e-2, seed: int = 42,
                      n_fields: int = 5, degree: int = 3,
                      exact_tol: float = 1e-12) -> IdentityReport:
    """Check the operator identities on seeded polynomial test fields.

    Identities that hold structurally in the discretization are checked at
    ``exact_tol``; the ones carrying discretization error at ``tol``.  The
    torus-type (closed) identities are added only when the chart closes up.

    Residuals are relative: pointwise ones are divided by the largest
    magnitude of the compared quantity (at least 1 for the exact group),
    integral ones by the Cauchy-Schwarz bound ``||a|| ||b||`` of the pairing.
    """
    rng = np.random.default_rng(seed)
    fields = [PolynomialField(rng, degree) for _ in range(2 * n_fields)]
    x = mesh.points
    nu = mesh.normal
    N = mesh.n_nodes
    inner_nodes = deep_interior(mesh)
    closed = is_closed(mesh)

    res = dict.fromkeys(["tangency", "generator_dependence", "gradient_of_constant",
                         "gunter_from_stokes", "stokes_from_gunter",
                         "laplacian_d_vs_m"], 0.0)
    res_closed = dict.fromkeys(["stokes_skew_symmetry", "gunter_adjoint"], 0.0)

    d_gen = np.eye(3)[None] - nu[:, :, None] * nu[:, None, :]   # rows are d^j
    res["generator_dependence"] = float(np.abs(np.einsum("nj,njk->nk", nu, d_gen)).max())
    res["gradient_of_constant"] = float(np.abs(surface_gradient(mesh, np.full(N, 3.7))).max())

    for p, q in zip(fields[:n_fields], fields[n_fields:]):
        f = p(x)
        grad_amb = p.grad(x)
        D = surface_gradient(mesh, f)
        res["tangency"] = max(res["tangency"], float(np.abs(np.einsum("nj,nj->n", nu, D)).max())
                              / max(1.0, float(np.abs(D).max())))
        gscale = float(np.abs(grad_amb).max())

        # Stokes derivatives from the ambient extension: M_jk = nu_j d_k - nu_k d_j
        M_amb = nu[:, :, None] * grad_amb[:, None, :] - grad_amb[:, :, None] * nu[:, None, :]
        D_from_M = np.einsum("nk,nkj->nj", nu, M_amb)
        res["gunter_from_stokes"] = max(res["gunter_from_stokes"],
                                        float(np.abs(D - D_from_M).max()) / gscale)
        M_from_D = nu[:, :, None] * D[:, None, :] - D[:, :, None] * nu[:, None, :]
        res["stokes_from_gunter"] = max(res["stokes_from_gunter"],
                                        float(np.abs(M_from_D - M_amb).max()) / gscale)

        lap_d = laplace_beltrami(mesh, f)
        lap_m = laplace_beltrami_stokes(mesh, f)
        res["laplacian_d_vs_m"] = max(res["laplacian_d_vs_m"],
                                      float(np.abs(lap_d - lap_m)[inner_nodes].max())
                                      / float(np.abs(lap_d[inner_nodes]).max()))

        if closed:
            g = q(x)
            Mf, Mg = stokes_all(mesh, f), stokes_all(mesh, g)
            for j in range(3):
                for k in range(3):
                    r = abs(inner(mesh, Mf[:, j, k], g) + inner(mesh, f, Mg[:, j, k]))
                    r /= np.sqrt(inner(mesh, Mf[:, j, k], Mf[:, j, k]) * inner(mesh, g, g)) or 1.0
                    res_closed["stokes_skew_symmetry"] = max(res_closed["stokes_skew_symmetry"], r)
            for j in (1, 2, 3):
                r = abs(inner(mesh, D[:, j - 1], g) - inner(mesh, f, gunter_adjoint(mesh, g, j)))
                r /= np.sqrt(inner(mesh, D[:, j - 1], D[:, j - 1]) * inner(mesh, g, g)) or 1.0
                res_closed["gunter_adjoint"] = max(res_closed["gunter_adjoint"], r)

    W = mesh.weingarten
    weingarten_sym = float(np.abs(W - np.swapaxes(W, 1, 2)).max())
    weingarten_nu = float(np.abs(np.einsum("njk,nk->nj", W, nu)).max())

    report = IdentityReport(mesh.chart.name, tuple(mesh.chart.grid))
    for name in ("tangency", "generator_dependence", "gradient_of_constant"):
        report.results.append(IdentityResult(name, res[name], N, exact_tol, exact=True))
    for name in ("gunter_from_stokes", "stokes_from_gunter"):
        report.results.append(IdentityResult(name, res[name], N, tol))
    report.results.append(IdentityResult("laplacian_d_vs_m", res["laplacian_d_vs_m"],
                                         int(inner_nodes.sum()), tol))
    report.results.append(IdentityResult("weingarten_symmetry", weingarten_sym, N, tol))
    report.results.append(IdentityResult("weingarten_normal", weingarten_nu, N, tol))
    if closed:
        for name, val in res_closed.items():
            report.results.append(IdentityResult(name, val, N, tol))
    return report


def fit_order(h, err) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def refinement_study(chart, grids, floor: float = 1e-13, **kwargs) -> dict:
    """Run :func:`verify_identities` over several grids.

    Returns ``{name: (residuals, order)}``; the order is ``None`` when every
    residual sits at roundoff (below ``floor``).
    """
    from .geometry import build_surface_mesh

    reports = [verify_identities(build_surface_mesh(chart.refined(g)), **kwargs) for g in grids]
    hs = [max(chart.refined(g).spacing) for g in grids]
    out = {}
    for name in reports[0].names():
        vals = [rep[name].max_residual for rep in reports]
        order = fit_order(hs, vals) if min(vals) > floor else None
        out[name] = (vals, order)
    return out
