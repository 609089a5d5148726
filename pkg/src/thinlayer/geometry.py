"""Parametrized surface patches and the pointwise geometry cached on their grids.

A :class:`Chart` is a map from an axis-aligned rectangle of parameter space
into R^3 together with its analytic partial derivatives.  Building a
:class:`SurfaceMesh` evaluates everything the tangential calculus needs at the
grid nodes: covariant and contravariant bases, the unit normal, the Gram
matrix, area weights and the Weingarten matrix ``W[j, k] = D_j nu_k``.

Nodes are stored flat in C order, ``node = i * (n2 + 1) + j`` for the node at
``(u1[i], u2[j])``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import least_squares

from .errors import LayerTooThick, RankDeficientChart

EDGES = ("u1_min", "u1_max", "u2_min", "u2_max")
EPS_SAFETY = 0.9

Vec3Map = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Chart:
    """Parametrization ``theta(u1, u2) -> R^3`` on ``[a1, b1] x [a2, b2]``.

    ``map``, ``d1`` and ``d2`` take broadcastable arrays ``u1, u2`` and return
    arrays with a trailing axis of length 3.  The orientation is fixed as
    ``d1 x d2`` normalized.
    """

    name: str
    map: Vec3Map
    d1: Vec3Map
    d2: Vec3Map
    domain: tuple[tuple[float, float], tuple[float, float]]
    grid: tuple[int, int]
    params: dict = field(default_factory=dict)
    rank_tol: float = 1e-8

    def __post_init__(self):
        (a1, b1), (a2, b2) = self.domain
        if not (b1 > a1 and b2 > a2):
            raise ValueError(f"chart domain must have positive extent, got {self.domain}")
        n1, n2 = self.grid
        if n1 < 4 or n2 < 4:
            raise ValueError(f"grid must have at least 4 intervals per direction, got {self.grid}")

    @property
    def spacing(self) -> tuple[float, float]:
        (a1, b1), (a2, b2) = self.domain
        return (b1 - a1) / self.grid[0], (b2 - a2) / self.grid[1]

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        (a1, b1), (a2, b2) = self.domain
        return (np.linspace(a1, b1, self.grid[0] + 1),
                np.linspace(a2, b2, self.grid[1] + 1))

    def refined(self, grid: tuple[int, int]) -> "Chart":
        return Chart(self.name, self.map, self.d1, self.d2, self.domain,
                     tuple(grid), dict(self.params), self.rank_tol)


# ---------------------------------------------------------------------------
# chart catalog

def _stack(*comps):
    comps = np.broadcast_arrays(*comps)
    return np.stack(comps, axis=-1)


def plane_chart(grid=(8, 8), a1=0.0, b1=1.0, a2=0.0, b2=1.0) -> Chart:
    zero = lambda u1, u2: np.zeros(np.broadcast(u1, u2).shape)
    one = lambda u1, u2: np.ones(np.broadcast(u1, u2).shape)
    return Chart(
        "plane",
        map=lambda u1, u2: _stack(u1 + 0.0 * u2, u2 + 0.0 * u1, zero(u1, u2)),
        d1=lambda u1, u2: _stack(one(u1, u2), zero(u1, u2), zero(u1, u2)),
        d2=lambda u1, u2: _stack(zero(u1, u2), one(u1, u2), zero(u1, u2)),
        domain=((a1, b1), (a2, b2)),
        grid=tuple(grid),
        params=dict(a1=a1, b1=b1, a2=a2, b2=b2),
    )


def sphere_cap_chart(grid=(16, 16), R=1.0, theta=(np.pi / 12, np.pi / 3),
                     phi=(0.0, np.pi / 2)) -> Chart:
    """Spherical coordinates ``(polar angle, azimuth)``; outward normal."""
    def m(t, p):
        return R * _stack(np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t) + 0.0 * p)

    def d1(t, p):
        return R * _stack(np.cos(t) * np.cos(p), np.cos(t) * np.sin(p), -np.sin(t) + 0.0 * p)

    def d2(t, p):
        return R * _stack(-np.sin(t) * np.sin(p), np.sin(t) * np.cos(p), 0.0 * (t + p))

    return Chart("sphere_cap", m, d1, d2, (tuple(theta), tuple(phi)), tuple(grid),
                 dict(kind="spherical", R=R, theta=list(theta), phi=list(phi)))


def gnomonic_cap_chart(grid=(16, 16), R=1.0, half_width=0.5) -> Chart:
    """Central projection of ``[-a, a]^2 x {1}`` onto the sphere; contains the pole."""
    def m(u1, u2):
        rho = np.sqrt(1.0 + u1 ** 2 + u2 ** 2)
        return R * _stack(u1 / rho, u2 / rho, 1.0 / rho)

    def d1(u1, u2):
        rho = np.sqrt(1.0 + u1 ** 2 + u2 ** 2)
        r3 = rho ** 3
        return R * _stack(1.0 / rho - u1 * u1 / r3, -u2 * u1 / r3, -u1 / r3)

    def d2(u1, u2):
        rho = np.sqrt(1.0 + u1 ** 2 + u2 ** 2)
        r3 = rho ** 3
        return R * _stack(-u1 * u2 / r3, 1.0 / rho - u2 * u2 / r3, -u2 / r3)

    a = float(half_width)
    return Chart("sphere_cap", m, d1, d2, ((-a, a), (-a, a)), tuple(grid),
                 dict(kind="gnomonic", R=R, half_width=a))


def cylinder_chart(grid=(16, 16), R=2.0, phi=(0.0, np.pi / 2), z=(0.0, 1.0)) -> Chart:
    """Coordinates ``(azimuth, height)``; outward normal."""
    def m(p, h):
        return _stack(R * np.cos(p) + 0.0 * h, R * np.sin(p) + 0.0 * h, h + 0.0 * p)

    def d1(p, h):
        return _stack(-R * np.sin(p) + 0.0 * h, R * np.cos(p) + 0.0 * h, 0.0 * (p + h))

    def d2(p, h):
        zero = 0.0 * (p + h)
        return _stack(zero, zero, zero + 1.0)

    return Chart("cylinder", m, d1, d2, (tuple(phi), tuple(z)), tuple(grid),
                 dict(R=R, phi=list(phi), z=list(z)))


def torus_chart(grid=(16, 16), R=2.0, r=0.5, psi=(0.0, 2 * np.pi),
                phi=(0.0, 2 * np.pi)) -> Chart:
    """Coordinates ``(angle about the axis, angle about the tube)``; outward normal.

    With the default full angle ranges the patch is the closed torus, its
    opposite edges coinciding.
    """
    def m(s, p):
        rho = R + r * np.cos(p)
        return _stack(rho * np.cos(s), rho * np.sin(s), r * np.sin(p) + 0.0 * s)

    def d1(s, p):
        rho = R + r * np.cos(p)
        return _stack(-rho * np.sin(s), rho * np.cos(s), 0.0 * (s + p))

    def d2(s, p):
        return _stack(-r * np.sin(p) * np.cos(s), -r * np.sin(p) * np.sin(s),
                      r * np.cos(p) + 0.0 * s)

    return Chart("torus", m, d1, d2, (tuple(psi), tuple(phi)), tuple(grid),
                 dict(R=R, r=r, psi=list(psi), phi=list(phi)))


CATALOG = {
    "plane": plane_chart,
    "sphere_cap": sphere_cap_chart,
    "cylinder": cylinder_chart,
    "torus": torus_chart,
}


def make_chart(name: str, params: dict | None = None, grid=(16, 16)) -> Chart:
    """Look up a catalog chart by name.

    ``sphere_cap`` accepts ``kind="gnomonic"`` to select the pole-centred
    projection chart instead of spherical coordinates.
    """
    params = dict(params or {})
    if name not in CATALOG:
        raise KeyError(f"unknown chart {name!r}; expected one of {sorted(CATALOG)}")
    if name == "sphere_cap":
        kind = params.pop("kind", "spherical")
        if kind == "gnomonic":
            return gnomonic_cap_chart(grid=grid, **params)
        if kind != "spherical":
            raise KeyError(f"unknown sphere_cap kind {kind!r}")
    return CATALOG[name](grid=grid, **params)


# ---------------------------------------------------------------------------
# mesh

def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _diff(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - a[:-2]) / (2.0 * h)
    # one-sided second-order stencils written on differences so constants map to 0 exactly
    out[0] = (4.0 * (a[1] - a[0]) - (a[2] - a[0])) / (2.0 * h)
    out[-1] = ((a[-3] - a[-1]) - 4.0 * (a[-2] - a[-1])) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def chart_partials(values: np.ndarray, shape: tuple[int, int], spacing) -> tuple[np.ndarray, np.ndarray]:
    """Second-order chart-space partials of nodal values.

    Central differences inside, second-order one-sided stencils on the
    boundary rows.  ``values`` has the node axis first and may carry
    trailing component axes.
    """
    grid_vals = np.asarray(values, dtype=float).reshape(shape + values.shape[1:])
    d1 = _diff(grid_vals, spacing[0], 0)
    d2 = _diff(grid_vals, spacing[1], 1)
    return d1.reshape(values.shape), d2.reshape(values.shape)


def contravariant_from(g_cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrix and contravariant basis for stacked covariant bases ``(..., 2, 3)``."""
    gram = np.einsum("...ak,...bk->...ab", g_cov, g_cov)
    g_con = np.einsum("...ab,...bk->...ak", np.linalg.inv(gram), g_cov)
    return gram, g_con


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    chart: Chart
    u1: np.ndarray
    u2: np.ndarray
    points: np.ndarray        # (N, 3)
    g_cov: np.ndarray         # (N, 2, 3)
    normal: np.ndarray        # (N, 3)
    gram: np.ndarray          # (N, 2, 2)
    g_con: np.ndarray         # (N, 2, 3)
    area_density: np.ndarray  # (N,)
    weights: np.ndarray       # (N,) trapezoid quadrature weights on the surface
    weingarten: np.ndarray    # (N, 3, 3)
    H0: np.ndarray
    H: np.ndarray
    gauss: np.ndarray
    boundary: dict

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u1.size, self.u2.size)

    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    @property
    def spacing(self) -> tuple[float, float]:
        return self.chart.spacing

    @property
    def h(self) -> float:
        return max(self.spacing)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(np.concatenate([self.boundary[e] for e in EDGES]))

    @property
    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return mask

    @property
    def eps_max(self) -> float:
        """Largest admissible layer half-thickness (safety factor 0.9)."""
        lam = np.abs(np.linalg.eigvals(self.weingarten)).max()
        return np.inf if lam == 0.0 else EPS_SAFETY / lam

    def grid_coords(self) -> tuple[np.ndarray, np.ndarray]:
        U1, U2 = np.meshgrid(self.u1, self.u2, indexing="ij")
        return U1.ravel(), U2.ravel()

    def partials(self, values):
        return chart_partials(np.asarray(values, dtype=float), self.shape, self.spacing)


def _edge_nodes(n1: int, n2: int) -> dict:
    idx = np.arange((n1 + 1) * (n2 + 1)).reshape(n1 + 1, n2 + 1)
    return {
        "u1_min": _frozen(idx[0, :].copy()),
        "u1_max": _frozen(idx[-1, :].copy()),
        "u2_min": _frozen(idx[:, 0].copy()),
        "u2_max": _frozen(idx[:, -1].copy()),
    }


def _check_rank(g_cov: np.ndarray, rank_tol: float):
    sigma = np.linalg.svd(np.swapaxes(g_cov, -1, -2), compute_uv=False)[..., -1]
    bad = np.flatnonzero(~(sigma > rank_tol))
    if bad.size:
        raise RankDeficientChart(int(bad[0]), float(sigma[bad[0]]))


def build_surface_mesh(chart: Chart) -> SurfaceMesh:
    """Evaluate and cache the geometry of ``chart`` at every grid node."""
    u1, u2 = chart.axes()
    U1, U2 = np.meshgrid(u1, u2, indexing="ij")
    U1, U2 = U1.ravel(), U2.ravel()
    n = U1.size
    points = np.broadcast_to(chart.map(U1, U2), (n, 3)).astype(float)
    g_cov = np.stack([np.broadcast_to(chart.d1(U1, U2), (n, 3)),
                      np.broadcast_to(chart.d2(U1, U2), (n, 3))], axis=1).astype(float)
    _check_rank(g_cov, chart.rank_tol)

    cross = np.cross(g_cov[:, 0], g_cov[:, 1])
    normal = cross / np.linalg.norm(cross, axis=1, keepdims=True)
    gram, g_con = contravariant_from(g_cov)
    area_density = np.sqrt(np.linalg.det(gram))

    h1, h2 = chart.spacing
    trap1 = np.ones(u1.size)
    trap1[[0, -1]] = 0.5
    trap2 = np.ones(u2.size)
    trap2[[0, -1]] = 0.5
    weights = area_density * np.outer(trap1, trap2).ravel() * h1 * h2

    dn1, dn2 = chart_partials(normal, (u1.size, u2.size), (h1, h2))
    W = (np.einsum("nj,nk->njk", g_con[:, 0], dn1)
         + np.einsum("nj,nk->njk", g_con[:, 1], dn2))
    H0, H, gauss = curvatures(W)

    return SurfaceMesh(
        chart=chart,
        u1=_frozen(u1), u2=_frozen(u2),
        points=_frozen(points), g_cov=_frozen(g_cov), normal=_frozen(normal),
        gram=_frozen(gram), g_con=_frozen(g_con),
        area_density=_frozen(area_density), weights=_frozen(weights),
        weingarten=_frozen(W), H0=_frozen(H0), H=_frozen(H), gauss=_frozen(gauss),
        boundary=_edge_nodes(*chart.grid),
    )


# ---------------------------------------------------------------------------
# pointwise queries

def normal(chart: Chart, u) -> np.ndarray:
    """Unit normal ``d1 x d2 / |d1 x d2|`` at chart coordinates ``u``."""
    u = np.asarray(u, dtype=float)
    g = np.stack([np.asarray(chart.d1(u[0], u[1]), float),
                  np.asarray(chart.d2(u[0], u[1]), float)])
    _check_rank(g[None], chart.rank_tol)
    c = np.cross(g[0], g[1])
    return c / np.linalg.norm(c)


def locate(mesh: SurfaceMesh, x) -> np.ndarray:
    """Chart coordinates of the surface point nearest to ``x``."""
    x = np.asarray(x, dtype=float)
    node = int(np.argmin(np.linalg.norm(mesh.points - x, axis=1)))
    U1, U2 = mesh.grid_coords()
    u0 = np.array([U1[node], U2[node]])
    ch = mesh.chart
    (a1, b1), (a2, b2) = ch.domain

    def resid(u):
        return np.asarray(ch.map(u[0], u[1]), float) - x

    def jac(u):
        return np.stack([np.asarray(ch.d1(u[0], u[1]), float),
                         np.asarray(ch.d2(u[0], u[1]), float)], axis=1)

    sol = least_squares(resid, u0, jac=jac, bounds=([a1, a2], [b1, b2]),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return sol.x


def proper_extension(mesh: SurfaceMesh, x_base, t: float) -> np.ndarray:
    """Normal field at ``x_base + t * nu(x_base)``.

    The extension is constant along normal fibres, so the result is the
    normal at the base point.  ``x_base`` is either chart coordinates
    (length 2) or a point on the surface (length 3).
    """
    eps_max = mesh.eps_max
    if not abs(t) < eps_max:
        raise LayerTooThick(t, eps_max)
    x_base = np.asarray(x_base, dtype=float)
    u = locate(mesh, x_base) if x_base.size == 3 else x_base
    return normal(mesh.chart, u)


def weingarten(mesh: SurfaceMesh, node: int) -> np.ndarray:
    return mesh.weingarten[node]


def curvatures(W: np.ndarray):
    """Return ``(H0, H, G)`` for one Weingarten matrix or a stack of them.

    ``H0`` is the trace, ``H = H0 / 2`` and the Gauss curvature is the
    product of the two eigenvalues largest in magnitude.
    """
    W = np.asarray(W, dtype=float)
    H0 = np.trace(W, axis1=-2, axis2=-1)
    lam = np.linalg.eigvals(W).real
    order = np.argsort(np.abs(lam), axis=-1)
    top = np.take_along_axis(lam, order[..., 1:], axis=-1)
    gauss = top[..., 0] * top[..., 1]
    return H0, H0 / 2.0, gauss


# ---------------------------------------------------------------------------
# verification

def geometry_invariants(mesh: SurfaceMesh) -> dict:
    """Largest defects of the pointwise frame identities over all nodes."""
    tang = np.abs(np.einsum("nak,nk->na", mesh.g_cov, mesh.normal)).max()
    unit = np.abs(np.linalg.norm(mesh.normal, axis=1) - 1.0).max()
    dual = np.einsum("nak,nbk->nab", mesh.g_cov, mesh.g_con) - np.eye(2)
    return {"normal_tangency": float(tang), "normal_unit": float(unit),
            "biorthogonality": float(np.abs(dual).max())}


INVARIANT_TOLS = {"normal_tangency": 1e-12, "normal_unit": 1e-12, "biorthogonality": 1e-10}


@dataclass
class GeometryReport:
    chart: str
    records: list
    orders: dict
    passed: bool

    csv_columns = ("grid", "h", "H0_err", "H_err", "G_err",
                   "normal_tangency", "normal_unit", "biorthogonality")

    def to_records(self) -> list:
        return self.records

    def to_dict(self) -> dict:
        return {"chart": self.chart, "records": self.records, "orders": self.orders,
                "pass": self.passed}


def geometry_study(chart: Chart, grids, expected: dict | None = None, rel_tol: float = 1e-3,
                   order_range=(1.8, 2.2), floor: float = 1e-13) -> GeometryReport:
    """Curvature errors against constant analytic values over a grid sequence.

    Errors are relative where the analytic value is non-zero and absolute
    otherwise.  Orders are fitted in ``h`` and skipped for error sequences
    already at roundoff.
    """
    records = []
    for grid in grids:
        mesh = build_surface_mesh(chart.refined(tuple(grid)))
        rec = {"grid": f"{grid[0]}x{grid[1]}", "h": mesh.h}
        if expected is not None:
            for key, vals in (("H0", mesh.H0), ("H", mesh.H), ("G", mesh.gauss)):
                ref = float(expected[key])
                err = np.abs(vals - ref).max()
                rec[f"{key}_err"] = float(err / abs(ref) if ref != 0.0 else err)
        rec.update(geometry_invariants(mesh))
        records.append(rec)

    ok = all(r[k] <= tol for r in records for k, tol in INVARIANT_TOLS.items())
    orders = {}
    if expected is not None:
        ok &= all(records[-1][f"{k}_err"] < rel_tol for k in ("H0", "H", "G"))
        if len(records) >= 2:
            h = np.log([r["h"] for r in records])
            for key in ("H0", "H", "G"):
                e = np.array([r[f"{key}_err"] for r in records])
                if e.min() <= floor:
                    orders[key] = None
                    continue
                p = float(np.polyfit(h, np.log(e), 1)[0])
                orders[key] = p
                ok &= order_range[0] <= p <= order_range[1]
    return GeometryReport(chart.name, records, orders, bool(ok))
