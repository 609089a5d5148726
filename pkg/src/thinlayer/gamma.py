"""Thickness sweeps: layer solutions against the Laplace-Beltrami limit problem.

For a decreasing list of half-thicknesses the layer problem is solved on one
stretched mesh, its mid-surface trace is compared with the solution of

    Delta_C T = f0 + q0  in C,   T = 0 on the boundary of C,

where ``f0 = f(., 0)`` and ``q0`` is the limit of the symmetric difference
quotient ``(q(., eps) - q(., -eps)) / (2 eps)``.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import NoConvergence, ThinLayerError
from .geometry import Chart, SurfaceMesh, build_surface_mesh
from .layer import (LayerMesh, LayerOperators, layer_operators, scaled_energy,
                    solve_layer_bvp, t_independence_ratio)
from .surface_solver import MixedBVPSpec, mass_matrix, solve_mixed_bvp, stiffness_matrix
from .tangential import PolynomialField, fit_order

# ---------------------------------------------------------------------------
# closed-form data families

PROFILES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "zero": lambda x: np.zeros(x.shape[:-1]),
    "one": lambda x: np.ones(x.shape[:-1]),
    "sin_sin": lambda x: np.sin(x[..., 0]) * np.sin(x[..., 1]),
    "x1": lambda x: x[..., 0].copy(),
    "x2": lambda x: x[..., 1].copy(),
    "x3": lambda x: x[..., 2].copy(),
    "x1x2": lambda x: x[..., 0] * x[..., 1],
}


@dataclass(frozen=True)
class SourceFamily:
    """``f(x, t) = amp * profile(x) * sum_k t_poly[k] t^k``."""

    profile: str = "zero"
    amp: float = 1.0
    t_poly: tuple = (1.0,)

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise KeyError(f"unknown profile {self.profile!r}")

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        poly = sum(c * t ** k for k, c in enumerate(self.t_poly))
        return self.amp * PROFILES[self.profile](x) * poly

    @property
    def is_zero(self) -> bool:
        return self.profile == "zero" or self.amp == 0.0


@dataclass(frozen=True)
class FluxFamily:
    """Face data ``q(x, s) = amp * profile(x) * (odd * sign(s) |s|^power + even)``
    for ``s = +-eps``."""

    profile: str = "zero"
    amp: float = 1.0
    odd: float = 1.0
    power: float = 1.0
    even: float = 0.0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise KeyError(f"unknown profile {self.profile!r}")

    def __call__(self, x, s):
        s = float(s)
        return (self.amp * PROFILES[self.profile](np.asarray(x, float))
                * (self.odd * math.copysign(abs(s) ** self.power, s) + self.even))

    @property
    def is_zero(self) -> bool:
        return self.profile == "zero" or self.amp == 0.0 or (self.odd == 0.0 and self.even == 0.0)


# ---------------------------------------------------------------------------
# q0

@dataclass
class Q0Result:
    q0: np.ndarray
    eps: list
    quotients: list          # per-eps (q(eps) - q(-eps)) / (2 eps)
    cauchy_defects: list     # sup-norm differences of successive quotients


def extrapolate_to_zero(eps, values):
    """Value at ``eps = 0`` of the polynomial through the three smallest ``eps``.

    Removes both the O(eps) and O(eps^2) terms of the quotient sequence.
    """
    eps = np.asarray(eps, dtype=float)
    order = np.argsort(eps)[:3]
    e = eps[order]
    vals = [values[i] for i in order]
    out = 0.0
    for i in range(3):
        w = 1.0
        for j in range(3):
            if j != i:
                w *= e[j] / (e[j] - e[i])
        out = out + w * vals[i]
    return out


def compute_q0(q_plus, q_minus, eps, atol: float = 1e-14) -> Q0Result:
    """Limit of the face-data difference quotient from per-eps samples.

    ``q_plus[k]`` and ``q_minus[k]`` are ``q(., eps[k])`` and ``q(., -eps[k])``.
    """
    if len(eps) < 3:
        raise ValueError("at least three eps values are required")
    eps = [float(e) for e in eps]
    quotients = [(np.asarray(qp, float) - np.asarray(qm, float)) / (2.0 * e)
                 for qp, qm, e in zip(q_plus, q_minus, eps)]
    order = np.argsort(eps)[::-1]                 # decreasing eps
    dq = [quotients[i] for i in order]
    defects = [float(np.abs(b - a).max()) for a, b in zip(dq[:-1], dq[1:])]
    if len(defects) >= 2 and defects[-1] > 1.05 * defects[0] + atol and \
            all(b >= a for a, b in zip(defects[:-1], defects[1:])):
        raise NoConvergence(defects)
    q0 = extrapolate_to_zero(eps, quotients)
    return Q0Result(np.asarray(q0, dtype=float), eps, quotients, defects)


def q0_weak_check(mesh: SurfaceMesh, result: Q0Result, n_tests: int = 10, seed: int = 42,
                  tol: float = 1e-8) -> dict:
    """Discrete weak form of the q0 definition against seeded polynomial test functions.

    For every test function the pairings ``<phi, quotient(eps)>`` must
    extrapolate to ``<phi, q0>`` and their distance to it must not grow as
    eps decreases.
    """
    rng = np.random.default_rng(seed)
    M = mass_matrix(mesh)
    worst = 0.0
    monotone = True
    for _ in range(n_tests):
        phi = PolynomialField(rng, 3)(mesh.points)
        target = float(phi @ (M @ result.q0))
        pairs = [float(phi @ (M @ d)) for d in result.quotients]
        extrap = float(extrapolate_to_zero(result.eps, pairs))
        worst = max(worst, abs(extrap - target) / max(1.0, abs(target)))
        order = np.argsort(result.eps)[::-1]
        dist = [abs(pairs[i] - target) for i in order]
        scale = max(1.0, abs(target))
        monotone &= all(b <= a * 1.05 + 1e-13 * scale for a, b in zip(dist[:-1], dist[1:]))
    return {"max_residual": worst, "monotone": bool(monotone),
            "pass": bool(worst <= tol and monotone)}


# ---------------------------------------------------------------------------
# limit problem

def solve_limit_bvp(mesh: SurfaceMesh, f0, q0, tol: float = 1e-10):
    """Dirichlet problem ``Delta_C T = f0 + q0``, ``T = 0`` on every edge."""
    rhs = np.asarray(f0, dtype=float) + np.asarray(q0, dtype=float)
    return solve_mixed_bvp(mesh, None, MixedBVPSpec(f=rhs), tol=tol)


def limit_energy(K, M, T, rhs) -> float:
    """``2 int_C [1/2 |D_C T|^2 + (f0 + q0) T]``."""
    T = np.asarray(T, dtype=float)
    return float(2.0 * (0.5 * T @ (K @ T) + np.asarray(rhs, float) @ (M @ T)))


def limit_energy_layer_form(ops: LayerOperators, T, rhs) -> float:
    """The same functional integrated over ``(-1, 1) x C`` with ``T`` constant in ``tau``."""
    T = np.asarray(T, dtype=float)
    one = np.ones(ops.M_tau.shape[0])
    Tl = np.outer(T, one)
    Rl = np.outer(np.asarray(rhs, float), one)
    quad_part = 0.5 * np.sum(Tl * (ops.K_c @ Tl @ ops.M_tau.T))
    lin_part = np.sum(Rl * (ops.M_c @ Tl @ ops.M_tau.T))
    return float(quad_part + lin_part)


# ---------------------------------------------------------------------------
# sweep

@dataclass
class SweepConfig:
    chart: Chart
    eps: list
    n_t: int = 8
    source: Callable = field(default_factory=SourceFamily)
    flux: Callable = field(default_factory=FluxFamily)
    exact_limit: Callable | None = None
    tol: float = 1e-2            # relative to ||T_limit||, on top of the floor
    jitter: float = 0.05
    jobs: int = 1
    cg_tol: float = 1e-10
    echo: dict = field(default_factory=dict)

    def validate(self, mesh: SurfaceMesh) -> None:
        eps = list(self.eps)
        if len(eps) < 3:
            raise ValueError("a sweep needs at least three eps values")
        if any(b >= a for a, b in zip(eps[:-1], eps[1:])):
            raise ValueError(f"eps list must be strictly decreasing, got {eps}")
        if eps[0] >= mesh.eps_max:
            raise ValueError(f"eps {eps[0]} is not below the curvature bound {mesh.eps_max:.6g}")
        for name, gen in (("source", self.source), ("flux", self.flux)):
            if not isinstance(gen, (SourceFamily, FluxFamily)):
                warnings.warn(f"{name} generator is not a catalog family; "
                              "its boundedness hypotheses are not checked", stacklevel=3)


CSV_COLUMNS = ("eps", "l2_err", "h1_err", "scaled_energy", "limit_energy", "t_indep_ratio", "pass")


@dataclass
class GammaReport:
    config: dict
    records: list
    fitted_order: float | None
    floor: float | None
    limit_norm: float
    passed: bool
    q0_cauchy_defects: list
    notes: list = field(default_factory=list)

    csv_columns = CSV_COLUMNS

    def column(self, name):
        return np.array([r[name] for r in self.records], dtype=float)

    def to_records(self) -> list:
        return self.records

    def to_dict(self) -> dict:
        return {"config": self.config, "records": self.records,
                "fitted_order": self.fitted_order, "floor": self.floor,
                "limit_norm": self.limit_norm, "pass": self.passed,
                "q0_cauchy_defects": self.q0_cauchy_defects, "notes": self.notes}


def _monotone(values, jitter, atol):
    """Per-entry flags: no increase beyond ``jitter`` over the last finite value."""
    flags, last = [], None
    for v in values:
        if not np.isfinite(v):
            flags.append(False)
            continue
        flags.append(last is None or v <= last * (1.0 + jitter) + atol)
        last = v
    return flags


def gamma_sweep(config: SweepConfig, mesh: SurfaceMesh | None = None) -> GammaReport:
    """Solve the layer problem for every eps and compare with the limit problem."""
    mesh = mesh or build_surface_mesh(config.chart)
    config.validate(mesh)
    eps_list = [float(e) for e in config.eps]
    x = mesh.points
    K = stiffness_matrix(mesh)
    M = mass_matrix(mesh)

    q_plus = [np.asarray(config.flux(x, e), float) for e in eps_list]
    q_minus = [np.asarray(config.flux(x, -e), float) for e in eps_list]
    q0_res = compute_q0(q_plus, q_minus, eps_list)
    f0 = np.asarray(config.source(x, 0.0), float)
    rhs = f0 + q0_res.q0
    T_lim = solve_limit_bvp(mesh, f0, q0_res.q0, tol=config.cg_tol)
    E0 = limit_energy(K, M, T_lim, rhs)
    lim_norm = float(np.sqrt(T_lim @ (M @ T_lim)))

    floor = None
    if config.exact_limit is not None:
        d = T_lim - np.asarray(config.exact_limit(x), float)
        floor = float(np.sqrt(d @ (M @ d)))

    base_layer = LayerMesh(mesh, eps_list[-1], config.n_t)
    ops = layer_operators(base_layer)

    def run(k):
        eps = eps_list[k]
        layer = base_layer.with_eps(eps)
        tau = layer.tau
        f = np.stack([np.asarray(config.source(x, eps * s), float) for s in tau], axis=1)
        rec = {"eps": eps}
        try:
            sol = solve_layer_bvp(layer, f, q_plus[k], q_minus[k], tol=config.cg_tol,
                                  ops=ops, return_info=True)
        except ThinLayerError as exc:
            nan = float("nan")
            rec.update(l2_err=nan, h1_err=nan, l2_err_avg=nan, layer_l2_err=nan, scaled_energy=nan,
                       limit_energy=E0, t_indep_ratio=nan, recovery_energy=nan,
                       cg_iterations=-1, error=str(exc))
            if floor is not None:
                rec["l2_err_exact"] = nan
            return rec
        T = sol.T
        e = T[:, layer.mid] - T_lim
        avg = 0.5 * (T @ (ops.M_tau @ np.ones(layer.n_t + 1)))
        ea = avg - T_lim
        # whole-layer distance to the tau-constant extension, normalized by |(-1, 1)| = 2
        el = T - T_lim[:, None]
        layer_err = np.sqrt(max(np.sum(el * (ops.M_c @ el @ ops.M_tau.T)), 0.0) / 2.0)
        rec.update(
            l2_err=float(np.sqrt(e @ (M @ e))),
            h1_err=float(np.sqrt(max(e @ (K @ e), 0.0))),
            l2_err_avg=float(np.sqrt(ea @ (M @ ea))),
            layer_l2_err=float(layer_err),
            scaled_energy=scaled_energy(layer, T, f, q_plus[k], q_minus[k], ops=ops),
            limit_energy=E0,
            t_indep_ratio=t_independence_ratio(layer, T, ops=ops),
            recovery_energy=scaled_energy(layer, np.outer(T_lim, np.ones(layer.n_t + 1)),
                                          f, q_plus[k], q_minus[k], ops=ops),
            cg_iterations=int(sol.iterations),
        )
        if floor is not None:
            ex = T[:, layer.mid] - np.asarray(config.exact_limit(x), float)
            rec["l2_err_exact"] = float(np.sqrt(ex @ (M @ ex)))
        return rec

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            records = list(pool.map(run, range(len(eps_list))))
    else:
        records = [run(k) for k in range(len(eps_list))]

    errs = [r["l2_err"] for r in records]
    atol = 1e-12 * max(lim_norm, 1e-300)
    mono = _monotone(errs, config.jitter, atol)
    for r, ok in zip(records, mono):
        r["energy_gap"] = abs(r["scaled_energy"] - r["limit_energy"])
        r["liminf_defect"] = max(0.0, r["limit_energy"] - r["scaled_energy"])
        r["pass"] = bool(ok and np.isfinite(r["l2_err"]))

    small = np.asarray(errs[-3:], float)
    order = None
    if np.all(np.isfinite(small)) and small.min() > 1e-10 * max(lim_norm, 1e-300):
        order = fit_order(eps_list[-3:], small)
    final_ok = np.isfinite(errs[-1]) and errs[-1] <= config.tol * lim_norm + (floor or 0.0)
    passed = bool(all(r["pass"] for r in records) and final_ok)

    notes = []
    if not final_ok:
        notes.append("final error above tolerance")
    return GammaReport(dict(config.echo), records, order, floor, lim_norm, passed,
                       q0_res.cauchy_defects, notes)


# ---------------------------------------------------------------------------
# diagnostics

def t_independence_check(layer: LayerMesh, T) -> float:
    return t_independence_ratio(layer, T)


def counterexample_source(x, t):
    """``f = t^-1/2 / log t`` on ``0 < t < 1/2`` and zero elsewhere, for every ``x``."""
    x = np.asarray(x, dtype=float)
    t = float(t)
    if 0.0 < t < 0.5:
        return np.full(x.shape[:-1], 1.0 / (math.sqrt(t) * math.log(t)))
    return np.zeros(x.shape[:-1])


@dataclass
class LebesgueReport:
    eps: list
    F_eps: list
    F0: float
    divergent: bool
    bounded: bool
    slack: float

    csv_columns = ("eps", "F_eps", "ratio_to_2F0")

    def to_records(self) -> list:
        two_f0 = 2.0 * self.F0
        return [{"eps": e, "F_eps": v,
                 "ratio_to_2F0": (v / two_f0) if two_f0 > 0 and np.isfinite(two_f0) else float("nan")}
                for e, v in zip(self.eps, self.F_eps)]

    def to_dict(self) -> dict:
        return {"records": self.to_records(), "F0": self.F0, "divergent": self.divergent,
                "bounded": self.bounded, "slack": self.slack}


def lebesgue_diagnostic(mesh: SurfaceMesh, f: Callable, eps, slack: float = 0.1) -> LebesgueReport:
    """Averages ``F_eps = eps^-1 int_{-eps}^{eps} int_C |f(x, t)|^2`` for each eps.

    Each half-interval is mapped by ``t = +-eps exp(-s)`` onto ``s >= 0`` so
    that integrable singularities at ``t = 0`` are resolved.  ``DIVERGENT``
    means the averages grow monotonically beyond ten times their first
    value; ``bounded`` means every average stays below ``2 F(0)`` up to
    the relative ``slack``.
    """
    w = mesh.weights

    def F(t):
        v = np.asarray(f(mesh.points, t), dtype=float)
        return float(np.sum(w * v * v))

    def Ft(t):
        # t F(t), with sqrt(t) folded into f before squaring to avoid overflow
        if t == 0.0:
            return 0.0
        v = np.asarray(f(mesh.points, t), dtype=float) * math.sqrt(abs(t))
        return float(np.sum(w * v * v))

    vals = []
    for e in eps:
        e = float(e)
        total = 0.0
        for sign in (1.0, -1.0):
            with warnings.catch_warnings():
                # slowly decaying tails of singular families are expected here
                warnings.simplefilter("ignore", IntegrationWarning)
                total += quad(lambda s: Ft(sign * e * math.exp(-s)), 0.0, np.inf,
                              limit=400, epsabs=0.0, epsrel=1e-10)[0]
        vals.append(total / e)
    with np.errstate(all="ignore"):
        try:
            F0 = F(0.0)
        except (ZeroDivisionError, ValueError):
            F0 = float("nan")
    growing = all(b >= a for a, b in zip(vals[:-1], vals[1:]))
    divergent = bool(len(vals) > 1 and growing and vals[-1] > 10.0 * vals[0])
    bounded = bool(np.isfinite(F0) and all(v <= 2.0 * F0 * (1.0 + slack) for v in vals))
    return LebesgueReport([float(e) for e in eps], vals, F0, divergent, bounded, slack)
