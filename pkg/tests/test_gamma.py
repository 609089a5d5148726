import math

import numpy as np
import pytest

import thinlayer.gamma as gamma_mod
from thinlayer.errors import NoConvergence, SolverDiverged
from thinlayer.gamma import (FluxFamily, SourceFamily, SweepConfig, compute_q0,
                             counterexample_source, extrapolate_to_zero, gamma_sweep,
                             lebesgue_diagnostic, limit_energy, limit_energy_layer_form,
                             q0_weak_check, solve_limit_bvp)
from thinlayer.geometry import make_chart
from thinlayer.layer import LayerMesh, layer_operators
from thinlayer.surface_solver import mass_matrix, stiffness_matrix

EPS = [0.4, 0.2, 0.1, 0.05]
SQUARE = {"a1": 0, "b1": np.pi, "a2": 0, "b2": np.pi}


def _samples(flux, x, eps):
    return [flux(x, e) for e in eps], [flux(x, -e) for e in eps]


@pytest.fixture(scope="module")
def p_field(polar_cap):
    x = polar_cap.points
    return 1.0 + x[:, 0] * x[:, 1] - 0.3 * x[:, 2] ** 2


@pytest.mark.parametrize("kind", ["odd_linear", "symmetric", "odd_quadratic"])
def test_q0_algebraic_families(polar_cap, p_field, kind):
    p = p_field
    eps = [0.4, 0.2, 0.1, 0.05]
    if kind == "odd_linear":
        qp, qm = [e * p for e in eps], [-e * p for e in eps]
        expected = p
    elif kind == "symmetric":
        qp, qm = [np.sin(3 * e) * p for e in eps], [np.sin(3 * e) * p for e in eps]
        expected = 0 * p
    else:
        qp, qm = [e * e * p for e in eps], [-e * e * p for e in eps]
        expected = 0 * p
    res = compute_q0(qp, qm, eps)
    assert np.abs(res.q0 - expected).max() < 1e-12
    assert q0_weak_check(polar_cap, res)["pass"]


def test_q0_of_smooth_family(polar_cap, p_field):
    # q(s) = sin(s) p: quotient sin(eps)/eps p has an eps^2 expansion
    eps = [0.2, 0.1, 0.05, 0.025]
    qp = [np.sin(e) * p_field for e in eps]
    qm = [np.sin(-e) * p_field for e in eps]
    res = compute_q0(qp, qm, eps)
    assert np.abs(res.q0 - p_field).max() < 1e-6
    assert res.cauchy_defects[0] > res.cauchy_defects[-1]


def test_q0_rejects_diverging_quotients(polar_cap, p_field):
    fam = FluxFamily("one", power=0.5)
    qp, qm = _samples(fam, polar_cap.points, EPS)
    with pytest.raises(NoConvergence):
        compute_q0(qp, qm, EPS)


def test_q0_needs_three_eps(p_field):
    with pytest.raises(ValueError):
        compute_q0([p_field] * 2, [p_field] * 2, [0.2, 0.1])


def test_extrapolation_is_exact_for_quadratics():
    eps = [0.3, 0.2, 0.1]
    vals = [2.0 - 3 * e + 5 * e * e for e in eps]
    assert extrapolate_to_zero(eps, vals) == pytest.approx(2.0, abs=1e-13)


def test_flux_family_signs(polar_cap):
    x = polar_cap.points
    fam = FluxFamily("x3", amp=2.0, odd=1.0, power=2.0, even=0.5)
    assert np.allclose(fam(x, 0.1), 2 * x[:, 2] * (0.01 + 0.5))
    assert np.allclose(fam(x, -0.1), 2 * x[:, 2] * (-0.01 + 0.5))
    src = SourceFamily("x1", 3.0, (1.0, 2.0))
    assert np.allclose(src(x, 0.5), 3 * x[:, 0] * 2.0)


def test_limit_energy_factor_two(polar_cap):
    z = polar_cap.points[:, 2]
    T = solve_limit_bvp(polar_cap, z, 0 * z)
    K, M = stiffness_matrix(polar_cap), mass_matrix(polar_cap)
    ops = layer_operators(LayerMesh(polar_cap, 0.1, 8))
    assert limit_energy(K, M, T, z) == pytest.approx(limit_energy_layer_form(ops, T, z), rel=1e-13)


@pytest.fixture(scope="module")
def slab_flux_report():
    cfg = SweepConfig(make_chart("plane", SQUARE, (32, 32)), EPS, 8, SourceFamily(),
                      FluxFamily("sin_sin"),
                      exact_limit=lambda x: -0.5 * np.sin(x[:, 0]) * np.sin(x[:, 1]))
    return gamma_sweep(cfg)


def test_sweep_flux_driven_slab(slab_flux_report):
    rep = slab_flux_report
    assert rep.passed
    err = rep.column("l2_err_exact")
    assert np.all(np.diff(err) < 0)
    assert err[-1] < 3 * rep.floor
    assert 1.8 <= rep.fitted_order <= 2.2
    assert list(rep.column("eps")) == sorted(EPS, reverse=True)
    gaps = rep.column("energy_gap")
    assert np.all(np.diff(gaps) < 0)


def test_sweep_records_have_csv_columns(slab_flux_report):
    for r in slab_flux_report.records:
        assert set(slab_flux_report.csv_columns) <= set(r)


def test_tau_average_solves_limit_problem(slab_flux_report):
    # integrating the product discretization over tau gives the limit system
    assert slab_flux_report.column("l2_err_avg").max() < 1e-9


def test_sweep_t_independent_source():
    cfg = SweepConfig(make_chart("plane", SQUARE, (32, 32)), EPS, 8, SourceFamily("sin_sin", -2.0),
                      FluxFamily(), exact_limit=lambda x: np.sin(x[:, 0]) * np.sin(x[:, 1]))
    rep = gamma_sweep(cfg)
    assert rep.passed
    err = rep.column("l2_err_exact")
    assert np.ptp(err) < 0.1 * rep.floor
    assert np.abs(err - rep.floor).max() < 1e-9
    # limit is reached exactly: recovery energy equals the limit energy
    rec = rep.column("recovery_energy")
    assert np.abs(rec - rep.column("limit_energy")).max() <= 1e-10 * abs(rec[0])


def test_sweep_sphere_cap_linear_in_t():
    cfg = SweepConfig(make_chart("sphere_cap", {"kind": "gnomonic"}, (24, 24)), EPS, 8,
                      SourceFamily("x3", 1.0, (1.0, 1.0)), FluxFamily())
    rep = gamma_sweep(cfg)
    assert rep.passed
    assert np.all(np.diff(rep.column("layer_l2_err")) < 0)
    assert np.all(np.diff(rep.column("energy_gap")) < 0)
    rec = rep.column("recovery_energy")
    assert np.abs(rec - rep.column("limit_energy")).max() <= 1e-10 * abs(rec[0])


def test_parallel_sweep_is_identical():
    base = dict(chart=make_chart("plane", SQUARE, (16, 16)), eps=EPS, n_t=6,
                source=SourceFamily("x1x2"), flux=FluxFamily("sin_sin"))
    a = gamma_sweep(SweepConfig(**base, jobs=1))
    b = gamma_sweep(SweepConfig(**base, jobs=3))
    assert a.records == b.records


def test_sweep_input_validation():
    ch = make_chart("sphere_cap", {"kind": "gnomonic"}, (16, 16))
    with pytest.raises(ValueError, match="decreasing"):
        gamma_sweep(SweepConfig(ch, [0.1, 0.2, 0.05]))
    with pytest.raises(ValueError, match="curvature"):
        gamma_sweep(SweepConfig(ch, [0.95, 0.5, 0.1]))
    with pytest.warns(UserWarning, match="catalog"):
        gamma_sweep(SweepConfig(ch, [0.2, 0.1, 0.05], source=lambda x, t: 0 * x[:, 0]))


def test_sweep_emits_partial_report_on_solver_failure(monkeypatch):
    real = gamma_mod.solve_layer_bvp

    def flaky(layer, *args, **kw):
        if layer.eps == 0.1:
            raise SolverDiverged(7, 1.0)
        return real(layer, *args, **kw)

    monkeypatch.setattr(gamma_mod, "solve_layer_bvp", flaky)
    cfg = SweepConfig(make_chart("plane", SQUARE, (16, 16)), EPS, 6, flux=FluxFamily("sin_sin"))
    rep = gamma_sweep(cfg)
    assert not rep.passed
    bad = [r for r in rep.records if r["eps"] == 0.1][0]
    assert math.isnan(bad["l2_err"]) and not bad["pass"] and "error" in bad
    assert sum(r["pass"] for r in rep.records) == 3


def test_lebesgue_counterexample_diverges(polar_cap):
    eps = [1e-1, 1e-2, 1e-3, 1e-4]
    rep = lebesgue_diagnostic(polar_cap, counterexample_source, eps)
    assert rep.divergent and not rep.bounded
    area = polar_cap.weights.sum()
    for e, v in zip(eps, rep.F_eps):
        # closed form -|C| / (eps log eps), less the tail lost to underflow
        assert v == pytest.approx(-area / (e * math.log(e)), rel=0.02)


def test_lebesgue_smooth_source_bounded(polar_cap):
    rep = lebesgue_diagnostic(polar_cap, SourceFamily("x3", 1.0, (1.0, 0.0, -1.0)),
                              [1e-1, 1e-2, 1e-3], slack=0.0)
    assert rep.bounded and not rep.divergent
    assert rep.F_eps[-1] == pytest.approx(2 * rep.F0, rel=1e-6)
