import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblab.errors import InsufficientSamples, NotSingular
from fblab.fixtures import PolyP, constant_field, monomial_field, poly_field, traveling_wave_field
from fblab.monitor import (
    CSV_HEADER,
    bootstrap,
    bootstrap_monotone,
    check_L2_decay,
    check_cleaning,
    check_cubic,
    check_doubling,
    check_frequency,
    check_monneau,
    check_weiss,
    default_r_grid,
    epsilon_for,
    estimate_lambda,
    trace,
)
from fblab.singular import Regular, Singular, classify

P2 = PolyP(np.diag([1.0, 0.0]), 1.0)
P = PolyP(np.diag([0.0, 1.0]), 1.0)
ORIGIN = [0.0, 0.0]
# radii where the cutoff is inactive for the Gaussian weight, so homogeneity is exact
SMALL_R = default_r_grid(None, r_max=1 / 32, r_min=1 / 256)


@pytest.fixture(scope="module")
def pinch_point(pinch1d):
    rep, lc = pinch1d
    c = classify(rep.field, lc.x_star, lc.t_star, 1.0)
    assert isinstance(c, Singular)
    return rep.field, lc, c


@pytest.fixture(scope="module")
def pinch_trace(pinch_point):
    field, lc, c = pinch_point
    return trace(field, lc.x_star, lc.t_star, c.decisive.snapped(), 2.25)


def test_default_r_grid():
    rs = default_r_grid(1 / 512)
    assert rs[-1] == 0.25 and rs[0] >= 4 / 512 - 1e-15
    assert np.allclose(np.diff(np.log(rs)), np.log(2) / 4)


def test_trace_of_zero_difference():
    tr = trace(poly_field(P2), ORIGIN, 0.0, P2, 2.25)
    assert np.all(tr.column("H") == 0) and np.all(tr.column("D") == 0)
    assert np.all(tr.column("phi_gamma") == 2.25)
    assert tr.with_cutoff
    assert check_cubic(tr).fitted_constant == 0.0
    assert check_monneau(tr).fitted_constant == 0.0
    assert check_frequency(tr).details["lower_bound_constant"] == 0.0
    assert estimate_lambda(tr).value == 2.25


def test_trace_of_homogeneous_difference():
    tr = trace(poly_field(P2), ORIGIN, 0.0, P, 2.25, SMALL_R)
    np.testing.assert_allclose(tr.column("W"), 0.0, atol=1e-8)
    np.testing.assert_allclose(tr.column("phi"), 2.0, atol=1e-8)
    assert np.all(tr.column("phi_gamma") >= 2.0)
    assert check_weiss(tr).fitted_constant <= 1e-6
    assert check_frequency(tr).details["lower_bound_constant"] == 0.0
    assert check_monneau(tr).fitted_constant <= 1e-3
    assert check_cubic(tr).fitted_constant <= 1e-3


def test_trace_validation_and_csv():
    with pytest.raises(ValueError):
        trace(poly_field(P2), ORIGIN, 0.0, P, 2.25, [0.05, 0.05])
    tr = trace(poly_field(P2), ORIGIN, 0.0, P, 2.25, [1 / 64, 1 / 32])
    lines = tr.to_csv().splitlines()
    assert lines[0] == "r,H,D,W,phi,phi_gamma,ip_w_Hw,ip_Zw_Hw"
    assert tuple(lines[0].split(",")) == CSV_HEADER
    assert len(lines) == 3
    with pytest.raises(InsufficientSamples):
        check_weiss(tr)


def test_pinch_trace_regression(pinch_trace):
    tr = pinch_trace
    assert tr.r[0] <= 4 * tr.h * 2**0.25
    H = tr.column("H")
    assert np.all(H >= 0) and np.all(np.diff(H) > 0)


def test_pinch_checks_pass(pinch_point, pinch_trace):
    field, lc, c = pinch_point
    tr = pinch_trace
    h = field.grid.h
    assert check_cubic(tr, 20.0).passed
    weiss = check_weiss(tr, 5.0, tol_W=10 * (h + c.decisive.residual_quadratic))
    assert weiss.passed and weiss.details["W_at_zero_ok"]
    assert check_frequency(tr, ceiling=10.0).passed
    assert check_monneau(tr, 2.0).passed
    lam = estimate_lambda(tr).value
    d = check_doubling(tr, lam, 0.2, ceiling=5.0)
    assert d.passed and d.details["c"] > 0


def test_epsilon_rules():
    assert epsilon_for(2.25) == pytest.approx(0.5)
    assert epsilon_for(2.75, "refined", 0.5) == pytest.approx(0.0)
    assert epsilon_for(2.5, "refined", 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        epsilon_for(2.5, "refined")
    tr = trace(poly_field(P2), ORIGIN, 0.0, P, 2.75, SMALL_R)
    with pytest.raises(ValueError):
        check_frequency(tr)


@pytest.mark.parametrize("k, field, p", [(1, monomial_field(2, 0), None), (2, poly_field(P2), P)])
def test_estimate_lambda_homogeneous(k, field, p):
    tr = trace(field, ORIGIN, 0.0, p, 2.25)
    assert abs(estimate_lambda(tr).value - k) <= 1e-3


def test_estimate_lambda_needs_samples():
    tr = trace(poly_field(P2), ORIGIN, 0.0, P, 2.25, [1 / 64, 1 / 32, 1 / 16])
    with pytest.raises(InsufficientSamples):
        estimate_lambda(tr)


def test_doubling_homogeneous():
    tr = trace(poly_field(P2), ORIGIN, 0.0, P, 2.25, SMALL_R)
    d = check_doubling(tr, 2.0, 0.0)
    # analytic oracle: H(r) = H(1) r⁴ on these radii
    r = np.asarray(SMALL_R)
    H1 = 4.0
    Ht = H1 * r**4 + r**4.5
    i, j = np.triu_indices(r.size, k=1)
    q = (Ht[j] / Ht[i]) / (r[j] / r[i]) ** 4
    assert d.fitted_constant == pytest.approx(q.max(), rel=1e-6)
    assert d.details["c"] == pytest.approx(q.min(), rel=1e-6)
    assert 1.0 <= d.details["c"] <= d.fitted_constant <= 1.05


def test_doubling_zero_field():
    tr = trace(constant_field(2, 0.0), ORIGIN, 0.0, None, 2.25)
    d = check_doubling(tr, 2.25, 0.0)
    assert d.details["c"] == pytest.approx(1.0, rel=1e-12)
    assert d.fitted_constant == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(InsufficientSamples):
        check_doubling(trace(constant_field(2, 0.0), ORIGIN, 0.0, None, 2.25, [0.1, 0.2]), 2.25, 0.0)


def test_L2_decay_examples():
    zero = check_L2_decay(poly_field(P2), ORIGIN, 0.0, 2.5, 0.2, P2)
    assert zero.passed and zero.details["vacuous"]
    hom = check_L2_decay(poly_field(P2), ORIGIN, 0.0, 2.0, 0.0, P)
    assert hom.details["exponent"] == pytest.approx(2.0, abs=1e-9)
    assert hom.details["sup_exponent"] == pytest.approx(2.0, abs=1e-9)
    assert not check_L2_decay(poly_field(P2), ORIGIN, 0.0, 2.5, 0.2, P).passed


def test_cleaning_requires_singular(pinch_point):
    field, lc, c = pinch_point
    reg = Regular(lc.x_star, lc.t_star, e=np.array([1.0]))
    with pytest.raises(NotSingular):
        check_cleaning(field, lc.x_star, lc.t_star, 0.5, reg)


def test_cleaning_pinch(pinch_point):
    field, lc, c = pinch_point
    rep = check_cleaning(field, lc.x_star, lc.t_star, 0.5, c)
    assert rep.passed and rep.fitted_constant == 0
    assert min(rep.details["radii"]) >= 4 * field.grid.h - 1e-15


def test_bootstrap_pinch(pinch_point):
    field, lc, c = pinch_point
    stages = bootstrap(field, lc.x_star, lc.t_star, c.decisive.snapped())
    assert [s.gamma for s in stages] == [2.25, 2.5, 2.75]
    assert bootstrap_monotone(stages)
    assert stages[0].alpha_in == 0.0 and all(0 <= s.alpha_out <= 1 for s in stages)


def test_reports_are_reproducible():
    tr = trace(traveling_wave_field([1.0, 0.0]), ORIGIN, 0.0, PolyP(np.diag([0.5, 0.5]), 1.0), 2.25)
    a = [f(tr).to_dict() for f in (check_cubic, check_weiss, check_monneau, check_frequency)]
    b = [f(tr).to_dict() for f in (check_cubic, check_weiss, check_monneau, check_frequency)]
    assert a == b
    assert np.isfinite(check_weiss(tr).details["gap_constant"])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=2), st.floats(2.05, 2.45))
def test_phi_gamma_consistent_with_stored_H_D(c, gamma):
    A = np.array([[0.5 + 0.4 * c[0], 0.3 * c[1]], [0.3 * c[1], 0.5 - 0.4 * c[0]]])
    tr = trace(traveling_wave_field([1.0, 0.0]), ORIGIN, 0.0, PolyP(A, 1.0), gamma, SMALL_R)
    r, H, D = tr.r, tr.column("H"), tr.column("D")
    recomputed = (D + gamma * r ** (2 * gamma)) / (H + r ** (2 * gamma))
    np.testing.assert_allclose(tr.column("phi_gamma"), recomputed, rtol=1e-12)
    assert np.all(np.diff(r) > 0) and np.all(H >= 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.booleans(), min_size=17, max_size=17))
def test_fitted_constant_monotone_under_inclusion(mask):
    full = _wave_trace()
    keep = [s for s, m in zip(full.samples, mask) if m]
    if len(keep) < 3:
        return
    sub = dataclasses.replace(full, samples=tuple(keep))
    for check in (check_cubic, check_frequency):
        assert check(sub).fitted_constant <= check(full).fitted_constant + 1e-15


_WAVE = {}


def _wave_trace():
    if "t" not in _WAVE:
        _WAVE["t"] = trace(traveling_wave_field([1.0, 0.0]), ORIGIN, 0.0, PolyP(np.diag([0.5, 0.5]), 1.0), 2.25,
                           default_r_grid(None, r_min=0.25 / 2**4))
    return _WAVE["t"]


def test_cubic_affine_pinch_within_lipschitz_ceiling():
    from conftest import solved
    from fblab.solver import locate_last_contact

    rep = solved("affine-pinch-1d")
    lc = locate_last_contact(rep.field)
    sc = rep.scenario
    f0 = float(sc.f_spec(lc.x_star[None, :], sc.grid)[0])
    c = classify(rep.field, lc.x_star, lc.t_star, f0)
    assert isinstance(c, Singular)
    tr = trace(rep.field, lc.x_star, lc.t_star, c.decisive.snapped(), 2.25)
    lip = float(np.abs(sc.f_spec.params["b"]).max())
    cub = check_cubic(tr, 100 * lip)
    assert np.isfinite(cub.fitted_constant) and cub.passed
