import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblab.errors import DivisionByZero
from fblab.fixtures import AnalyticField, PolyP, constant_field, monomial_field, polyp_difference_field, random_polyp
from fblab.functionals import (
    CutoffSpec,
    GaussQuad,
    apply_cutoff,
    frequency,
    frequency_trunc,
    functional_D,
    functional_H,
    monneau,
    sample,
    verify_derivative_identities,
    weighted_inner,
    weiss,
)
from fblab.mesh import ScalarField, SpaceTimeGrid

Q2 = GaussQuad.create(2)
P2 = PolyP(np.diag([1.0, 0.0]), 1.0)
P = PolyP(np.diag([0.0, 1.0]), 1.0)
W22 = polyp_difference_field(P2, P)  # (x1² - x2²)/2


def poly2(c0, cx, cy, cxx, cxy, cyy):
    """Stationary quadratic polynomial in two variables with exact jets."""
    def value(X, t):
        x, y = X[:, 0], X[:, 1]
        return c0 + cx * x + cy * y + cxx * x * x + cxy * x * y + cyy * y * y

    def grad(X, t):
        x, y = X[:, 0], X[:, 1]
        return np.stack([cx + 2 * cxx * x + cxy * y, cy + cxy * x + 2 * cyy * y], axis=1)

    return AnalyticField(2, value, grad, lambda X, t: np.full(X.shape[0], 2 * cxx + 2 * cyy))


def test_quadrature_moments():
    for dim in (1, 2):
        q = GaussQuad.create(dim)
        assert q.integrate(np.ones(q.size)) == pytest.approx(1.0, abs=1e-12)
        y = q.nodes[:, 0]
        assert abs(q.integrate(y)) < 1e-13 and abs(q.integrate(y**3)) < 1e-12
        assert q.integrate(y**2) == pytest.approx(2.0, abs=1e-12)
        assert q.integrate(y**4) == pytest.approx(12.0, abs=1e-11)


def test_weighted_inner_examples():
    one = constant_field(2, 1.0)
    for r in (0.01, 0.3, 1.0, 2.0):
        assert weighted_inner(one, one, r, Q2) == pytest.approx(1.0, abs=1e-12)
    x1 = monomial_field(2, 0)
    assert weighted_inner(x1, x1, 1.0, Q2) == pytest.approx(2.0, abs=1e-8)
    assert weighted_inner(W22, W22, 1.0, Q2) == pytest.approx(4.0, abs=1e-8)


def test_H_D_examples():
    assert functional_H(W22, 1.0, Q2) == pytest.approx(4.0, abs=1e-8)
    assert functional_D(W22, 1.0, Q2) == pytest.approx(8.0, abs=1e-8)
    c = constant_field(2, 1.7)
    assert functional_H(c, 0.4, Q2) == pytest.approx(1.7**2, abs=1e-12)
    assert functional_D(c, 0.4, Q2) == 0.0
    for r in (0.125, 0.5, 1.0):
        H, D = functional_H(W22, r, Q2), functional_D(W22, r, Q2)
        assert abs(D - 2 * H) <= 1e-10 * (D + 2 * H)


def test_frequency_examples():
    zero = constant_field(2, 0.0)
    for g in (2.25, 2.5):
        assert frequency_trunc(zero, 0.3, g, Q2) == pytest.approx(g, abs=1e-14)
    with pytest.raises(DivisionByZero):
        frequency(zero, 0.3, Q2)
    for r in (0.5, 0.25, 0.125):
        assert frequency(W22, r, Q2) == pytest.approx(2.0, abs=1e-10)
    # H ~ r⁴ dominates r^{2γ}: φ^γ → 2
    vals = [frequency_trunc(W22, r, 2.25, Q2) for r in (1e-2, 1e-4, 1e-8)]
    assert abs(vals[-1] - 2.0) < 1e-3 and vals[0] > vals[1] > vals[2]


def test_weiss_monneau_examples():
    for r in (0.1, 0.5, 1.0):
        assert abs(weiss(W22, r, Q2)) < 1e-9
    zero = constant_field(2, 0.0)
    assert weiss(zero, 0.3, Q2) == 0.0 and monneau(zero, 0.3, Q2) == 0.0
    s = 3.0
    assert abs(weiss(W22.scaled(s), 0.5, Q2)) < 1e-8
    assert monneau(W22.scaled(s), 0.5, Q2) == pytest.approx(s * s * monneau(W22, 0.5, Q2), rel=1e-12)


def test_cutoff_profile():
    z = CutoffSpec()
    assert z([[0.1, 0.2]])[0] == 1.0 and z([[0.5, 0.0]])[0] == 0.0 and z([[0.4, 0.4]])[0] == 0.0
    # s = 1/2 at |x| = 3/8: 1 - 10/8 + 15/16 - 6/32
    assert z([[0.375, 0.0]])[0] == pytest.approx(0.5, abs=1e-15)
    rho = np.linspace(0, 0.6, 601)
    eta, d1, d2 = z.profile(rho)
    assert np.all((eta >= 0) & (eta <= 1))
    # C² matching at both plateaus
    e0 = z.profile(np.array([0.25, 0.5]))
    np.testing.assert_allclose(e0[1], 0.0, atol=1e-14)
    np.testing.assert_allclose(e0[2], 0.0, atol=1e-12)
    # derivatives agree with finite differences of the value
    num = np.gradient(eta, rho)
    np.testing.assert_allclose(num[5:-5], d1[5:-5], atol=2e-3)


def test_apply_cutoff_examples():
    w = constant_field(2, 2.0)
    c = apply_cutoff(w)
    assert c.evaluate([[0.1, -0.2]], 0.0)[0] == 2.0
    assert c.evaluate([[0.6, 0.0]], 0.0)[0] == 0.0
    assert c.evaluate([[0.375, 0.0]], 0.0)[0] == pytest.approx(1.0, abs=1e-15)

    class Boom:
        dim = 2

        def evaluate(self, X, t):
            if np.any(np.linalg.norm(X, axis=1) >= 0.5):
                raise AssertionError("inner field evaluated outside the support")
            return np.ones(len(X))

    apply_cutoff(Boom()).evaluate(np.array([[0.1, 0.0], [0.9, 0.9]]), 0.0)


def test_cutoff_jet_matches_product_rule():
    w = poly2(0.3, 1.0, -2.0, 0.5, 0.25, -1.0)
    c = apply_cutoff(w)
    X = np.array([[0.3, 0.1], [0.2, -0.3], [0.05, 0.0]])
    v, g, lap, _ = c.jet(X, 0.0)
    eps = 1e-5
    for k in range(2):
        e = np.zeros(2)
        e[k] = eps
        fd = (c.evaluate(X + e, 0.0) - c.evaluate(X - e, 0.0)) / (2 * eps)
        np.testing.assert_allclose(g[:, k], fd, atol=1e-7)
    fd_lap = sum(
        c.evaluate(X + e, 0.0) - 2 * v + c.evaluate(X - e, 0.0) for e in (np.array([1e-4, 0]), np.array([0, 1e-4]))
    ) / 1e-8
    np.testing.assert_allclose(lap, fd_lap, atol=1e-4)


def test_derivative_identities_examples():
    lim = max(1e-8, 2 * 1e-6)
    for w in (W22, monomial_field(2, 0), constant_field(2, 2.0)):
        for r in (0.5, 0.125):
            rep = verify_derivative_identities(w, r, 1e-3, Q2)
            assert max(rep.residuals) <= lim
    x1 = monomial_field(2, 0)
    rep = verify_derivative_identities(x1, 0.5, 1e-3, Q2)
    assert rep.D == pytest.approx(2 * 0.25, abs=1e-12)
    c = verify_derivative_identities(constant_field(2, 1.0), 0.5, 1e-3, Q2)
    assert abs(c.dH_fd) < 1e-10 and c.dH_formula == 0.0
    with pytest.raises(ValueError):
        verify_derivative_identities(x1, 0.001, 1e-3, Q2)


def test_derivative_identities_on_grid_field():
    # interpolated grid fields are only piecewise smooth, so the identities
    # hold up to a discretization error that shrinks with the radius
    g = SpaceTimeGrid(2, 1.0, 1 / 32, 1 / 1024, (-0.25, 0.0))
    u = ScalarField.from_function(g, lambda X, t: X[:, 0] ** 2 - X[:, 1] ** 2 + X[:, 0])
    from fblab.functionals import localize

    w = localize(u, [0.0, 0.0], 0.0)
    coarse = verify_derivative_identities(w, 0.125, 1e-3, Q2)
    fine = verify_derivative_identities(w, 0.0625, 1e-3, Q2)
    assert max(fine.residuals) < 1e-2
    assert max(fine.residuals) < max(coarse.residuals)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=12, max_size=12), st.floats(0.05, 1.0), st.floats(-3, 3))
def test_bilinear_symmetric_cauchy_schwarz(c, r, a):
    f = poly2(*c[:6])
    g = poly2(*c[6:])
    fg = weighted_inner(f, g, r, Q2)
    assert fg == pytest.approx(weighted_inner(g, f, r, Q2), rel=1e-12, abs=1e-14)
    lin = poly2(*(a * np.array(c[:6]) + np.array(c[6:])))
    lhs = weighted_inner(lin, g, r, Q2)
    rhs = a * fg + weighted_inner(g, g, r, Q2)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)
    assert fg**2 <= weighted_inner(f, f, r, Q2) * weighted_inner(g, g, r, Q2) * (1 + 1e-12) + 1e-300


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([1, 2]), st.floats(0.05, 1.0))
def test_homogeneous_scaling(k, r):
    w = monomial_field(2, 0) if k == 1 else W22
    assert functional_H(w, r, Q2) == pytest.approx(r ** (2 * k) * functional_H(w, 1.0, Q2), rel=1e-10)
    assert functional_D(w, r, Q2) == pytest.approx(r ** (2 * k) * functional_D(w, 1.0, Q2), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_weiss_structure_random_pairs(seed):
    rng = np.random.default_rng(seed)
    w = polyp_difference_field(random_polyp(rng, 2), random_polyp(rng, 2))
    H, D = functional_H(w, 1.0, Q2), functional_D(w, 1.0, Q2)
    assert abs(D - 2 * H) <= 1e-8 * (D + 2 * H) + 1e-300


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6), st.floats(0.05, 1.0), st.floats(2.01, 2.99))
def test_truncated_frequency_is_a_mediant(c, r, gamma):
    w = poly2(*c)
    s = sample(w, r, gamma, Q2)
    if s.H > 1e-12:
        lo, hi = min(s.phi, gamma), max(s.phi, gamma)
        assert lo - 1e-9 <= s.phi_gamma <= hi + 1e-9
