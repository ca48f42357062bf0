import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fblab.errors import NotOnFreeBoundary, OutOfDomain
from fblab.fixtures import PolyP, halfspace_field, poly_field, random_polyp, traveling_wave_field
from fblab.pardim import par_dist
from fblab.singular import (
    BlowupProfile,
    Regular,
    Singular,
    SingularSetOptions,
    blowup,
    classify,
    fit_quadratic,
    reference_lattice,
    singular_set,
)
from fblab.solver import load_scenario, solve

from conftest import solved

ONE = lambda X: np.ones(len(X))  # noqa: E731


def _rot2(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_reference_lattice_shape():
    Y1, S = reference_lattice(1)
    assert Y1.shape == (33, 1) and S.size == 17 and S[0] == -4.0 and S[-1] == 0.0
    Y2, _ = reference_lattice(2)
    assert np.all(np.linalg.norm(Y2, axis=1) <= 2.0 + 1e-12)


def test_blowup_of_homogeneous_fixtures_is_exact():
    p = PolyP(np.array([[0.75, 0.2], [0.2, 0.25]]), 1.0)
    for r in (0.5, 1 / 16, 1e-3):
        prof = blowup(poly_field(p), [0.0, 0.0], 0.3, r, check_free_boundary=False)
        np.testing.assert_allclose(prof.samples, np.broadcast_to(p(prof.Y), prof.samples.shape), rtol=1e-12, atol=1e-15)
    hs = halfspace_field(1.0, [1.0, 0.0])
    prof = blowup(hs, [0.0, 0.0], 0.0, 0.125)
    np.testing.assert_allclose(prof.samples[-1], hs.evaluate(prof.Y, 0.0), rtol=1e-12)
    assert np.all(prof.samples >= 0)


def test_blowup_of_wave_approaches_halfspace_profile():
    wave = traveling_wave_field()
    target = 0.5 * np.maximum(reference_lattice(1)[0][:, 0], 0.0) ** 2
    errs = []
    for r in (1 / 8, 1 / 16, 1 / 32):
        prof = blowup(wave, [0.0], 0.0, r)
        errs.append(np.max(np.abs(prof.samples[-1] - target)))
    assert errs[0] > errs[1] > errs[2]


def test_blowup_errors():
    g_field = solved("quadratic-2d").field
    with pytest.raises(OutOfDomain):
        blowup(g_field, [0.9, 0.0], 0.1, 0.125)
    with pytest.raises(NotOnFreeBoundary):
        blowup(g_field, [0.25, 0.0], 0.1, 1 / 16)


def test_fit_recovers_exact_polynomial():
    rng = np.random.default_rng(3)
    for _ in range(5):
        p = random_polyp(rng, 2)
        prof = blowup(poly_field(p), [0.0, 0.0], 0.0, 0.25, check_free_boundary=False)
        fit = fit_quadratic(prof, p.f0)
        np.testing.assert_allclose(fit.A, p.A, atol=1e-8)
        assert fit.residual_quadratic < 1e-10
        assert abs(np.trace(fit.A) - p.f0) <= 1e-10


def test_fit_of_halfspace_prefers_halfspace():
    prof = blowup(halfspace_field(1.0, [1.0, 0.0]), [0.0, 0.0], 0.0, 0.25)
    fit = fit_quadratic(prof, 1.0)
    assert fit.residual_halfspace < 1e-8
    assert fit.residual_quadratic > 0.1
    assert abs(fit.best_e @ np.array([1.0, 0.0])) > 1 - 1e-8


def test_fit_noise_perturbation_is_linear():
    rng = np.random.default_rng(11)
    p = PolyP(np.array([[0.6, 0.1], [0.1, 0.4]]), 1.0)
    clean = blowup(poly_field(p), [0.0, 0.0], 0.0, 0.25, check_free_boundary=False)
    errs = []
    for amp in (0.01, 0.001):
        noise = amp * rng.standard_normal(clean.samples.shape)
        noisy = BlowupProfile(clean.x0, clean.t0, clean.r, clean.Y, clean.S, clean.samples + noise)
        errs.append(np.linalg.norm(fit_quadratic(noisy, 1.0).A - p.A))
    # least-squares over ~3500 samples averages the noise well below its amplitude
    assert errs[0] <= 0.01 and errs[1] <= 0.001


def test_classify_wave_regular_1d():
    field = solved("wave-1d", 1 / 512).field
    c = classify(field, [-0.0625], 0.0625, 1.0)
    assert isinstance(c, Regular)
    # the fitted direction points into the positivity set {x + t > 0}
    assert c.e[0] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("theta", [0.0, 0.3, 1.0, 2.0, 4.0])
def test_classify_wave_direction_2d(theta):
    e = np.array([np.cos(theta), np.sin(theta)])
    c = classify(traveling_wave_field(e), [0.0, 0.0], 0.0, 1.0)
    assert isinstance(c, Regular)
    assert np.degrees(np.arccos(np.clip(c.e @ e, -1, 1))) <= 5.0


def test_classify_stationary_quadratic_2d():
    field = solved("quadratic-2d").field
    for x2 in (0.0, 0.25, -0.5):
        c = classify(field, [0.0, x2], 0.09375, 1.0)
        assert isinstance(c, Singular) and c.m == 1


def test_classify_pinch_singular(pinch1d):
    rep, lc = pinch1d
    c = classify(rep.field, lc.x_star, lc.t_star, 1.0)
    assert isinstance(c, Singular) and c.m == 0
    rq = [f.residual_quadratic for f in c.fits]
    assert all(a > b for a, b in zip(rq, rq[1:]))


def test_singular_set_wave_is_empty():
    res = singular_set(solved("wave-1d").field, ONE, SingularSetOptions(time_stride=16))
    assert len(res.singular) == 0 and not res.undecided


def test_singular_set_stationary_quadratic():
    field = solved("quadratic-2d").field
    g = field.grid
    res = singular_set(field, ONE, SingularSetOptions(t_window=(0.09375, 0.09375)))
    assert len(res.singular) == res.classified > 0 and set(res.strata) == {1}
    assert np.all(res.singular.X[:, 0] == 0.0)
    r = 4 * g.h
    expected = g.axis[np.abs(g.axis) + 2 * r <= g.L + 1e-12]
    np.testing.assert_array_equal(np.sort(res.singular.X[:, 1]), expected)


def test_singular_set_pinch_cluster(pinch1d):
    rep, lc = pinch1d
    res = singular_set(rep.field, ONE, SingularSetOptions(t_window=(lc.t_star - 0.01, rep.field.grid.t_range[1])))
    assert len(res.singular) > 0 and set(res.strata) == {0}
    assert max(par_dist((x, t), (lc.x_star, lc.t_star)) for x, t in res.singular) <= 0.05


def test_singular_set_is_thread_independent(pinch1d):
    rep, lc = pinch1d
    win = (lc.t_star - 0.002, lc.t_star)
    a = singular_set(rep.field, ONE, SingularSetOptions(t_window=win, threads=1))
    b = singular_set(rep.field, ONE, SingularSetOptions(t_window=win, threads=4))
    assert a.to_dict() == b.to_dict()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 2 * np.pi))
def test_rotation_equivariance(seed, theta):
    p = random_polyp(np.random.default_rng(seed), 2)
    R = _rot2(theta)
    rotated = PolyP(R @ p.A @ R.T, p.f0)
    fa = fit_quadratic(blowup(poly_field(p), [0.0, 0.0], 0.0, 0.25, check_free_boundary=False), 1.0)
    fb = fit_quadratic(blowup(poly_field(rotated), [0.0, 0.0], 0.0, 0.25, check_free_boundary=False), 1.0)
    np.testing.assert_allclose(fb.A, R @ fa.A @ R.T, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_trace_constraint_after_projection(seed):
    rng = np.random.default_rng(seed)
    prof = blowup(poly_field(random_polyp(rng, 2)), [0.0, 0.0], 0.0, 0.25, check_free_boundary=False)
    noisy = BlowupProfile(prof.x0, prof.t0, prof.r, prof.Y, prof.S,
                          prof.samples + rng.standard_normal(prof.samples.shape))
    fit = fit_quadratic(noisy, 1.3)
    assert abs(np.trace(fit.A) - 1.3) <= 1e-10
    assert np.linalg.eigvalsh(fit.A).min() >= -1e-12


@pytest.mark.parametrize("theta", [0.0, 0.7])
def test_classify_is_scale_consistent(theta):
    # u_s(x, t) = s² u(x/s, t/s²) solves the same problem; compare at corresponding points and radii
    s = 2.0
    e = np.array([np.cos(theta), np.sin(theta)])
    wave = traveling_wave_field(e)

    class Scaled:
        dim = 2

        def evaluate(self, X, t):
            return s * s * wave.evaluate(np.asarray(X) / s, t / s**2)

    x0 = np.array([0.0, 0.0])
    rs = [1 / 8, 1 / 16, 1 / 32]
    a = classify(wave, x0, 0.0, 1.0, rs)
    b = classify(Scaled(), s * x0, 0.0, 1.0, [s * r for r in rs])
    assert a.label == b.label == "regular"
    quad = poly_field(PolyP(np.diag([1.0, 0.0]), 1.0))
    a = classify(quad, [0.0, 0.3], 0.0, 1.0, rs)

    class ScaledQ:
        dim = 2

        def evaluate(self, X, t):
            return s * s * quad.evaluate(np.asarray(X) / s, t / s**2)

    b = classify(ScaledQ(), [0.0, 0.6], 0.0, 1.0, [s * r for r in rs])
    assert a.label == b.label == "singular" and a.m == b.m == 1
