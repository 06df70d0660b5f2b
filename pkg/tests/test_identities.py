import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmonic_cs import _fd
from harmonic_cs import forms as fm
from harmonic_cs import geometry as geo
from harmonic_cs import identities as idt
from harmonic_cs import jstructure as js
from harmonic_cs.errors import ParameterError, UnsupportedManifoldError

from conftest import unit_sphere_riemann


def _pts(M, count=20, seed=5):
    return geo.sample_points(M, count, seed)


class TestReport:
    def test_pass_iff_within_tolerance(self):
        r = idt.ResidualReport.from_residuals("x", "m", [1e-6, -3e-6], 2e-6, 1e-4)
        assert r.max_residual == 3e-6 and not r.passed
        assert r.mean_residual <= r.max_residual

    def test_signed(self):
        r = idt.ResidualReport.from_residuals("x", "m", [-5.0, -2.0], -1.0, 1e-4, signed=True)
        assert r.max_residual == -2.0 and r.passed

    def test_empty(self):
        r = idt.ResidualReport.from_residuals("x", "m", [], 1.0, 1e-4)
        assert (r.samples, r.max_residual, r.passed) == (0, 0.0, True)

    def test_merge(self):
        a = idt.ResidualReport.from_residuals("a", "m", [1.0, 3.0], 5.0, 1e-4)
        b = idt.ResidualReport.from_residuals("b", "m", [6.0], 5.0, 1e-4)
        c = idt.ResidualReport.from_residuals("c", "m", [], 5.0, 1e-4)
        c.status = "hypothesis-not-met"
        m = idt.ResidualReport.merge("all", [a, b, c], note=1)
        assert m.samples == 3 and m.max_residual == 6.0
        assert m.mean_residual == pytest.approx(10.0 / 3)
        assert not m.passed
        assert m.status == "hypothesis-not-met,ok"
        assert m.details == {"note": 1, "fields": 3}

    def test_line(self):
        r = idt.ResidualReport.from_residuals("bochner", "flat_torus", [0.0], 1e-5, 1e-4)
        assert r.line().startswith("PASS bochner")


class TestWeitzenboeck:
    @pytest.mark.parametrize("name, n", [("flat_torus", 2), ("flat_torus", 4), ("round_sphere", 2), ("round_sphere", 6)])
    @pytest.mark.parametrize("exact", [True, False])
    def test_p1(self, name, n, exact):
        M = geo.builtin(name, n=n, exact=exact)
        rep = idt.check_weitzenboeck(fm.random_endomorphism(M, 3), _pts(M, 10))
        assert rep.passed, rep.line()

    def test_default_tolerance(self, sphere2):
        assert idt.default_tolerance(sphere2) == idt.EXACT_TOL
        assert idt.default_tolerance(sphere2.without_exact_data()) == idt.FD_TOL

    def test_bad_degree(self, sphere2):
        with pytest.raises(ParameterError):
            idt.check_weitzenboeck(fm.random_form(sphere2, 2, 0), np.zeros(2))

    def test_detects_wrong_curvature_term(self, sphere2):
        # dropping S breaks the identity on a curved space, so the check has teeth
        w = fm.random_endomorphism(sphere2, 1)
        X = _pts(sphere2, 10)
        lap = fm.hodge_laplace(w).coeff(X) + fm.rough_laplacian(w).coeff(X)
        assert np.abs(lap).max() > 1e-2


class TestSanityChecks:
    @pytest.mark.parametrize("name, n", [("flat_torus", 4), ("round_sphere", 6), ("perturbed_sphere", 6)])
    @pytest.mark.parametrize("exact", [True, False])
    def test_pass(self, name, n, exact):
        M = geo.builtin(name, n=n, exact=exact)
        X = _pts(M, 10)
        assert idt.check_metric_compatibility(M, X).passed
        assert idt.check_curvature_symmetries(M, X).passed

    @pytest.mark.parametrize("name, n", [("flat_torus", 4), ("round_sphere", 2), ("perturbed_sphere", 6)])
    def test_integrability(self, name, n):
        M = geo.builtin(name, n=n)
        assert idt.check_integrability(js.make_conjugated(M, 2), _pts(M, 10)).passed


class TestKaehlerHarmonic:
    @pytest.mark.parametrize("M_fixture", ["torus2", "torus4", "sphere2"])
    def test_kaehler_is_harmonic(self, request, M_fixture):
        M = request.getfixturevalue(M_fixture)
        rep = idt.check_kaehler_harmonic(js.make_standard(M), _pts(M, 50))
        assert rep.passed and rep.status == "ok"
        assert rep.max_residual <= 1e-5

    def test_hypothesis_not_met(self, sphere6):
        rep = idt.check_kaehler_harmonic(js.make_standard(sphere6), _pts(sphere6, 10))
        assert rep.status == "hypothesis-not-met" and rep.samples == 0
        assert rep.details["nabla_norm"] > 0.1


class TestCurvatureTerms:
    @pytest.mark.parametrize("spread", [0.0, 0.5, 1.5])
    def test_sphere_term2_is_n(self, sphere6, spread):
        X = _pts(sphere6, 5)
        E = geo.orthonormal_frame(sphere6, X)
        Rf = geo.frame_riemann(geo.riemann(sphere6, X), E)
        Jf = js.random_pointwise_j(6, 5, 1, spread)
        t2, t3 = idt.pointwise_curvature_terms(Rf, Jf)
        assert np.allclose(t2, 6.0, atol=1e-9)
        assert np.allclose(t3, 5.0 * np.sum(Jf * Jf, axis=(1, 2)), atol=1e-9)

    @pytest.mark.parametrize("seed", range(3))
    def test_contraction_matches_loops(self, seed):
        Jf = js.random_pointwise_j(4, 1, seed, 0.7)[0]
        rng = np.random.default_rng(seed)
        Rf = rng.standard_normal((4,) * 4)
        fast = idt.pointwise_curvature_terms(Rf[None], Jf[None])
        slow = idt.brute_force_terms(Jf, Rf)
        assert np.allclose(np.ravel(fast), slow, atol=1e-12)

    def test_orthogonal_s6_oracle(self):
        t2, t3 = idt.brute_force_terms(js.standard_matrix(6))
        assert (t2, t3) == (6.0, 30.0)

    def test_unit_sphere_default(self):
        Jf = js.random_pointwise_j(4, 1, 3)[0]
        assert np.allclose(idt.brute_force_terms(Jf), idt.brute_force_terms(Jf, unit_sphere_riemann(4)))

    def test_frame_choice_irrelevant(self, sphere6):
        J = js.make_conjugated(sphere6, 4)
        X = _pts(sphere6, 5)
        a, b = idt.curvature_terms(J, X), idt.curvature_terms(J, X, seed=9)
        assert np.allclose(a.term2, b.term2, atol=1e-9) and np.allclose(a.term3, b.term3, atol=1e-9)

    def test_sphere2_standard(self, sphere2):
        t = idt.curvature_terms(js.make_standard(sphere2), np.array([0.2, 0.1]))
        assert t.term2 == pytest.approx(2.0, abs=1e-9) and t.term3 == pytest.approx(2.0, abs=1e-9)
        assert abs(t.grad_norm_sq) <= 1e-9


class TestBochner:
    def test_torus_standard_all_zero(self, torus4):
        rep = idt.check_bochner(js.make_standard(torus4), _pts(torus4))
        assert rep.max_residual == 0.0
        assert all(v == 0.0 for v in rep.details["max_abs_terms"].values())
        assert rep.details["harmonic_form_residual"] == 0.0

    @pytest.mark.parametrize(
        "name, n", [("flat_torus", 2), ("flat_torus", 4), ("round_sphere", 2), ("round_sphere", 6), ("perturbed_sphere", 6)]
    )
    @pytest.mark.parametrize("maker", ["standard", "conjugated"])
    def test_pass(self, name, n, maker):
        M = geo.builtin(name, n=n)
        J = js.make_standard(M) if maker == "standard" else js.make_conjugated(M, 1)
        rep = idt.check_bochner(J, _pts(M, 20))
        assert rep.passed, rep.line()

    def test_kaehler_specialisation(self, sphere2):
        rep = idt.check_bochner(js.make_standard(sphere2), _pts(sphere2, 50))
        assert rep.details["harmonic_form_residual"] <= 1e-5

    def test_sphere6_not_specialised(self, sphere6):
        rep = idt.check_bochner(js.make_standard(sphere6), _pts(sphere6, 5))
        assert "harmonic_form_residual" not in rep.details


class TestScalBound:
    @pytest.mark.parametrize("M_fixture, scal", [("sphere2", 2.0), ("torus2", 0.0)])
    def test_equality_for_kaehler(self, request, M_fixture, scal):
        M = request.getfixturevalue(M_fixture)
        rep = idt.check_scal_bound(js.make_standard(M), _pts(M, 20))
        assert rep.passed and rep.status == "ok"
        assert rep.details["equality"] and rep.details["kaehler"] and rep.details["inequality_holds"]
        assert rep.details["max_scal"] == pytest.approx(scal, abs=1e-6)

    @pytest.mark.parametrize("M_fixture", ["sphere6", "torus4"])
    def test_hypothesis_not_met(self, request, M_fixture):
        M = request.getfixturevalue(M_fixture)
        J = js.make_standard(M) if M_fixture == "sphere6" else js.make_conjugated(M, 0)
        rep = idt.check_scal_bound(J, _pts(M, 5))
        assert rep.status == "hypothesis-not-met" and rep.samples == 0


class TestTrace:
    @pytest.mark.parametrize(
        "name, n", [("flat_torus", 2), ("flat_torus", 4), ("round_sphere", 2), ("round_sphere", 6), ("perturbed_sphere", 6)]
    )
    @pytest.mark.parametrize("seed", range(3))
    def test_pointwise(self, name, n, seed):
        M = geo.builtin(name, n=n)
        rep = idt.check_trace_theorem(fm.random_endomorphism(M, seed), _pts(M, 10))
        assert rep.passed, rep.line()
        assert rep.details["max_trace_laplacian"] > 1e-3

    def test_traceless_j(self, sphere6):
        X = _pts(sphere6, 20)
        assert np.abs(idt.trace_of_laplacian(js.make_conjugated(sphere6, 3), X)).max() <= 1e-5

    @pytest.mark.parametrize("seed", range(3))
    def test_integral(self, torus2, seed):
        rep = idt.check_integral_trace(fm.random_endomorphism(torus2, seed), grid=64)
        assert rep.passed, rep.line()
        assert rep.details["max_abs_integrand"] > 1e-2

    def test_integral_constant_and_standard(self, torus2):
        c = fm.constant_field(torus2, np.arange(4.0).reshape(2, 2))
        assert idt.check_integral_trace(fm._as_form(c), grid=16).max_residual == 0.0
        assert idt.check_integral_trace(js.make_standard(torus2), grid=16).max_residual == 0.0

    def test_integral_extended(self, torus2):
        rep = idt.check_integral_trace(fm.random_endomorphism(torus2, 1), grid=32, extended=True)
        assert rep.max_residual <= 1e-8

    def test_needs_torus(self, sphere2):
        with pytest.raises(UnsupportedManifoldError):
            idt.check_integral_trace(fm.random_endomorphism(sphere2, 0), grid=8)


class TestIntegralCriterion:
    def test_standard(self, torus2):
        rep = idt.check_integral_criterion(js.make_standard(torus2), grid=32)
        assert rep.passed and rep.details["integral"] == 0.0
        assert rep.details["equivalence"]

    @pytest.mark.parametrize("seed", range(3))
    def test_conjugated(self, torus2, seed):
        rep = idt.check_integral_criterion(js.make_conjugated(torus2, seed, epsilon=0.5), grid=64)
        assert rep.passed, rep.line()
        assert rep.details["integral"] > 1e-6 and rep.details["harmonic_defect"] > 1e-6
        assert rep.details["equivalence"]

    def test_grid_refinement_stable(self, torus2):
        J = js.make_conjugated(torus2, 0, epsilon=0.5)
        a = idt.check_integral_criterion(J, grid=32).details["integral"]
        b = idt.check_integral_criterion(J, grid=64).details["integral"]
        assert abs(a - b) <= 1e-6 * max(1.0, abs(b))


class TestScan:
    def test_round_sphere(self, sphere6):
        X = _pts(sphere6, 40)
        fields = [js.make_standard(sphere6)] + [js.make_conjugated(sphere6, s, epsilon=0.5) for s in range(3)]
        rep = idt.s6_obstruction_scan(sphere6, fields, X, pointwise_samples=20, seed=0)
        assert rep.passed
        assert rep.details["oracle_gap"] == 24.0
        assert rep.details["orthogonal_gap_min"] == pytest.approx(24.0, abs=1e-9)
        assert rep.details["orthogonal_gap_max"] == pytest.approx(24.0, abs=1e-9)
        assert rep.details["min_gap"] >= 24.0 - 1e-9
        assert rep.details["factor_six_gap"] == 30.0
        assert rep.max_residual == -rep.details["min_gap"]

    def test_non_orthogonal_exceeds_orthogonal(self, sphere6):
        X = _pts(sphere6, 10)
        rep = idt.s6_obstruction_scan(sphere6, [js.make_conjugated(sphere6, 1, epsilon=0.5)], X)
        assert rep.details["min_gap"] > 24.0

    def test_perturbed_positive(self):
        M = geo.perturbed_sphere(6, 0.05)
        X = _pts(M, 30)
        rep = idt.s6_obstruction_scan(M, [js.make_standard(M)], X, pointwise_samples=10, seed=1)
        assert rep.details["min_gap"] > 0 and rep.details["min_integrand"] > 0

    def test_margin_fail(self, sphere6):
        rep = idt.s6_obstruction_scan(sphere6, [js.make_standard(sphere6)], _pts(sphere6, 5), margin=25.0)
        assert not rep.passed

    def test_wrong_manifold(self, torus4):
        with pytest.raises(ParameterError):
            idt.s6_obstruction_scan(torus4, [], np.zeros((1, 4)))


def test_function_laplacian_on_sphere(sphere2):
    # the first coordinate function of the embedding satisfies Delta x = -2 x on S^2
    def f(X):
        r2 = np.sum(X * X, axis=1)
        return 2 * X[:, 0] / (1 + r2)

    X = _pts(sphere2, 10)
    assert np.allclose(idt.function_laplacian(sphere2, f, X), -2 * f(X), atol=1e-6)


@pytest.mark.slow
def test_extended_precision_convergence(sphere2):
    # halving h quarters the residual once rounding is pushed below truncation
    M = sphere2.without_exact_data()
    J = js.make_conjugated(M, 2)
    X = _pts(M, 10).astype(_fd.EXTENDED)
    errs = [idt.check_bochner(J, X, h=h).max_residual for h in (1e-4, 5e-5)]
    assert 3.0 <= errs[0] / errs[1] <= 5.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 2.0))
def test_sphere_gap_bound(seed, spread):
    Jf = js.random_pointwise_j(6, 3, seed, spread)
    gaps = [np.subtract(*idt.brute_force_terms(J)[::-1]) for J in Jf]
    assert min(gaps) >= 24.0 - 1e-8
