import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracplap.application import (
    A1Violation,
    A2Violation,
    CrossingError,
    ExistenceNotDemonstrated,
    TwoSidedLimitError,
    catalog_crossing,
    crossing_residual,
    solve_crossing,
    validate_crossing,
)
from fracplap.bifurcation import ContinuationOptions
from fracplap.eigen import WeightFunction, first_eigenpair, positivity_check
from fracplap.energy import psi
from fracplap.grid import DomainError

from conftest import grid, operator

PI2 = np.pi**2


@pytest.fixture(scope="module")
def setup():
    w = operator(0.75, 2.0, 128)
    pair = first_eigenpair(w, WeightFunction.constant(grid(128)))
    g = validate_crossing(catalog_crossing(2.0, 30.0, 2.0), 2.0, pair.lam)
    return w, pair, g


class TestValidate:
    def test_catalog_accepted(self):
        g = validate_crossing(catalog_crossing(2.0, 30.0, 2.0), 2.0, PI2)
        assert g.lambda_under == pytest.approx(2.0, abs=1e-9)
        assert g.lambda_over_probe == pytest.approx(30.0, rel=1e-5)
        assert g.bound == pytest.approx(30.0, rel=1e-9)
        assert g.probe_window == (1e3, 1e4)
        assert g.flags == ()

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_decomposition_exact(self, p):
        g = validate_crossing(catalog_crossing(1.0, 50.0, p), p, 10.0)
        t = np.random.default_rng(3).standard_normal(1000) * np.logspace(-4, 3, 1000)
        lhs = g.lambda_under * psi(t, p) + g.remainder(0.5, t)
        assert np.max(np.abs(lhs - g.g(t)) / np.maximum(np.abs(g.g(t)), 1e-300)) <= 1e-12

    def test_remainder_small_at_zero(self):
        g = validate_crossing(catalog_crossing(2.0, 30.0, 2.0), 2.0, PI2)
        g.nonlinearity().validate(2.0)

    def test_unbounded_ratio(self):
        with pytest.raises(A1Violation):
            validate_crossing("psi(t, 2)*t", 2.0, PI2)
        with pytest.raises(A1Violation):
            validate_crossing("psi(t, 2)*(2 + abs(t)^0.5)", 2.0, PI2)

    def test_ratio_blowing_up_at_zero(self):
        with pytest.raises(CrossingError):
            validate_crossing("sign(t)*abs(t)^0.5", 2.0, PI2)

    def test_no_crossing(self):
        half = PI2 / 2
        with pytest.raises(A2Violation):
            validate_crossing(catalog_crossing(half, half, 2.0), 2.0, PI2)
        with pytest.raises(A2Violation):
            validate_crossing(catalog_crossing(2.0, 5.0, 2.0), 2.0, PI2)
        with pytest.raises(A2Violation):
            validate_crossing(catalog_crossing(12.0, 30.0, 2.0), 2.0, PI2)

    def test_two_sided(self):
        with pytest.raises(TwoSidedLimitError):
            validate_crossing("psi(t, 2)*(2 + sign(t))", 2.0, PI2)

    def test_nonzero_at_origin(self):
        with pytest.raises(DomainError):
            validate_crossing("t + 1", 2.0, PI2)

    def test_oscillation_flagged(self):
        g = validate_crossing("psi(t, 2)*(2 + (28 + 3*sin(t))*t^2/(1 + t^2))", 2.0, PI2)
        assert g.flags

    def test_callable_g(self):
        g = validate_crossing(lambda t, x=0.0, lam=0.0: t * (2 + 28 * t**2 / (1 + t**2)), 2.0, PI2)
        assert g.lambda_under == pytest.approx(2.0, abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(a=st.floats(0.1, 9.0), b=st.floats(11.0, 200.0), p=st.sampled_from([1.5, 2.0, 3.0]))
    def test_catalog_straddling_accepted(self, a, b, p):
        g = validate_crossing(catalog_crossing(a, b, p), p, 10.0)
        assert g.lambda_under == pytest.approx(a, rel=1e-6)
        assert a < 10.0 < g.lambda_over_probe <= b


class TestSolve:
    def test_positive_solution(self, setup):
        w, pair, g = setup
        sol = solve_crossing(g, w, eigenpair=pair)
        assert sol.residual <= 1e-6
        assert crossing_residual(sol.u, w, g) == sol.residual
        assert positivity_check(sol.u) and np.all(sol.u.values > 0)
        assert np.isfinite(sol.lambda_max) and sol.lambda_max >= pair.lam * (1 - 1e-9)
        assert sol.bracket[1] <= g.lambda_under <= sol.bracket[0]

    def test_mirror_solution(self, setup):
        w, pair, g = setup
        pos = solve_crossing(g, w, eigenpair=pair)
        neg = solve_crossing(g, w, direction=-1, eigenpair=pair)
        assert np.all(neg.u.values < 0)
        assert np.max(np.abs(pos.u.values + neg.u.values)) <= 1e-6 * np.max(pos.u.values)

    def test_branch_lambda_bounded(self, setup):
        w, pair, g = setup
        sol = solve_crossing(g, w, eigenpair=pair)
        lams = sol.branch.lambdas
        assert np.all(lams[:-1] >= g.lambda_under)
        assert lams.max() == sol.lambda_max

    def test_existence_not_demonstrated(self, setup):
        w, pair, g = setup
        with pytest.raises(ExistenceNotDemonstrated) as info:
            solve_crossing(g, w, ContinuationOptions(max_steps=3), eigenpair=pair)
        assert len(info.value.branch.points) == 4

    def test_p_mismatch(self, setup):
        w, pair, g = setup
        with pytest.raises(DomainError):
            solve_crossing(g, operator(0.75, 3.0, 16))

    @pytest.mark.parametrize("s, p", [(0.5, 1.5), (0.5, 3.0), (1.0, 2.0)])
    def test_other_parameters(self, s, p):
        w = operator(s, p, 32)
        pair = first_eigenpair(w, WeightFunction.constant(grid(32)))
        g = validate_crossing(catalog_crossing(0.2 * pair.lam, 3.0 * pair.lam, p), p, pair.lam)
        sol = solve_crossing(g, w, eigenpair=pair)
        assert sol.residual <= 1e-6
        assert positivity_check(sol.u)
