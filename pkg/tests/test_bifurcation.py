import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracplap.bifurcation import (
    Branch,
    BranchPoint,
    ContinuationOptions,
    DegenerateIndexError,
    Nonlinearity,
    branch_sign_scan,
    continue_branch,
    extrapolate_intercept,
    index_along_homotopy,
    jacobian,
    leray_schauder_index_p2,
    relative_residual,
    residual_map,
    sign_class,
)
from fracplap.checks import jacobian_fd_error
from fracplap.eigen import WeightFunction, first_eigenpair, full_spectrum_p2
from fracplap.energy import seminorm, stiffness_matrix
from fracplap.grid import DiscreteFunction, DomainError

from conftest import grid, operator


def ones(N):
    return WeightFunction.constant(grid(N))


@pytest.fixture(scope="module")
def cubic_branch():
    w = operator(0.5, 2.0, 128)
    return continue_branch(w, Nonlinearity.cubic(), 1, ContinuationOptions(max_steps=50))


class TestNonlinearity:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_cubic_valid(self, p):
        Nonlinearity.cubic().validate(p)

    def test_expression(self):
        f = Nonlinearity.from_expression("-t^3*(1 + x)")
        assert f(np.array([0.5]), np.array([2.0]), 0.0)[0] == pytest.approx(-12.0)
        f.validate(2.0)

    @pytest.mark.parametrize("src", ["t", "0.5*t + t^3", "1 + t^3", "sin(t)"])
    def test_rejects_not_small_at_zero(self, src):
        with pytest.raises(DomainError):
            Nonlinearity.from_expression(src).validate(2.0)

    def test_odd_power_growth(self):
        f = Nonlinearity.odd_power(-2.0, 3.5)
        assert f.growth_exponent == 3.5
        f.validate(3.0)


class TestResidual:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    @pytest.mark.parametrize("lam", [-5.0, 0.0, 3.7, 1e4])
    def test_trivial_line(self, p, lam):
        G = residual_map(DiscreteFunction(grid(32), np.zeros(32)), lam, operator(0.5, p, 32), Nonlinearity.cubic())
        assert np.all(G.values == 0)

    @pytest.mark.parametrize("s", [0.3, 0.75, 1.0])
    @pytest.mark.parametrize("t", [1e-4, 1e-2, 1.0])
    def test_eigenvector_on_linear_problem(self, s, t):
        w = operator(s, 2.0, 64)
        spec = full_spectrum_p2(w, ones(64), 1)
        u = spec.eigenvectors[0].scaled(t)
        G = residual_map(u, spec.eigenvalues[0], w, Nonlinearity.zero())
        assert np.max(np.abs(G.values)) <= 1e-8 * t

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_energy_pairing(self, p, rng):
        w = operator(0.4, p, 32)
        lam = 2.5
        u, d = rng.standard_normal(32), rng.standard_normal(32)
        cell = grid(32).cell_measure

        def E(v):
            return w.bbm_factor / p * seminorm(w, v) - lam * cell * np.sum(np.abs(v) ** p) / p

        eps = 1e-5
        fd = (E(u + eps * d) - E(u - eps * d)) / (2 * eps)
        G = residual_map(DiscreteFunction(grid(32), u), lam, w, Nonlinearity.zero()).values
        assert fd == pytest.approx(float(G @ d), rel=1e-6)

    def test_grid_mismatch(self):
        with pytest.raises(DomainError):
            residual_map(DiscreteFunction(grid(16), np.ones(16)), 1.0, operator(0.5, 2.0, 32), Nonlinearity.zero())

    def test_relative_residual_zero_on_trivial(self):
        assert relative_residual(np.zeros(16), 2.0, operator(0.5, 2.0, 16), Nonlinearity.cubic()) == 0.0


class TestJacobian:
    @pytest.mark.parametrize("s", [0.3, 0.8, 1.0])
    def test_p2_matrix_form(self, s, rng):
        w = operator(s, 2.0, 32)
        lam = 4.2
        J = jacobian(rng.standard_normal(32), lam, w, Nonlinearity.zero())
        ref = w.bbm_factor * stiffness_matrix(w) - lam * grid(32).cell_measure * np.eye(32)
        assert np.max(np.abs(J[:, :32] - ref)) <= 1e-12 * np.max(np.abs(ref))

    @pytest.mark.parametrize("s", [0.3, 0.8, 1.0])
    def test_degenerate_at_zero_for_p_above_2(self, s):
        J = jacobian(np.zeros(32), 3.0, operator(s, 3.0, 32), Nonlinearity.zero())
        assert np.all(J == 0)
        # a cubic f only adds its central-difference error, O(fd_step^2)
        J = jacobian(np.zeros(32), 3.0, operator(s, 3.0, 32), Nonlinearity.cubic(), fd_step=1e-6)
        assert np.max(np.abs(J)) <= 1e-12

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    @pytest.mark.parametrize("s", [0.3, 0.7, 1.0])
    def test_fd_columns(self, s, p, rng):
        u = 0.5 * rng.standard_normal(24)
        lam = rng.uniform(-3, 10)
        assert jacobian_fd_error(operator(s, p, 24), Nonlinearity.cubic(), u, lam) <= 1e-5

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), lam=st.floats(-10, 10))
    def test_fd_columns_random_expression(self, seed, lam):
        rng = np.random.default_rng(seed)
        f = Nonlinearity.from_expression("-t^3*(1 + x^2) + lambda*t^5")
        assert jacobian_fd_error(operator(0.6, 2.0, 16), f, rng.standard_normal(16), lam) <= 1e-5


class TestContinuation:
    def test_intercept_and_signs(self, cubic_branch):
        lam1 = first_eigenpair(operator(0.5, 2.0, 128), ones(128)).lam
        assert extrapolate_intercept(cubic_branch) == pytest.approx(lam1, rel=0.01)
        scan = branch_sign_scan(cubic_branch)
        assert scan.ok and scan.checked >= 40
        assert scan.classes[0] == "zero"
        assert set(scan.classes[1:]) == {"positive"}

    def test_points_converged(self, cubic_branch):
        tol = ContinuationOptions().newton_tol
        assert all(pt.residual <= tol for pt in cubic_branch.points[1:])
        assert cubic_branch.termination == "max_steps"
        amps = cubic_branch.amplitudes[1:]
        assert np.all(amps > 0)
        # amplitude grows near the start
        assert np.all(np.diff(amps[:10]) > 0)

    def test_cubic_branch_bends_right(self, cubic_branch):
        lam = cubic_branch.lambdas
        assert lam[-1] > lam[1]

    def test_mirror_branch(self, cubic_branch):
        w = operator(0.5, 2.0, 128)
        mirror = continue_branch(w, Nonlinearity.cubic(), -1, ContinuationOptions(max_steps=8, max_amplitude=3.0))
        for a, b in zip(cubic_branch.points[:8], mirror.points[:8]):
            assert b.lam == pytest.approx(a.lam, rel=1e-9)
            assert np.max(np.abs(a.u.values + b.u.values)) <= 1e-8 * max(1.0, np.max(np.abs(a.u.values)))
        assert set(branch_sign_scan(mirror).classes[1:]) == {"negative"}

    def test_vertical_linear_branch(self):
        w = operator(0.5, 2.0, 64)
        br = continue_branch(w, Nonlinearity.zero(), 1, ContinuationOptions(max_steps=15))
        lam1 = br.start[0]
        assert np.max(np.abs(br.lambdas - lam1)) <= 1e-6 * lam1
        assert br.amplitudes[-1] > br.amplitudes[1]

    @pytest.mark.parametrize("p, s", [(1.5, 0.5), (3.0, 0.5), (3.0, 1.0)])
    def test_other_p(self, p, s):
        br = continue_branch(operator(s, p, 32), Nonlinearity.cubic(), 1, ContinuationOptions(max_steps=12))
        assert br.termination == "max_steps"
        assert len(br.points) == 13  # trivial start plus 12 steps
        assert branch_sign_scan(br).ok

    def test_termination_modes(self):
        w = operator(0.5, 2.0, 32)
        f = Nonlinearity.cubic()
        assert continue_branch(w, f, 1, ContinuationOptions(max_steps=5)).termination == "max_steps"
        assert continue_branch(w, f, 1, ContinuationOptions(max_amplitude=0.2)).termination == "max_amplitude"
        br = continue_branch(w, f, 1, ContinuationOptions(lambda_max=12.0))
        assert br.termination == "lambda_bound"
        assert continue_branch(w, f, 1, ContinuationOptions(newton_max_iter=0)).termination == "newton_failure"

    def test_bad_direction(self):
        with pytest.raises(DomainError):
            continue_branch(operator(0.5, 2.0, 16), Nonlinearity.cubic(), 0)


class TestSignScan:
    def test_corrupted_point(self, cubic_branch):
        pts = list(cubic_branch.points)
        bad = pts[7].u.values.copy()
        bad[3] = -bad[3]
        pts[7] = BranchPoint(pts[7].lam, DiscreteFunction(pts[7].u.grid, bad), 0.0, 0.0, "positive", 7)
        scan = branch_sign_scan(Branch(tuple(pts), cubic_branch.start, "max_steps", 1))
        assert not scan.ok
        assert scan.first_violation == 7

    @pytest.mark.parametrize(
        "v, cls",
        [([0, 0], "zero"), ([1, 2], "positive"), ([-1, -2], "negative"), ([1, -1], "sign-changing"), ([0, 1], "sign-changing")],
    )
    def test_sign_class(self, v, cls):
        assert sign_class(np.array(v, dtype=float)) == cls


class TestIndex:
    @pytest.mark.parametrize("s", [0.3, 0.5, 0.7, 0.9, 1.0])
    def test_values(self, s):
        spec = full_spectrum_p2(operator(s, 2.0, 64), ones(64), 3)
        l1, l2 = spec.eigenvalues[:2]
        assert leray_schauder_index_p2(0.5 * l1, spec) == 1
        assert leray_schauder_index_p2(0.5 * (l1 + l2), spec) == -1
        assert leray_schauder_index_p2(l1 * (1 - 1e-3), spec) == 1
        assert leray_schauder_index_p2(l1 * (1 + 1e-3), spec) == -1
        with pytest.raises(DegenerateIndexError):
            leray_schauder_index_p2(l1, spec)

    def test_homotopy_constant(self):
        s_values = np.linspace(0.3, 1.0, 8)
        rows = index_along_homotopy(s_values, grid(64))
        assert [r[2] for r in rows] == [-1] * 8
        rows = index_along_homotopy(s_values, grid(64), selector="below")
        assert [r[2] for r in rows] == [1] * 8
