import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracplap.grid import (
    DiscreteFunction,
    DomainError,
    assemble_kernel,
    build_grid,
    cell_pair_weight,
    exterior_weight,
    offset_weight,
    tail_weight,
)
from fracplap.oracles import quad_offset_weight, quad_pair_weight_2d, quad_tail_weights

from conftest import grid

SP = [(s, p) for s in (0.25, 0.5, 0.75) for p in (1.5, 2.0, 3.0)]


class TestBuildGrid:
    def test_unit_interval(self):
        g = build_grid(0, 1, 4)
        assert g.cell_width == 0.25
        np.testing.assert_allclose(g.cell_centers, [0.125, 0.375, 0.625, 0.875])

    def test_symmetric_interval(self):
        g = build_grid(-1, 1, 2)
        assert g.cell_width == 1.0
        np.testing.assert_allclose(g.cell_centers, [-0.5, 0.5])

    @pytest.mark.parametrize("a, b, N", [(0, 1, 1), (1, 0, 4), (0, 0, 4), (0, 1, 0)])
    def test_rejects(self, a, b, N):
        with pytest.raises(DomainError):
            build_grid(a, b, N)

    @given(st.floats(-10, 10), st.floats(0.1, 10), st.integers(2, 200))
    def test_centers_formula(self, a, length, N):
        g = build_grid(a, a + length, N)
        i = np.arange(N)
        np.testing.assert_allclose(g.cell_centers, a + (i + 0.5) * g.cell_width, rtol=1e-12, atol=1e-12)
        assert g.cell_measure == g.cell_width


class TestDiscreteFunction:
    def test_zero_outside(self):
        u = DiscreteFunction(grid(4), [1.0, 2.0, 3.0, 4.0])
        assert u(-0.1) == 0 and u(1.1) == 0
        assert u(0.3) == 2.0

    def test_values_read_only(self):
        u = DiscreteFunction(grid(4), np.ones(4))
        with pytest.raises(ValueError):
            u.values[0] = 5.0

    def test_wrong_length(self):
        with pytest.raises(DomainError):
            DiscreteFunction(grid(4), np.ones(3))


class TestWeights:
    @pytest.mark.parametrize("s, p", SP)
    def test_offsets_match_quadrature(self, s, p):
        ks = [1, 2, 3, 7, 8, 9, 40]
        ours = offset_weight(ks, s, p)
        ref = [quad_offset_weight(k, s, p) for k in ks]
        np.testing.assert_allclose(ours, ref, rtol=1e-10)

    @pytest.mark.parametrize("s, p", [(0.5, 2.0), (0.25, 3.0), (0.75, 1.5)])
    def test_nested_2d_spot_check(self, s, p):
        g = grid(16)
        for i, j in [(0, 2), (3, 10), (15, 1)]:
            assert cell_pair_weight(g, i, j, s, p) == pytest.approx(quad_pair_weight_2d(g, i, j, s, p), rel=1e-10)

    @pytest.mark.parametrize("s, p", SP)
    def test_tails_match_quadrature(self, s, p):
        ref = quad_tail_weights(12, s, p)
        ours = [tail_weight(m, s, p) for m in range(1, 13)]
        np.testing.assert_allclose(ours, ref, rtol=1e-10)

    def test_diagonal_rejected(self):
        with pytest.raises(DomainError):
            cell_pair_weight(grid(8), 3, 3, 0.5, 2.0)

    @pytest.mark.parametrize("s, p", [(0.0, 2.0), (1.0, 2.0), (0.5, 1.0)])
    def test_parameter_domain(self, s, p):
        with pytest.raises(DomainError):
            offset_weight(1, s, p)

    def test_continuous_across_sp_one(self):
        # no special branch at sp = 1: nearby exponents give nearby weights
        mid = offset_weight([1, 2, 5], 0.5, 2.0)
        for ds in (-1e-6, 1e-6):
            np.testing.assert_allclose(offset_weight([1, 2, 5], 0.5 + ds, 2.0), mid, rtol=1e-4)

    def test_boundary_cell_has_more_exterior_mass(self):
        g = grid(16)
        assert exterior_weight(g, 0, 0.5, 2.0) > exterior_weight(g, 5, 0.5, 2.0)

    @pytest.mark.parametrize("i", [0, 3, 7])
    def test_exterior_mirror(self, i):
        g = grid(16)
        assert exterior_weight(g, i, 0.3, 3.0) == pytest.approx(exterior_weight(g, 15 - i, 0.3, 3.0), rel=1e-15)


class TestAssembly:
    def test_structure_n4(self):
        w = assemble_kernel(grid(4), 0.5, 2.0, 1.0)
        W = w.interior
        assert np.array_equal(W, W.T)
        assert np.all(np.diag(W) == 0)
        upper = W[np.triu_indices(4, 1)]
        assert upper.size == 6 and np.all(upper > 0)
        assert w.bbm_factor == 0.5

    @pytest.mark.parametrize("s, p", SP)
    def test_invariants(self, s, p):
        w = assemble_kernel(grid(32), s, p, 1.0)
        W = w.interior
        assert np.array_equal(W, W.T)
        assert np.all(W[~np.eye(32, dtype=bool)] > 0)
        assert np.all(np.diff(W[0, 1:]) < 0)
        assert np.all(w.exterior > 0)

    def test_immutable(self):
        w = assemble_kernel(grid(8), 0.5, 2.0, 1.0)
        with pytest.raises(ValueError):
            w.interior[0, 1] = 0.0

    @pytest.mark.parametrize("s, p", [(0.5, 2.0), (0.3, 1.5)])
    def test_self_similar_under_refinement(self, s, p):
        coarse = assemble_kernel(grid(16), s, p, 1.0)
        fine = assemble_kernel(grid(32), s, p, 1.0)
        ratio = 2.0 ** (1.0 - s * p)
        np.testing.assert_allclose(coarse.interior[0, 1:], ratio * fine.interior[0, 1:16], rtol=1e-13)

    def test_thread_count_bit_identical(self):
        a = assemble_kernel(grid(64), 0.4, 2.5, 1.0, threads=1)
        b = assemble_kernel(grid(64), 0.4, 2.5, 1.0, threads=4)
        assert np.array_equal(a.interior, b.interior) and np.array_equal(a.exterior, b.exterior)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(1.1, 4.0))
    def test_weights_finite_for_any_sp(self, s, p):
        w = assemble_kernel(grid(16), s, p, 1.0)
        assert np.all(np.isfinite(w.interior)) and np.all(np.isfinite(w.exterior))
