import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import exp1

from eulerlimit import _backend, _fallback
from eulerlimit.errors import ConfigError, SingularConfigurationError, SingularPointError
from eulerlimit.green import (
    GreenKernel,
    GreenTable,
    choose_ewald_parameters,
    fourier_tail_bound,
    real_tail_bound,
    reduce_to_cell,
    singular_part,
    torus_distance,
    zero_mean_residual,
)
from eulerlimit.oracle import green_grad_fd, green_grad_oracle, green_oracle, green_oracle_many

# g(0.3, 0.4) and its gradient on T^2, from the row-summed Fourier oracle;
# confirmed against the Jacobi-theta closed form at 30 digits
G2_AT_P = -0.042226793020585913
GRAD2_AT_P = (-0.09470119080755687, -0.07761101340236742)
# g(0.01, 0, 0) on T^3 from the same oracle
G3_NEAR = 7.731978864294147
# simple-cubic jellium Madelung constant: g0(0) = -M / (4 pi) on T^3
MADELUNG_SC = 2.837297479480619


def theta_green(x, y):
    """Square-torus Green function from the Jacobi theta function (|y| <= 1/2)."""
    q = mp.exp(-mp.pi)
    eta = mp.gamma(0.25) / (2 * mp.pi**0.75)
    z = mp.pi * mp.mpc(x, y)
    return float(-mp.log(abs(mp.jtheta(1, z, q) / eta)) / (2 * mp.pi) + y * y / 2)


def g0_square_closed_form():
    eta = mp.gamma(0.25) / (2 * mp.pi**0.75)
    return float(-mp.log(2 * mp.pi * eta**2) / (2 * mp.pi))


coord = st.floats(-0.5, 0.5, allow_nan=False, exclude_max=True)


class TestOracle:
    def test_matches_theta_closed_form(self):
        rng = np.random.default_rng(7)
        for p in rng.random((12, 2)) - 0.5:
            assert green_oracle(p) == pytest.approx(theta_green(*p), abs=1e-13)

    def test_frozen_values(self):
        assert green_oracle(np.array([0.3, 0.4])) == pytest.approx(G2_AT_P, abs=1e-15)
        assert green_oracle(np.array([0.01, 0.0, 0.0])) == pytest.approx(G3_NEAR, abs=1e-12)

    def test_gradient_analytic_vs_difference(self):
        p = np.array([0.3, 0.4])
        np.testing.assert_allclose(green_grad_oracle(p), GRAD2_AT_P, atol=1e-14)
        np.testing.assert_allclose(green_grad_fd(p), GRAD2_AT_P, atol=1e-9)


class TestParameters:
    def test_defaults_meet_budget(self):
        for d in (2, 3):
            a, K = choose_ewald_parameters(d, 1e-9, 0.5)
            assert real_tail_bound(a, 0.5, d) <= 1e-9 / 4
            assert fourier_tail_bound(a, K, d) <= 1e-9 / 4
            assert fourier_tail_bound(a, K - 1, d) > 1e-9 / 4

    def test_default_parameters_regression(self, kernel2, kernel3):
        assert kernel2.ewald_split == pytest.approx(9.50248, abs=1e-5)
        assert kernel2.fourier_cutoff == 13 and kernel2.n_modes == 364
        assert kernel3.ewald_split == pytest.approx(9.93268, abs=1e-5)
        assert kernel3.fourier_cutoff == 15 and kernel3.n_modes == 14895

    def test_bad_arguments(self):
        with pytest.raises(ConfigError):
            GreenKernel(4)
        with pytest.raises(ConfigError):
            GreenKernel(2, tolerance=-1)


class TestEvaluation:
    def test_against_oracle_2d(self, kernel2, rng):
        pts = rng.random((200, 2)) - 0.5
        assert np.max(np.abs(kernel2.eval_g(pts) - green_oracle_many(pts))) < 1e-10

    def test_against_oracle_3d(self, kernel3, rng):
        pts = rng.random((100, 3)) - 0.5
        assert np.max(np.abs(kernel3.eval_g(pts) - green_oracle_many(pts))) < 1e-10

    def test_frozen_points(self, kernel2, kernel3):
        assert kernel2.eval_g(np.array([0.3, 0.4])) == pytest.approx(G2_AT_P, abs=1e-10)
        np.testing.assert_allclose(kernel2.eval_grad_g(np.array([0.3, 0.4])), GRAD2_AT_P, atol=1e-9)
        assert kernel3.eval_g(np.array([0.01, 0.0, 0.0])) == pytest.approx(G3_NEAR, abs=1e-9)

    def test_g0_literature_constants(self, kernel2, kernel3):
        assert kernel2.g0_at_origin() == pytest.approx(g0_square_closed_form(), abs=1e-10)
        assert kernel3.g0_at_origin() == pytest.approx(-MADELUNG_SC / (4 * math.pi), abs=1e-10)

    def test_gradient_against_oracle(self, kernel3, rng):
        pts = rng.random((20, 3)) - 0.5
        want = np.array([green_grad_oracle(p) for p in pts])
        np.testing.assert_allclose(kernel3.eval_grad_g(pts), want, atol=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.tuples(coord, coord))
    def test_symmetries_2d(self, p):
        k = GreenKernel(2)
        x = np.array(p)
        if np.hypot(*x) < 1e-3:
            return
        g = k.eval_g(x)
        assert k.eval_g(-x) == pytest.approx(g, abs=1e-12)
        assert k.eval_g(x[::-1]) == pytest.approx(g, abs=1e-12)
        assert k.eval_g(x + np.array([1.0, -2.0])) == pytest.approx(g, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.tuples(coord, coord, coord))
    def test_symmetries_3d(self, p):
        k = _k3()
        x = np.array(p)
        if np.linalg.norm(x) < 1e-3:
            return
        g = k.eval_g(x)
        assert k.eval_g(-x) == pytest.approx(g, abs=1e-12)
        assert k.eval_g(x[[2, 0, 1]]) == pytest.approx(g, abs=1e-12)

    def test_origin_raises(self, kernel2):
        with pytest.raises(SingularPointError):
            kernel2.eval_g(np.zeros(2))
        with pytest.raises(SingularPointError):
            kernel2.eval_grad_g(np.array([1.0, -1.0]))

    def test_dimension_mismatch(self, kernel2):
        with pytest.raises(ConfigError):
            kernel2.eval_g(np.array([0.1, 0.2, 0.3]))

    def test_singular_part_dominates_near_origin(self, kernel3):
        x = np.array([1e-4, 0.0, 0.0])
        assert kernel3.eval_g(x) - singular_part(x, 3) == pytest.approx(kernel3.g0_at_origin(), abs=1e-6)

    def test_near_field_remainder_continuous(self, kernel2):
        assert kernel2.near_field_remainder(np.array([1e-5, 0.0])) == pytest.approx(
            kernel2.near_field_remainder(np.zeros(2)), abs=1e-9
        )

    def test_tensor_grid_matches_pointwise(self, kernel3):
        ax = [np.array([-0.31, 0.07]), np.array([0.2, -0.45, 0.11]), np.array([0.013, 0.4])]
        grid = kernel3.eval_g_tensor(ax)
        pts = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, 3)
        np.testing.assert_allclose(grid.ravel(), kernel3.eval_g(pts), atol=1e-12)

    def test_zero_mean(self, kernel2, kernel3):
        assert abs(zero_mean_residual(kernel2)) < 1e-10
        assert abs(zero_mean_residual(kernel3, n=64)) < 1e-10


_K3 = []


def _k3():
    if not _K3:
        _K3.append(GreenKernel(3))
    return _K3[0]


class TestPairSums:
    def test_potential_equals_pointwise_sum(self, kernel2, rng):
        x = rng.random((30, 2)) - 0.5
        i, j = np.where(~np.eye(30, dtype=bool))
        want = float(np.sum(green_oracle_many(x[i] - x[j])))
        _, pot, _, _ = kernel2.pair_sums(x, want_pot=True)
        assert pot == pytest.approx(want, abs=1e-9)

    def test_forces_consistent(self, kernel3, rng):
        x = rng.random((25, 3)) - 0.5
        allf = kernel3.all_forces(x, 0.7)
        for i in (0, 7, 24):
            np.testing.assert_allclose(kernel3.total_force(x, i, 0.7), allf[i], atol=1e-11)

    def test_min_distance(self, kernel2):
        x = np.array([[0.49, 0.0], [-0.49, 0.0], [0.1, 0.3]])
        _, _, dmin, pair = kernel2.pair_sums(x)
        assert dmin == pytest.approx(0.02, abs=1e-14) and pair == (0, 1)

    def test_coincident_particles(self, kernel2):
        x = np.array([[0.1, 0.2], [0.3, 0.3], [0.1, 0.2]])
        with pytest.raises(SingularConfigurationError) as info:
            kernel2.pair_sums(x)
        assert info.value.pair == (0, 2)
        with pytest.raises(SingularConfigurationError):
            kernel2.total_force(x, 2, 1.0)

    def test_single_particle(self, kernel2):
        grad, pot, dmin, pair = kernel2.pair_sums(np.array([[0.1, 0.1]]), want_pot=True)
        assert abs(pot) < 1e-14 and dmin == math.inf and pair is None
        assert np.max(np.abs(grad)) < 1e-14

    def test_momentum_conservation(self, kernel2, rng):
        x = rng.random((40, 2)) - 0.5
        assert np.max(np.abs(kernel2.all_forces(x, 0.5).sum(axis=0))) < 1e-10


@pytest.mark.skipif("compiled" not in _backend.available(), reason="extension not built")
class TestBackends:
    @pytest.mark.parametrize("d", [2, 3])
    def test_agree(self, d, rng):
        k = GreenKernel(d)
        comp = _backend.available()["compiled"]
        x = rng.random((120, d)) - 0.5
        args = (x, k._shifts, k.ewald_split, k.real_cutoff**2, True)
        g1, p1, m1, a1 = _fallback.real_space_sums(*args)
        g2, p2, m2, a2 = comp.real_space_sums(*args)
        np.testing.assert_allclose(g1, g2, atol=1e-12)
        assert p1.sum() == pytest.approx(p2.sum(), abs=1e-11)
        np.testing.assert_array_equal(m1, m2)
        np.testing.assert_array_equal(a1, a2)
        f1, q1 = _fallback.fourier_sums(x, k._modes, k._coef, k.fourier_cutoff, True)
        f2, q2 = comp.fourier_sums(x, k._modes, k._coef, k.fourier_cutoff, True)
        np.testing.assert_allclose(f1, f2, atol=1e-12)
        assert q1 == pytest.approx(q2, abs=1e-10)

    def test_exp1(self):
        comp = _backend.available()["compiled"]
        xs = np.concatenate([np.geomspace(1e-8, 1.0, 60), np.linspace(1.0, 60.0, 120)])
        got = np.array([comp._exp1(v) for v in xs])
        np.testing.assert_allclose(got, exp1(xs), rtol=1e-13)


class TestTable:
    def test_round_trip(self, tmp_path):
        k = GreenKernel(2, table_resolution=32)
        path = tmp_path / "g0.bin"
        k.table.write(path)
        back = GreenTable.read(path)
        assert back.dimension == 2 and back.resolution == 32
        assert back.ewald_split == k.ewald_split
        np.testing.assert_array_equal(back.samples, k.table.samples)

    def test_interpolation_accuracy(self, kernel2):
        pts = np.random.default_rng(3).random((50, 2)) * 0.4 - 0.2
        exact = kernel2.near_field_remainder(pts)
        errs = [np.max(np.abs(kernel2.build_table(r).interpolate(pts) - exact)) for r in (32, 64)]
        assert errs[1] < 1e-5
        # cubic splines: at least third-order convergence under refinement
        assert errs[0] / errs[1] > 8

    def test_bad_file(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"XXXX" + bytes(40))
        with pytest.raises(ConfigError):
            GreenTable.read(path)

    def test_odd_resolution(self, kernel2):
        with pytest.raises(ConfigError):
            kernel2.build_table(33)


def test_reduce_and_distance():
    np.testing.assert_array_equal(reduce_to_cell(np.array([0.5, -0.5, 1.25])), [-0.5, -0.5, 0.25])
    assert torus_distance(np.array([0.45, 0.0]), np.array([-0.45, 0.0])) == pytest.approx(0.1)
