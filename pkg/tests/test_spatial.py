import numpy as np
import pytest
import scipy.sparse as sp

from stgp.spatial import (
    SpatialDomain,
    build_kernel_system,
    build_knot_grid,
    car_conditional,
    car_precision,
    default_bandwidth,
    kernel_matrix,
    kernel_value,
    sample_car,
    standardize_kernels,
)
from tests.conftest import make_domain


def chain_grid(L):
    domain = SpatialDomain(np.arange(1.0, L + 1.0).reshape(-1, 1))
    return build_knot_grid(domain, (L,))


class TestDomain:
    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            SpatialDomain([[1.0, 2.0], [1.0, 2.0]])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            SpatialDomain([[np.inf, 0.0]])


class TestKnotGrid:
    def test_two_endpoint_knots_1d(self):
        domain = SpatialDomain([[1.0], [2.5], [4.0]])
        grid = build_knot_grid(domain, (2,))
        np.testing.assert_array_equal(grid.knots.ravel(), [1.0, 4.0])
        np.testing.assert_array_equal(grid.counts, [1, 1])
        np.testing.assert_array_equal(grid.neighbors[0], [1])
        np.testing.assert_array_equal(grid.neighbors[1], [0])

    def test_benchmark_grid_degrees(self):
        grid = build_knot_grid(make_domain(30), (15, 15))
        assert grid.L == 225
        corner = grid.counts[[0, 14, 210, 224]]
        np.testing.assert_array_equal(corner, [2, 2, 2, 2])
        interior = grid.counts.reshape(15, 15)[1:-1, 1:-1]
        assert np.all(interior == 4)
        # rook adjacency: knots adjacent iff one step along one axis
        k = grid.knots
        for l in (0, 7, 112):
            d = np.abs(k[grid.neighbors[l]] - k[l])
            assert np.all((d > 0).sum(axis=1) == 1)

    def test_degenerate_single_knot(self):
        domain = SpatialDomain([[0.0], [1.0]])
        grid = build_knot_grid(domain, (1,))
        assert grid.L == 1
        assert grid.counts[0] == 0
        with pytest.raises(ValueError):
            car_precision(grid, 0.5)

    def test_dims_length_mismatch(self):
        with pytest.raises(ValueError):
            build_knot_grid(make_domain(5), (5,))

    def test_adjacency_symmetric_irreflexive(self):
        grid = build_knot_grid(make_domain(6), (3, 4))
        A = grid.adjacency.toarray()
        np.testing.assert_array_equal(A, A.T)
        assert np.all(np.diag(A) == 0)
        np.testing.assert_array_equal(A.sum(axis=1), grid.counts)


class TestKernel:
    def test_kernel_value_examples(self):
        assert kernel_value(0.0, 2.0) == 1.0
        assert kernel_value(6.0, 2.0) == 0.0
        assert abs(kernel_value(2.0, 2.0) - 0.606531) < 1e-6

    def test_single_location_single_knot(self):
        domain = SpatialDomain([[3.0]])
        grid = build_knot_grid(domain, (1,))
        K = kernel_matrix(domain, grid, 1.0)
        np.testing.assert_array_equal(K.toarray(), [[1.0]])

    def test_midway_location_row(self):
        domain = SpatialDomain([[0.0], [1.0], [2.0]])
        grid = build_knot_grid(domain, (2,))
        K = kernel_matrix(domain, grid, 1.0).toarray()
        np.testing.assert_allclose(K[1], [0.6065, 0.6065], atol=1e-4)

    def test_uncovered_location_error(self):
        domain = SpatialDomain([[0.0], [1.0], [2.0]])
        grid = build_knot_grid(domain, (2,))
        with pytest.raises(ValueError, match="location 1"):
            kernel_matrix(domain, grid, 0.25)

    def test_compact_support_vs_brute_force(self):
        domain = make_domain(8)
        grid = build_knot_grid(domain, (4, 4))
        sigma_h = 1.3
        K = kernel_matrix(domain, grid, sigma_h)
        dist = np.linalg.norm(
            domain.locations[:, None, :] - grid.knots[None, :, :], axis=2)
        np.testing.assert_array_equal(K.toarray() != 0, dist < 3 * sigma_h)

    def test_default_bandwidth_is_min_knot_spacing(self):
        grid = build_knot_grid(make_domain(30), (15, 15))
        assert default_bandwidth(grid) == pytest.approx(29 / 14)


class TestCar:
    def test_two_knot_chain(self):
        car = car_precision(chain_grid(2), 0.5)
        np.testing.assert_allclose(car.Q, [[1, -0.5], [-0.5, 1]])
        det = np.prod(np.diag(car.chol)) ** 2
        assert det == pytest.approx(0.75)

    def test_theta_to_zero_limit(self):
        grid = chain_grid(5)
        car = car_precision(grid, 1e-9)
        np.testing.assert_allclose(car.Q, np.diag(grid.counts), atol=1e-8)

    def test_three_knot_chain(self):
        car = car_precision(chain_grid(3), 0.9)
        np.testing.assert_allclose(
            car.Q, [[1, -0.9, 0], [-0.9, 2, -0.9], [0, -0.9, 1]])
        assert np.all(np.linalg.eigvalsh(car.Q) > 0)

    @pytest.mark.parametrize("theta", [0.1, 0.5, 0.9, 0.99])
    def test_positive_definite(self, theta):
        car_precision(chain_grid(8), theta)
        car_precision(build_knot_grid(make_domain(10), (5, 5)), theta)

    @pytest.mark.parametrize("theta", [0.0, 1.0, -0.2, 1.3])
    def test_theta_contract(self, theta):
        with pytest.raises(ValueError):
            car_precision(chain_grid(3), theta)

    def test_quad_form_matches_dense(self):
        car = car_precision(build_knot_grid(make_domain(8), (4, 4)), 0.8)
        rng = np.random.default_rng(1)
        for _ in range(5):
            a = rng.standard_normal(car.L)
            assert car.quad_form(a) == pytest.approx(a @ car.Q @ a, rel=1e-12)

    def test_conditional_examples(self):
        car = car_precision(chain_grid(3), 0.9)
        mean, var = car_conditional([1.0, 5.0, 3.0], 1, car)
        assert mean == pytest.approx(1.8)
        assert var == pytest.approx(0.5)
        mean, var = car_conditional(np.zeros(3), 0, car)
        assert mean == 0.0
        assert var == 1.0
        grid2 = build_knot_grid(make_domain(2), (2, 2))
        car2 = car_precision(grid2, 0.77)
        a = np.zeros(4)
        a[grid2.neighbors[0]] = [2.0, -2.0]
        mean, var = car_conditional(a, 0, car2)
        assert mean == 0.0
        assert var == pytest.approx(0.5)


class TestSampleCar:
    def test_deterministic_given_seed(self):
        car = car_precision(chain_grid(4), 0.5)
        a1 = sample_car(car, np.random.default_rng(7))
        a2 = sample_car(car, np.random.default_rng(7))
        np.testing.assert_array_equal(a1, a2)

    def test_empirical_covariance(self):
        car = car_precision(chain_grid(2), 0.5)
        rng = np.random.default_rng(11)
        draws = np.array([sample_car(car, rng) for _ in range(10_000)])
        emp = draws.T @ draws / len(draws)
        target = np.linalg.inv(car.Q)
        se = np.sqrt((np.outer(np.diag(target), np.diag(target))
                      + target ** 2) / len(draws))
        assert np.all(np.abs(emp - target) < 3 * se)

    def test_lag_one_correlation_increases_with_theta(self):
        grid = chain_grid(20)
        rng = np.random.default_rng(12)

        def lag1(theta):
            car = car_precision(grid, theta)
            draws = np.array([sample_car(car, rng) for _ in range(2000)])
            x, y = draws[:, :-1].ravel(), draws[:, 1:].ravel()
            return np.corrcoef(x, y)[0, 1]

        assert lag1(0.99) > lag1(0.1)


class TestStandardization:
    def test_weight_is_sqrt_of_diagonal(self):
        car = car_precision(chain_grid(2), 0.5)
        K = sp.csr_matrix(np.array([[1.0, 0.0]]))
        ks = standardize_kernels(K, car)
        assert ks.weights[0] == pytest.approx(np.sqrt(4.0 / 3.0))
        Kt = ks.K_tilde.toarray()
        var = (Kt @ np.linalg.inv(car.Q) @ Kt.T)[0, 0]
        assert var == pytest.approx(1.0)

    def test_idempotence(self):
        domain = make_domain(6)
        grid = build_knot_grid(domain, (3, 3))
        ks = build_kernel_system(domain, grid, 0.7)
        again = standardize_kernels(ks.K_tilde, ks.car)
        np.testing.assert_allclose(again.weights, 1.0, atol=1e-12)
        np.testing.assert_allclose(
            again.K_tilde.toarray(), ks.K_tilde.toarray(), atol=1e-12)

    @pytest.mark.parametrize("theta", [0.3, 0.9, 0.99])
    def test_unit_prior_variance(self, theta):
        domain = make_domain(10)
        grid = build_knot_grid(domain, (5, 5))
        ks = build_kernel_system(domain, grid, theta)
        Kt = ks.K_tilde.toarray()
        diag = np.diag(Kt @ ks.car.solve(Kt.T))
        assert np.max(np.abs(diag - 1.0)) < 1e-8

    def test_scaling_invariance(self):
        domain = make_domain(6)
        grid = build_knot_grid(domain, (3, 3))
        sigma_h = default_bandwidth(grid)
        ks = build_kernel_system(domain, grid, 0.8, sigma_h=sigma_h)
        c = 3.7
        scaled_domain = SpatialDomain(domain.locations * c)
        scaled_grid = build_knot_grid(scaled_domain, (3, 3))
        ks2 = build_kernel_system(scaled_domain, scaled_grid, 0.8,
                                  sigma_h=c * sigma_h)
        np.testing.assert_allclose(ks2.K.toarray(), ks.K.toarray(), atol=1e-12)
        np.testing.assert_allclose(ks2.weights, ks.weights, atol=1e-12)

    def test_restandardize_matches_fresh_build(self):
        domain = make_domain(8)
        grid = build_knot_grid(domain, (4, 4))
        ks = build_kernel_system(domain, grid, 0.9)
        car2 = car_precision(grid, 0.4)
        moved = ks.restandardize(car2)
        fresh = build_kernel_system(domain, grid, 0.4)
        np.testing.assert_allclose(moved.weights, fresh.weights, atol=1e-13)
        for l in range(grid.L):
            np.testing.assert_allclose(moved.col_tilde[l], fresh.col_tilde[l],
                                       atol=1e-13)

    def test_all_zero_row_rejected(self):
        car = car_precision(chain_grid(2), 0.5)
        K = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(ValueError, match="all-zero"):
            standardize_kernels(K, car)
