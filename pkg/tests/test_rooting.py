import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbdoa.array_model import ArrayGeometry, design_beamspace, sector_gain, transmit_steering
from tbdoa.rooting import (
    LaurentPoly,
    RootingError,
    angle_grid,
    build_blocking_matrix,
    build_projection_matrix,
    count_near_circle,
    estimate_doa,
    estimate_doas,
    find_roots,
    grid_oracle,
    inner_roots,
    laurent_from_hermitian,
    refine_double_root,
    root_to_angle,
    select_root,
    steering_correlation,
    transmit_beampattern,
)

M = 10


@pytest.fixture(scope="module")
def geom():
    return ArrayGeometry.random_receive(M=M, N=10, d_t=0.5, aperture=5.0, seed=2024)


@pytest.fixture(scope="module")
def W(geom):
    return design_beamspace(geom, (-15, 15), K=4).W


def z_of(theta_deg, d_t=0.5):
    return np.exp(-2j * np.pi * d_t * np.sin(np.deg2rad(theta_deg)))


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_hermitian(rng, n):
    A = crandn(rng, n, n)
    return A + A.conj().T


class TestBlocking:
    def test_zero_signature(self, W):
        npt.assert_array_equal(build_blocking_matrix(W, np.zeros(4)), W)

    def test_only_first_row_changes(self, W, geom):
        x = W.conj().T @ transmit_steering(geom, 8.0)
        V = build_blocking_matrix(W, x)
        npt.assert_array_equal(V[1:], W[1:])
        npt.assert_allclose(V[0], W[0] - x.conj())

    def test_annihilates_true_steering(self, W, geom):
        a = transmit_steering(geom, -11.0)
        V = build_blocking_matrix(W, W.conj().T @ a)
        npt.assert_allclose(a.conj() @ V, 0, atol=1e-13)

    def test_conventional_mimo_root_on_circle(self, geom):
        a = transmit_steering(geom, 15.0)
        V = build_blocking_matrix(np.eye(M), a)
        poly = laurent_from_hermitian(V @ V.conj().T)
        assert abs(poly(z_of(15.0))) < 1e-9

    def test_dimension_mismatch(self, W):
        with pytest.raises(ValueError):
            build_blocking_matrix(W, np.ones(3))


class TestProjection:
    def test_scale_invariance(self, W, geom):
        x = W.conj().T @ transmit_steering(geom, 6.0)
        G1 = build_projection_matrix(W, x)
        G2 = build_projection_matrix(W, 3 * np.exp(1j * np.pi / 7) * x)
        npt.assert_allclose(G2, G1, atol=1e-12)

    def test_annihilates_own_direction(self, W, geom):
        a = transmit_steering(geom, 6.0)
        G = build_projection_matrix(W, W.conj().T @ a)
        assert abs(a.conj() @ G @ a) < 1e-10

    def test_hermitian_psd_low_rank(self, W):
        rng = np.random.default_rng(1)
        G = build_projection_matrix(W, crandn(rng, 4))
        npt.assert_allclose(G, G.conj().T, atol=1e-12)
        ev = np.linalg.eigvalsh(G)
        assert ev.min() >= -1e-10
        assert np.sum(ev > 1e-10) == 3

    def test_zero_signature(self, W):
        with pytest.raises(ValueError):
            build_projection_matrix(W, np.zeros(4))


class TestLaurent:
    def test_identity(self):
        poly = laurent_from_hermitian(np.eye(M))
        assert poly.coefficient(0) == M
        assert np.count_nonzero(poly.coeffs) == 1

    def test_two_by_two_expansion(self):
        g = 0.3 - 0.8j
        poly = laurent_from_hermitian(np.array([[1, g], [np.conj(g), 1]]))
        npt.assert_allclose(poly.coeffs, [np.conj(g), 2, g])
        for phi in np.linspace(-3, 3, 7):
            z = np.exp(1j * phi)
            assert poly(z) == pytest.approx(2 + 2 * np.real(g * z), abs=1e-14)

    def test_quadratic_form_oracle(self):
        rng = np.random.default_rng(2)
        G = random_hermitian(rng, M)
        poly = laurent_from_hermitian(G)
        for phi in rng.uniform(-np.pi, np.pi, 10):
            z = np.exp(1j * phi)
            p = z ** np.arange(M)
            assert abs(poly(z) - p.conj() @ G @ p) < 1e-10

    def test_hermitian_coefficient_symmetry(self):
        poly = laurent_from_hermitian(random_hermitian(np.random.default_rng(3), M))
        npt.assert_allclose(poly.coeffs, poly.coeffs[::-1].conj(), atol=1e-14)

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValueError):
            laurent_from_hermitian(np.array([[1, 1], [0, 1]]))


class TestFindRoots:
    def test_quadratic_double_root(self):
        g = np.exp(0.7j)
        roots = find_roots(LaurentPoly(np.array([np.conj(g), 2, g])))
        # g z^2 + 2 z + conj(g) = g (z + conj(g))^2 for |g| = 1
        assert roots.size == 2
        npt.assert_allclose(roots, [-np.conj(g)] * 2, atol=1e-7)

    def test_degree_and_trimming(self):
        rng = np.random.default_rng(4)
        assert find_roots(laurent_from_hermitian(random_hermitian(rng, M))).size == 2 * (M - 1)
        # zero outer diagonals drop the degree
        G = random_hermitian(rng, M)
        G[0, -1] = G[-1, 0] = 0
        assert find_roots(laurent_from_hermitian(G)).size == 2 * (M - 2)

    def test_zero_polynomial(self):
        with pytest.raises(RootingError):
            find_roots(LaurentPoly(np.zeros(5, complex)))

    def test_conventional_mimo_single_circle_root(self, geom):
        V = build_blocking_matrix(np.eye(M), transmit_steering(geom, 15.0))
        roots = find_roots(laurent_from_hermitian(V @ V.conj().T))
        assert roots.size == 18
        assert count_near_circle(roots, 1e-6) == 1
        on = inner_roots(roots)[np.argmin(np.abs(1 - np.abs(inner_roots(roots))))]
        assert np.angle(on) == pytest.approx(-np.pi * np.sin(np.deg2rad(15)), abs=1e-7)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12))
def test_conjugate_reciprocal_root_pairs(seed, n):
    rng = np.random.default_rng(seed)
    roots = find_roots(laurent_from_hermitian(random_hermitian(rng, n)))
    for z in roots:
        assert np.min(np.abs(roots - 1 / np.conj(z))) < 1e-8 * max(1, abs(1 / z))


class TestSelectRoot:
    def test_noiseless_single_target(self, W, geom):
        x = W.conj().T @ transmit_steering(geom, 4.0)
        roots = find_roots(laurent_from_hermitian(build_projection_matrix(W, x)))
        z, dist, rho = select_root(roots, x, W)
        assert dist < 1e-6 and rho > 0.9999

    def test_on_circle_root_dominates(self, W, geom):
        x = W.conj().T @ transmit_steering(geom, -7.0)
        z0 = z_of(-7.0)
        z, dist, rho = select_root(np.array([0.5, 2.0, z0, z0]), x, W)
        assert z == z0 and rho == pytest.approx(1.0, abs=1e-12)

    def test_correlation_rejects_spurious_null(self, W, geom):
        x = W.conj().T @ transmit_steering(geom, 5.0)
        # out-of-sector angle where the steering response barely resembles x
        grid = np.arange(30.0, 89.0, 0.5)
        rhos = np.array([steering_correlation(z_of(t), x, W) for t in grid])
        spurious = z_of(grid[np.argmin(rhos)]) * 0.999
        true = z_of(5.0) * 0.99
        assert steering_correlation(spurious, x, W) < 0.3
        assert steering_correlation(true, x, W) > 0.99
        roots = np.array([true, 1 / np.conj(true), spurious, 1 / np.conj(spurious), 0.2, 5.0])
        z, dist, rho = select_root(roots, x, W)
        assert z == true and dist == pytest.approx(0.01)

    def test_inner_roots_reflects_circle_partner(self):
        z0 = np.exp(0.3j)
        pair = np.array([z0 * (1 + 1e-15), z0 * (1 + 2e-15), 0.5, 2.0])
        inner = inner_roots(pair)
        assert np.all(np.abs(inner) <= 1)

    def test_empty(self, W):
        with pytest.raises(RootingError):
            select_root(np.array([]), np.ones(4), W)


class TestRefineDoubleRoot:
    def test_isolated_root_untouched(self, W, geom):
        x = W.conj().T @ transmit_steering(geom, 6.0)
        x = x + 0.05 * crandn(np.random.default_rng(3), x.size)
        poly = laurent_from_hermitian(build_projection_matrix(W, x))
        roots = find_roots(poly)
        z, _, _ = select_root(roots, x, W)
        assert refine_double_root(poly, roots, z) == z

    def test_double_root_polished_onto_circle(self, W, geom):
        x = W.conj().T @ transmit_steering(geom, -9.0)
        poly = laurent_from_hermitian(build_projection_matrix(W, x))
        roots = find_roots(poly)
        z, _, _ = select_root(roots, x, W)
        fine = refine_double_root(poly, roots, z)
        assert abs(abs(fine) - 1) < 1e-15
        assert abs(root_to_angle(fine, 0.5) + 9.0) <= abs(root_to_angle(z, 0.5) + 9.0) + 1e-12
        assert root_to_angle(fine, 0.5) == pytest.approx(-9.0, abs=1e-10)


class TestAngleMapping:
    def test_broadside(self):
        assert root_to_angle(1.0, 0.5) == 0.0

    def test_fifteen_degrees(self):
        assert root_to_angle(z_of(15.0), 0.5) == pytest.approx(15.0, abs=1e-9)

    def test_thirty_degrees(self):
        assert root_to_angle(np.exp(-1j * np.pi / 2), 0.5) == pytest.approx(30.0, abs=1e-12)

    def test_magnitude_ignored(self):
        assert root_to_angle(0.8 * z_of(-20.0), 0.5) == pytest.approx(-20.0, abs=1e-9)

    def test_out_of_visible_region(self):
        with pytest.raises(RootingError):
            root_to_angle(np.exp(-2.5j), 0.25)


class TestEstimateDoas:
    def test_default_scene_exact_signatures(self, W, geom):
        X = W.conj().T @ transmit_steering(geom, [-15.0, 15.0])
        est = estimate_doas(X, W, 0.5)
        npt.assert_allclose([e.theta_deg for e in est], [-15, 15], atol=1e-3)
        for e in est:
            assert e.all_roots.size == 18
            assert count_near_circle(e.all_roots, 1e-6) == 1

    def test_column_scaling_changes_nothing(self, W, geom):
        X = W.conj().T @ transmit_steering(geom, [-12.0, 9.0])
        scales = np.array([0.2 - 3j, 7 + 1j])
        a = estimate_doas(X, W)
        b = estimate_doas(X * scales, W)
        for u, v in zip(a, b):
            assert abs(u.z_hat - v.z_hat) <= 1e-12
            assert u.theta_deg == pytest.approx(v.theta_deg, abs=1e-9)

    def test_permuted_columns(self, W, geom):
        X = W.conj().T @ transmit_steering(geom, [-12.0, 9.0])
        a = [e.theta_deg for e in estimate_doas(X, W)]
        b = [e.theta_deg for e in estimate_doas(X[:, ::-1], W)]
        npt.assert_allclose(a, b[::-1], atol=1e-12)

    def test_noiseless_exactness_on_one_degree_grid(self, W, geom):
        rng = np.random.default_rng(5)
        for theta in range(-59, 60):
            x = W.conj().T @ transmit_steering(geom, float(theta)) * crandn(rng, 1)[0]
            assert estimate_doa(x, W, 0.5).theta_deg == pytest.approx(theta, abs=1e-6)

    def test_one_circle_root_per_target_across_angles(self, W, geom):
        for theta in range(-59, 60, 7):
            x = W.conj().T @ transmit_steering(geom, float(theta))
            assert count_near_circle(estimate_doa(x, W, 0.5).all_roots, 1e-6) == 1

    def test_errors_tagged_with_target(self, W):
        X = np.zeros((4, 2), complex)
        X[:, 0] = 1
        with pytest.raises(RootingError) as info:
            estimate_doas(X, W)
        assert info.value.target == 1

    def test_shape_mismatch(self, W):
        with pytest.raises(ValueError):
            estimate_doas(np.ones((3, 1)), W)


class TestBeampattern:
    def test_nonnegative(self, W, geom):
        G = build_projection_matrix(W, crandn(np.random.default_rng(6), 4))
        p = transmit_beampattern(G, geom, angle_grid(0.1), db=False)
        assert p.min() >= -1e-10

    def test_blocking_null_location(self, W, geom):
        x = W.conj().T @ transmit_steering(geom, 15.0)
        grid = angle_grid(0.01)
        p = transmit_beampattern(build_blocking_matrix(W, x), geom, grid)
        assert abs(grid[np.argmin(p)] - 15.0) <= 0.01

    def test_unblocked_equals_sector_pattern(self, W, geom):
        grid = angle_grid(0.5)
        npt.assert_allclose(
            transmit_beampattern(build_blocking_matrix(W, np.zeros(4)), geom, grid, db=False),
            sector_gain(W, geom, grid), rtol=1e-12,
        )

    def test_db_normalized_to_peak(self, W, geom):
        p = transmit_beampattern(W, geom, angle_grid(0.5))
        assert p.max() == 0.0

    def test_empty_grid(self, W, geom):
        with pytest.raises(ValueError):
            transmit_beampattern(W, geom, [])


class TestGridOracle:
    def test_noiseless_target(self, W, geom):
        x = W.conj().T @ transmit_steering(geom, 15.0)
        assert grid_oracle(build_projection_matrix(W, x), geom, 0.1) == pytest.approx(15.0, abs=0.1)

    def test_flat_objective_ties_to_smallest_angle(self, geom):
        assert grid_oracle(np.eye(M), geom, 0.5) == -90.0

    def test_agrees_with_rooting(self, W, geom):
        rng = np.random.default_rng(7)
        for theta in rng.uniform(-60, 60, 20):
            x = W.conj().T @ transmit_steering(geom, theta)
            root = estimate_doa(x, W, 0.5).theta_deg
            assert abs(grid_oracle(build_projection_matrix(W, x), geom, 0.01) - root) <= 0.01

    def test_agrees_at_20db(self, W, geom):
        rng = np.random.default_rng(8)
        x = W.conj().T @ transmit_steering(geom, 11.0)
        x = x + np.linalg.norm(x) / np.sqrt(4) * 0.1 * crandn(rng, 4) / np.sqrt(2)
        root = estimate_doa(x, W, 0.5).theta_deg
        assert abs(grid_oracle(build_projection_matrix(W, x), geom, 0.01) - root) <= 0.01


def test_angle_grid_hits_decimal_points():
    g = angle_grid(0.01)
    assert g[0] == -90 and g[-1] == 90 and g.size == 18001
    assert 15.0 in g and -15.0 in g
