import numpy as np
import pytest

from orbitflow import lie
from orbitflow import objectives as ob
from orbitflow.diagnostics import convex_combination_residual
from orbitflow.layout import NetworkLayout, pack_factors


def make_objectives(rng):
    return [
        ob.l1_matrix_factorization(rng.standard_normal((3, 3)), 2),
        ob.frobenius_mf(rng.standard_normal((2, 3)), 2),
        ob.frobenius_mf(np.abs(rng.standard_normal((2, 2))), 1, nonnegative=True),
        ob.lorentz_quartic(4),
        ob.relu_network(rng.standard_normal((5, 2)), rng.standard_normal((5, 1)), [2, 3, 1], leak=0.1),
        ob.relu_network(rng.standard_normal((4, 2)), rng.standard_normal((4, 2)), [2, 3, 2, 2]),
    ]


OBJECTIVES = make_objectives(np.random.default_rng(0))


def finite_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_l1_examples():
    f = ob.l1_matrix_factorization(np.zeros((1, 1)), 1)
    assert f.eval(np.array([2.0, 3.0])) == 6.0
    np.testing.assert_array_equal(f.subgrad(np.array([2.0, 3.0])), [3.0, 2.0])
    x = np.array([1.0, 0.0])
    assert f.eval(x) == 0.0
    np.testing.assert_array_equal(f.subgrad(x), [0.0, 0.0])
    np.testing.assert_array_equal(f.enumerate_extreme(x), [[0.0, -1.0], [0.0, 1.0]])


def test_l1_exact_factorization_is_zero():
    rng = np.random.default_rng(1)
    X, Y = rng.standard_normal((3, 2)), rng.standard_normal((2, 4))
    f = ob.l1_matrix_factorization(X @ Y, 2)
    assert f.eval(pack_factors(X, Y)) == 0.0


def test_l1_subgrad_matches_finite_differences_away_from_kinks():
    rng = np.random.default_rng(2)
    f = ob.l1_matrix_factorization(rng.standard_normal((3, 2)), 2)
    x = rng.standard_normal(f.dim)
    np.testing.assert_allclose(f.subgrad(x), finite_difference(f.eval, x), atol=1e-6)


def test_frobenius_examples():
    f = ob.frobenius_mf(np.array([[1.0]]), 1)
    x = np.array([2.0, 1.0])
    assert f.eval(x) == 1.0
    np.testing.assert_array_equal(f.subgrad(x), [2.0, 4.0])
    rng = np.random.default_rng(3)
    X, Y = rng.standard_normal((2, 1)), rng.standard_normal((1, 2))
    g = ob.frobenius_mf(X @ Y, 1)
    np.testing.assert_allclose(g.subgrad(pack_factors(X, Y)), 0, atol=1e-14)


def test_frobenius_constrained():
    f = ob.frobenius_mf(np.ones((2, 2)), 1, nonnegative=True)
    assert f.algebra.name.startswith("diagonal_rescaling")
    assert f.eval(np.array([1.0, -1.0, 1.0, 1.0])) == np.inf
    with pytest.raises(ob.BoundaryError):
        f.subgrad(np.array([1.0, 0.0, 1.0, 1.0]))
    np.testing.assert_array_equal(f.feasible_projection(np.array([1.0, -2.0, 0.5, -0.1])), [1.0, 0.0, 0.5, 0.0])


def test_constrained_conserved_coords_are_diagonal():
    rng = np.random.default_rng(4)
    f = ob.frobenius_mf(np.abs(rng.standard_normal((2, 3))), 2, nonnegative=True)
    X, Y = np.abs(rng.standard_normal((2, 2))), np.abs(rng.standard_normal((2, 3)))
    x = pack_factors(X, Y)
    d = np.diag(X.T @ X - Y @ Y.T)
    np.testing.assert_allclose(lie.adjoint_conserved(f.algebra, x, metric="parameter"), d, atol=1e-12)
    np.testing.assert_allclose(lie.conserved_quantity(f.algebra, x).coords * np.sqrt(2 + 3), d, atol=1e-12)


def test_lorentz_examples():
    f = ob.lorentz_quartic(2)
    x = np.array([np.cosh(0.3), np.sinh(0.3)])
    assert f.eval(x) == pytest.approx(0.0, abs=1e-28)
    np.testing.assert_allclose(f.subgrad(x), 0, atol=1e-14)
    x = np.array([2.0, 1.0])
    assert f.eval(x) == 4.0
    np.testing.assert_array_equal(f.subgrad(x), [16.0, -8.0])
    B = f.algebra.generators[0]
    assert f.subgrad(x) @ (B @ x) == 0.0


@pytest.mark.parametrize("f", [OBJECTIVES[1], OBJECTIVES[3], OBJECTIVES[4]], ids=lambda f: f.name)
def test_gradients_match_finite_differences(f):
    rng = np.random.default_rng(5)
    x = f.sample_point(rng)
    np.testing.assert_allclose(f.subgrad(x), finite_difference(f.eval, x), rtol=1e-6, atol=1e-6)


def test_relu_examples():
    widths = [1, 1, 1]
    f = ob.relu_network([[1.0]], [[1.0]], widths)
    layout = NetworkLayout(widths)
    zero = np.zeros(layout.size)
    assert ob.relu_network([[1.0]], [[0.0]], widths).eval(zero) == 0.0
    theta = layout.pack([np.array([[1.0]]), np.array([[1.0]])], [np.array([0.0]), np.array([0.0])])
    assert f.eval(theta) == 0.0
    np.testing.assert_array_equal(f.subgrad(theta), 0.0)


def test_relu_positive_homogeneity():
    rng = np.random.default_rng(6)
    widths = [2, 3, 1]
    layout = NetworkLayout(widths)
    f = ob.relu_network(rng.standard_normal((5, 2)), rng.standard_normal((5, 1)), widths, leak=0.2)
    theta = rng.standard_normal(layout.size)
    (W1, W2), (b1, b2) = layout.unpack(theta)
    for d in (0.5, 2.0):
        scaled = layout.pack([d * W1, W2 / d], [d * b1, b2])
        assert abs(f.eval(scaled) - f.eval(theta)) <= 1e-10


def test_relu_shape_mismatch():
    with pytest.raises(ValueError):
        ob.relu_network(np.zeros((3, 2)), np.zeros((3, 1)), [3, 2, 1])


def test_relu_zero_slope_selection():
    widths = [1, 1, 1]
    layout = NetworkLayout(widths)
    # pre-activation exactly zero: W1 x + b1 = 0
    theta = layout.pack([np.array([[1.0]]), np.array([[2.0]])], [np.array([-1.0]), np.array([0.0])])
    for s0 in (0.0, 0.5, 1.0):
        f = ob.relu_network([[1.0]], [[1.0]], widths, relu_zero_slope=s0)
        v = f.subgrad(theta)
        (dW1, dW2), (db1, db2) = layout.unpack(v)
        # residual is -1, so dL/dz2 = -2 and dL/dz1 = -4 s0
        assert dW1[0, 0] == pytest.approx(-4 * s0)
        assert db1[0] == pytest.approx(-4 * s0)
        assert db2[0] == pytest.approx(-2.0)


@pytest.mark.parametrize("f", OBJECTIVES, ids=lambda f: f.name)
def test_orthogonality_to_orbit_directions(f):
    rng = np.random.default_rng(7)
    for _ in range(50):
        x = f.sample_point(rng)
        v = f.subgrad(x)
        for B in f.algebra.generators:
            assert abs(v @ (B @ x)) <= 1e-8 * (1 + np.linalg.norm(v) * np.linalg.norm(x))


def dyadic_kink_point(rng, m, n, r):
    """Factorization with exactly-zero residual entries: dyadic entries make
    the products exact, then M copies X Y on a random nonempty mask."""
    X = rng.integers(-8, 9, (m, r)) / 4.0
    Y = rng.integers(-8, 9, (r, n)) / 4.0
    M = rng.integers(-8, 9, (m, n)) / 4.0
    mask = rng.random((m, n)) < 0.5
    mask.flat[rng.integers(m * n)] = True
    M[mask] = (X @ Y)[mask]
    return ob.l1_matrix_factorization(M, r), pack_factors(X, Y)


def test_enumerator_sound_and_contains_selection():
    rng = np.random.default_rng(8)
    for _ in range(20):
        f, x = dyadic_kink_point(rng, 2, 2, 1)
        E = f.enumerate_extreme(x)
        assert 1 <= len(E) <= 16
        for v in E:
            for B in f.algebra.generators:
                assert abs(v @ (B @ x)) <= 1e-8 * (1 + np.linalg.norm(v) * np.linalg.norm(x))
        assert convex_combination_residual(f.subgrad(x), E) <= 1e-8


def test_enumerator_extremes_are_limits_of_gradients():
    """Each enumerated point is a limit of gradients at nearby smooth points."""
    f = ob.l1_matrix_factorization(np.zeros((1, 1)), 1)
    x = np.array([1.0, 0.0])
    E = {tuple(v) for v in f.enumerate_extreme(x)}
    limits = {tuple(np.round(f.subgrad(x + np.array([0.0, s * 1e-9])), 6)) for s in (-1, 1)}
    assert {tuple(np.round(v, 6)) for v in E} == limits


def test_enumerator_completeness_tiny():
    f = ob.l1_matrix_factorization(np.zeros((1, 1)), 1)
    for a in (0.3, 1.0, 2.5):
        E = f.enumerate_extreme(np.array([a, 0.0]))
        assert len(E) == 2
        assert convex_combination_residual(f.subgrad(np.array([a, 0.0])), E) <= 1e-12


def test_enumerator_limit():
    f = ob.l1_matrix_factorization(np.zeros((5, 4)), 1)
    with pytest.raises(ob.EnumerationUnavailable):
        f.enumerate_extreme(np.zeros(9))


@pytest.mark.parametrize("f", OBJECTIVES, ids=lambda f: f.name)
def test_invariance_second_order(f):
    rng = np.random.default_rng(9)
    report = ob.invariance_check(f, [f.sample_point(rng) for _ in range(100)])
    assert report.passed, report.to_dict()


def test_equivariance_nn_exact():
    f = OBJECTIVES[4]
    report = ob.conservative_field_equivariance_check(f, trials=20, tol=1e-10, seed=1, scales=(2.0,))
    assert report.params["exact"] and report.max_residual <= 1e-10 and report.passed


def test_equivariance_l1_diagonal_subgroup():
    f = OBJECTIVES[0]
    report = ob.conservative_field_equivariance_check(
        f, trials=20, tol=1e-10, scales=(3.0,), algebra=lie.diagonal_rescaling(3, 3, 2)
    )
    assert report.params["exact"] and report.passed and report.max_residual <= 1e-10


def test_equivariance_identity_element():
    f = OBJECTIVES[4]
    report = ob.conservative_field_equivariance_check(f, trials=5, tol=0.0, scales=(1.0,))
    assert report.max_residual == 0.0


def test_equivariance_surrogate_for_lorentz():
    report = ob.conservative_field_equivariance_check(ob.lorentz_quartic(3), trials=10, tol=1e-10)
    assert not report.params["exact"]
    assert report.passed


def test_build_objective():
    assert ob.build_objective("lorentz", n=3).dim == 3
    with pytest.raises(ValueError):
        ob.build_objective("nope")
