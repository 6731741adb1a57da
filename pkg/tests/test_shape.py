import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qkflow import shape, symfunc


def sphere_jets(x, radius):
    """Exact gradient and Hessian of u = -sqrt(R^2 - |x|^2)."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(radius**2 - x @ x)
    grad = x / s
    hess = np.eye(x.size) / s + np.outer(x, x) / s**3
    return grad, hess


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_sphere_curvatures(n):
    radius = 1.7
    rng = np.random.default_rng(n)
    for _ in range(20):
        x = rng.uniform(-1, 1, n)
        x *= rng.uniform(0, 0.95) * radius / np.linalg.norm(x)
        s = shape.weingarten(shape.JetPoint(*sphere_jets(x, radius)))
        lam = shape.principal_curvatures(s)
        np.testing.assert_allclose(lam, 1.0 / radius, rtol=0, atol=1e-10)


def test_cylinder_curvatures():
    radius = 0.8
    x = np.array([0.5, -0.3])
    s = np.sqrt(radius**2 - x[0] ** 2)
    grad = np.array([x[0] / s, 0.0])
    hess = np.diag([radius**2 / s**3, 0.0])
    lam = shape.principal_curvatures(shape.weingarten(shape.JetPoint(grad, hess)))
    np.testing.assert_allclose(lam, [1.0 / radius, 0.0], atol=1e-12)


def test_flat_slope_and_affine():
    hess = np.array([[2.0, 0.5], [0.5, -1.0]])
    s = shape.weingarten(shape.JetPoint(np.zeros(2), hess))
    np.testing.assert_allclose(s.a, hess, atol=0)
    assert s.w == 1.0
    s = shape.weingarten(shape.JetPoint(np.array([0.3, -2.0]), np.zeros((2, 2))))
    assert np.all(s.a == 0)


def test_four_term_formula():
    rng = np.random.default_rng(7)
    g = rng.normal(size=3)
    h = rng.normal(size=(3, 3))
    h = h + h.T
    w = np.sqrt(1 + g @ g)
    c = w * (1 + w)
    hg = h @ g
    want = (h - np.outer(g, hg) / c - np.outer(hg, g) / c + np.outer(g, g) * (g @ hg) / c**2) / w
    np.testing.assert_allclose(shape.weingarten(shape.JetPoint(g, h)).a, want, atol=1e-13)


@settings(max_examples=50)
@given(arrays(np.float64, 3, elements=st.floats(-3, 3, width=64)),
       arrays(np.float64, (3, 3), elements=st.floats(-3, 3, width=64)),
       st.integers(0, 10**6))
def test_rotation_equivariance(g, h, seed):
    h = h + h.T
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(3, 3)))
    a = shape.weingarten(shape.JetPoint(g, h)).a
    b = shape.weingarten(shape.JetPoint(q @ g, q @ h @ q.T)).a
    np.testing.assert_allclose(b, q @ a @ q.T, atol=1e-12 * max(1.0, np.max(np.abs(a))))


def test_radial_origin():
    # u = r^2 - r^4 has u''(0) = 2 and zero slope at the origin
    s = shape.weingarten(shape.JetPoint(np.zeros(3), 2.0 * np.eye(3)))
    np.testing.assert_allclose(s.a, 2.0 * np.eye(3))


def test_nu_vertical():
    s = shape.weingarten(shape.JetPoint(np.array([0.3, 0.4]), np.eye(2)))
    assert s.nu_vertical * s.w == pytest.approx(1.0, abs=1e-16)
    assert s.w >= 1.0


def test_paraboloid_is_positive():
    lam = shape.principal_curvatures(shape.weingarten(shape.JetPoint(np.array([1.0, 0.5]), np.eye(2))))
    assert np.all(lam > 0)


@pytest.mark.parametrize("a, expected", [
    (np.diag([1.0, 3.0]), [3.0, 1.0]),
    (np.array([[0.0, 1.0], [1.0, 0.0]]), [1.0, -1.0]),
    (np.array([[-2.0]]), [-2.0]),
    (np.diag([1.0, 4.0, 2.0]), [4.0, 2.0, 1.0]),
])
def test_eigen_descending(a, expected):
    np.testing.assert_allclose(shape.eigen_descending(a), expected, atol=1e-15)


def test_eigen_closed_form_matches_lapack():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(100, 2, 2))
    a = a + np.swapaxes(a, 1, 2)
    np.testing.assert_allclose(shape.eigen_descending(a), np.linalg.eigvalsh(a)[:, ::-1], atol=1e-13)


def test_pointwise_geometry_examples():
    g = shape.pointwise_geometry(shape.ShapeMatrix(np.eye(2), 1.0), 1)
    assert g.H == 2.0 and g.norm_sq_A == 2.0 and g.pinch_ok
    assert g.Qk == pytest.approx(0.5)
    g = shape.pointwise_geometry(shape.ShapeMatrix(np.diag([2.0, -1.0, -1.0]), 1.0), 1)
    # S_1 = 0 and S_2 = -3: on the edge of the first cone, never in the second
    assert str(g.cone) == "Boundary(0)" and not g.cone.contains(1)
    assert g.Qk is None


def test_pinching_in_second_cone():
    rng = np.random.default_rng(5)
    for n in (2, 3, 5):
        lam = symfunc.random_cone_points(rng, n, 2, 2000)
        assert np.all(np.sum(lam**2, axis=1) <= np.sum(lam, axis=1) ** 2)


def test_jet_validation():
    with pytest.raises(ValueError):
        shape.JetPoint(np.zeros(2), np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        shape.JetPoint(np.zeros(3), np.eye(2))
