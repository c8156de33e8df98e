import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import expit

from peee.exceptions import ConfigurationError, JacobianError
from peee.numdiff import DEFAULT_EPS, JacobianConfig, jacobian_fd

finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(A=arrays(float, (3, 4), elements=finite), b=arrays(float, 3, elements=finite),
       x0=arrays(float, 4, elements=finite))
def test_affine_map_exact(A, b, x0):
    J = jacobian_fd(lambda x: A @ x + b, x0)
    np.testing.assert_allclose(J, A, atol=1e-6 * max(1.0, np.abs(A).max()))


def test_quadratic_by_hand():
    J = jacobian_fd(lambda x: np.array([x[0] ** 2, x[0] * x[1]]), np.array([1.0, 2.0]))
    np.testing.assert_allclose(J, [[2.0, 0.0], [2.0, 1.0]], atol=1e-6)


def test_logistic_mean_analytic():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(8, 3))
    theta = rng.normal(size=3)
    J = jacobian_fd(lambda t: expit(X @ t), theta)
    p = expit(X @ theta)
    np.testing.assert_allclose(J, (p * (1 - p))[:, None] * X, atol=1e-5)


def test_central_difference_more_accurate():
    f = lambda x: np.array([np.sin(3 * x[0])])
    x0 = np.array([0.7])
    exact = 3 * np.cos(2.1)
    fwd = jacobian_fd(f, x0)[0, 0]
    cen = jacobian_fd(f, x0, JacobianConfig(central=True))[0, 0]
    assert abs(cen - exact) < abs(fwd - exact)
    assert abs(cen - exact) < 1e-8


def test_step_scale_and_default_eps():
    assert DEFAULT_EPS == pytest.approx(np.sqrt(np.finfo(float).epsneg))
    seen = []

    def f(x):
        seen.append(x.copy())
        return x
    jacobian_fd(f, np.array([1e6, 0.5]))
    assert seen[1][0] - 1e6 == pytest.approx(DEFAULT_EPS * 1e6, rel=1e-6)
    assert seen[2][1] - 0.5 == pytest.approx(DEFAULT_EPS, rel=1e-6)


def test_failure_reports_column():
    def f(x):
        if x[1] != 0.0:
            raise FloatingPointError("boom")
        return x
    with pytest.raises(JacobianError) as exc:
        jacobian_fd(f, np.zeros(3))
    assert exc.value.column == 1


def test_rejects_nonpositive_eps():
    with pytest.raises(ConfigurationError):
        JacobianConfig(eps=0.0)
