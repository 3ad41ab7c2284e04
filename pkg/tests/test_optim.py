"""Backtracking gradient descent behavior."""

import numpy as np
import pytest

from shapelight.errors import NonFiniteLoss
from shapelight.optim import backtracking_gd, finite_difference_grad


def quadratic(x):
    return float(np.dot(x, x)), 2.0 * x


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100.0 * (b - a * a) ** 2
    g = np.array([
        -2.0 * (1 - a) - 400.0 * a * (b - a * a),
        200.0 * (b - a * a),
    ])
    return f, g


def test_convex_quadratic_converges():
    res = backtracking_gd(quadratic, np.array([3.0, 4.0]))
    assert np.linalg.norm(res.x) < 1e-3
    assert res.iterations <= 150


def test_constant_loss_terminates_immediately():
    res = backtracking_gd(lambda x: (7.5, np.zeros_like(x)), np.array([1.0, -2.0]))
    assert res.iterations == 0
    assert res.reason == "tol"
    assert np.array_equal(res.x, [1.0, -2.0])
    assert res.fx == 7.5


def test_rosenbrock_trace_monotone():
    res = backtracking_gd(rosenbrock, np.array([-1.2, 1.0]))
    tr = np.asarray(res.trace)
    assert np.all(np.diff(tr) <= 1e-15)
    assert res.monotone
    assert res.fx < rosenbrock(np.array([-1.2, 1.0]))[0]


def test_armijo_holds_at_every_accepted_step():
    # re-derive the acceptance inequality from the visited iterates
    c = 1e-5
    visits = []

    def probe(x):
        f, g = rosenbrock(x)
        visits.append((x.copy(), f, g.copy()))
        return f, g

    res = backtracking_gd(probe, np.array([-1.2, 1.0]), c=c)
    accepted = [v for v in visits if any(v[1] == t for t in res.trace)]
    prev = visits[0]
    for x, f, g in accepted:
        alpha = np.linalg.norm(x - prev[0]) / max(np.linalg.norm(prev[2]), 1e-300)
        assert f <= prev[1] - c * alpha * np.dot(prev[2], prev[2]) + 1e-12
        prev = (x, f, g)


def test_reason_max_iters():
    res = backtracking_gd(quadratic, np.array([3.0, 4.0]), max_iters=3)
    assert res.reason == "max_iters"
    assert res.iterations == 3


def test_reason_tol_on_flat_minimum():
    res = backtracking_gd(quadratic, np.array([3.0, 4.0]), max_iters=150)
    assert res.reason == "tol"


def test_nonfinite_loss_raises():
    def bad(x):
        return float("nan"), np.zeros_like(x)

    with pytest.raises(NonFiniteLoss):
        backtracking_gd(bad, np.array([1.0]))


def test_nonfinite_midway_raises():
    def explode(x):
        f = float(np.dot(x, x))
        if f < 1.0:
            return float("inf"), 2.0 * x
        return f, 2.0 * x

    with pytest.raises(NonFiniteLoss):
        backtracking_gd(explode, np.array([3.0, 4.0]))


def test_projection_is_applied_to_iterates():
    def project(x):
        return x / max(np.linalg.norm(x), 1e-300)

    # loss pulls toward (0,0,-1); on the sphere the minimum is the south pole
    def loss(x):
        d = x - np.array([0.0, 0.0, -1.0])
        return float(np.dot(d, d)), 2.0 * d

    res = backtracking_gd(loss, project(np.array([1.0, 0.2, 0.5])), project=project)
    assert np.linalg.norm(res.x) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(res.x, [0.0, 0.0, -1.0], atol=1e-3)


def test_callback_change_triggers_reevaluation():
    scale = {"v": 1.0}
    seen = {}

    def loss(x):
        return scale["v"] * float(np.dot(x, x)), scale["v"] * 2.0 * x

    def cb(it, x, f):
        if it == 1:
            seen["f_before"] = f
            scale["v"] = 0.5  # halve the objective right after the first step
            return True
        return False

    res = backtracking_gd(loss, np.array([3.0, 4.0]), callback=cb)
    # the recorded entry for iteration 1 reflects the halved objective
    assert res.trace[0] == pytest.approx(0.5 * seen["f_before"], rel=1e-12)
    assert res.monotone
    assert np.linalg.norm(res.x) < 1e-3


def test_finite_difference_matches_analytic():
    rng = np.random.default_rng(0)
    x = rng.normal(size=5)
    A = rng.normal(size=(5, 5))
    A = A @ A.T + np.eye(5)

    def f(y):
        return float(y @ A @ y)

    g_fd = finite_difference_grad(f, x, 1e-6)
    g_an = 2.0 * A @ x
    assert np.allclose(g_fd, g_an, rtol=1e-6, atol=1e-8)
