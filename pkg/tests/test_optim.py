"""L-BFGS and AdaDelta against closed-form and hand-computed oracles."""

import math

import numpy as np
import pytest

from crosstag.optim import (
    AdaDeltaState,
    LbfgsConfig,
    NumericError,
    adadelta_step,
    minimize_lbfgs,
)


def quadratic(center, scale):
    """f(x) = 0.5 * sum(scale * (x - center)^2), minimum at center."""
    center = np.asarray(center, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)

    def fun(x):
        d = x - center
        return 0.5 * float(scale @ (d * d)), scale * d

    return fun


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100.0 * (b - a * a) ** 2
    g = np.array([
        -2 * (1 - a) - 400.0 * a * (b - a * a),
        200.0 * (b - a * a),
    ])
    return f, g


class TestLbfgs:
    def test_quadratic_exact_minimum(self):
        center = np.array([1.0, -2.0, 3.0, 0.5])
        fun = quadratic(center, [1.0, 4.0, 0.5, 9.0])
        result = minimize_lbfgs(fun, np.zeros(4))
        assert result.converged
        assert np.max(np.abs(result.grad)) <= 1e-5
        np.testing.assert_allclose(result.x, center, atol=1e-5)
        assert result.f == pytest.approx(0.0, abs=1e-10)

    def test_rosenbrock(self):
        result = minimize_lbfgs(rosenbrock, np.array([-1.2, 1.0]))
        assert result.converged
        np.testing.assert_allclose(result.x, [1.0, 1.0], atol=1e-4)

    def test_trace_is_monotone_decreasing(self):
        result = minimize_lbfgs(rosenbrock, np.array([-1.2, 1.0]))
        trace = result.trace
        assert len(trace) == result.iterations + 1
        assert all(b < a for a, b in zip(trace, trace[1:]))

    def test_returns_best_iterate(self):
        result = minimize_lbfgs(rosenbrock, np.array([-1.2, 1.0]))
        assert result.f == min(result.trace)
        f_at_x, _ = rosenbrock(result.x)
        assert f_at_x == result.f

    def test_already_converged_start(self):
        fun = quadratic([0.0, 0.0], [1.0, 1.0])
        result = minimize_lbfgs(fun, np.zeros(2))
        assert result.converged
        assert result.iterations == 0

    def test_max_iter_cap(self):
        result = minimize_lbfgs(rosenbrock, np.array([-1.2, 1.0]),
                                LbfgsConfig(max_iter=3))
        assert result.iterations <= 3
        assert not result.converged

    def test_small_memory_still_converges(self):
        fun = quadratic(np.arange(10.0), np.linspace(0.5, 5.0, 10))
        result = minimize_lbfgs(fun, np.zeros(10), LbfgsConfig(memory=2))
        assert result.converged
        np.testing.assert_allclose(result.x, np.arange(10.0), atol=1e-4)

    def test_callback_sees_each_accepted_step(self):
        seen = []
        minimize_lbfgs(rosenbrock, np.array([-1.2, 1.0]),
                       callback=lambda it, x, f, g: seen.append((it, f)))
        assert [it for it, _ in seen] == list(range(1, len(seen) + 1))

    def test_non_finite_objective_raises(self):
        def bad(x):
            return float("nan"), np.zeros_like(x)

        with pytest.raises(NumericError):
            minimize_lbfgs(bad, np.zeros(2))

    def test_non_finite_during_search_raises(self):
        calls = {"n": 0}

        def explodes(x):
            calls["n"] += 1
            if calls["n"] > 1:
                return float("inf"), np.zeros_like(x)
            return float(x @ x), 2.0 * x

        with pytest.raises(NumericError):
            minimize_lbfgs(explodes, np.ones(2))


class TestAdaDelta:
    def test_scalar_hand_oracle(self):
        params = np.array([0.0])
        state = AdaDeltaState.zeros(1, rho=0.95, eps=1e-6)
        delta = adadelta_step(params, np.array([1.0]), state, learning_rate=1.0)
        expected = -1.0 * math.sqrt(1e-6) / math.sqrt(0.05 + 1e-6)
        assert state.accum_grad[0] == pytest.approx(0.05, rel=1e-15)
        assert delta[0] == pytest.approx(expected, rel=1e-12)
        assert params[0] == pytest.approx(expected, rel=1e-12)
        assert state.accum_update[0] == pytest.approx(0.05 * expected ** 2, rel=1e-12)

    def test_zero_gradient_zero_state_is_noop(self):
        params = np.array([1.0, -2.0, 3.0])
        state = AdaDeltaState.zeros(3)
        delta = adadelta_step(params, np.zeros(3), state)
        np.testing.assert_array_equal(delta, np.zeros(3))
        np.testing.assert_array_equal(params, [1.0, -2.0, 3.0])

    def test_steady_state_invariant_to_gradient_rescaling(self):
        # After many identical steps the update magnitude approaches a
        # fixed point independent of the gradient's scale.
        def last_delta(g):
            params = np.zeros(1)
            state = AdaDeltaState.zeros(1)
            for _ in range(100):
                delta = adadelta_step(params, np.array([g]), state)
            return abs(delta[0])

        ratio = last_delta(1.0) / last_delta(10.0)
        assert abs(ratio - 1.0) <= 0.01

    def test_learning_rate_scales_update(self):
        params_a, params_b = np.zeros(1), np.zeros(1)
        state_a, state_b = AdaDeltaState.zeros(1), AdaDeltaState.zeros(1)
        da = adadelta_step(params_a, np.array([1.0]), state_a, learning_rate=1.0)
        db = adadelta_step(params_b, np.array([1.0]), state_b, learning_rate=0.5)
        assert db[0] == pytest.approx(0.5 * da[0], rel=1e-12)

    def test_non_finite_gradient_raises(self):
        state = AdaDeltaState.zeros(2)
        with pytest.raises(NumericError):
            adadelta_step(np.zeros(2), np.array([1.0, float("nan")]), state)

    def test_shape_mismatch_raises(self):
        state = AdaDeltaState.zeros(2)
        with pytest.raises(ValueError):
            adadelta_step(np.zeros(3), np.zeros(3), state)

    def test_descends_a_quadratic(self):
        fun = quadratic([2.0, -1.0], [1.0, 1.0])
        params = np.zeros(2)
        state = AdaDeltaState.zeros(2)
        f0, _ = fun(params)
        for _ in range(2000):
            _, g = fun(params)
            adadelta_step(params, g, state)
        f1, _ = fun(params)
        assert f1 < f0 * 1e-3
