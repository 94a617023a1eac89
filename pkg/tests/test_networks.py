import numpy as np
import pytest

from madrl.networks import AdamState, Mlp, finite_difference_gradients, gradient_relative_error


class TestMlp:
    def test_zero_weights_give_zero_output(self, rng):
        net = Mlp([3, 8, 8, 2])
        assert np.array_equal(net.predict(rng.standard_normal((5, 3))), np.zeros((5, 2)))

    def test_actor_output_is_bounded(self, rng):
        net = Mlp([4, 16, 16, 3], output="tanh", rng=rng)
        out = net.predict(100 * rng.standard_normal((50, 4)))
        assert np.all(np.abs(out) <= 1.0)

    def test_initialization_bounds(self, rng):
        net = Mlp([16, 4], rng=rng)
        assert np.all(np.abs(net.params[0]) <= 0.25)

    def test_backprop_matches_finite_differences(self, rng):
        net = Mlp([3, 5, 5, 2], output="tanh", rng=rng)
        x = rng.standard_normal((4, 3))
        target = rng.standard_normal((4, 2))

        def loss():
            return 0.5 * float(np.sum((net.predict(x) - target) ** 2))

        out, cache = net.forward(x)
        grads, _ = net.backward(cache, out - target)
        numeric = finite_difference_gradients(loss, net.params)
        assert gradient_relative_error(grads, numeric) < 1e-6

    def test_input_gradient(self, rng):
        net = Mlp([3, 6, 1], rng=rng)
        x = rng.standard_normal((1, 3))
        out, cache = net.forward(x)
        _, grad_x = net.backward(cache, np.ones_like(out))
        numeric = finite_difference_gradients(lambda: float(net.predict(x)[0, 0]), [x])[0]
        assert np.allclose(grad_x, numeric, atol=1e-7)

    def test_soft_update_extremes(self, rng):
        source = Mlp([2, 3, 1], rng=rng)
        target = Mlp([2, 3, 1], rng=np.random.default_rng(99))
        before = [p.copy() for p in target.params]
        target.soft_update_from(source, 0.0)
        assert all(np.array_equal(a, b) for a, b in zip(target.params, before))
        target.soft_update_from(source, 1.0)
        assert all(np.allclose(a, b) for a, b in zip(target.params, source.params))

    def test_copy_is_independent(self, rng):
        net = Mlp([2, 3, 1], rng=rng)
        clone = net.copy()
        clone.params[0] += 1.0
        assert not np.allclose(net.params[0], clone.params[0])

    def test_dict_round_trip_and_shape_check(self, rng):
        net = Mlp([2, 3, 1], output="tanh", rng=rng)
        restored = Mlp.from_dict(net.to_dict())
        assert restored.output == "tanh"
        x = rng.standard_normal((3, 2))
        assert np.array_equal(restored.predict(x), net.predict(x))
        data = net.to_dict()
        data["sizes"] = [2, 4, 1]
        with pytest.raises(ValueError):
            Mlp.from_dict(data)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        params = [np.array([1.0, -1.0])]
        adam = AdamState(params, lr=0.1)
        adam.step(params, [np.array([3.0, -0.5])])
        assert np.allclose(params[0], [0.9, -0.9], atol=1e-6)

    def test_minimizes_quadratic(self):
        params = [np.array([5.0])]
        adam = AdamState(params, lr=0.05)
        for _ in range(2000):
            adam.step(params, [2.0 * params[0]])
        assert abs(params[0][0]) < 0.05

    def test_state_round_trip(self):
        params = [np.ones(3)]
        adam = AdamState(params, lr=0.01)
        adam.step(params, [np.ones(3)])
        restored = AdamState.from_dict(adam.to_dict())
        assert restored.step_count == 1
        assert np.array_equal(restored.m[0], adam.m[0])
        assert np.array_equal(restored.v[0], adam.v[0])
