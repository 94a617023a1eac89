import numpy as np
import pytest

from madrl.agents import (
    AgentEnsemble, actor_objective_and_grads, actor_update, baseline_allocation, critic_loss_and_grads,
    critic_update, matd3_target, soft_update, target_actions, update_agents
)
from madrl.networks import Mlp, finite_difference_gradients, gradient_relative_error
from utils.errors import DomainError, TrainingDivergenceError

OBS_SIZES = [3, 2]


def constant_critic(value, input_dim, hidden=4):
    critic = Mlp([input_dim, hidden, hidden, 1])
    critic.params[-1] = np.array([float(value)])
    return critic


def make_ensemble(train_cfg, seed=0):
    return AgentEnsemble(OBS_SIZES, train_cfg, np.random.default_rng(seed))


def make_batch(rng, size=8, state_dim=5, n_agents=2):
    return (rng.standard_normal((size, state_dim)), rng.standard_normal((size, state_dim)),
            rng.uniform(-1, 1, (size, n_agents)), rng.standard_normal((size, n_agents)))


class QuadraticCritic:
    """Q(s, a) = -sum_i (a_i - a*_i)^2 over the action slots of x."""

    def __init__(self, state_dim, optimum):
        self.state_dim = state_dim
        self.optimum = np.asarray(optimum)

    def forward(self, x):
        diff = x[:, self.state_dim:] - self.optimum
        return -np.sum(diff ** 2, axis=1, keepdims=True), x

    def backward(self, cache, grad_out):
        grad_x = np.zeros_like(cache)
        grad_x[:, self.state_dim:] = -2.0 * (cache[:, self.state_dim:] - self.optimum) * grad_out
        return [], grad_x


class TestEnsemble:
    def test_shapes(self, tiny_train):
        ensemble = make_ensemble(tiny_train)
        assert ensemble.state_dim == 5
        assert ensemble.critics[0][0].sizes == [7, 8, 8, 1]
        assert len(ensemble.critics[1]) == 2
        assert ensemble.actors[1].sizes == [2, 8, 8, 1]

    def test_maddpg_single_critic(self, tiny_train):
        ensemble = make_ensemble(tiny_train.model_copy(update={"algorithm": "maddpg"}))
        assert all(len(group) == 1 for group in ensemble.critics)

    def test_agent_observation_slices(self, tiny_train):
        ensemble = make_ensemble(tiny_train)
        states = np.arange(10.0).reshape(2, 5)
        assert ensemble.agent_obs(states, 1).tolist() == [[3.0, 4.0], [8.0, 9.0]]

    def test_actions_are_clipped(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train)
        raw = ensemble.act([np.ones(3), np.ones(2)], noise_std=10.0, rng=rng)
        assert raw.shape == (2,)
        assert np.all(np.abs(raw) <= 1.0)

    def test_dict_round_trip(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train)
        update_agents(make_batch(rng), ensemble, tiny_train, rng)
        restored = AgentEnsemble.from_dict(ensemble.to_dict(), tiny_train)
        obs = [np.ones(3), -np.ones(2)]
        assert np.array_equal(restored.act(obs), ensemble.act(obs))
        assert restored.update_step == 1
        with pytest.raises(ValueError):
            AgentEnsemble.from_dict(ensemble.to_dict(), tiny_train.model_copy(update={"algorithm": "maddpg"}))


class TestTargets:
    def test_twin_minimum(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train)
        for group in ensemble.target_critics:
            group[0] = constant_critic(2.0, 7)
            group[1] = constant_critic(3.0, 7)
        states, next_states, actions, _ = make_batch(rng)
        batch = (states, next_states, actions, np.ones((8, 2)))
        cfg = tiny_train.model_copy(update={"gamma": 0.95})
        assert np.allclose(matd3_target(batch, ensemble, cfg, rng), 2.9)

    def test_never_exceeds_single_critic_targets(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train)
        batch = make_batch(rng)
        cfg = tiny_train.model_copy(update={"target_noise_std": 0.0})
        y = matd3_target(batch, ensemble, cfg)
        x = np.concatenate([batch[1], target_actions(batch[1], ensemble, cfg)], axis=1)
        for i, group in enumerate(ensemble.target_critics):
            for critic in group:
                assert np.all(y[:, i] <= batch[3][:, i] + tiny_train.gamma * critic.predict(x)[:, 0] + 1e-12)

    def test_zero_smoothing_uses_target_actor(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train)
        next_states = rng.standard_normal((4, 5))
        cfg = tiny_train.model_copy(update={"target_noise_std": 0.0})
        actions = target_actions(next_states, ensemble, cfg)
        expected = ensemble.target_actors[0].predict(next_states[:, :3])[:, 0]
        assert np.array_equal(actions[:, 0], expected)

    def test_smoothing_stays_in_action_range(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train)
        cfg = tiny_train.model_copy(update={"target_noise_std": 5.0})
        actions = target_actions(rng.standard_normal((50, 5)), ensemble, cfg, rng)
        assert np.all(np.abs(actions) <= 1.0)


class TestCritic:
    def test_stationary_at_target(self, rng):
        critic = Mlp([4, 6, 6, 1], rng=rng)
        x = rng.standard_normal((5, 4))
        loss, grads = critic_loss_and_grads(critic, x, critic.predict(x)[:, 0])
        assert loss == 0.0
        assert all(np.allclose(g, 0.0) for g in grads)

    def test_gradients_match_finite_differences(self, rng):
        critic = Mlp([4, 6, 6, 1], rng=rng)
        x = rng.standard_normal((5, 4))
        y = rng.standard_normal(5)
        _, grads = critic_loss_and_grads(critic, x, y)
        numeric = finite_difference_gradients(lambda: critic_loss_and_grads(critic, x, y)[0], critic.params)
        assert gradient_relative_error(grads, numeric) <= 1e-4

    def test_loss_decreases_on_fixed_batch(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train)
        batch = make_batch(rng)
        targets = rng.standard_normal((8, 2))
        first = critic_update(batch, 0, ensemble, targets)
        for _ in range(49):
            last = critic_update(batch, 0, ensemble, targets)
        assert all(b < a for a, b in zip(first, last))

    def test_non_finite_loss(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train)
        targets = np.full((8, 2), np.nan)
        with pytest.raises(TrainingDivergenceError):
            critic_update(make_batch(rng), 0, ensemble, targets)


class TestActor:
    def test_cadence(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train)
        updates = [update_agents(make_batch(rng), ensemble, tiny_train, rng)["actor_updated"]
                   for _ in range(7)]
        assert sum(updates) == 3
        assert updates[1] == 1.0 and updates[0] == 0.0

    def test_maddpg_updates_every_step(self, tiny_train, rng):
        cfg = tiny_train.model_copy(update={"algorithm": "maddpg"})
        ensemble = make_ensemble(cfg)
        updates = [update_agents(make_batch(rng), ensemble, cfg, rng)["actor_updated"] for _ in range(4)]
        assert updates == [1.0] * 4

    def test_chain_rule_matches_finite_differences(self, rng):
        actor = Mlp([3, 5, 5, 1], "tanh", rng)
        critic = Mlp([5 + 2, 6, 6, 1], rng=rng)
        states = rng.standard_normal((6, 5))
        actions = rng.uniform(-1, 1, (6, 2))
        obs = states[:, :3]
        _, grads = actor_objective_and_grads(actor, critic, states, actions, 0, obs, 5)

        def negative_objective():
            return -actor_objective_and_grads(actor, critic, states, actions, 0, obs, 5)[0]

        numeric = finite_difference_gradients(negative_objective, actor.params)
        assert gradient_relative_error(grads, numeric) <= 1e-4

    def test_converges_to_quadratic_optimum(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train.model_copy(update={"lr": 0.01}))
        ensemble.critics[1][0] = QuadraticCritic(5, [0.0, 0.3])
        states = np.tile(rng.standard_normal(5), (4, 1))
        actions = np.zeros((4, 2))
        for _ in range(1000):
            actor_update((states, states, actions, np.zeros((4, 2))), 1, ensemble)
        own = ensemble.actors[1].predict(states[:1, 3:])[0, 0]
        assert own == pytest.approx(0.3, abs=0.03)


class TestSoftUpdate:
    def test_extremes(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train)
        update_agents(make_batch(rng), ensemble, tiny_train, rng)
        before = [p.copy() for p in ensemble.target_critics[0][0].params]
        soft_update(ensemble, 0.0)
        assert all(np.array_equal(a, b) for a, b in zip(ensemble.target_critics[0][0].params, before))
        soft_update(ensemble, 1.0)
        for target, source in zip(ensemble.target_actors[1].params, ensemble.actors[1].params):
            assert np.allclose(target, source, atol=0.0)

    def test_geometric_contraction(self, tiny_train, rng):
        ensemble = make_ensemble(tiny_train)
        for p in ensemble.actors[0].params:
            p += 1.0
        gap = np.linalg.norm(ensemble.target_actors[0].params[0] - ensemble.actors[0].params[0])
        for _ in range(5):
            soft_update(ensemble, 0.1)
            new_gap = np.linalg.norm(ensemble.target_actors[0].params[0] - ensemble.actors[0].params[0])
            assert new_gap == pytest.approx(0.9 * gap, rel=1e-10)
            gap = new_gap


class TestBaselines:
    def test_schemes(self, tiny_system, tiny_snapshot, rng):
        bf = tiny_snapshot.beamformers
        p_max = tiny_system.p_u_watt
        assert np.allclose(baseline_allocation("ul_max", tiny_system, bf).p_u, p_max)
        assert np.allclose(baseline_allocation("ul_equal", tiny_system, bf).p_u, p_max / 2)
        random = baseline_allocation("ul_random", tiny_system, bf, rng).p_u
        assert np.all((random >= 0) & (random <= p_max))

    def test_downlink_meets_budget(self, tiny_system, tiny_simulator, tiny_snapshot):
        alloc = baseline_allocation("ul_max", tiny_system, tiny_snapshot.beamformers)
        powers = tiny_simulator.tap_powers(tiny_snapshot, alloc.eta)
        assert np.max(powers) == pytest.approx(tiny_system.p_d_watt, rel=1e-10)

    def test_unknown_scheme(self, tiny_system, tiny_snapshot):
        with pytest.raises(DomainError):
            baseline_allocation("ul_min", tiny_system, tiny_snapshot.beamformers)
