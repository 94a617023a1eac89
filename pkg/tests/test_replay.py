import numpy as np
import pytest

from madrl.replay import ReplayBuffer


def filled(count, capacity=5):
    buffer = ReplayBuffer(capacity, state_dim=2, action_dim=3, n_agents=2)
    for i in range(count):
        buffer.add(np.full(2, i), np.full(2, i + 1), np.full(3, i), np.full(2, i))
    return buffer


def test_never_exceeds_capacity():
    buffer = filled(12)
    assert len(buffer) == 5
    assert sorted(buffer.states[:, 0].tolist()) == [7, 8, 9, 10, 11]


def test_sample_without_replacement(rng):
    buffer = filled(5)
    states, next_states, actions, rewards = buffer.sample(5, rng)
    assert sorted(states[:, 0].tolist()) == [0, 1, 2, 3, 4]
    assert np.array_equal(next_states[:, 0], states[:, 0] + 1)
    assert actions.shape == (5, 3) and rewards.shape == (5, 2)


def test_sample_too_large(rng):
    with pytest.raises(ValueError):
        filled(2).sample(3, rng)


def test_invalid_capacity():
    with pytest.raises(ValueError):
        ReplayBuffer(0, 1, 1, 1)


def test_arrays_round_trip(rng):
    buffer = filled(7)
    restored = ReplayBuffer.from_arrays(buffer.to_arrays())
    assert len(restored) == len(buffer)
    assert restored.position == buffer.position
    restored.add(np.zeros(2), np.zeros(2), np.zeros(3), np.zeros(2))
    buffer.add(np.zeros(2), np.zeros(2), np.zeros(3), np.zeros(2))
    assert np.array_equal(restored.states, buffer.states)
    a = buffer.sample(3, np.random.default_rng(0))
    b = restored.sample(3, np.random.default_rng(0))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_storage_grows_with_use():
    buffer = ReplayBuffer(1_000_000, state_dim=3, action_dim=1, n_agents=1)
    assert buffer.allocated == 1024
    for i in range(1025):
        buffer.add(np.full(3, i), np.full(3, i), np.zeros(1), np.zeros(1))
    assert buffer.allocated == 2048
    assert buffer.states[1024, 0] == 1024
    assert buffer.states[0, 0] == 0


def test_restored_buffer_keeps_rows_beyond_initial_block():
    buffer = ReplayBuffer(3000, state_dim=1, action_dim=1, n_agents=1)
    for i in range(2000):
        buffer.add(np.full(1, i), np.full(1, i), np.zeros(1), np.zeros(1))
    restored = ReplayBuffer.from_arrays(buffer.to_arrays())
    assert len(restored) == 2000
    assert np.array_equal(restored.states[:2000], buffer.states[:2000])
