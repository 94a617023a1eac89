import numpy as np
import pytest

from phy.beamforming import (
    analog_from_covariance, equal_downlink_eta, serving_raps, stack_links, tap_power, zf_combiner,
    zf_precoder
)
from phy.channel import steering_vector
from utils.errors import DegeneratePrecoderError, DomainError, SingularChannelError
from utils.linalg import complex_normal, herm


class TestAnalog:
    def test_rank_one_phase_projection(self):
        theta = 0.4
        v = steering_vector(theta, 6)
        W = analog_from_covariance(np.outer(v, v.conj()), 1)
        expected = np.exp(1j * np.pi * np.arange(6) * np.sin(theta))
        assert np.allclose(W[:, 0], expected)

    def test_unit_modulus(self, rng):
        A = complex_normal(rng, (5, 6, 6))
        W = analog_from_covariance(A @ herm(A), 3)
        assert W.shape == (5, 6, 3)
        assert np.allclose(np.abs(W), 1.0, atol=1e-12)

    def test_columns_follow_eigenvalue_order(self):
        e0 = np.array([1, 1, 1, 1]) / 2.0
        e1 = np.array([1, -1, 1, -1]) / 2.0
        R = 3 * np.outer(e0, e0) + np.outer(e1, e1)
        swapped = np.outer(e0, e0) + 3 * np.outer(e1, e1)
        W = analog_from_covariance(R, 2)
        W_swapped = analog_from_covariance(swapped, 2)
        assert np.allclose(W[:, 0], W_swapped[:, 1])
        assert np.allclose(W[:, 1], W_swapped[:, 0])

    def test_rf_chain_range(self):
        with pytest.raises(DomainError):
            analog_from_covariance(np.eye(3), 4)


class TestPrecoder:
    def test_identity_embedded(self):
        h = np.zeros((2, 2, 2), dtype=np.complex128)
        h[0, 0, 0] = 1.0
        h[1, 0, 1] = 1.0
        F = zf_precoder(h).F
        assert np.allclose(F, stack_links(h))

    def test_zero_forcing_condition(self, rng):
        for _ in range(100):
            h = complex_normal(rng, (3, 2, 2))
            F = zf_precoder(h).F
            assert np.allclose(herm(stack_links(h)) @ F, np.eye(3), atol=1e-10)

    def test_minimum_norm(self, rng):
        h = complex_normal(rng, (2, 2, 2))
        H = stack_links(h)
        F = zf_precoder(h).F
        null = np.eye(4) - H @ np.linalg.pinv(H)
        for _ in range(50):
            alternative = F + null @ complex_normal(rng, (4, 2))
            assert np.allclose(herm(H) @ alternative, np.eye(2), atol=1e-10)
            assert np.linalg.norm(F) <= np.linalg.norm(alternative) + 1e-12

    def test_per_ap_blocks(self, rng):
        h = complex_normal(rng, (2, 3, 2))
        precoder = zf_precoder(h)
        assert precoder.per_ap.shape == (3, 2, 2)
        assert np.array_equal(precoder.per_ap[1], precoder.F[2:4])

    def test_rank_deficient(self, rng):
        h = complex_normal(rng, (2, 2, 2))
        h[1] = h[0]
        with pytest.raises(SingularChannelError):
            zf_precoder(h)

    def test_too_many_users(self, rng):
        with pytest.raises(SingularChannelError):
            zf_precoder(complex_normal(rng, (5, 2, 2)))


class TestCombiner:
    def test_orthonormal_square(self, rng):
        Q, _ = np.linalg.qr(complex_normal(rng, (2, 2)))
        g = Q.T.reshape(2, 1, 2)
        V = zf_combiner(g).V
        assert np.allclose(V, herm(Q))

    def test_joint_zero_forcing(self, rng):
        g = complex_normal(rng, (4, 2, 3))
        V = zf_combiner(g).V
        assert np.allclose(V @ stack_links(g), np.eye(4), atol=1e-10)

    def test_per_rap_least_squares(self, rng):
        g = complex_normal(rng, (4, 2, 3))
        beta = np.array([[1.0, 0.1], [0.1, 1.0], [1.0, 0.1], [0.1, 1.0]])
        combiner = zf_combiner(g, "per_rap", beta)
        assert combiner.serving == [0, 1, 0, 1]
        blocks = combiner.per_rap
        for j, z in enumerate(combiner.serving):
            G_z = g[:, z, :].T
            target = np.eye(4)[j]
            best = np.linalg.norm(blocks[j, z] @ G_z - target)
            for _ in range(100):
                candidate = complex_normal(rng, 3)
                candidate *= np.linalg.norm(blocks[j, z]) / np.linalg.norm(candidate)
                assert best <= np.linalg.norm(candidate @ G_z - target) + 1e-12
            assert np.allclose(np.delete(blocks[j], z, axis=0), 0.0)

    def test_serving_raps(self):
        assert serving_raps(np.array([[0.1, 0.5], [0.9, 0.2]])) == [1, 0]

    def test_unknown_mode(self, rng):
        with pytest.raises(DomainError):
            zf_combiner(complex_normal(rng, (2, 2, 2)), "nearest")


class TestPower:
    def test_zero_eta(self, rng):
        W = np.exp(1j * rng.uniform(0, 2 * np.pi, (4, 2)))
        assert tap_power(W, complex_normal(rng, (2, 3)), np.zeros(3)) == 0.0

    def test_linear_in_eta(self, rng):
        W = np.exp(1j * rng.uniform(0, 2 * np.pi, (3, 4, 2)))
        F = complex_normal(rng, (3, 2, 3))
        eta = rng.uniform(0, 1, 3)
        assert np.allclose(tap_power(W, F, 2 * eta), 2 * tap_power(W, F, eta), rtol=1e-12)

    def test_single_user(self, rng):
        W = np.exp(1j * rng.uniform(0, 2 * np.pi, (6, 3)))
        f = np.zeros((3, 1))
        f[0, 0] = 1.0
        assert tap_power(W, f, np.array([2.0])) == pytest.approx(12.0)

    def test_negative_eta(self, rng):
        with pytest.raises(DomainError):
            tap_power(np.ones((2, 1)), np.ones((1, 1)), np.array([-1.0]))

    def test_equal_eta_single_ap(self):
        W = np.ones((1, 2, 1), dtype=np.complex128)
        F = np.array([[[1.0]]]) / np.sqrt(2)
        assert equal_downlink_eta(1.0, W, F) == pytest.approx(1.0)
        assert equal_downlink_eta(1.0, W, np.ones((1, 1, 1))) == pytest.approx(0.5)

    def test_equal_eta_meets_budget(self, rng):
        W = np.exp(1j * rng.uniform(0, 2 * np.pi, (3, 4, 2)))
        F = complex_normal(rng, (3, 2, 2))
        eta = equal_downlink_eta(0.7, W, F)
        assert np.max(tap_power(W, F, np.full(2, eta))) == pytest.approx(0.7, rel=1e-10)

    def test_equal_eta_symmetric_traces(self):
        W = np.ones((2, 2, 1), dtype=np.complex128)
        F = np.ones((2, 1, 1))
        eta = equal_downlink_eta(1.0, W, F)
        assert np.allclose(tap_power(W, F, np.array([eta])), 1.0)

    def test_all_zero_precoders(self):
        with pytest.raises(DegeneratePrecoderError):
            equal_downlink_eta(1.0, np.ones((2, 2, 1)), np.zeros((2, 1, 1)))
