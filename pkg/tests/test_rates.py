import numpy as np
import pytest

from models.beamforming_models import PowerAllocation
from phy.rates import (
    SINR_CAP, build_rate_report, capped_rate, downlink_rate_lb, mc_ergodic_rate, uplink_rate_lb,
    weighted_objective
)
from utils.errors import DomainError
from utils.linalg import complex_normal, herm, psd_sqrt, sample_from_covariance, unvec


def random_psd(rng, shape):
    A = complex_normal(rng, shape)
    return A @ herm(A)


def max_power_allocation(simulator, snapshot):
    cfg = snapshot.config
    return PowerAllocation(eta=np.full(cfg.n_dl_users, simulator.equal_eta(snapshot)),
                           p_u=np.full(cfg.n_ul_users, cfg.p_u_watt))


class TestCappedRate:
    def test_unit_snr(self):
        assert capped_rate(1.0, 1.0) == pytest.approx(1.0)

    def test_interference_free(self):
        assert capped_rate(1.0, 0.0) == pytest.approx(np.log2(1.0 + SINR_CAP))
        assert capped_rate(0.0, 0.0) == 0.0


class TestDownlink:
    def test_one_bit(self):
        sigma2 = 1e-3
        F = np.ones((1, 1, 1))
        rates, dee, iui = downlink_rate_lb(np.array([sigma2]), F, np.zeros((1, 1, 1, 1)),
                                           np.zeros((1, 1)), np.zeros(1), sigma2)
        assert rates[0] == pytest.approx(1.0)
        assert dee[0] == 0.0 and iui[0] == 0.0

    def test_iui_term(self):
        _, _, iui = downlink_rate_lb(np.ones(1), np.ones((1, 1, 1)), np.zeros((1, 1, 1, 1)),
                                     np.ones((1, 1)), np.array([2.0]), 1.0)
        assert iui[0] == pytest.approx(2.0)

    def test_increasing_in_own_eta(self, rng):
        for _ in range(100):
            F = complex_normal(rng, (2, 2, 3))
            R_tilde = random_psd(rng, (3, 2, 2, 2))
            t = complex_normal(rng, (3, 2))
            eta = rng.uniform(0.1, 1.0, 3)
            p_u = rng.uniform(0.0, 1.0, 2)
            base, _, _ = downlink_rate_lb(eta, F, R_tilde, t, p_u, 0.5)
            doubled = eta.copy()
            doubled[0] *= 2
            more, _, _ = downlink_rate_lb(doubled, F, R_tilde, t, p_u, 0.5)
            assert more[0] > base[0]

    def test_non_increasing_in_uplink_power(self, rng):
        F = complex_normal(rng, (2, 2, 2))
        R_tilde = random_psd(rng, (2, 2, 2, 2))
        t = complex_normal(rng, (2, 2))
        low, _, _ = downlink_rate_lb(np.ones(2), F, R_tilde, t, np.array([0.1, 0.1]), 0.5)
        high, _, _ = downlink_rate_lb(np.ones(2), F, R_tilde, t, np.array([0.1, 0.9]), 0.5)
        assert np.all(high <= low)

    def test_rejects_bad_inputs(self):
        args = (np.ones((1, 1, 1)), np.zeros((1, 1, 1, 1)), np.zeros((1, 1)), np.zeros(1))
        with pytest.raises(DomainError):
            downlink_rate_lb(np.ones(1), *args, 0.0)
        with pytest.raises(DomainError):
            downlink_rate_lb(-np.ones(1), *args, 1.0)


class TestUplink:
    @staticmethod
    def single_link(n=2):
        V = np.zeros((1, 1, n), dtype=np.complex128)
        V[0, 0, 0] = 1.0
        U = np.sqrt(n) * np.eye(n, dtype=np.complex128)[None]
        W = np.ones((1, n, 1), dtype=np.complex128)
        F = np.ones((1, 1, 1))
        return V, U, W, F

    def test_one_bit(self):
        n, sigma2 = 2, 1e-3
        V, U, W, F = self.single_link(n)
        probe_energy = np.real(V[0, 0] @ herm(U[0]) @ U[0] @ np.conj(V[0, 0]))
        rates, tee, noise, leakage = uplink_rate_lb(
            np.array([sigma2 * probe_energy]), V, U, W, F, np.ones(1),
            np.zeros((1, 1, n * n, n * n)), np.zeros((1, 1, n, n)), sigma2)
        assert rates[0] == pytest.approx(1.0)
        assert tee[0] == 0.0 and leakage[0] == 0.0

    def test_noise_term(self):
        n = 3
        V, U, W, F = self.single_link(n)
        _, _, noise, _ = uplink_rate_lb(np.ones(1), V, U, W, F, np.ones(1),
                                        np.zeros((1, 1, n * n, n * n)), np.zeros((1, 1, n, n)), 0.2)
        assert noise[0] == pytest.approx(0.2 * n)

    def test_kronecker_form_matches_sampled_errors(self, rng):
        n = 2
        V = complex_normal(rng, (1, 1, n))
        U = np.exp(1j * rng.uniform(0, 2 * np.pi, (1, n, n)))
        W = np.exp(1j * rng.uniform(0, 2 * np.pi, (1, n, n)))
        F = complex_normal(rng, (1, n, 1))
        C = random_psd(rng, (n * n, n * n))
        _, tee, _, _ = uplink_rate_lb(np.ones(1), V, U, W, F, np.ones(1), C[None, None],
                                      np.zeros((1, 1, n, n)), 1.0)
        errors = unvec(sample_from_covariance(rng, psd_sqrt(C), 20_000), n, n)
        probe = V[0, 0] @ herm(U[0])
        beam = W[0] @ F[0, :, 0]
        brute = np.mean(np.abs(probe @ errors @ beam) ** 2)
        assert tee[0] == pytest.approx(brute, rel=0.03)

    def test_zero_combiner_row(self):
        V, U, W, F = self.single_link()
        with pytest.raises(DomainError):
            uplink_rate_lb(np.ones(1), np.zeros_like(V), U, W, F, np.ones(1),
                           np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 2, 2)), 1.0)


class TestObjective:
    def test_downlink_only(self):
        assert weighted_objective([1.0, 2.0], [5.0], 1.0, 0.0) == pytest.approx(3.0)

    def test_symmetric_rates(self):
        assert weighted_objective([2.0] * 4, [2.0] * 4, 0.5, 0.5) == pytest.approx(8.0)

    def test_permutation_invariant(self):
        assert weighted_objective([1.0, 3.0], [2.0, 0.5], 0.3, 0.7) == \
            pytest.approx(weighted_objective([3.0, 1.0], [0.5, 2.0], 0.3, 0.7))

    def test_weights_must_sum_to_one(self):
        with pytest.raises(DomainError):
            weighted_objective([1.0], [1.0], 0.6, 0.6)


class TestSnapshotRates:
    def test_report_is_consistent(self, tiny_simulator, tiny_snapshot):
        report = build_rate_report(tiny_snapshot, max_power_allocation(tiny_simulator, tiny_snapshot))
        assert len(report.r_dl) == 2 and len(report.r_ul) == 2
        assert all(r >= 0 for r in report.r_dl + report.r_ul)
        assert all(term.iui >= 0 for term in report.dl_terms)
        assert report.dl_terms[0].noise == pytest.approx(tiny_snapshot.config.noise_watt)

    def test_jensen_bound_below_oracle(self, tiny_simulator, tiny_snapshot, rng):
        allocation = max_power_allocation(tiny_simulator, tiny_snapshot)
        report = build_rate_report(tiny_snapshot, allocation)
        oracle = mc_ergodic_rate(tiny_snapshot, allocation, 400, rng)
        assert np.all(np.array(report.r_dl) <= np.array(oracle.dl_mean) + 3 * np.array(oracle.dl_stderr) + 1e-9)
        assert np.all(np.array(report.r_ul) <= np.array(oracle.ul_mean) + 3 * np.array(oracle.ul_stderr) + 1e-9)

    def test_stderr_shrinks_with_trials(self, tiny_simulator, tiny_snapshot):
        allocation = max_power_allocation(tiny_simulator, tiny_snapshot)
        small = mc_ergodic_rate(tiny_snapshot, allocation, 1000, np.random.default_rng(1))
        large = mc_ergodic_rate(tiny_snapshot, allocation, 2000, np.random.default_rng(2))
        ratio = np.mean(large.dl_stderr + large.ul_stderr) / np.mean(small.dl_stderr + small.ul_stderr)
        assert ratio == pytest.approx(1 / np.sqrt(2), rel=0.15)

    def test_independent_of_worker_count(self, tiny_simulator, tiny_snapshot):
        allocation = max_power_allocation(tiny_simulator, tiny_snapshot)
        one = mc_ergodic_rate(tiny_snapshot, allocation, 600, np.random.default_rng(5), max_workers=1)
        many = mc_ergodic_rate(tiny_snapshot, allocation, 600, np.random.default_rng(5), max_workers=4)
        assert one.dl_mean == many.dl_mean
        assert one.ul_stderr == many.ul_stderr

    def test_oracle_needs_enough_trials(self, tiny_simulator, tiny_snapshot, rng):
        allocation = max_power_allocation(tiny_simulator, tiny_snapshot)
        with pytest.raises(DomainError):
            mc_ergodic_rate(tiny_snapshot, allocation, 99, rng)
        with pytest.raises(DomainError):
            mc_ergodic_rate(tiny_snapshot, allocation, 100, rng, mode="redraw")
