"""
Invariant suites behind the ``validate`` command.

Each suite returns a SuiteResult with its metrics; run_validation collects
them into a ValidationReport. A suite that raises is reported as failed with
the error message instead of aborting the run.
"""

import logging
import time
from itertools import combinations
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from config import SCHEMA_VERSION
from models.beamforming_models import PowerAllocation
from models.experiment_models import ExperimentConfig, SuiteResult, ValidationReport
from models.system_models import SystemConfig
from models.training_models import TrainConfig
from madrl.agents import (
    AgentEnsemble, actor_objective_and_grads, critic_loss_and_grads, matd3_target,
    soft_update, update_agents
)
from madrl.networks import Mlp, finite_difference_gradients, gradient_relative_error
from phy import beamforming, channel, estimation
from phy.scenario import generate_topology
from services.network_service import NetworkSimulator, NetworkSnapshot
from utils.errors import SingularChannelError
from utils.linalg import herm, psd_sqrt, sample_from_covariance, unvec
from utils.seeding import derive_rng

logger = logging.getLogger(__name__)

WATERFILL_INSTANCES = 20
WATERFILL_GRID_STEPS = 16           # C(19, 3) = 969 simplex points
KRON_INSTANCES = 10
GRADIENT_CONFIGS = 10
ZF_REALIZATIONS = 5
MAX_REALIZE_ATTEMPTS = 10

SuiteFn = Callable[[ExperimentConfig, float], Tuple[bool, Dict[str, float], str]]


def _realize(simulator: NetworkSimulator, cfg: SystemConfig, *keys) -> NetworkSnapshot:
    scenario = generate_topology(cfg, derive_rng(cfg.master_seed, *keys, "topology"))
    for attempt in range(MAX_REALIZE_ATTEMPTS):
        try:
            return simulator.realize(scenario, derive_rng(cfg.master_seed, *keys, attempt))
        except SingularChannelError:
            logger.debug(f"Realization {keys} attempt {attempt} singular; redrawing")
    raise SingularChannelError(f"No usable realization for {keys}")


# ---------------------------------------------------------------------- water-filling

def _mse_objective(lam: np.ndarray, x: np.ndarray, snr: float) -> float:
    return float(np.sum(1.0 / (1.0 / lam + snr * x)))


def _simplex_grid(dim: int, steps: int) -> np.ndarray:
    """All points of the simplex sum(x) = 1 with coordinates in multiples of 1/steps."""
    points = []
    for bars in combinations(range(steps + dim - 1), dim - 1):
        edges = np.diff(np.concatenate([[-1], bars, [steps + dim - 1]])) - 1
        points.append(edges / steps)
    return np.array(points)


def suite_waterfill_kkt(config: ExperimentConfig, fault: float) -> Tuple[bool, Dict[str, float], str]:
    """Water-filling against a simplex grid search, plus KKT level uniformity."""
    rng = derive_rng(config.system.master_seed, "validate", "waterfill")
    grid = _simplex_grid(4, WATERFILL_GRID_STEPS)
    worst_gap, worst_level = -np.inf, 0.0
    for _ in range(WATERFILL_INSTANCES):
        lam = np.sort(rng.uniform(0.05, 2.0, 4))[::-1]
        rho, sigma2, budget = rng.uniform(0.5, 5.0), 1.0, rng.uniform(1.0, 4.0)
        snr = rho / sigma2
        x = estimation.waterfill(lam, rho, sigma2, budget)
        objective = _mse_objective(lam, x, snr)
        grid_best = min(_mse_objective(lam, budget * point, snr) for point in grid)
        worst_gap = max(worst_gap, objective - grid_best)

        active = x > 0
        levels = 1.0 / lam[active] + snr * x[active]
        spread = float(np.ptp(levels) / np.max(levels))
        if np.any(~active) and np.min(1.0 / lam[~active]) < np.max(levels) * (1 - 1e-9):
            spread = np.inf
        worst_level = max(worst_level, spread, abs(np.sum(x) - budget) / budget)

    passed = worst_gap <= 1e-3 and worst_level <= 1e-9
    return passed, {"objective_minus_grid": float(worst_gap), "level_spread": float(worst_level)}, ""


# ---------------------------------------------------------------------- Kronecker

def suite_kronecker(config: ExperimentConfig, fault: float) -> Tuple[bool, Dict[str, float], str]:
    """Exact Kronecker inputs are recovered; residuals equal the tail singular energy."""
    rng = derive_rng(config.system.master_seed, "validate", "kronecker")
    n, n_rf = config.system.n_ant, config.system.n_rf
    worst_exact, worst_residual = 0.0, 0.0
    for _ in range(KRON_INSTANCES):
        B = rng.standard_normal((n_rf, n)) + 1j * rng.standard_normal((n_rf, n))
        C = rng.standard_normal((n_rf, n)) + 1j * rng.standard_normal((n_rf, n))
        exact = np.kron(B, C)
        w, u, _ = estimation.kron_factorize(exact, n, n_rf)
        rebuilt = np.kron(w.T, herm(u))
        worst_exact = max(worst_exact, float(np.linalg.norm(rebuilt - exact) / np.linalg.norm(exact)))

        noisy = rng.standard_normal(exact.shape) + 1j * rng.standard_normal(exact.shape)
        w, u, residual = estimation.kron_factorize(noisy, n, n_rf)
        actual = float(np.linalg.norm(noisy - np.kron(w.T, herm(u))))
        singular = np.linalg.svd(estimation.vanloan_rearrange(noisy, (n_rf, n), (n_rf, n)),
                                 compute_uv=False)
        tail = float(np.sqrt(np.sum(singular[1:] ** 2)))
        worst_residual = max(worst_residual, abs(actual - tail), abs(residual - tail))

    passed = worst_exact <= 1e-10 and worst_residual <= 1e-10
    return passed, {"exact_rel_err": worst_exact, "residual_vs_tail": worst_residual}, ""


# ---------------------------------------------------------------------- MMSE

def suite_mmse_consistency(config: ExperimentConfig, fault: float) -> Tuple[bool, Dict[str, float], str]:
    """Empirical inter-AP estimation MSE matches trace(C) within 3%."""
    rng = derive_rng(config.system.master_seed, "validate", "mmse")
    n, n_rf, trials = 6, 3, config.mmse_trials
    rho, sigma2 = 10.0, 1.0
    _, (angles_r, angles_t) = channel.sample_interap_channel(1.0, config.system.n_paths, n, rng)
    R = channel.interap_covariance(angles_r, angles_t, 1.0, n)
    design = estimation.optimal_coupling(R, rho, sigma2, n_rf)

    H = unvec(sample_from_covariance(rng, psd_sqrt(R), trials), n, n)
    Y = estimation.simulate_interap_pilot(H, design.w_est, design.u_est, rho, np.sqrt(sigma2), rng)
    estimate = estimation.mmse_interap(Y, R, design.effective_coupling, rho, sigma2)
    empirical = float(np.mean(np.sum(np.abs(estimate.H_hat - H) ** 2, axis=(-2, -1))))
    predicted = float(np.real(np.trace(estimate.C)))
    rel = abs(empirical - predicted) / predicted
    return rel <= 0.03, {"empirical_mse": empirical, "trace_c": predicted, "rel_err": rel}, ""


# ---------------------------------------------------------------------- Jensen

def suite_jensen(config: ExperimentConfig, fault: float) -> Tuple[bool, Dict[str, float], str]:
    """Closed-form bounds never exceed Monte Carlo ergodic rates + 3 stderr.

    ``fault`` scales the downlink estimation-error term of the conditional
    bound; -1 flips its sign.
    """
    cfg = config.system
    simulator = NetworkSimulator(cfg, config.train.combiner_mode)
    worst = -np.inf
    for s in range(config.jensen_scenarios):
        snapshot = _realize(simulator, cfg, "validate", "jensen", s)
        eta = simulator.equal_eta(snapshot)
        allocation = PowerAllocation(eta=np.full(cfg.n_dl_users, eta), p_u=np.full(cfg.n_ul_users, cfg.p_u_watt))
        report = simulator.evaluate(snapshot, allocation, dee_scale=fault)
        oracle = simulator.ergodic_rate(snapshot, allocation, config.mc_trials,
                                        derive_rng(cfg.master_seed, "validate", "jensen-mc", s),
                                        config.mc_mode)
        # redraw mode compares the bound averaged over the same fresh realizations
        dl_bound = report.r_dl if oracle.dl_bound is None else oracle.dl_bound
        ul_bound = report.r_ul if oracle.ul_bound is None else oracle.ul_bound
        dl_excess = np.array(dl_bound) - (np.array(oracle.dl_mean) + 3 * np.array(oracle.dl_stderr))
        ul_excess = np.array(ul_bound) - (np.array(oracle.ul_mean) + 3 * np.array(oracle.ul_stderr))
        worst = max(worst, float(np.max(dl_excess)), float(np.max(ul_excess)))
        logger.debug(f"Jensen scenario {s}: bound DL {report.r_dl}, MC DL {oracle.dl_mean}")
    message = "" if worst <= 0 else "A closed-form bound exceeds its Monte Carlo rate"
    return worst <= 0, {"max_bound_excess": worst}, message


# ---------------------------------------------------------------------- zero-forcing

def suite_zf_exactness(config: ExperimentConfig, fault: float) -> Tuple[bool, Dict[str, float], str]:
    """ZF nulls interference on the estimates and, with perfect CSI, on the channels."""
    cfg = config.system
    simulator = NetworkSimulator(cfg, "joint")
    worst_dl, worst_ul, worst_leak = 0.0, 0.0, 0.0
    for r in range(ZF_REALIZATIONS):
        snapshot = _realize(simulator, cfg, "validate", "zf", r)
        bf, est = snapshot.beamformers, snapshot.estimates
        h_stack = beamforming.stack_links(est.downlink.est)
        g_stack = beamforming.stack_links(est.uplink.est)
        worst_dl = max(worst_dl, float(np.max(np.abs(herm(h_stack) @ bf.precoder.F - np.eye(cfg.n_dl_users)))))
        worst_ul = max(worst_ul, float(np.max(np.abs(bf.combiner.V @ g_stack - np.eye(cfg.n_ul_users)))))

        true_eq = np.einsum("mna,kmn->kma", np.conj(bf.analog.W_rf), snapshot.channels.h)
        perfect = beamforming.zf_precoder(true_eq)
        gains = np.abs(herm(beamforming.stack_links(true_eq)) @ perfect.F) ** 2
        signal = np.diag(gains)
        interference = np.sum(gains, axis=1) - signal
        worst_leak = max(worst_leak, float(np.max(interference / signal)))

    passed = worst_dl <= 1e-9 and worst_ul <= 1e-9 and worst_leak <= 1e-10
    return passed, {"dl_identity_err": worst_dl, "ul_identity_err": worst_ul,
                    "perfect_csi_leakage": worst_leak}, ""


# ---------------------------------------------------------------------- gradient engine

def suite_gradient_check(config: ExperimentConfig, fault: float) -> Tuple[bool, Dict[str, float], str]:
    """Actor and critic gradients against central finite differences."""
    rng = derive_rng(config.system.master_seed, "validate", "gradients")
    worst = 0.0
    for _ in range(GRADIENT_CONFIGS):
        obs_dim, state_dim, hidden, batch = (int(v) for v in rng.integers(2, 6, size=4))
        n_agents = int(rng.integers(1, 4))
        agent = int(rng.integers(0, n_agents))
        actor = Mlp([obs_dim, hidden, hidden, 1], "tanh", rng)
        critic = Mlp([state_dim + n_agents, hidden, hidden, 1], "linear", rng)

        x = rng.standard_normal((batch, state_dim + n_agents))
        y = rng.standard_normal(batch)
        _, grads = critic_loss_and_grads(critic, x, y)
        numeric = finite_difference_gradients(lambda: critic_loss_and_grads(critic, x, y)[0], critic.params)
        worst = max(worst, gradient_relative_error(grads, numeric))

        states = rng.standard_normal((batch, state_dim))
        actions = rng.uniform(-1, 1, (batch, n_agents))
        obs = rng.standard_normal((batch, obs_dim))

        def negative_objective() -> float:
            return -actor_objective_and_grads(actor, critic, states, actions, agent, obs, state_dim)[0]

        _, grads = actor_objective_and_grads(actor, critic, states, actions, agent, obs, state_dim)
        numeric = finite_difference_gradients(negative_objective, actor.params)
        worst = max(worst, gradient_relative_error(grads, numeric))
    return worst <= 1e-4, {"max_rel_err": worst}, ""


# ---------------------------------------------------------------------- TD3 mechanics

def _constant_critic(sizes: List[int], value: float) -> Mlp:
    stub = Mlp(sizes, "linear")
    stub.params[-1][:] = value
    return stub


def suite_td3_mechanics(config: ExperimentConfig, fault: float) -> Tuple[bool, Dict[str, float], str]:
    """Twin-min target, delayed actor cadence and soft-update contraction."""
    rng = derive_rng(config.system.master_seed, "validate", "td3")
    train_cfg = TrainConfig(algorithm="matd3", batch_size=8, gamma=0.95, policy_delay=2,
                            hidden_units=8, target_noise_std=0.2)
    ensemble = AgentEnsemble([3, 3], train_cfg, rng)
    batch = (rng.standard_normal((8, 6)), rng.standard_normal((8, 6)),
             rng.uniform(-1, 1, (8, 2)), np.ones((8, 2)))

    trained = AgentEnsemble.from_dict(ensemble.to_dict(), train_cfg)
    sizes = ensemble.critics[0][0].sizes
    for i in range(ensemble.n_agents):
        ensemble.target_critics[i] = [_constant_critic(sizes, 2.0), _constant_critic(sizes, 3.0)]
    targets = matd3_target(batch, ensemble, train_cfg, rng)
    target_err = float(np.max(np.abs(targets - 2.9)))

    updates = 10
    actor_updates = sum(int(update_agents(batch, trained, train_cfg, rng)["actor_updated"])
                        for _ in range(updates))
    cadence_ok = actor_updates == updates // train_cfg.policy_delay

    eps, calls = 0.3, 5
    frozen = AgentEnsemble.from_dict(trained.to_dict(), train_cfg)
    for group in frozen.target_critics:
        for target in group:
            for p in target.params:
                p += rng.standard_normal(p.shape)
    before = np.linalg.norm(frozen.target_critics[0][0].params[0] - frozen.critics[0][0].params[0])
    for _ in range(calls):
        soft_update(frozen, eps)
    after = np.linalg.norm(frozen.target_critics[0][0].params[0] - frozen.critics[0][0].params[0])
    contraction_err = float(abs(after - (1 - eps) ** calls * before) / before)

    passed = target_err <= 1e-12 and cadence_ok and contraction_err <= 1e-9
    return passed, {"twin_min_err": target_err, "actor_updates": float(actor_updates),
                    "contraction_rel_err": contraction_err}, ""


SUITES: Dict[str, SuiteFn] = {
    "waterfill_kkt": suite_waterfill_kkt,
    "kronecker": suite_kronecker,
    "mmse_consistency": suite_mmse_consistency,
    "jensen": suite_jensen,
    "zf_exactness": suite_zf_exactness,
    "gradient_check": suite_gradient_check,
    "td3_mechanics": suite_td3_mechanics,
}


def run_suite(name: str, config: ExperimentConfig, fault: float = 1.0) -> SuiteResult:
    """Run one suite; exceptions become a failed result."""
    start = time.perf_counter()
    try:
        passed, metrics, message = SUITES[name](config, fault)
    except Exception as e:
        logger.error(f"Suite {name} raised: {str(e)}")
        passed, metrics, message = False, {}, f"{type(e).__name__}: {str(e)}"
    duration = time.perf_counter() - start
    level = logging.INFO if passed else logging.ERROR
    logger.log(level, f"Suite {name}: {'passed' if passed else 'FAILED'} in {duration:.1f}s {metrics}")
    return SuiteResult(name=name, passed=passed, metrics=metrics, message=message, duration_s=duration)


def run_validation(config: ExperimentConfig, suites: Optional[List[str]] = None,
                   dee_scale: float = 1.0) -> ValidationReport:
    """
    Run the invariant suites.

    Args:
        config: Experiment configuration (system sizes, trial counts, seed).
        suites: Subset of suite names; all suites when omitted.
        dee_scale: Fault-injection multiplier for the downlink estimation-error
            term used by the Jensen suite; 1 in normal operation.

    Returns:
        ValidationReport listing each requested suite once.
    """
    names = list(SUITES) if suites is None else list(dict.fromkeys(suites))
    unknown = [name for name in names if name not in SUITES]
    if unknown:
        raise ValueError(f"Unknown validation suites: {unknown}")
    logger.info(f"Running {len(names)} validation suites with seed {config.system.master_seed}")
    results = [run_suite(name, config, dee_scale) for name in names]
    return ValidationReport(schema_version=SCHEMA_VERSION, master_seed=config.system.master_seed,
                            suites=results)
