"""
Multi-agent power-allocation environment.

Agents 0..J-1 control the uplink users' transmit powers, agents J..J+K-1 the
downlink coefficients eta_k. Channels and angles stay fixed within an episode;
every step refreshes the user pilot noise, which is what moves the state.

Observation layout (all agents of one direction see the same block):
    uplink agent    [Re g_hat / sqrt(beta_ul), Im g_hat / sqrt(beta_ul)]  (J, N_R, n_rf) C-order
    downlink agent  [Re h_hat / sqrt(beta_dl), Im h_hat / sqrt(beta_dl)]  (K, N_T, n_rf) C-order
    both, appended  log10(max(|t_kj|^2, 1e-30))                            (K, J) C-order
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from models.beamforming_models import PowerAllocation
from models.system_models import Scenario, SystemConfig
from models.training_models import TrainConfig
from phy import rates
from services.network_service import NetworkSimulator, NetworkSnapshot
from utils.errors import DomainError

logger = logging.getLogger(__name__)

IUI_FLOOR = 1e-30


@dataclass(frozen=True)
class AgentRole:
    """Direction and user index controlled by one agent."""

    direction: str      # "ul" or "dl"
    user: int


def agent_roles(cfg: SystemConfig) -> List[AgentRole]:
    """Uplink agents first, then downlink agents."""
    return ([AgentRole("ul", j) for j in range(cfg.n_ul_users)]
            + [AgentRole("dl", k) for k in range(cfg.n_dl_users)])


def _normalized_block(est: np.ndarray, beta: np.ndarray) -> np.ndarray:
    scaled = est / np.sqrt(beta)[..., None]
    return np.concatenate([scaled.real.ravel(), scaled.imag.ravel()])


def build_observation(role: AgentRole, snapshot: NetworkSnapshot) -> np.ndarray:
    """Local observation of one agent (see the module docstring for the layout)."""
    est = snapshot.estimates
    scenario = snapshot.scenario
    if role.direction == "ul":
        csi = _normalized_block(est.uplink.est, scenario.beta_ul)
    else:
        csi = _normalized_block(est.downlink.est, scenario.beta_dl)
    iui = np.log10(np.maximum(np.abs(snapshot.channels.t_iui) ** 2, IUI_FLOOR)).ravel()
    return np.concatenate([csi, iui])


def observation_size(role: AgentRole, cfg: SystemConfig) -> int:
    links = cfg.n_ul_users * cfg.n_rap if role.direction == "ul" else cfg.n_dl_users * cfg.n_tap
    return 2 * links * cfg.n_rf + cfg.n_dl_users * cfg.n_ul_users


def eta_ceiling(cfg: SystemConfig, train_cfg: TrainConfig) -> float:
    return train_cfg.eta_max if train_cfg.eta_max is not None else cfg.p_d_watt


def action_to_power(role: AgentRole, raw: float, cfg: SystemConfig, train_cfg: TrainConfig,
                    eta_equal: Optional[float] = None) -> float:
    """Map a raw action in [-1, 1] to watts (uplink) or eta (downlink).

    Uplink: P_U (raw + 1) / 2. Downlink ``absolute``: eta_max (raw + 1) / 2.
    Downlink ``equal_power``: eta_equal (eta_max / P_D) (raw + 1).
    """
    if not np.isfinite(raw):
        raise DomainError("Raw action must be finite", {"raw": float(raw)})
    raw = float(np.clip(raw, -1.0, 1.0))
    if role.direction == "ul":
        return cfg.p_u_watt * (raw + 1.0) / 2.0
    ceiling = eta_ceiling(cfg, train_cfg)
    if train_cfg.eta_reference == "equal_power":
        if eta_equal is None:
            raise DomainError("equal_power scaling needs the equal-power eta")
        return eta_equal * (ceiling / cfg.p_d_watt) * (raw + 1.0)
    return ceiling * (raw + 1.0) / 2.0


def allocation_from_actions(roles: List[AgentRole], raw_actions: np.ndarray, cfg: SystemConfig,
                            train_cfg: TrainConfig, eta_equal: Optional[float] = None) -> PowerAllocation:
    p_u = np.zeros(cfg.n_ul_users)
    eta = np.zeros(cfg.n_dl_users)
    for role, raw in zip(roles, raw_actions):
        value = action_to_power(role, raw, cfg, train_cfg, eta_equal)
        if role.direction == "ul":
            p_u[role.user] = value
        else:
            eta[role.user] = value
    return PowerAllocation(eta=eta, p_u=p_u)


def step_rewards(simulator: NetworkSimulator, snapshot: NetworkSnapshot, roles: List[AgentRole],
                 allocation: PowerAllocation, penalty_coefficient: float) -> np.ndarray:
    """Per-agent rewards for one allocation on one snapshot.

    Downlink agents add penalty_coefficient * clip(min_m(P_D - P_D,m), -1, 1),
    the worst T-AP margin in watts.
    """
    return evaluate_allocation(simulator, snapshot, roles, allocation, penalty_coefficient)[0]


def evaluate_allocation(simulator: NetworkSimulator, snapshot: NetworkSnapshot, roles: List[AgentRole],
                        allocation: PowerAllocation, penalty_coefficient: float) -> Tuple[np.ndarray, float]:
    """Per-agent rewards and the weighted sum rate of one allocation."""
    cfg = snapshot.config
    r_dl, _, r_ul, _ = rates.snapshot_bounds(snapshot, allocation)
    margin = cfg.p_d_watt - float(np.max(simulator.tap_powers(snapshot, allocation.eta)))
    penalty = penalty_coefficient * float(np.clip(margin, -1.0, 1.0))
    rewards = np.empty(len(roles))
    for idx, role in enumerate(roles):
        if role.direction == "ul":
            rewards[idx] = cfg.omega_u * r_ul[role.user]
        else:
            rewards[idx] = cfg.omega_d * r_dl[role.user] + penalty
    if not np.all(np.isfinite(rewards)):
        logger.error(f"Non-finite rewards {rewards.tolist()} for allocation "
                     f"eta={allocation.eta.tolist()} p_u={allocation.p_u.tolist()}")
        raise DomainError("Rewards became non-finite", {"rewards": rewards.tolist()})
    return rewards, rates.weighted_objective(r_dl, r_ul, cfg.omega_d, cfg.omega_u)


class PowerControlEnv:
    """Episode-level wrapper around NetworkSimulator for the learners."""

    def __init__(self, cfg: SystemConfig, train_cfg: TrainConfig):
        self.cfg = cfg
        self.train_cfg = train_cfg
        self.simulator = NetworkSimulator(cfg, train_cfg.combiner_mode)
        self.roles = agent_roles(cfg)
        self.obs_sizes = [observation_size(role, cfg) for role in self.roles]
        self.snapshot: Optional[NetworkSnapshot] = None
        self.last_sum_rate = float("nan")

    @property
    def n_agents(self) -> int:
        return len(self.roles)

    def reset(self, scenario: Scenario, rng: np.random.Generator) -> List[np.ndarray]:
        """Draw a new realization (angles and gains) for the episode."""
        self.snapshot = self.simulator.realize(scenario, rng)
        return self.observe()

    def observe(self) -> List[np.ndarray]:
        return [build_observation(role, self.snapshot) for role in self.roles]

    def equal_eta(self) -> Optional[float]:
        if self.train_cfg.eta_reference != "equal_power":
            return None
        return self.simulator.equal_eta(self.snapshot)

    def step(self, raw_actions: np.ndarray,
             rng: np.random.Generator) -> Tuple[List[np.ndarray], np.ndarray, PowerAllocation]:
        """Apply joint raw actions; returns (next observations, rewards, allocation)."""
        allocation = allocation_from_actions(self.roles, raw_actions, self.cfg, self.train_cfg,
                                             self.equal_eta())
        next_obs, rewards = self.apply(allocation, rng)
        return next_obs, rewards, allocation

    def apply(self, allocation: PowerAllocation,
              rng: np.random.Generator) -> Tuple[List[np.ndarray], np.ndarray]:
        """Reward an allocation, then refresh the pilot noise for the next state."""
        rewards, self.last_sum_rate = evaluate_allocation(
            self.simulator, self.snapshot, self.roles, allocation, self.train_cfg.penalty_coefficient)
        self.snapshot = self.simulator.refresh_pilots(self.snapshot, rng)
        return self.observe(), rewards
