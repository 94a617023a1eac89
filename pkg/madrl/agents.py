"""
MATD3 / MADDPG agent ensemble and its update rules.

Critics are centralized: their input is the joint observation followed by all
agents' raw actions. Actors see only their own observation slice.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.beamforming_models import BeamformerSet, PowerAllocation
from models.system_models import SystemConfig
from models.training_models import TrainConfig
from madrl.networks import AdamState, Mlp
from phy.beamforming import equal_downlink_eta
from utils.errors import DomainError, TrainingDivergenceError

logger = logging.getLogger(__name__)

Batch = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


class AgentEnsemble:
    """Per-agent actors and critics with their targets and optimizers."""

    def __init__(self, obs_sizes: Sequence[int], train_cfg: TrainConfig,
                 rng: Optional[np.random.Generator] = None):
        self.train_cfg = train_cfg
        self.obs_sizes = [int(s) for s in obs_sizes]
        self.n_agents = len(self.obs_sizes)
        self.state_dim = int(sum(self.obs_sizes))
        self.offsets = np.concatenate([[0], np.cumsum(self.obs_sizes)]).astype(int)
        self.update_step = 0

        hidden = train_cfg.hidden_units
        n_critics = 2 if train_cfg.uses_twin_critics else 1
        critic_sizes = [self.state_dim + self.n_agents, hidden, hidden, 1]

        self.actors: List[Mlp] = []
        self.target_actors: List[Mlp] = []
        self.critics: List[List[Mlp]] = []
        self.target_critics: List[List[Mlp]] = []
        self.actor_opts: List[AdamState] = []
        self.critic_opts: List[List[AdamState]] = []
        if rng is None:
            return
        for size in self.obs_sizes:
            actor = Mlp([size, hidden, hidden, 1], "tanh", rng)
            critics = [Mlp(critic_sizes, "linear", rng) for _ in range(n_critics)]
            self.actors.append(actor)
            self.target_actors.append(actor.copy())
            self.critics.append(critics)
            self.target_critics.append([c.copy() for c in critics])
            self.actor_opts.append(AdamState(actor.params, train_cfg.lr))
            self.critic_opts.append([AdamState(c.params, train_cfg.lr) for c in critics])

    def agent_obs(self, states: np.ndarray, agent: int) -> np.ndarray:
        """Slice one agent's observation out of (batch, state_dim) joint states."""
        return states[..., self.offsets[agent]:self.offsets[agent + 1]]

    @staticmethod
    def joint_state(observations: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate(observations)

    def act(self, observations: Sequence[np.ndarray], noise_std: float = 0.0,
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Raw joint action in [-1, 1], with optional Gaussian exploration noise."""
        raw = np.array([actor.predict(obs[None, :])[0, 0]
                        for actor, obs in zip(self.actors, observations)])
        if noise_std > 0:
            raw = raw + rng.normal(0.0, noise_std, size=raw.shape)
        return np.clip(raw, -1.0, 1.0)

    def to_dict(self) -> Dict:
        return {
            "obs_sizes": self.obs_sizes,
            "update_step": self.update_step,
            "actors": [a.to_dict() for a in self.actors],
            "target_actors": [a.to_dict() for a in self.target_actors],
            "critics": [[c.to_dict() for c in group] for group in self.critics],
            "target_critics": [[c.to_dict() for c in group] for group in self.target_critics],
            "actor_opts": [o.to_dict() for o in self.actor_opts],
            "critic_opts": [[o.to_dict() for o in group] for group in self.critic_opts],
        }

    @classmethod
    def from_dict(cls, data: Dict, train_cfg: TrainConfig) -> "AgentEnsemble":
        ensemble = cls(data["obs_sizes"], train_cfg)
        ensemble.update_step = int(data["update_step"])
        ensemble.actors = [Mlp.from_dict(a) for a in data["actors"]]
        ensemble.target_actors = [Mlp.from_dict(a) for a in data["target_actors"]]
        ensemble.critics = [[Mlp.from_dict(c) for c in g] for g in data["critics"]]
        ensemble.target_critics = [[Mlp.from_dict(c) for c in g] for g in data["target_critics"]]
        ensemble.actor_opts = [AdamState.from_dict(o) for o in data["actor_opts"]]
        ensemble.critic_opts = [[AdamState.from_dict(o) for o in g] for g in data["critic_opts"]]
        expected = 2 if train_cfg.uses_twin_critics else 1
        if any(len(group) != expected for group in ensemble.critics):
            raise ValueError(f"Checkpoint critics do not match {train_cfg.algorithm}")
        return ensemble


def target_actions(next_states: np.ndarray, ensemble: AgentEnsemble, train_cfg: TrainConfig,
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Joint target-policy actions; MATD3 adds clipped smoothing noise."""
    actions = np.concatenate(
        [actor.predict(ensemble.agent_obs(next_states, i))
         for i, actor in enumerate(ensemble.target_actors)], axis=1)
    if train_cfg.algorithm == "matd3" and train_cfg.target_noise_std > 0:
        noise = rng.normal(0.0, train_cfg.target_noise_std, size=actions.shape)
        actions = actions + np.clip(noise, -1.0, 1.0)
    return np.clip(actions, -1.0, 1.0)


def matd3_target(batch: Batch, ensemble: AgentEnsemble, train_cfg: TrainConfig,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """TD targets y = r + gamma * min_c Q'_c(s', a~) for every agent, shape (B, n_agents).

    MADDPG has a single target critic, so the minimum is over one value.
    """
    _, next_states, _, rewards = batch
    smoothed = target_actions(next_states, ensemble, train_cfg, rng)
    x = np.concatenate([next_states, smoothed], axis=1)
    targets = np.empty_like(rewards, dtype=np.float64)
    for i, group in enumerate(ensemble.target_critics):
        q_next = np.min(np.concatenate([critic.predict(x) for critic in group], axis=1), axis=1)
        targets[:, i] = rewards[:, i] + train_cfg.gamma * q_next
    return targets


def critic_loss_and_grads(critic: Mlp, x: np.ndarray, y: np.ndarray) -> Tuple[float, List[np.ndarray]]:
    """Mean squared TD error and its parameter gradients."""
    q, cache = critic.forward(x)
    diff = q[:, 0] - y
    loss = float(np.mean(diff ** 2))
    grads, _ = critic.backward(cache, (2.0 / len(y)) * diff[:, None])
    return loss, grads


def critic_update(batch: Batch, agent: int, ensemble: AgentEnsemble,
                  targets: np.ndarray) -> List[float]:
    """One Adam step on each critic of ``agent`` towards the shared targets."""
    states, _, actions, _ = batch
    x = np.concatenate([states, actions], axis=1)
    losses = []
    for critic, opt in zip(ensemble.critics[agent], ensemble.critic_opts[agent]):
        loss, grads = critic_loss_and_grads(critic, x, targets[:, agent])
        if not np.isfinite(loss):
            logger.error(f"Critic loss of agent {agent} is {loss} at update {ensemble.update_step}")
            raise TrainingDivergenceError("Critic loss became non-finite",
                                          {"agent": agent, "update_step": ensemble.update_step})
        opt.step(critic.params, grads)
        losses.append(loss)
    return losses


def actor_objective_and_grads(actor: Mlp, critic, states: np.ndarray, actions: np.ndarray,
                              agent: int, obs: np.ndarray, state_dim: int) -> Tuple[float, List[np.ndarray]]:
    """Batch-mean Q of critic-1 with the agent's slot replaced by its policy.

    Returns (objective, gradients of -objective w.r.t. the actor parameters).
    ``critic`` only needs forward(x) -> (q, cache) and backward(cache, g) -> (grads, grad_x).
    """
    own, actor_cache = actor.forward(obs)
    joint = actions.copy()
    joint[:, agent] = own[:, 0]
    q, critic_cache = critic.forward(np.concatenate([states, joint], axis=1))
    batch = len(states)
    _, grad_x = critic.backward(critic_cache, np.full((batch, 1), 1.0 / batch))
    grad_own = grad_x[:, state_dim + agent][:, None]
    grads, _ = actor.backward(actor_cache, -grad_own)
    return float(np.mean(q)), grads


def actor_update(batch: Batch, agent: int, ensemble: AgentEnsemble) -> float:
    """Deterministic policy-gradient ascent step for one actor; returns the objective."""
    states, _, actions, _ = batch
    objective, grads = actor_objective_and_grads(
        ensemble.actors[agent], ensemble.critics[agent][0], states, actions, agent,
        ensemble.agent_obs(states, agent), ensemble.state_dim)
    if not np.isfinite(objective):
        logger.error(f"Actor objective of agent {agent} is {objective}")
        raise TrainingDivergenceError("Actor objective became non-finite",
                                      {"agent": agent, "update_step": ensemble.update_step})
    ensemble.actor_opts[agent].step(ensemble.actors[agent].params, grads)
    return objective


def soft_update(ensemble: AgentEnsemble, eps: float) -> None:
    """target <- eps * eval + (1 - eps) * target for every target network."""
    for i in range(ensemble.n_agents):
        ensemble.target_actors[i].soft_update_from(ensemble.actors[i], eps)
        for target, critic in zip(ensemble.target_critics[i], ensemble.critics[i]):
            target.soft_update_from(critic, eps)


def update_agents(batch: Batch, ensemble: AgentEnsemble, train_cfg: TrainConfig,
                  rng: Optional[np.random.Generator] = None) -> Dict[str, float]:
    """One training step: critics always, actors and targets every d-th step."""
    ensemble.update_step += 1
    targets = matd3_target(batch, ensemble, train_cfg, rng)
    critic_losses = [loss for i in range(ensemble.n_agents)
                     for loss in critic_update(batch, i, ensemble, targets)]
    stats = {"critic_loss": float(np.mean(critic_losses)), "actor_updated": 0.0}
    if ensemble.update_step % train_cfg.effective_delay == 0:
        objectives = [actor_update(batch, i, ensemble) for i in range(ensemble.n_agents)]
        soft_update(ensemble, train_cfg.tau)
        stats["actor_objective"] = float(np.mean(objectives))
        stats["actor_updated"] = 1.0
    return stats


def baseline_allocation(scheme: str, cfg: SystemConfig, beamformers: BeamformerSet,
                        rng: Optional[np.random.Generator] = None,
                        ul_equal_fraction: float = 0.5) -> PowerAllocation:
    """Conventional schemes: uplink random / equal / max, downlink equal power.

    Raises:
        DomainError: Unknown scheme.
    """
    p_max = cfg.p_u_watt
    if scheme == "ul_random":
        p_u = rng.uniform(0.0, p_max, cfg.n_ul_users)
    elif scheme == "ul_equal":
        p_u = np.full(cfg.n_ul_users, ul_equal_fraction * p_max)
    elif scheme == "ul_max":
        p_u = np.full(cfg.n_ul_users, p_max)
    else:
        raise DomainError(f"Unknown baseline scheme {scheme}")
    eta = equal_downlink_eta(cfg.p_d_watt, beamformers.analog.W_rf, beamformers.precoder.per_ap)
    return PowerAllocation(eta=np.full(cfg.n_dl_users, eta), p_u=p_u)
