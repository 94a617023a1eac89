"""
Training loop for the multi-agent power-allocation learners.

Every random draw of episode e comes from derive_rng(master_seed, "episode", e),
so a run resumed from a checkpoint reproduces the uninterrupted run exactly.
The topology and the initial networks have their own streams and are shared
by MATD3 and MADDPG runs with the same master seed.
"""

import logging
import threading
import time
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from models.system_models import Scenario, SystemConfig
from models.training_models import TrainConfig, TrainLog
from madrl.agents import AgentEnsemble, update_agents
from madrl.environment import PowerControlEnv
from madrl.replay import ReplayBuffer
from phy.scenario import generate_topology, relocate_users
from services.checkpoint_service import read_checkpoint, write_checkpoint
from utils.errors import CheckpointError, SingularChannelError, TrainingDivergenceError
from utils.seeding import derive_rng

logger = logging.getLogger(__name__)

MAX_RESET_ATTEMPTS = 10
# Settings that may differ between a checkpoint and the run resuming from it
RESUMABLE_OVERRIDES = {"episodes", "checkpoint_every"}

ProgressCallback = Callable[[int, int, float], None]


def training_topology(system: SystemConfig) -> Scenario:
    return generate_topology(system, derive_rng(system.master_seed, "topology"))


class Trainer:
    """
    Owns the environment, agents and replay buffer of one training run.

    Attributes:
        env: PowerControlEnv bound to the system configuration.
        ensemble: Actors, critics, targets and optimizers.
        buffer: Joint-transition replay buffer.
        log: TrainLog of the episodes completed so far.
        next_episode: Index of the next episode to run.
    """

    def __init__(self, system: SystemConfig, train_cfg: TrainConfig,
                 out_dir: Optional[Union[str, Path]] = None):
        self.system = system
        self.train_cfg = train_cfg
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.env = PowerControlEnv(system, train_cfg)
        self.base_scenario = training_topology(system)
        self.scenario = self.base_scenario
        self.ensemble = AgentEnsemble(self.env.obs_sizes, train_cfg,
                                      derive_rng(system.master_seed, "networks"))
        n_agents = self.env.n_agents
        self.buffer = ReplayBuffer(train_cfg.replay_capacity, self.ensemble.state_dim, n_agents, n_agents)
        self.log = TrainLog(algorithm=train_cfg.algorithm)
        self.next_episode = 0

        logger.info(f"Trainer initialized: {train_cfg.algorithm}, {n_agents} agents, "
                    f"state dim {self.ensemble.state_dim}, seed {system.master_seed}")

    # ------------------------------------------------------------------ scenario

    def _relocates_at(self, episode: int) -> bool:
        period = self.train_cfg.dynamic_period
        return period is not None and episode > 0 and episode % period == 0

    def _relocate(self, scenario: Scenario, episode: int) -> Scenario:
        rng = derive_rng(self.system.master_seed, "relocate", episode)
        return relocate_users(scenario, self.system, rng)

    def scenario_at(self, episode: int) -> Scenario:
        """Topology in force during ``episode`` (replays every earlier relocation)."""
        scenario = self.base_scenario
        for e in range(1, episode + 1):
            if self._relocates_at(e):
                scenario = self._relocate(scenario, e)
        return scenario

    # ------------------------------------------------------------------ episodes

    def _reset(self, episode: int) -> Tuple[List[np.ndarray], np.random.Generator]:
        """Start an episode; singular realizations are redrawn from a sub-stream."""
        seed = self.system.master_seed
        for attempt in range(MAX_RESET_ATTEMPTS):
            keys = ("episode", episode) if attempt == 0 else ("episode", episode, attempt)
            rng = derive_rng(seed, *keys)
            try:
                return self.env.reset(self.scenario, rng), rng
            except SingularChannelError as e:
                logger.warning(f"Episode {episode} attempt {attempt}: {e.message}; redrawing")
        raise SingularChannelError(f"No usable realization for episode {episode}",
                                   {"episode": episode, "attempts": MAX_RESET_ATTEMPTS})

    def run_episode(self, episode: int) -> np.ndarray:
        """Roll t_max steps with exploration and learning; returns per-agent mean rewards."""
        if self._relocates_at(episode):
            self.scenario = self._relocate(self.scenario, episode)
            logger.info(f"Episode {episode}: user positions regenerated")

        cfg = self.train_cfg
        obs, rng = self._reset(episode)
        totals = np.zeros(self.env.n_agents)
        for _ in range(cfg.t_max):
            state = self.ensemble.joint_state(obs)
            raw = self.ensemble.act(obs, cfg.exploration_std, rng)
            next_obs, rewards, _ = self.env.step(raw, rng)
            self.buffer.add(state, self.ensemble.joint_state(next_obs), raw, rewards)
            if len(self.buffer) >= cfg.batch_size:
                batch = self.buffer.sample(cfg.batch_size, rng)
                update_agents(batch, self.ensemble, cfg, rng)
            totals += rewards
            obs = next_obs
        return totals / cfg.t_max

    def run(self, progress_callback: Optional[ProgressCallback] = None,
            cancel_event: Optional[threading.Event] = None) -> TrainLog:
        """
        Train until ``train_cfg.episodes`` episodes are logged.

        Args:
            progress_callback: Called as (completed, total, episode_reward).
            cancel_event: Stops the run after the current episode when set.

        Returns:
            The TrainLog, also kept on ``self.log``.

        Raises:
            TrainingDivergenceError: A loss became non-finite; the diverged state
                is dumped for inspection when an output directory is set.
        """
        total = self.train_cfg.episodes
        logger.info(f"Training {self.train_cfg.algorithm} from episode {self.next_episode} to {total}")
        while self.next_episode < total:
            if cancel_event is not None and cancel_event.is_set():
                logger.info(f"Training cancelled before episode {self.next_episode}")
                break
            episode = self.next_episode
            start = time.perf_counter()
            try:
                agent_means = self.run_episode(episode)
            except TrainingDivergenceError as e:
                path = self._dump_divergence(episode)
                if path is not None:
                    e.checkpoint_path = str(path)
                    e.details["checkpoint_path"] = str(path)
                e.details["episode"] = episode
                raise

            reward = float(np.sum(agent_means))
            self.log.episode_rewards.append(reward)
            self.log.agent_rewards.append([float(r) for r in agent_means])
            self.log.wall_clock_s.append(time.perf_counter() - start)
            self.next_episode = episode + 1

            if episode % 10 == 0 or self.next_episode == total:
                logger.info(f"Episode {episode}: reward {reward:.4f}, replay {len(self.buffer)}, "
                            f"updates {self.ensemble.update_step}")
            else:
                logger.debug(f"Episode {episode}: reward {reward:.4f}")

            every = self.train_cfg.checkpoint_every
            if self.out_dir is not None and every and self.next_episode % every == 0:
                self.save(self.out_dir / f"{self.train_cfg.algorithm}_ep{self.next_episode:05d}.json")
            if progress_callback:
                progress_callback(self.next_episode, total, reward)

        if self.out_dir is not None:
            self.save(self.out_dir / f"{self.train_cfg.algorithm}_final.json")
        return self.log

    # ------------------------------------------------------------------ checkpoints

    def save(self, path: Union[str, Path]) -> Path:
        """Write the full training state (networks, Adam, replay, log, configs)."""
        path = Path(path)
        self.log.checkpoints.append(str(path))
        payload = {
            "kind": "train",
            "algorithm": self.train_cfg.algorithm,
            "next_episode": self.next_episode,
            "system": self.system.model_dump(),
            "train": self.train_cfg.model_dump(),
            "log": self.log.model_dump(),
            "ensemble": self.ensemble.to_dict(),
        }
        return write_checkpoint(path, payload, self.buffer.to_arrays())

    def _dump_divergence(self, episode: int) -> Optional[Path]:
        if self.out_dir is None:
            return None
        try:
            return self.save(self.out_dir / f"{self.train_cfg.algorithm}_diverged_ep{episode:05d}.json")
        except Exception as e:
            logger.error(f"Could not write divergence checkpoint: {str(e)}")
            return None

    @classmethod
    def resume(cls, path: Union[str, Path], train_cfg: Optional[TrainConfig] = None,
               out_dir: Optional[Union[str, Path]] = None) -> "Trainer":
        """
        Rebuild a trainer from a checkpoint.

        Args:
            path: Checkpoint JSON written by ``save``.
            train_cfg: Settings to continue with; only the episode count and the
                checkpoint period may differ from the stored ones.
            out_dir: Output directory for further checkpoints.

        Raises:
            CheckpointError: Missing, unreadable or incompatible checkpoint.
        """
        payload, arrays = read_checkpoint(path)
        if payload.get("kind") != "train":
            raise CheckpointError(f"{path} is not a training checkpoint", {"path": str(path)})
        system = SystemConfig.model_validate(payload["system"])
        stored = TrainConfig.model_validate(payload["train"])
        train_cfg = train_cfg or stored
        mismatched = {key for key, value in stored.model_dump().items()
                      if key not in RESUMABLE_OVERRIDES and getattr(train_cfg, key) != value}
        if mismatched:
            raise CheckpointError("Training settings differ from the checkpoint",
                                  {"path": str(path), "fields": sorted(mismatched)})

        trainer = cls(system, train_cfg, out_dir)
        trainer.ensemble = AgentEnsemble.from_dict(payload["ensemble"], train_cfg)
        if arrays:
            trainer.buffer = ReplayBuffer.from_arrays(arrays)
        trainer.log = TrainLog.model_validate(payload["log"])
        trainer.next_episode = int(payload["next_episode"])
        if trainer.next_episode > 0:
            trainer.scenario = trainer.scenario_at(trainer.next_episode - 1)
        logger.info(f"Resumed {train_cfg.algorithm} at episode {trainer.next_episode} from {path}")
        return trainer


def train(system: SystemConfig, train_cfg: TrainConfig, out_dir: Optional[Union[str, Path]] = None,
          resume_from: Optional[Union[str, Path]] = None,
          progress_callback: Optional[ProgressCallback] = None,
          cancel_event: Optional[threading.Event] = None) -> TrainLog:
    """Run (or resume) one training job and return its TrainLog."""
    if resume_from is not None:
        trainer = Trainer.resume(resume_from, train_cfg, out_dir)
        if trainer.system != system:
            raise CheckpointError("System configuration differs from the checkpoint",
                                  {"path": str(resume_from)})
    else:
        trainer = Trainer(system, train_cfg, out_dir)
    return trainer.run(progress_callback, cancel_event)


def load_policy(path: Union[str, Path]) -> Tuple[AgentEnsemble, SystemConfig, TrainConfig]:
    """Load the trained ensemble of a checkpoint for evaluation."""
    payload, _ = read_checkpoint(path)
    if payload.get("kind") != "train":
        raise CheckpointError(f"{path} is not a training checkpoint", {"path": str(path)})
    system = SystemConfig.model_validate(payload["system"])
    train_cfg = TrainConfig.model_validate(payload["train"])
    return AgentEnsemble.from_dict(payload["ensemble"], train_cfg), system, train_cfg


def greedy_actions(ensemble: AgentEnsemble, observations: List[np.ndarray]) -> np.ndarray:
    """Noise-free joint action used at evaluation time."""
    return ensemble.act(observations)

