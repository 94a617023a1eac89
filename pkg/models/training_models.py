"""
Pydantic models for multi-agent training hyperparameters and training logs.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

Algorithm = Literal["matd3", "maddpg"]


class TrainConfig(BaseModel):
    """Hyperparameters of the MATD3 / MADDPG learners."""

    algorithm: Algorithm = Field("matd3", description="Learner variant")
    batch_size: int = Field(1024, description="Mini-batch size D")
    lr: float = Field(0.0005, description="Adam learning rate for actors and critics")
    gamma: float = Field(0.95, description="Discount factor")
    policy_delay: int = Field(2, description="Actor/target update period d (MATD3)")
    t_max: int = Field(50, description="Environment steps per episode")
    target_noise_std: float = Field(0.2, description="Target-policy smoothing std")
    exploration_std: float = Field(0.5, description="Exploration noise std on raw actions")
    tau: float = Field(0.01, description="Soft-update rate epsilon")
    penalty_coefficient: float = Field(1.0, description="Weight of the T-AP power-margin term")
    episodes: int = Field(2000, description="Number of training episodes N_e")
    eta_max: Optional[float] = Field(None, description="Downlink action ceiling; None means P_D in watts")
    eta_reference: Literal["absolute", "equal_power"] = Field(
        "absolute", description="Scale downlink actions absolutely or around the equal-power level"
    )
    dynamic_period: Optional[int] = Field(
        None, description="Regenerate user positions every this many episodes; None keeps them fixed"
    )
    replay_capacity: int = Field(100_000, description="Replay buffer capacity")
    hidden_units: int = Field(64, description="Units per hidden layer")
    combiner_mode: Literal["joint", "per_rap"] = Field("joint", description="Uplink combiner mode")
    ul_equal_fraction: float = Field(0.5, description="Fraction of P_U used by the ul_equal baseline")
    checkpoint_every: int = Field(0, description="Write a checkpoint every this many episodes; 0 disables")

    @field_validator("gamma")
    @classmethod
    def validate_gamma(cls, v):
        """Validate 0 < gamma < 1."""
        if not 0.0 < v < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        return v

    @field_validator("tau")
    @classmethod
    def validate_tau(cls, v):
        """Validate 0 < tau <= 1."""
        if not 0.0 < v <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        return v

    @field_validator("batch_size", "policy_delay", "t_max", "episodes", "replay_capacity", "hidden_units")
    @classmethod
    def validate_positive_integers(cls, v):
        """Validate positive integer fields."""
        if v < 1:
            raise ValueError("Value must be at least 1")
        return v

    @field_validator("lr", "target_noise_std", "exploration_std", "penalty_coefficient")
    @classmethod
    def validate_non_negative(cls, v):
        """Validate non-negative float fields."""
        if v < 0:
            raise ValueError("Value must be non-negative")
        return v

    @model_validator(mode="after")
    def validate_relations(self):
        """Validate cross-field invariants."""
        if self.eta_max is not None and self.eta_max <= 0:
            raise ValueError("eta_max must be positive")
        if self.dynamic_period is not None and self.dynamic_period < 1:
            raise ValueError("dynamic_period must be at least 1")
        if not 0.0 <= self.ul_equal_fraction <= 1.0:
            raise ValueError("ul_equal_fraction must lie in [0, 1]")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be non-negative")
        return self

    @property
    def uses_twin_critics(self) -> bool:
        return self.algorithm == "matd3"

    @property
    def effective_delay(self) -> int:
        """MADDPG updates actors on every training step."""
        return self.policy_delay if self.algorithm == "matd3" else 1


class TrainLog(BaseModel):
    """Per-episode reward history of one training run."""

    algorithm: Algorithm
    episode_rewards: List[float] = Field(default_factory=list, description="Mean total reward per step")
    agent_rewards: List[List[float]] = Field(default_factory=list, description="Per-episode mean reward of each agent")
    wall_clock_s: List[float] = Field(default_factory=list, description="Seconds spent per episode")
    checkpoints: List[str] = Field(default_factory=list, description="Checkpoint paths written so far")

    @model_validator(mode="after")
    def validate_lengths(self):
        """Validate per-episode lists have equal lengths."""
        n = len(self.episode_rewards)
        if len(self.agent_rewards) != n or len(self.wall_clock_s) != n:
            raise ValueError("Per-episode lists must have equal lengths")
        return self

    @property
    def n_episodes(self) -> int:
        return len(self.episode_rewards)

    def final_mean(self, window: int = 100) -> float:
        """Mean episode reward over the last ``window`` episodes."""
        if not self.episode_rewards:
            return float("nan")
        tail = self.episode_rewards[-window:]
        return sum(tail) / len(tail)
