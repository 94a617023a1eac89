"""
Pydantic models for experiment configuration, validation reports, jobs and errors.
"""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from models.system_models import SystemConfig
from models.training_models import TrainConfig

SchemeName = Literal["matd3", "maddpg", "ul_random", "ul_equal", "ul_max"]
BASELINE_SCHEMES = ("ul_random", "ul_equal", "ul_max")
LEARNED_SCHEMES = ("matd3", "maddpg")


class ExperimentConfig(BaseModel):
    """Everything one CLI command needs: physics, learner and study grids."""

    system: SystemConfig = Field(default_factory=SystemConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)

    # NMSE sweep
    snr_grid_db: List[float] = Field(
        default_factory=lambda: [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
        description="Pilot SNR grid rho/sigma^2 in dB",
    )
    rf_chains: List[Union[int, Literal["full"]]] = Field(
        default_factory=lambda: [4, 10, "full"],
        description="RF-chain counts; 'full' means the full-digital row",
    )
    nmse_n_ant: int = Field(32, description="Antennas per AP for the NMSE sweep")
    nmse_trials: int = Field(500, description="Trials per NMSE cell")

    # Training studies
    gamma_grid: List[float] = Field(default_factory=lambda: [0.8, 0.9, 0.95, 0.99])
    lr_grid: List[float] = Field(default_factory=lambda: [0.005, 0.0005, 0.0001])
    final_window: int = Field(100, description="Episodes averaged for final-reward summaries")

    # Comparison
    schemes: List[SchemeName] = Field(
        default_factory=lambda: ["matd3", "maddpg", "ul_random", "ul_equal", "ul_max"]
    )
    eval_seeds: List[int] = Field(
        default_factory=lambda: [10_001, 10_002, 10_003],
        description="Held-out channel seeds shared by every compared scheme",
    )
    eval_episodes: int = Field(20, description="Evaluation episodes per held-out seed")
    checkpoints: Dict[str, str] = Field(
        default_factory=dict, description="Checkpoint path per learned scheme"
    )

    # Monte Carlo oracle and validation
    mc_trials: int = Field(2000, description="Monte Carlo trials for ergodic-rate estimates")
    mc_mode: Literal["conditional", "redraw"] = "conditional"
    jensen_scenarios: int = Field(3, description="Scenarios checked by the Jensen suite")
    mmse_trials: int = Field(4000, description="Trials for the MMSE consistency suite")

    out_dir: str = Field("runs", description="Directory receiving CSV and JSON outputs")

    @field_validator("snr_grid_db", "rf_chains", "schemes", "eval_seeds", "gamma_grid", "lr_grid")
    @classmethod
    def validate_non_empty(cls, v):
        """Validate grids are non-empty."""
        if not v:
            raise ValueError("Grids must be non-empty")
        return v

    @field_validator("rf_chains")
    @classmethod
    def validate_rf_chains(cls, v):
        """Validate numeric RF-chain counts are positive."""
        for item in v:
            if item != "full" and int(item) < 1:
                raise ValueError("RF-chain counts must be at least 1")
        return v

    @field_validator("nmse_n_ant", "nmse_trials", "final_window", "eval_episodes",
                     "jensen_scenarios", "mmse_trials")
    @classmethod
    def validate_positive(cls, v):
        """Validate positive integer fields."""
        if v < 1:
            raise ValueError("Value must be at least 1")
        return v

    @field_validator("mc_trials")
    @classmethod
    def validate_mc_trials(cls, v):
        """Validate the Monte Carlo oracle gets at least 100 trials."""
        if v < 100:
            raise ValueError("mc_trials must be at least 100")
        return v

    @model_validator(mode="after")
    def validate_rf_against_antennas(self):
        """Validate numeric RF-chain counts fit the sweep antenna count."""
        for item in self.rf_chains:
            if item != "full" and int(item) > self.nmse_n_ant:
                raise ValueError("RF-chain count exceeds nmse_n_ant")
        return self

    @classmethod
    def default(cls) -> "ExperimentConfig":
        """Deployment-scale defaults."""
        return cls()

    @classmethod
    def small(cls, seed: int = 2024) -> "ExperimentConfig":
        """Small instance used for learning comparisons (3/3 APs, 2/2 users)."""
        system = SystemConfig(
            n_tap=3, n_rap=3, n_ul_users=2, n_dl_users=2, n_ant=4, n_rf=2, master_seed=seed
        )
        return cls(system=system)

    @classmethod
    def from_json_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.model_validate(json.load(handle))

    def to_json_file(self, path: Union[str, Path]) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.model_dump_json(indent=2))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with a different master seed."""
        system = self.system.model_copy(update={"master_seed": seed})
        return self.model_copy(update={"system": system})


class SuiteResult(BaseModel):
    """Outcome of one invariant suite."""

    name: str
    passed: bool
    metrics: Dict[str, float] = Field(default_factory=dict)
    message: str = ""
    duration_s: float = 0.0


class ValidationReport(BaseModel):
    """Pass/fail results of every validation suite."""

    schema_version: int
    master_seed: int
    suites: List[SuiteResult]

    @property
    def passed(self) -> bool:
        return all(suite.passed for suite in self.suites)

    @model_validator(mode="after")
    def validate_unique_names(self):
        """Validate every suite appears once."""
        names = [suite.name for suite in self.suites]
        if len(names) != len(set(names)):
            raise ValueError("Suite names must be unique")
        return self


class JobStatus(BaseModel):
    """Status of a background training or comparison job."""

    job_id: str
    kind: Literal["train", "compare"]
    status: Literal["pending", "running", "completed", "failed", "cancelled"] = "pending"
    progress: float = Field(0.0, description="Completion percentage")
    message: str = ""
    outputs: List[str] = Field(default_factory=list, description="Files written by the job")
    created_at: datetime = Field(default_factory=datetime.now)
    finished_at: Optional[datetime] = None


class ErrorResponse(BaseModel):
    """Model for error responses."""

    error: bool = Field(True, description="Always True for error responses")
    message: str = Field(..., description="Human-readable error message")
    error_code: str = Field(..., description="Machine-readable error code")
    details: Optional[Dict[str, Any]] = Field(None, description="Additional error details")
    timestamp: datetime = Field(default_factory=datetime.now, description="When the error occurred")

    @field_validator("message", "error_code")
    @classmethod
    def validate_required_strings(cls, v):
        """Validate required string fields are not empty."""
        if not isinstance(v, str) or not v.strip():
            raise ValueError("Required string fields must be non-empty")
        return v.strip()


class ValidationRequest(BaseModel):
    """Request model for a synchronous validation run."""

    config: ExperimentConfig = Field(default_factory=ExperimentConfig.small)
    suites: Optional[List[str]] = Field(None, description="Subset of suites; all when omitted")


class ExperimentRequest(BaseModel):
    """Request model for NMSE sweeps and background jobs."""

    config: ExperimentConfig = Field(default_factory=ExperimentConfig.small)
