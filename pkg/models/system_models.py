"""
Pydantic models for the network geometry and its physical-unit configuration.
"""

from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.array_types import RealArray


class SystemConfig(BaseModel):
    """Physical configuration of one NAFD cell-free mmWave deployment."""

    n_tap: int = Field(6, description="Number of transmitting APs (N_T)")
    n_rap: int = Field(6, description="Number of receiving APs (N_R)")
    n_ul_users: int = Field(4, description="Number of uplink users (J)")
    n_dl_users: int = Field(4, description="Number of downlink users (K)")
    n_ant: int = Field(6, description="Antennas per AP (N_AP)")
    n_rf: int = Field(3, description="RF chains per AP (N_RF)")
    n_paths: int = Field(3, description="Propagation paths L per link")
    radius_m: float = Field(60.0, description="Deployment disc radius in meters")
    protect_m: float = Field(5.0, description="Minimum user-AP distance in meters")
    carrier_hz: float = Field(28e9, description="Carrier frequency in Hz")
    noise_dbm: float = Field(-85.0, description="Total noise power in dBm")
    p_d_dbm: float = Field(30.0, description="Per-T-AP maximum transmit power in dBm")
    p_u_dbm: float = Field(27.0, description="Per-uplink-user maximum power in dBm")
    pathloss_exp: float = Field(2.92, description="Path-loss exponent xi")
    shadow_std_db: float = Field(8.7, description="Log-normal shadowing std in dB")
    omega_d: float = Field(0.5, description="Downlink rate weight")
    omega_u: float = Field(0.5, description="Uplink rate weight")
    master_seed: int = Field(2024, description="Master RNG seed")

    model_config = ConfigDict(frozen=True)

    @field_validator("n_tap", "n_rap", "n_ul_users", "n_dl_users", "n_ant", "n_rf", "n_paths")
    @classmethod
    def validate_counts(cls, v):
        """Validate every count is at least one."""
        if v < 1:
            raise ValueError("Counts must be at least 1")
        return v

    @field_validator("carrier_hz", "pathloss_exp")
    @classmethod
    def validate_positive(cls, v):
        """Validate strictly positive physical constants."""
        if v <= 0:
            raise ValueError("Value must be positive")
        return v

    @field_validator("shadow_std_db")
    @classmethod
    def validate_shadow(cls, v):
        """Validate shadowing std is non-negative."""
        if v < 0:
            raise ValueError("Shadowing std must be non-negative")
        return v

    @field_validator("master_seed")
    @classmethod
    def validate_seed(cls, v):
        """Validate seed is non-negative."""
        if v < 0:
            raise ValueError("Seed must be non-negative")
        return v

    @model_validator(mode="after")
    def validate_relations(self):
        """Validate cross-field invariants."""
        if self.n_rf > self.n_ant:
            raise ValueError("n_rf must not exceed n_ant")
        if abs(self.omega_d + self.omega_u - 1.0) > 1e-9:
            raise ValueError("omega_d + omega_u must equal 1")
        if self.omega_d < 0 or self.omega_u < 0:
            raise ValueError("Rate weights must be non-negative")
        # protect_m = 0 is accepted as the degenerate no-rejection case
        if not self.radius_m > self.protect_m >= 0:
            raise ValueError("Require radius_m > protect_m >= 0")
        return self

    @property
    def noise_watt(self) -> float:
        return 10.0 ** ((self.noise_dbm - 30.0) / 10.0)

    @property
    def p_d_watt(self) -> float:
        return 10.0 ** ((self.p_d_dbm - 30.0) / 10.0)

    @property
    def p_u_watt(self) -> float:
        return 10.0 ** ((self.p_u_dbm - 30.0) / 10.0)

    @property
    def n_agents(self) -> int:
        return self.n_ul_users + self.n_dl_users


class Scenario(BaseModel):
    """Node positions and per-link linear large-scale gains.

    Attributes:
        tap_pos, rap_pos, ul_pos, dl_pos: (count, 2) positions in meters.
        beta_dl: (K, N_T) gains T-AP m -> downlink user k.
        beta_ul: (J, N_R) gains uplink user j -> R-AP z.
        beta_ap: (N_T, N_R) gains T-AP m -> R-AP z.
        beta_iui: (K, J) gains uplink user j -> downlink user k.
    """

    tap_pos: RealArray
    rap_pos: RealArray
    ul_pos: RealArray
    dl_pos: RealArray
    beta_dl: RealArray
    beta_ul: RealArray
    beta_ap: RealArray
    beta_iui: RealArray

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def validate_gains(self):
        """Validate shapes agree and every gain is positive and finite."""
        n_t, n_r = len(self.tap_pos), len(self.rap_pos)
        n_j, n_k = len(self.ul_pos), len(self.dl_pos)
        expected = {
            "beta_dl": (n_k, n_t),
            "beta_ul": (n_j, n_r),
            "beta_ap": (n_t, n_r),
            "beta_iui": (n_k, n_j),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValueError(f"{name} must be strictly positive and finite")
        return self

    def to_json_dict(self) -> Dict[str, Any]:
        """Serialize with positions in meters and gains in dB."""
        return {
            "positions_m": {
                "tap": self.tap_pos.tolist(),
                "rap": self.rap_pos.tolist(),
                "ul": self.ul_pos.tolist(),
                "dl": self.dl_pos.tolist(),
            },
            "beta_db": {
                "dl": (10.0 * np.log10(self.beta_dl)).tolist(),
                "ul": (10.0 * np.log10(self.beta_ul)).tolist(),
                "ap": (10.0 * np.log10(self.beta_ap)).tolist(),
                "iui": (10.0 * np.log10(self.beta_iui)).tolist(),
            },
        }

    @classmethod
    def from_json_dict(cls, data: Dict[str, Any]) -> "Scenario":
        """Inverse of to_json_dict()."""
        pos = data["positions_m"]
        gains = data["beta_db"]

        def lin(db):
            return 10.0 ** (np.asarray(db, dtype=np.float64) / 10.0)

        return cls(
            tap_pos=pos["tap"], rap_pos=pos["rap"], ul_pos=pos["ul"], dl_pos=pos["dl"],
            beta_dl=lin(gains["dl"]), beta_ul=lin(gains["ul"]),
            beta_ap=lin(gains["ap"]), beta_iui=lin(gains["iui"]),
        )
