"""
Pydantic models for hybrid beamformers and power allocations.
"""

from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from models.array_types import ComplexArray, RealArray

CombinerMode = Literal["joint", "per_rap"]


class AnalogSet(BaseModel):
    """Unit-modulus analog matrices of every AP."""

    W_rf: ComplexArray      # (N_T, n, n_rf)
    U_rf: ComplexArray      # (N_R, n, n_rf)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def validate_unit_modulus(self):
        """Validate every analog entry has modulus one."""
        for name in ("W_rf", "U_rf"):
            if not np.allclose(np.abs(getattr(self, name)), 1.0, atol=1e-12):
                raise ValueError(f"{name} entries must have unit modulus")
        return self


class DigitalPrecoder(BaseModel):
    """Stacked ZF precoder F (N_T * n_rf, K)."""

    F: ComplexArray
    n_tap: int

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def per_ap(self) -> np.ndarray:
        """Per-T-AP blocks F_m, shaped (N_T, n_rf, K)."""
        n_rows, n_users = self.F.shape
        return self.F.reshape(self.n_tap, n_rows // self.n_tap, n_users)


class DigitalCombiner(BaseModel):
    """Combining rows v_j, stacked over R-APs as (J, N_R * n_rf).

    In per_rap mode only the serving R-AP block of each row is nonzero.
    """

    V: ComplexArray
    n_rap: int
    mode: CombinerMode = "joint"
    serving: Optional[List[int]] = None     # serving R-AP per uplink user in per_rap mode

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def per_rap(self) -> np.ndarray:
        """Per-R-AP blocks v_{j,z}, shaped (J, N_R, n_rf)."""
        n_users, n_cols = self.V.shape
        return self.V.reshape(n_users, self.n_rap, n_cols // self.n_rap)


class BeamformerSet(BaseModel):
    """Analog and digital beamformers of one realization."""

    analog: AnalogSet
    precoder: DigitalPrecoder
    combiner: DigitalCombiner

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class PowerAllocation(BaseModel):
    """Downlink power coefficients eta_k and uplink powers P_U,j (watts)."""

    eta: RealArray
    p_u: RealArray

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def validate_non_negative(self):
        """Validate all powers are non-negative and finite."""
        for name in ("eta", "p_u"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} must be finite and non-negative")
        return self

    def check_uplink_limit(self, p_max: float, tol: float = 1e-12) -> bool:
        """True when every uplink power respects the per-user cap."""
        return bool(np.all(self.p_u <= p_max * (1.0 + tol)))
