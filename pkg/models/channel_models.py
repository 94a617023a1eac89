"""
Pydantic models for one small-scale channel realization and its covariances.

Array layouts (n = antennas per AP, L = paths):
    downlink links  (K, N_T, ...)   h[k, m]
    uplink links    (J, N_R, ...)   g[j, z]
    inter-AP links  (N_T, N_R, ...) H_ap[m, z]
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from models.array_types import ComplexArray, RealArray


class AngleSet(BaseModel):
    """Path angles for every link, in radians."""

    dl: RealArray      # (K, N_T, L) AoD towards downlink users
    ul: RealArray      # (J, N_R, L) AoA at R-APs
    ap_r: RealArray    # (N_T, N_R, L) AoA at the R-AP
    ap_t: RealArray    # (N_T, N_R, L) AoD at the T-AP

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def validate_range(self):
        """Validate every angle lies in [-pi, pi]."""
        for name in ("dl", "ul", "ap_r", "ap_t"):
            arr = getattr(self, name)
            if arr.size and (np.min(arr) < -np.pi or np.max(arr) > np.pi):
                raise ValueError(f"Angles in {name} must lie in [-pi, pi]")
        if self.ap_r.shape != self.ap_t.shape:
            raise ValueError("Inter-AP AoA and AoD arrays must have equal shapes")
        return self

    @property
    def n_paths(self) -> int:
        return int(self.dl.shape[-1])


class ChannelSet(BaseModel):
    """One realization of every small-scale channel."""

    h: ComplexArray        # (K, N_T, n)
    g: ComplexArray        # (J, N_R, n)
    H_ap: ComplexArray     # (N_T, N_R, n, n)
    t_iui: ComplexArray    # (K, J)
    angles: AngleSet

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def n_ant(self) -> int:
        return int(self.h.shape[-1])


class CovarianceSet(BaseModel):
    """Angle-conditioned covariances of every link."""

    R_h: ComplexArray      # (K, N_T, n, n)
    R_g: ComplexArray      # (J, N_R, n, n)
    R_ap: ComplexArray     # (N_T, N_R, n^2, n^2), covariance of vec(H_ap)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
