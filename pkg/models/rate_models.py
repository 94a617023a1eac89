"""
Pydantic models for closed-form rate reports and Monte Carlo oracle reports.
"""

import math
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class DownlinkTerms(BaseModel):
    """Interference decomposition of one downlink user."""

    dee: float = Field(..., description="Downlink estimation-error interference")
    iui: float = Field(..., description="Inter-user interference")
    noise: float = Field(..., description="Noise power")


class UplinkTerms(BaseModel):
    """Interference decomposition of one uplink user."""

    tee: float = Field(..., description="Total estimation error (uplink error + inter-AP residual)")
    noise: float = Field(..., description="Combined noise power")
    leakage: float = Field(0.0, description="Residual inter-user leakage of a non-ZF combiner")


class RateReport(BaseModel):
    """Closed-form rate lower bounds and the weighted objective."""

    r_dl: List[float] = Field(..., description="Downlink lower bounds, bits/s/Hz")
    r_ul: List[float] = Field(..., description="Uplink lower bounds, bits/s/Hz")
    dl_terms: List[DownlinkTerms]
    ul_terms: List[UplinkTerms]
    omega_d: float
    omega_u: float
    objective: float = Field(..., description="omega_d * sum(r_dl) + omega_u * sum(r_ul)")

    @field_validator("r_dl", "r_ul")
    @classmethod
    def validate_rates(cls, v):
        """Validate rates are non-negative."""
        if any(r < 0 for r in v):
            raise ValueError("Rates must be non-negative")
        return v

    @model_validator(mode="after")
    def validate_objective(self):
        """Validate the objective matches the weighted sum."""
        expected = self.omega_d * sum(self.r_dl) + self.omega_u * sum(self.r_ul)
        if abs(expected - self.objective) > 1e-9 * max(1.0, abs(expected)):
            raise ValueError("Objective does not match the weighted rate sum")
        return self


class OracleReport(BaseModel):
    """Monte Carlo ergodic-rate estimates with standard errors."""

    mode: Literal["conditional", "redraw"]
    trials: int
    dl_mean: List[float]
    dl_stderr: List[float]
    ul_mean: List[float]
    ul_stderr: List[float]
    dl_bound: Optional[List[float]] = Field(None, description="Mean closed-form bound over the same trials")
    ul_bound: Optional[List[float]] = None

    @field_validator("dl_stderr", "ul_stderr")
    @classmethod
    def validate_stderr(cls, v):
        """Validate standard errors are finite."""
        if not all(math.isfinite(s) for s in v):
            raise ValueError("Standard errors must be finite")
        return v
