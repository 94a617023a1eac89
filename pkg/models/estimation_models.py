"""
Pydantic models for pilot blocks, coupling designs and MMSE estimates.

Estimate containers are batch-friendly: leading axes index links, trailing
axes hold the per-link vector or matrix.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.array_types import ComplexArray, RealArray


class PilotBlock(BaseModel):
    """Orthonormal pilot rows with their power and noise level."""

    pilots: ComplexArray = Field(..., description="(users, tau) pilot rows")
    rho: float = Field(..., description="Per-symbol pilot power")
    sigma_tau: float = Field(..., description="Pilot noise standard deviation")

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def validate_gram(self):
        """Validate the pilot Gram matrix is the identity."""
        n_users, tau = self.pilots.shape
        if tau < n_users:
            raise ValueError("Pilot length must be at least the number of users")
        gram = self.pilots @ self.pilots.conj().T
        if not np.allclose(gram, np.eye(n_users), atol=1e-10):
            raise ValueError("Pilot rows must be orthonormal")
        if self.rho < 0 or self.sigma_tau < 0:
            raise ValueError("Pilot power and noise std must be non-negative")
        return self

    @classmethod
    def orthonormal(cls, n_users: int, rho: float, sigma_tau: float) -> "PilotBlock":
        """Identity-like pilot set with tau = n_users."""
        return cls(pilots=np.eye(n_users), rho=rho, sigma_tau=sigma_tau)


class CouplingDesign(BaseModel):
    """Optimal inter-AP pilot coupling and its Kronecker RF factors."""

    eigvals: RealArray          # (n^2,) descending
    eigvecs: ComplexArray       # (n^2, n^2)
    allocation: RealArray       # (n^2,) water-filling powers x
    sigma_a: RealArray          # (n_rf^2, n^2) diagonal sqrt(x) block
    coupling: ComplexArray      # (n_rf^2, n^2) A = Sigma_A U_R^H
    w_est: ComplexArray         # (n, n_rf)
    u_est: ComplexArray         # (n, n_rf)
    kron_residual: float = 0.0

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def effective_coupling(self) -> np.ndarray:
        """Coupling the pilot realizes with the RF factors: W^T kron U^H."""
        return np.kron(self.w_est.T, self.u_est.conj().T)


class InterApEstimate(BaseModel):
    """MMSE estimate of inter-AP channels and the error covariance of vec(H)."""

    H_hat: ComplexArray     # (..., n, n)
    C: ComplexArray         # (..., n^2, n^2)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class EquivalentEstimate(BaseModel):
    """MMSE estimate of equivalent (post-analog) channels with their covariances."""

    est: ComplexArray       # (..., n_rf)
    R_eq: ComplexArray      # (..., n_rf, n_rf)
    R_hat: ComplexArray     # (..., n_rf, n_rf)
    R_tilde: ComplexArray   # (..., n_rf, n_rf)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class EstimateBundle(BaseModel):
    """All estimates produced for one realization."""

    inter_ap: InterApEstimate       # indexed (N_T, N_R)
    w_est: ComplexArray             # (N_T, N_R, n, n_rf) estimation-stage factors
    u_est: ComplexArray             # (N_T, N_R, n, n_rf)
    downlink: EquivalentEstimate    # indexed (K, N_T)
    uplink: EquivalentEstimate      # indexed (J, N_R)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
