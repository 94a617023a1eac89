"""
Hybrid beamforming: constant-modulus analog stage plus digital zero-forcing.
"""

import logging
from typing import Optional

import numpy as np

from models.beamforming_models import AnalogSet, DigitalCombiner, DigitalPrecoder
from models.channel_models import CovarianceSet
from utils.errors import DegeneratePrecoderError, DomainError, SingularChannelError
from utils.linalg import herm, hermitian_part

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12
PINV_RCOND = 1e-12


def analog_from_covariance(R_bar: np.ndarray, n_rf: int) -> np.ndarray:
    """Phase-only projection of the n_rf dominant eigenvectors of R_bar.

    Each eigenvector is rotated so its first significant entry is real and
    positive before the phases are taken. Batched over leading axes.

    Args:
        R_bar: (..., n, n) averaged Hermitian PSD covariance.
        n_rf: Number of columns.

    Returns:
        (..., n, n_rf) matrix with unit-modulus entries.
    """
    n = R_bar.shape[-1]
    if not 1 <= n_rf <= n:
        raise DomainError(f"n_rf must lie in [1, {n}]", {"n_rf": n_rf})
    _, vectors = np.linalg.eigh(hermitian_part(R_bar))
    dominant = vectors[..., ::-1][..., :n_rf]

    magnitude = np.abs(dominant)
    significant = magnitude > 1e-8 * np.max(magnitude, axis=-2, keepdims=True)
    anchor = np.argmax(significant, axis=-2)[..., None, :]
    reference = np.take_along_axis(dominant, anchor, axis=-2)
    rotated = dominant * np.exp(-1j * np.angle(reference))
    rotated = np.where(magnitude > 0, rotated, 0.0)
    return np.exp(1j * np.angle(rotated))


def analog_set_from_covariances(covs: CovarianceSet, n_rf: int) -> AnalogSet:
    """T-AP analog matrices from user-averaged downlink covariances, R-AP ones from uplink."""
    return AnalogSet(
        W_rf=analog_from_covariance(np.mean(covs.R_h, axis=0), n_rf),
        U_rf=analog_from_covariance(np.mean(covs.R_g, axis=0), n_rf),
    )


def stack_links(est: np.ndarray) -> np.ndarray:
    """(users, aps, n_rf) -> (aps * n_rf, users), AP-major row order."""
    users, aps, n_rf = est.shape
    return np.transpose(est, (1, 2, 0)).reshape(aps * n_rf, users)


def _checked_svd(stacked: np.ndarray, label: str):
    left, singular, right_h = np.linalg.svd(stacked, full_matrices=False)
    rows, cols = stacked.shape
    cond = np.inf if singular[-1] <= 0 else singular[0] / singular[-1]
    if rows < cols or not np.isfinite(cond) or cond > COND_LIMIT:
        logger.error(f"{label} channel is rank deficient (shape {stacked.shape}, cond {cond:.3e})")
        raise SingularChannelError(
            f"Stacked {label} channel does not have full column rank",
            {"shape": list(stacked.shape), "condition_number": float(cond)},
        )
    return left, singular, right_h


def zf_precoder(h_hat_eq: np.ndarray) -> DigitalPrecoder:
    """Minimum-norm ZF precoder F = H (H^H H)^-1 on the stacked estimates.

    Args:
        h_hat_eq: (K, N_T, n_rf) estimated equivalent downlink channels.

    Raises:
        SingularChannelError: Condition number above 1e12.
    """
    stacked = stack_links(h_hat_eq)
    left, singular, right_h = _checked_svd(stacked, "downlink")
    F = (left / singular) @ right_h
    return DigitalPrecoder(F=F, n_tap=h_hat_eq.shape[1])


def serving_raps(beta_ul: np.ndarray) -> list:
    """Serving R-AP of each uplink user: the one with the largest gain."""
    return [int(z) for z in np.argmax(beta_ul, axis=1)]


def zf_combiner(g_hat_eq: np.ndarray, mode: str = "joint",
                beta_ul: Optional[np.ndarray] = None) -> DigitalCombiner:
    """ZF combining rows for the uplink users.

    Args:
        g_hat_eq: (J, N_R, n_rf) estimated equivalent uplink channels.
        mode: ``joint`` stacks all R-APs at the CPU; ``per_rap`` uses the
            pseudoinverse of the serving R-AP's channels only.
        beta_ul: (J, N_R) gains choosing the serving R-AP in per_rap mode;
            estimate norms are used when omitted.

    Raises:
        SingularChannelError: Joint stacking is rank deficient.
    """
    n_users, n_rap, n_rf = g_hat_eq.shape
    if mode == "joint":
        left, singular, right_h = _checked_svd(stack_links(g_hat_eq), "uplink")
        V = herm(right_h) @ (herm(left) / singular[:, None])
        return DigitalCombiner(V=V, n_rap=n_rap, mode="joint")
    if mode != "per_rap":
        raise DomainError(f"Unknown combiner mode {mode}")

    weights = beta_ul if beta_ul is not None else np.linalg.norm(g_hat_eq, axis=-1)
    serving = serving_raps(weights)
    V = np.zeros((n_users, n_rap * n_rf), dtype=np.complex128)
    for j, z in enumerate(serving):
        pinv = np.linalg.pinv(g_hat_eq[:, z, :].T, rcond=PINV_RCOND)   # (J, n_rf)
        V[j, z * n_rf:(z + 1) * n_rf] = pinv[j]
    if n_rf < n_users:
        logger.debug(f"per_rap combiner is least-squares only ({n_rf} RF chains, {n_users} users)")
    return DigitalCombiner(V=V, n_rap=n_rap, mode="per_rap", serving=serving)


def tap_power(W_rf: np.ndarray, F_m: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Transmit power trace(W F diag(eta) F^H W^H), batched over leading T-AP axes."""
    eta = np.asarray(eta, dtype=np.float64)
    if np.any(eta < 0):
        raise DomainError("Power coefficients must be non-negative")
    beams = W_rf @ F_m
    power = np.einsum("...ak,k->...", np.abs(beams) ** 2, eta)
    return float(power) if np.ndim(power) == 0 else power


def equal_downlink_eta(p_d: float, W_rf: np.ndarray, F_per_ap: np.ndarray) -> float:
    """Common eta = P_D / max_m trace(W_m F_m F_m^H W_m^H).

    Raises:
        DegeneratePrecoderError: Every per-AP trace is zero.
    """
    traces = np.atleast_1d(tap_power(W_rf, F_per_ap, np.ones(F_per_ap.shape[-1])))
    peak = float(np.max(traces))
    if peak <= 0:
        raise DegeneratePrecoderError("All precoders are zero; equal-power eta is undefined")
    return p_d / peak
