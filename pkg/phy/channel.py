"""
Small-scale channel synthesis with a multipath ULA model.

Every link is a sum of L paths with CN(0, beta) gains and uniform angles on
[-pi, pi]. Half-wavelength spacing gives the steering phase pi * p * sin(theta).
All batch helpers keep the link indices as leading axes.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from config import settings
from models.channel_models import AngleSet, ChannelSet, CovarianceSet
from models.system_models import Scenario
from utils.errors import CapacityError
from utils.linalg import complex_normal

logger = logging.getLogger(__name__)


def steering_vector(theta, n: int) -> np.ndarray:
    """Unit-norm ULA response; a batch of angles gives shape (*theta.shape, n)."""
    if n < 1:
        raise ValueError("Antenna count must be at least 1")
    theta = np.asarray(theta, dtype=np.float64)
    p = np.arange(n)
    phase = np.pi * np.sin(theta)[..., None] * p
    return np.exp(1j * phase) / np.sqrt(n)


def _path_gains(rng: np.random.Generator, beta, n_paths: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    return np.sqrt(beta)[..., None] * complex_normal(rng, (*beta.shape, n_paths))


def _draw_angle_block(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(-np.pi, np.pi, size=shape)


def sample_vector_channel(beta: float, n_paths: int, n: int, rng: np.random.Generator,
                          path_gains: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Draw one user-AP channel sum_l alpha_l v(theta_l).

    Args:
        beta: Large-scale gain (variance of every path gain).
        n_paths: Number of paths L.
        n: Antennas.
        rng: Random generator.
        path_gains: Optional fixed alpha values, used instead of random gains.

    Returns:
        (channel vector of length n, angles of length L)
    """
    angles = _draw_angle_block(rng, n_paths)
    alpha = _path_gains(rng, beta, n_paths) if path_gains is None \
        else np.asarray(path_gains, dtype=np.complex128)
    return alpha @ steering_vector(angles, n), angles


def sample_interap_channel(beta: float, n_paths: int, n: int, rng: np.random.Generator,
                           path_gains: Optional[np.ndarray] = None) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """Draw one T-AP to R-AP matrix sum_l alpha_l v(theta_r) v(theta_t)^H.

    Returns:
        (n x n matrix, (angles_r, angles_t))
    """
    angles_r = _draw_angle_block(rng, n_paths)
    angles_t = _draw_angle_block(rng, n_paths)
    alpha = _path_gains(rng, beta, n_paths) if path_gains is None \
        else np.asarray(path_gains, dtype=np.complex128)
    return _interap_from_gains(alpha, angles_r, angles_t, n), (angles_r, angles_t)


def _vector_from_gains(alpha: np.ndarray, angles: np.ndarray, n: int) -> np.ndarray:
    return np.einsum("...l,...ln->...n", alpha, steering_vector(angles, n))


def _interap_from_gains(alpha: np.ndarray, angles_r: np.ndarray, angles_t: np.ndarray,
                        n: int) -> np.ndarray:
    v_r = steering_vector(angles_r, n)
    v_t = steering_vector(angles_t, n)
    return np.einsum("...l,...la,...lb->...ab", alpha, v_r, np.conj(v_t))


def vector_covariance(angles, beta, n: int) -> np.ndarray:
    """R = beta * sum_l v(theta_l) v(theta_l)^H, batched over leading axes."""
    v = steering_vector(angles, n)
    beta = np.asarray(beta, dtype=np.float64)
    return beta[..., None, None] * np.einsum("...la,...lb->...ab", v, np.conj(v))


def _check_capacity(n: int, cap: Optional[int]) -> None:
    limit = settings.max_covariance_antennas if cap is None else cap
    if n > limit:
        logger.error(f"Inter-AP covariance with {n} antennas exceeds the cap of {limit}")
        raise CapacityError(
            f"Inter-AP covariance needs {n}^2 x {n}^2 entries; cap is n <= {limit}",
            {"n_ant": n, "cap": limit},
        )


def interap_covariance(angles_r, angles_t, beta, n: int, cap: Optional[int] = None) -> np.ndarray:
    """Covariance of vec(H_ap): beta * sum_l x_l x_l^H with x_l = vec(v_r v_t^H).

    Column-major vec gives x_l = conj(v_t) kron v_r.

    Raises:
        CapacityError: n exceeds the configured antenna cap.
    """
    _check_capacity(n, cap)
    v_r = steering_vector(angles_r, n)
    v_t = steering_vector(angles_t, n)
    x = (np.conj(v_t)[..., :, None] * v_r[..., None, :]).reshape(*v_r.shape[:-1], n * n)
    beta = np.asarray(beta, dtype=np.float64)
    return beta[..., None, None] * np.einsum("...la,...lb->...ab", x, np.conj(x))


def sample_iui(beta, rng: np.random.Generator):
    """CN(0, beta) inter-user gains; scalar in, scalar out."""
    beta_arr = np.asarray(beta, dtype=np.float64)
    if np.any(beta_arr < 0):
        raise ValueError("IUI gain variance must be non-negative")
    draw = np.sqrt(beta_arr) * complex_normal(rng, beta_arr.shape)
    return complex(draw) if beta_arr.ndim == 0 else draw


def draw_angles(scenario: Scenario, n_paths: int, rng: np.random.Generator) -> AngleSet:
    """Draw the path angles of every link in the scenario."""
    n_k, n_t = scenario.beta_dl.shape
    n_j, n_r = scenario.beta_ul.shape
    return AngleSet(
        dl=_draw_angle_block(rng, (n_k, n_t, n_paths)),
        ul=_draw_angle_block(rng, (n_j, n_r, n_paths)),
        ap_r=_draw_angle_block(rng, (n_t, n_r, n_paths)),
        ap_t=_draw_angle_block(rng, (n_t, n_r, n_paths)),
    )


def sample_channels(scenario: Scenario, angles: AngleSet, n: int,
                    rng: np.random.Generator) -> ChannelSet:
    """Draw path gains for fixed angles and assemble every channel."""
    n_paths = angles.n_paths
    alpha_dl = _path_gains(rng, scenario.beta_dl, n_paths)
    alpha_ul = _path_gains(rng, scenario.beta_ul, n_paths)
    alpha_ap = _path_gains(rng, scenario.beta_ap, n_paths)
    t_iui = sample_iui(scenario.beta_iui, rng)
    return ChannelSet(
        h=_vector_from_gains(alpha_dl, angles.dl, n),
        g=_vector_from_gains(alpha_ul, angles.ul, n),
        H_ap=_interap_from_gains(alpha_ap, angles.ap_r, angles.ap_t, n),
        t_iui=t_iui,
        angles=angles,
    )


def covariance_set(scenario: Scenario, angles: AngleSet, n: int,
                   cap: Optional[int] = None) -> CovarianceSet:
    """Angle-conditioned covariances of every link."""
    return CovarianceSet(
        R_h=vector_covariance(angles.dl, scenario.beta_dl, n),
        R_g=vector_covariance(angles.ul, scenario.beta_ul, n),
        R_ap=interap_covariance(angles.ap_r, angles.ap_t, scenario.beta_ap, n, cap),
    )
