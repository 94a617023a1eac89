"""
Network geometry and large-scale fading.

Nodes are dropped uniformly in a disc. Users are resampled until they keep the
protection distance from every AP. Large-scale gains follow a log-distance
path-loss law with free-space loss at the 1 m reference plus log-normal
shadowing drawn independently per link.
"""

import logging
from typing import Union

import numpy as np

from models.system_models import Scenario, SystemConfig
from utils.errors import DomainError, GeometryInfeasibleError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
REFERENCE_DISTANCE_M = 1.0
MAX_PLACEMENT_ATTEMPTS = 10_000

ArrayLike = Union[float, np.ndarray]


def dbm_to_watt(p_dbm: ArrayLike) -> ArrayLike:
    """Convert dBm to watts."""
    watts = 10.0 ** ((np.asarray(p_dbm, dtype=np.float64) - 30.0) / 10.0)
    return float(watts) if watts.ndim == 0 else watts


def path_loss_db(d_m: ArrayLike, cfg: SystemConfig) -> ArrayLike:
    """Log-distance path loss in dB, shadowing excluded.

    Args:
        d_m: Distance(s) in meters, strictly positive.
        cfg: System configuration (carrier and path-loss exponent).

    Returns:
        PL(d) = 20 log10(4 pi d0 / lambda) + 10 xi log10(d / d0) with d0 = 1 m.
    """
    d = np.asarray(d_m, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise DomainError("Path-loss distance must be positive and finite",
                          {"min_distance_m": float(np.min(d)) if d.size else None})
    wavelength = SPEED_OF_LIGHT / cfg.carrier_hz
    reference = 20.0 * np.log10(4.0 * np.pi * REFERENCE_DISTANCE_M / wavelength)
    loss = reference + 10.0 * cfg.pathloss_exp * np.log10(d / REFERENCE_DISTANCE_M)
    return float(loss) if np.ndim(d_m) == 0 else loss


def large_scale_gain(d_m: ArrayLike, cfg: SystemConfig, rng: np.random.Generator) -> ArrayLike:
    """Linear gain 10^(-(PL(d) + X)/10) with X ~ N(0, shadow_std_db^2) per entry."""
    loss = np.asarray(path_loss_db(d_m, cfg))
    shadow = rng.normal(0.0, cfg.shadow_std_db, size=loss.shape) if cfg.shadow_std_db > 0 \
        else np.zeros(loss.shape)
    gain = 10.0 ** (-(loss + shadow) / 10.0)
    return float(gain) if np.ndim(d_m) == 0 else gain


def _uniform_disc(rng: np.random.Generator, count: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(count))
    phi = rng.uniform(-np.pi, np.pi, count)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def _place_users(rng: np.random.Generator, count: int, aps: np.ndarray,
                 cfg: SystemConfig, label: str) -> np.ndarray:
    users = np.empty((count, 2))
    for idx in range(count):
        for attempt in range(MAX_PLACEMENT_ATTEMPTS):
            candidate = _uniform_disc(rng, 1, cfg.radius_m)[0]
            if np.min(np.linalg.norm(aps - candidate, axis=-1)) >= cfg.protect_m:
                users[idx] = candidate
                break
        else:
            logger.error(f"Could not place {label} user {idx} after {MAX_PLACEMENT_ATTEMPTS} attempts")
            raise GeometryInfeasibleError(
                f"No feasible position for {label} user {idx}",
                {"attempts": MAX_PLACEMENT_ATTEMPTS, "protect_m": cfg.protect_m,
                 "radius_m": cfg.radius_m},
            )
        if attempt:
            logger.debug(f"{label} user {idx} placed after {attempt + 1} attempts")
    return users


def _pairwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def _user_gains(cfg: SystemConfig, rng: np.random.Generator, tap_pos: np.ndarray,
                rap_pos: np.ndarray, ul_pos: np.ndarray, dl_pos: np.ndarray):
    beta_dl = large_scale_gain(_pairwise_distance(dl_pos, tap_pos), cfg, rng)
    beta_ul = large_scale_gain(_pairwise_distance(ul_pos, rap_pos), cfg, rng)
    # no protection distance between user pairs; floor at the reference distance
    d_iui = np.maximum(_pairwise_distance(dl_pos, ul_pos), REFERENCE_DISTANCE_M)
    beta_iui = large_scale_gain(d_iui, cfg, rng)
    return beta_dl, beta_ul, beta_iui


def generate_topology(cfg: SystemConfig, rng: np.random.Generator) -> Scenario:
    """Drop APs and users in the disc and compute every large-scale gain.

    Args:
        cfg: System configuration.
        rng: Generator owning all placement and shadowing draws.

    Returns:
        Immutable Scenario.

    Raises:
        GeometryInfeasibleError: A user could not be placed within the attempt budget.
    """
    tap_pos = _uniform_disc(rng, cfg.n_tap, cfg.radius_m)
    rap_pos = _uniform_disc(rng, cfg.n_rap, cfg.radius_m)
    aps = np.concatenate([tap_pos, rap_pos], axis=0)
    ul_pos = _place_users(rng, cfg.n_ul_users, aps, cfg, "uplink")
    dl_pos = _place_users(rng, cfg.n_dl_users, aps, cfg, "downlink")

    beta_dl, beta_ul, beta_iui = _user_gains(cfg, rng, tap_pos, rap_pos, ul_pos, dl_pos)
    d_ap = np.maximum(_pairwise_distance(tap_pos, rap_pos), REFERENCE_DISTANCE_M)
    beta_ap = large_scale_gain(d_ap, cfg, rng)

    logger.debug(f"Generated topology with {cfg.n_tap} T-APs, {cfg.n_rap} R-APs, "
                 f"{cfg.n_ul_users} UL and {cfg.n_dl_users} DL users")
    return Scenario(
        tap_pos=tap_pos, rap_pos=rap_pos, ul_pos=ul_pos, dl_pos=dl_pos,
        beta_dl=beta_dl, beta_ul=beta_ul, beta_ap=beta_ap, beta_iui=beta_iui,
    )


def relocate_users(scenario: Scenario, cfg: SystemConfig, rng: np.random.Generator) -> Scenario:
    """Redraw user positions and their gains, keeping APs and inter-AP gains."""
    aps = np.concatenate([scenario.tap_pos, scenario.rap_pos], axis=0)
    ul_pos = _place_users(rng, cfg.n_ul_users, aps, cfg, "uplink")
    dl_pos = _place_users(rng, cfg.n_dl_users, aps, cfg, "downlink")
    beta_dl, beta_ul, beta_iui = _user_gains(cfg, rng, scenario.tap_pos, scenario.rap_pos,
                                             ul_pos, dl_pos)
    return Scenario(
        tap_pos=scenario.tap_pos, rap_pos=scenario.rap_pos, ul_pos=ul_pos, dl_pos=dl_pos,
        beta_dl=beta_dl, beta_ul=beta_ul, beta_ap=scenario.beta_ap, beta_iui=beta_iui,
    )
