"""
End-to-end assembly of one network realization.

NetworkSimulator chains the physical-layer steps (angles, channels,
covariances, inter-AP estimation, analog beamformers, equivalent-channel
estimation, zero-forcing) into an immutable NetworkSnapshot and evaluates
rates on it.
"""

import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from models.beamforming_models import BeamformerSet, CombinerMode, PowerAllocation
from models.channel_models import AngleSet, ChannelSet, CovarianceSet
from models.estimation_models import EstimateBundle, InterApEstimate, PilotBlock
from models.rate_models import OracleReport, RateReport
from models.system_models import Scenario, SystemConfig
from phy import beamforming, channel, estimation, rates
from utils.seeding import array_digest

logger = logging.getLogger(__name__)


class NetworkSnapshot(BaseModel):
    """Channels, estimates and beamformers of one realization."""

    config: SystemConfig
    scenario: Scenario
    channels: ChannelSet
    covariances: CovarianceSet
    estimates: EstimateBundle
    beamformers: BeamformerSet

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def angles(self) -> AngleSet:
        return self.channels.angles

    @property
    def digest(self) -> str:
        """SHA-256 of the channel realization."""
        ch = self.channels
        return array_digest(ch.h, ch.g, ch.H_ap, ch.t_iui)


class NetworkSimulator:
    """Builds snapshots for one SystemConfig."""

    def __init__(self, cfg: SystemConfig, combiner_mode: CombinerMode = "joint"):
        """
        Initialize the simulator.

        Args:
            cfg: System configuration.
            combiner_mode: ``joint`` (CPU-wide ZF) or ``per_rap``.
        """
        self.cfg = cfg
        self.combiner_mode = combiner_mode
        self.sigma2 = cfg.noise_watt
        sigma_tau = float(np.sqrt(self.sigma2))
        self.dl_pilots = PilotBlock.orthonormal(cfg.n_dl_users, cfg.p_u_watt, sigma_tau)
        self.ul_pilots = PilotBlock.orthonormal(cfg.n_ul_users, cfg.p_u_watt, sigma_tau)
        self.interap_rho = cfg.p_d_watt
        logger.debug(f"NetworkSimulator ready ({combiner_mode} combining, sigma2={self.sigma2:.3e} W)")

    def draw_angles(self, scenario: Scenario, rng: np.random.Generator) -> AngleSet:
        return channel.draw_angles(scenario, self.cfg.n_paths, rng)

    def realize(self, scenario: Scenario, rng: np.random.Generator,
                angles: Optional[AngleSet] = None) -> NetworkSnapshot:
        """Draw one full realization and run estimation and beamforming on it.

        Args:
            scenario: Geometry and large-scale gains.
            rng: Generator owning every draw of the realization.
            angles: Reuse these path angles instead of drawing new ones.
        """
        angles = angles if angles is not None else self.draw_angles(scenario, rng)
        channels = channel.sample_channels(scenario, angles, self.cfg.n_ant, rng)
        covs = channel.covariance_set(scenario, angles, self.cfg.n_ant)
        inter_ap, w_est, u_est = self._estimate_interap(channels, covs, rng)
        return self._assemble(scenario, channels, covs, inter_ap, w_est, u_est, rng)

    def refresh_pilots(self, snapshot: NetworkSnapshot, rng: np.random.Generator) -> NetworkSnapshot:
        """Same channels and inter-AP estimate; new user pilot noise."""
        est = snapshot.estimates
        return self._assemble(snapshot.scenario, snapshot.channels, snapshot.covariances,
                              est.inter_ap, est.w_est, est.u_est, rng)

    def redraw_gains(self, snapshot: NetworkSnapshot, rng: np.random.Generator) -> NetworkSnapshot:
        """Same angles and covariances; new path gains and a full re-estimation."""
        channels = channel.sample_channels(snapshot.scenario, snapshot.angles, self.cfg.n_ant, rng)
        factors = (snapshot.estimates.w_est, snapshot.estimates.u_est)
        inter_ap, w_est, u_est = self._estimate_interap(channels, snapshot.covariances, rng, factors)
        return self._assemble(snapshot.scenario, channels, snapshot.covariances,
                              inter_ap, w_est, u_est, rng)

    def _estimate_interap(self, channels: ChannelSet, covs: CovarianceSet,
                          rng: np.random.Generator, factors=None):
        return estimation.estimate_interap_links(
            channels.H_ap, covs.R_ap, self.interap_rho, self.sigma2, self.cfg.n_rf, rng,
            factors=factors,
        )

    def _assemble(self, scenario: Scenario, channels: ChannelSet, covs: CovarianceSet,
                  inter_ap: InterApEstimate, w_est: np.ndarray, u_est: np.ndarray,
                  rng: np.random.Generator) -> NetworkSnapshot:
        analog = beamforming.analog_set_from_covariances(covs, self.cfg.n_rf)

        dl_cov = estimation.equivalent_covariance(analog.W_rf[None], covs.R_h)
        Y_dl = estimation.simulate_user_pilot(channels.h, analog.W_rf, self.dl_pilots.pilots,
                                              self.dl_pilots.rho, self.dl_pilots.sigma_tau, rng)
        downlink = estimation.mmse_equivalent(Y_dl, self.dl_pilots.pilots, dl_cov,
                                              self.dl_pilots.rho, self.sigma2)

        ul_cov = estimation.equivalent_covariance(analog.U_rf[None], covs.R_g)
        Y_ul = estimation.simulate_user_pilot(channels.g, analog.U_rf, self.ul_pilots.pilots,
                                              self.ul_pilots.rho, self.ul_pilots.sigma_tau, rng)
        uplink = estimation.mmse_equivalent(Y_ul, self.ul_pilots.pilots, ul_cov,
                                            self.ul_pilots.rho, self.sigma2)

        precoder = beamforming.zf_precoder(downlink.est)
        combiner = beamforming.zf_combiner(uplink.est, self.combiner_mode, scenario.beta_ul)

        return NetworkSnapshot(
            config=self.cfg,
            scenario=scenario,
            channels=channels,
            covariances=covs,
            estimates=EstimateBundle(inter_ap=inter_ap, w_est=w_est, u_est=u_est,
                                     downlink=downlink, uplink=uplink),
            beamformers=BeamformerSet(analog=analog, precoder=precoder, combiner=combiner),
        )

    def tap_powers(self, snapshot: NetworkSnapshot, eta: np.ndarray) -> np.ndarray:
        """Per-T-AP transmit power for coefficients eta, shape (N_T,)."""
        bf = snapshot.beamformers
        return np.atleast_1d(beamforming.tap_power(bf.analog.W_rf, bf.precoder.per_ap, eta))

    def equal_eta(self, snapshot: NetworkSnapshot) -> float:
        """Equal downlink coefficient meeting P_D at the most loaded T-AP."""
        bf = snapshot.beamformers
        return beamforming.equal_downlink_eta(self.cfg.p_d_watt, bf.analog.W_rf, bf.precoder.per_ap)

    def evaluate(self, snapshot: NetworkSnapshot, allocation: PowerAllocation,
                 dee_scale: float = 1.0) -> RateReport:
        return rates.build_rate_report(snapshot, allocation, dee_scale)

    def ergodic_rate(self, snapshot: NetworkSnapshot, allocation: PowerAllocation, trials: int,
                     rng: np.random.Generator, mode: str = "conditional",
                     max_workers: Optional[int] = None) -> OracleReport:
        """Monte Carlo oracle around ``snapshot`` (see phy.rates.mc_ergodic_rate)."""
        return rates.mc_ergodic_rate(snapshot, allocation, trials, rng, mode,
                                     redraw=self.redraw_gains, max_workers=max_workers)
