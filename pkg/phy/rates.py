"""
Closed-form bidirectional rate lower bounds and a Monte Carlo ergodic-rate oracle.

Layouts follow the rest of the engine:
    F_per_ap   (N_T, n_rf, K)      precoder blocks f[m, :, i]
    V_per_rap  (J, N_R, n_rf)      combiner blocks v[j, z, :]
    W_rf       (N_T, n, n_rf)      U_rf (N_R, n, n_rf)
    R_tilde    (K, N_T, n_rf, n_rf), R_g_tilde (J, N_R, n_rf, n_rf)
    C          (N_T, N_R, n^2, n^2)

Both bounds treat every estimation-error term as noise; the oracle draws those
terms explicitly and averages log2(1 + SINR).
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import TYPE_CHECKING, Callable, Dict, Optional, Tuple

import numpy as np

from config import settings
from models.beamforming_models import PowerAllocation
from models.rate_models import DownlinkTerms, OracleReport, RateReport, UplinkTerms
from utils.errors import DomainError
from utils.linalg import herm, psd_sqrt, sample_from_covariance, unvec
from utils.seeding import derive_rng

if TYPE_CHECKING:
    from services.network_service import NetworkSnapshot

logger = logging.getLogger(__name__)

SINR_CAP = 1e12
MC_CHUNK = 256


def capped_rate(signal: np.ndarray, interference: np.ndarray) -> np.ndarray:
    """log2(1 + signal / interference) with the SINR capped at 1e12."""
    signal = np.asarray(signal, dtype=np.float64)
    interference = np.asarray(interference, dtype=np.float64)
    positive = interference > 0
    sinr = np.where(positive, signal / np.where(positive, interference, 1.0), SINR_CAP)
    sinr = np.where(signal > 0, np.minimum(sinr, SINR_CAP), 0.0)
    return np.log2(1.0 + sinr)


def _check_noise(sigma2: float) -> None:
    if sigma2 <= 0:
        raise DomainError("Noise power must be positive", {"sigma2": sigma2})


def downlink_rate_lb(eta: np.ndarray, F_per_ap: np.ndarray, R_tilde: np.ndarray,
                     t_iui: np.ndarray, p_u: np.ndarray, sigma2: float,
                     dee_scale: float = 1.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Downlink bound log2(1 + eta_k / (I_DEE + I_IUI + sigma2)).

    Args:
        eta: (K,) power coefficients.
        F_per_ap: (N_T, n_rf, K) ZF precoder blocks.
        R_tilde: (K, N_T, n_rf, n_rf) error covariances of the equivalent channels.
        t_iui: (K, J) inter-user gains.
        p_u: (J,) uplink powers.
        sigma2: Noise power.
        dee_scale: Multiplier on I_DEE, 1 in normal operation.

    Returns:
        (rates, I_DEE, I_IUI), each (K,)
    """
    _check_noise(sigma2)
    eta = np.asarray(eta, dtype=np.float64)
    p_u = np.asarray(p_u, dtype=np.float64)
    if np.any(eta < 0) or np.any(p_u < 0):
        raise DomainError("Powers must be non-negative")
    dee = dee_scale * np.real(np.einsum("mai,kmab,mbi,i->k", np.conj(F_per_ap), R_tilde, F_per_ap, eta))
    iui = np.abs(t_iui) ** 2 @ p_u
    return capped_rate(eta, dee + iui + sigma2), dee, iui


def _combiner_probes(V_per_rap: np.ndarray, U_rf: np.ndarray) -> np.ndarray:
    """p[j, z, :] = v_{j,z} U_z^H, shape (J, N_R, n)."""
    return np.einsum("jza,zna->jzn", V_per_rap, np.conj(U_rf))


def _beam_columns(W_rf: np.ndarray, F_per_ap: np.ndarray) -> np.ndarray:
    """q[m, :, i] = W_m f_{m,i}, shape (N_T, n, K)."""
    return W_rf @ F_per_ap


def uplink_rate_lb(p_u: np.ndarray, V_per_rap: np.ndarray, U_rf: np.ndarray, W_rf: np.ndarray,
                   F_per_ap: np.ndarray, eta: np.ndarray, C: np.ndarray, R_g_tilde: np.ndarray,
                   sigma2: float, g_hat: Optional[np.ndarray] = None
                   ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Uplink bound log2(1 + P_j |d_j|^2 / (I_TEE + leakage + I_Noise)).

    I_TEE sums the uplink estimation error over all users and the residual
    inter-AP interference ((W f)^T kron v U^H) C (...)^H over T-APs, R-APs and
    downlink streams. With ``g_hat`` the desired gain d_j = v_j g_hat_j and
    the residual leakage of a non-ZF combiner are included; without it the
    combiner is assumed exactly ZF (d_j = 1, no leakage).

    Returns:
        (rates, I_TEE, I_Noise, leakage), each (J,)
    """
    _check_noise(sigma2)
    p_u = np.asarray(p_u, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    if np.any(eta < 0) or np.any(p_u < 0):
        raise DomainError("Powers must be non-negative")
    row_energy = np.sum(np.abs(V_per_rap) ** 2, axis=(1, 2))
    if np.any(row_energy <= 0):
        raise DomainError("Combiner has an all-zero row",
                          {"users": np.flatnonzero(row_energy <= 0).tolist()})

    ul_error = np.real(np.einsum("jza,kzab,jzb,k->j", V_per_rap, R_g_tilde, np.conj(V_per_rap), p_u))

    probes = _combiner_probes(V_per_rap, U_rf)
    beams = _beam_columns(W_rf, F_per_ap)
    n = U_rf.shape[1]
    # column-major vec: p H q = kron(q, p) . vec(H)
    r = (beams[None, :, None, :, :, None] * probes[:, None, :, None, None, :])
    r = np.moveaxis(r, 3, 4)                                   # (J, N_T, N_R, K, n, n)
    r = r.reshape(*r.shape[:4], n * n)
    inter_ap = np.real(np.einsum("jmzix,mzxy,jmziy,i->j", r, C, np.conj(r), eta))

    noise = sigma2 * np.sum(np.abs(probes) ** 2, axis=(1, 2))

    if g_hat is None:
        gain = np.ones_like(p_u)
        leakage = np.zeros_like(p_u)
    else:
        cross = np.abs(np.einsum("jza,kza->jk", V_per_rap, g_hat)) ** 2
        gain = np.diag(cross).copy()
        leakage = (cross - np.diag(gain)) @ p_u

    tee = ul_error + inter_ap
    return capped_rate(p_u * gain, tee + leakage + noise), tee, noise, leakage


def weighted_objective(r_dl, r_ul, omega_d: float, omega_u: float) -> float:
    """omega_d * sum(r_dl) + omega_u * sum(r_ul)."""
    if abs(omega_d + omega_u - 1.0) > 1e-9 or omega_d < 0 or omega_u < 0:
        raise DomainError("Rate weights must be non-negative and sum to 1",
                          {"omega_d": omega_d, "omega_u": omega_u})
    return float(omega_d * np.sum(r_dl) + omega_u * np.sum(r_ul))


def _snapshot_arrays(snapshot: "NetworkSnapshot") -> Dict[str, np.ndarray]:
    bf = snapshot.beamformers
    est = snapshot.estimates
    return {
        "F": bf.precoder.per_ap,
        "V": bf.combiner.per_rap,
        "W_rf": bf.analog.W_rf,
        "U_rf": bf.analog.U_rf,
        "R_tilde": est.downlink.R_tilde,
        "R_g_tilde": est.uplink.R_tilde,
        "C": est.inter_ap.C,
        "g_hat": est.uplink.est,
        "t_iui": snapshot.channels.t_iui,
    }


def snapshot_bounds(snapshot: "NetworkSnapshot", allocation: PowerAllocation,
                    dee_scale: float = 1.0):
    """Closed-form (r_dl, dl_terms, r_ul, ul_terms) of one snapshot."""
    arr = _snapshot_arrays(snapshot)
    sigma2 = snapshot.config.noise_watt
    r_dl, dee, iui = downlink_rate_lb(allocation.eta, arr["F"], arr["R_tilde"], arr["t_iui"],
                                      allocation.p_u, sigma2, dee_scale)
    g_hat = arr["g_hat"] if snapshot.beamformers.combiner.mode == "per_rap" else None
    r_ul, tee, noise, leakage = uplink_rate_lb(allocation.p_u, arr["V"], arr["U_rf"], arr["W_rf"],
                                               arr["F"], allocation.eta, arr["C"], arr["R_g_tilde"],
                                               sigma2, g_hat)
    return r_dl, (dee, iui, sigma2), r_ul, (tee, noise, leakage)


def build_rate_report(snapshot: "NetworkSnapshot", allocation: PowerAllocation,
                      dee_scale: float = 1.0) -> RateReport:
    """Evaluate both bounds on a snapshot and assemble the RateReport."""
    r_dl, (dee, iui, sigma2), r_ul, (tee, noise, leakage) = snapshot_bounds(
        snapshot, allocation, dee_scale)
    cfg = snapshot.config
    return RateReport(
        r_dl=r_dl.tolist(),
        r_ul=r_ul.tolist(),
        dl_terms=[DownlinkTerms(dee=float(d), iui=float(i), noise=sigma2) for d, i in zip(dee, iui)],
        ul_terms=[UplinkTerms(tee=float(t), noise=float(n), leakage=float(lk))
                  for t, n, lk in zip(tee, noise, leakage)],
        omega_d=cfg.omega_d,
        omega_u=cfg.omega_u,
        objective=weighted_objective(r_dl, r_ul, cfg.omega_d, cfg.omega_u),
    )


def exact_rates(err_dl: np.ndarray, err_ul: np.ndarray, err_ap: np.ndarray, t_iui: np.ndarray,
                arr: Dict[str, np.ndarray], allocation: PowerAllocation, sigma2: float,
                combiner_gain: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-trial post-processing rates for sampled estimation errors.

    Args:
        err_dl: (T, K, N_T, n_rf) equivalent downlink errors.
        err_ul: (T, J, N_R, n_rf) equivalent uplink errors.
        err_ap: (T, N_T, N_R, n, n) inter-AP errors left after CPU cancellation.
        t_iui: (K, J) or (T, K, J) inter-user gains.
        arr: Beamformer arrays (F, V, W_rf, U_rf).
        combiner_gain: (J, J) matrix v_j g_hat_j'; identity when omitted.

    Returns:
        (dl rates (T, K), ul rates (T, J))
    """
    eta, p_u = allocation.eta, allocation.p_u
    F, V = arr["F"], arr["V"]

    dl_mix = np.einsum("tkma,mai->tki", np.conj(err_dl), F)
    dee = np.abs(dl_mix) ** 2 @ eta
    iui = np.abs(np.broadcast_to(t_iui, (dl_mix.shape[0], *np.shape(t_iui)[-2:]))) ** 2 @ p_u
    r_dl = capped_rate(eta[None, :], dee + iui + sigma2)

    probes = _combiner_probes(V, arr["U_rf"])
    beams = _beam_columns(arr["W_rf"], F)
    ul_mix = np.einsum("jza,tkza->tjk", V, err_ul)
    ul_error = np.abs(ul_mix) ** 2 @ p_u
    residual = np.einsum("jzp,tmzpq,mqi->tji", probes, err_ap, beams)
    inter_ap = np.abs(residual) ** 2 @ eta
    noise = sigma2 * np.sum(np.abs(probes) ** 2, axis=(1, 2))
    if combiner_gain is None:
        gain = np.ones_like(p_u)
        leakage = np.zeros_like(p_u)
    else:
        cross = np.abs(combiner_gain) ** 2
        gain = np.diag(cross).copy()
        leakage = (cross - np.diag(gain)) @ p_u
    r_ul = capped_rate((p_u * gain)[None, :], ul_error + inter_ap + leakage + noise)
    return r_dl, r_ul


def _conditional_chunk(snapshot: "NetworkSnapshot", allocation: PowerAllocation, trials: int,
                       rng: np.random.Generator):
    arr = _snapshot_arrays(snapshot)
    est = snapshot.estimates
    n = arr["U_rf"].shape[1]
    err_dl = sample_from_covariance(rng, psd_sqrt(est.downlink.R_tilde), trials)
    err_ul = sample_from_covariance(rng, psd_sqrt(est.uplink.R_tilde), trials)
    err_ap = unvec(sample_from_covariance(rng, psd_sqrt(est.inter_ap.C), trials), n, n)
    gain = None
    if snapshot.beamformers.combiner.mode == "per_rap":
        gain = np.einsum("jza,kza->jk", arr["V"], arr["g_hat"])
    r_dl, r_ul = exact_rates(err_dl, err_ul, err_ap, arr["t_iui"], arr, allocation,
                             snapshot.config.noise_watt, gain)
    return r_dl, r_ul, None, None


def _redraw_chunk(snapshot: "NetworkSnapshot", allocation: PowerAllocation, trials: int,
                  rng: np.random.Generator, redraw: Callable):
    dl, ul, dl_lb, ul_lb = [], [], [], []
    for _ in range(trials):
        trial = redraw(snapshot, rng)
        arr = _snapshot_arrays(trial)
        truth = trial.channels
        est = trial.estimates
        analog = trial.beamformers.analog
        err_dl = np.einsum("mna,kmn->kma", np.conj(analog.W_rf), truth.h) - est.downlink.est
        err_ul = np.einsum("zna,jzn->jza", np.conj(analog.U_rf), truth.g) - est.uplink.est
        err_ap = truth.H_ap - est.inter_ap.H_hat
        gain = None
        if trial.beamformers.combiner.mode == "per_rap":
            gain = np.einsum("jza,kza->jk", arr["V"], arr["g_hat"])
        r_dl, r_ul = exact_rates(err_dl[None], err_ul[None], err_ap[None], truth.t_iui, arr,
                                 allocation, trial.config.noise_watt, gain)
        b_dl, _, b_ul, _ = snapshot_bounds(trial, allocation)
        dl.append(r_dl[0])
        ul.append(r_ul[0])
        dl_lb.append(b_dl)
        ul_lb.append(b_ul)
    return np.array(dl), np.array(ul), np.array(dl_lb), np.array(ul_lb)


def _stderr(samples: np.ndarray) -> np.ndarray:
    if samples.shape[0] < 2:
        return np.zeros(samples.shape[1:])
    return np.std(samples, axis=0, ddof=1) / np.sqrt(samples.shape[0])


def mc_ergodic_rate(snapshot: "NetworkSnapshot", allocation: PowerAllocation, trials: int,
                    rng: np.random.Generator, mode: str = "conditional",
                    redraw: Optional[Callable] = None,
                    max_workers: Optional[int] = None) -> OracleReport:
    """Monte Carlo estimate of the ergodic rates behind the closed-form bounds.

    ``conditional`` draws estimation errors from their posterior covariances
    around the snapshot's fixed estimates. ``redraw`` calls
    ``redraw(snapshot, rng)`` for a fresh realization per trial (same angles),
    re-estimates and re-beamforms, and also averages the bound per trial.

    Trials run in chunks of 256 on a thread pool. Each chunk has its own
    derived seed and results are joined in chunk order, so the report does
    not depend on the worker count.

    Raises:
        DomainError: Fewer than 100 trials, or redraw mode without a redraw callable.
    """
    if trials < 100:
        raise DomainError("The Monte Carlo oracle needs at least 100 trials", {"trials": trials})
    if mode not in ("conditional", "redraw"):
        raise DomainError(f"Unknown oracle mode {mode}")
    if mode == "redraw" and redraw is None:
        raise DomainError("redraw mode needs a realization callable")

    base_seed = int(rng.integers(0, 2 ** 62))
    sizes = [min(MC_CHUNK, trials - start) for start in range(0, trials, MC_CHUNK)]
    results = [None] * len(sizes)

    def run_chunk(index: int):
        chunk_rng = derive_rng(base_seed, "mc", index)
        if mode == "conditional":
            return _conditional_chunk(snapshot, allocation, sizes[index], chunk_rng)
        return _redraw_chunk(snapshot, allocation, sizes[index], chunk_rng, redraw)

    workers = max_workers or settings.max_workers
    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_chunk = {executor.submit(run_chunk, idx): idx for idx in range(len(sizes))}
        for future in as_completed(future_to_chunk):
            idx = future_to_chunk[future]
            try:
                results[idx] = future.result()
            except Exception as e:
                logger.error(f"Monte Carlo chunk {idx} failed: {str(e)}")
                raise

    dl = np.concatenate([res[0] for res in results], axis=0)
    ul = np.concatenate([res[1] for res in results], axis=0)
    report = OracleReport(
        mode=mode, trials=trials,
        dl_mean=np.mean(dl, axis=0).tolist(), dl_stderr=_stderr(dl).tolist(),
        ul_mean=np.mean(ul, axis=0).tolist(), ul_stderr=_stderr(ul).tolist(),
    )
    if mode == "redraw":
        report.dl_bound = np.mean(np.concatenate([res[2] for res in results]), axis=0).tolist()
        report.ul_bound = np.mean(np.concatenate([res[3] for res in results]), axis=0).tolist()
    logger.debug(f"Oracle ({mode}, {trials} trials): DL {report.dl_mean}, UL {report.ul_mean}")
    return report
