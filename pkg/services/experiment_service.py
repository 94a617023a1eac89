"""
Experiment Service for the NAFD cell-free mmWave lab.

This module runs the studies behind every CLI verb (NMSE sweeps, training runs
and sweeps, scheme comparisons) and provides progress tracking plus a
background job manager for the HTTP server.
"""

import logging
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor, as_completed
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import settings
from models.experiment_models import BASELINE_SCHEMES, LEARNED_SCHEMES, ExperimentConfig, JobStatus
from models.training_models import TrainConfig, TrainLog
from madrl.agents import AgentEnsemble, baseline_allocation
from madrl.environment import PowerControlEnv
from madrl.trainer import Trainer, load_policy, training_topology
from phy.channel import interap_covariance, sample_interap_channel
from phy.estimation import (
    full_digital_posterior_mean, interap_posterior_mean, optimal_coupling, simulate_interap_pilot
)
from services.checkpoint_service import write_rows_csv, write_train_log_csv
from utils.errors import ChannelMismatchError, CheckpointError, SingularChannelError
from utils.linalg import eigh_descending
from utils.seeding import derive_rng

logger = logging.getLogger(__name__)

NMSE_HEADER = ["snr_db", "n_rf", "mode", "n_ant", "trials", "nmse_db", "nmse_mean_ratio_db"]
COMPARE_HEADER = ["scheme", "episodes", "mean_reward", "reward_stderr",
                  "mean_weighted_rate", "rate_stderr"]
SWEEP_HEADER = ["study", "algorithm", "value", "episodes", "final_mean_reward"]
MAX_RESET_ATTEMPTS = 10

PathLike = Union[str, Path]


class ProgressTracker:
    """Counts completed work items and reports percentage and ETA to callbacks."""

    def __init__(self, total_items: int, label: str = "items"):
        self.total_items = total_items
        self.label = label
        self.completed_items = 0
        self.start_time = datetime.now()
        self.callbacks: List[Callable[[Dict[str, Any]], None]] = []
        logger.info(f"Tracking {total_items} {label}")

    def add_callback(self, callback: Callable[[Dict[str, Any]], None]):
        self.callbacks.append(callback)

    def _percent(self) -> float:
        if not self.total_items:
            return 100.0
        return round(100.0 * self.completed_items / self.total_items, 2)

    def update_progress(self, item_name: str):
        """Mark one item done and notify callbacks; a failing callback is logged and skipped."""
        self.completed_items += 1
        elapsed = (datetime.now() - self.start_time).total_seconds()
        remaining = max(self.total_items - self.completed_items, 0)
        info = {
            'total_items': self.total_items,
            'completed_items': self.completed_items,
            'current_item': item_name,
            'progress_percent': self._percent(),
            'elapsed_seconds': elapsed,
            'estimated_remaining_seconds': remaining * elapsed / self.completed_items,
        }
        for callback in self.callbacks:
            try:
                callback(info)
            except Exception as e:
                logger.warning(f"Error in progress callback: {str(e)}")
        logger.debug(f"{self.label}: {self.completed_items}/{self.total_items} - {item_name}")

    def is_complete(self) -> bool:
        return self.completed_items >= self.total_items

    def get_summary(self) -> Dict[str, Any]:
        return {
            'total_items': self.total_items,
            'completed_items': self.completed_items,
            'progress_percent': self._percent(),
            'elapsed_seconds': (datetime.now() - self.start_time).total_seconds(),
            'is_complete': self.is_complete(),
        }


def _out_dir(config: ExperimentConfig, out_dir: Optional[PathLike]) -> Path:
    path = Path(out_dir) if out_dir is not None else Path(config.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _to_db(value: float) -> float:
    return float(10.0 * np.log10(value))


# ---------------------------------------------------------------------- NMSE sweep

def _rf_cells(config: ExperimentConfig) -> List[Tuple[int, str]]:
    n = config.nmse_n_ant
    return [(n, "full_digital") if item == "full" else (int(item), "hybrid")
            for item in config.rf_chains]


def nmse_trial(config: ExperimentConfig, trial: int) -> np.ndarray:
    """
    Run one NMSE trial over every (RF-chain, SNR) cell.

    The inter-AP link is normalized (beta = 1, sigma^2 = 1) and its angles and
    path gains are shared by all cells of the trial.

    Returns:
        Array (cells, snrs, 2) holding squared error and channel energy.
    """
    n = config.nmse_n_ant
    rng = derive_rng(config.system.master_seed, "nmse", trial)
    H, (angles_r, angles_t) = sample_interap_channel(1.0, config.system.n_paths, n, rng)
    R = interap_covariance(angles_r, angles_t, 1.0, n)
    eig = eigh_descending(R)
    energy = float(np.sum(np.abs(H) ** 2))
    sigma2 = 1.0

    cells = _rf_cells(config)
    out = np.zeros((len(cells), len(config.snr_grid_db), 2))
    for c, (n_rf, mode) in enumerate(cells):
        for s, snr_db in enumerate(config.snr_grid_db):
            rho = 10.0 ** (snr_db / 10.0)
            if mode == "full_digital":
                identity = np.eye(n)
                Y = simulate_interap_pilot(H, identity, identity, rho, np.sqrt(sigma2), rng)
                H_hat = full_digital_posterior_mean(Y, eig[0], eig[1], rho, sigma2)
            else:
                design = optimal_coupling(R, rho, sigma2, n_rf, eig=eig)
                Y = simulate_interap_pilot(H, design.w_est, design.u_est, rho, np.sqrt(sigma2), rng)
                H_hat = interap_posterior_mean(Y, R, design.effective_coupling, rho, sigma2)
            out[c, s] = (float(np.sum(np.abs(H_hat - H) ** 2)), energy)
    return out


def nmse_sweep(config: ExperimentConfig, out_dir: Optional[PathLike] = None,
               progress_callback: Optional[Callable[[Dict[str, Any]], None]] = None,
               max_workers: Optional[int] = None) -> Tuple[Path, List[List[Any]]]:
    """
    Mean inter-AP estimation NMSE per (RF chains, SNR) cell.

    Args:
        config: Experiment configuration (snr_grid_db, rf_chains, nmse_n_ant, nmse_trials).
        out_dir: Output directory; defaults to config.out_dir.
        progress_callback: Receives ProgressTracker updates.
        max_workers: Trial worker threads; defaults to the settings value.

    Returns:
        (CSV path, rows)

    Raises:
        CapacityError: nmse_n_ant exceeds the covariance antenna cap.
    """
    out = _out_dir(config, out_dir)
    trials = config.nmse_trials
    cells = _rf_cells(config)
    logger.info(f"NMSE sweep: n_ant={config.nmse_n_ant}, cells={cells}, "
                f"{len(config.snr_grid_db)} SNRs, {trials} trials")

    # Fail fast on the antenna cap before spawning workers
    interap_covariance(np.zeros(1), np.zeros(1), 1.0, config.nmse_n_ant)

    tracker = ProgressTracker(trials, "NMSE trials")
    if progress_callback:
        tracker.add_callback(progress_callback)

    results: List[Optional[np.ndarray]] = [None] * trials
    with ThreadPoolExecutor(max_workers=max_workers or settings.max_workers) as executor:
        future_to_trial = {executor.submit(nmse_trial, config, t): t for t in range(trials)}
        for future in as_completed(future_to_trial):
            trial = future_to_trial[future]
            try:
                results[trial] = future.result()
                tracker.update_progress(f"trial {trial}")
            except Exception as e:
                logger.error(f"NMSE trial {trial} failed: {str(e)}")
                raise

    stacked = np.stack(results)                     # (trials, cells, snrs, 2)
    err, energy = stacked[..., 0], stacked[..., 1]
    rows = []
    for c, (n_rf, mode) in enumerate(cells):
        for s, snr_db in enumerate(config.snr_grid_db):
            aggregate = float(np.sum(err[:, c, s]) / np.sum(energy[:, c, s]))
            mean_ratio = float(np.mean(err[:, c, s] / energy[:, c, s]))
            rows.append([snr_db, n_rf, mode, config.nmse_n_ant, trials,
                         _to_db(aggregate), _to_db(mean_ratio)])
            logger.info(f"NMSE {mode} n_rf={n_rf} at {snr_db} dB: {_to_db(aggregate):.2f} dB")

    path = write_rows_csv(out / "nmse_sweep.csv", NMSE_HEADER, rows)
    return path, rows


# ---------------------------------------------------------------------- training

def run_training(config: ExperimentConfig, out_dir: Optional[PathLike] = None,
                 resume_from: Optional[PathLike] = None,
                 progress_callback: Optional[Callable[[Dict[str, Any]], None]] = None,
                 cancel_event: Optional[threading.Event] = None,
                 train_cfg: Optional[TrainConfig] = None, label: Optional[str] = None) -> Tuple[TrainLog, Path]:
    """
    Train one learner and write its reward curve.

    Returns:
        (TrainLog, curve CSV path). Checkpoints go to ``<out>/checkpoints``.
    """
    out = _out_dir(config, out_dir)
    train_cfg = train_cfg or config.train
    label = label or train_cfg.algorithm
    checkpoint_dir = out / "checkpoints" / label

    if resume_from is not None:
        trainer = Trainer.resume(resume_from, train_cfg, checkpoint_dir)
        if trainer.system != config.system:
            raise CheckpointError("System configuration differs from the checkpoint",
                                  {"path": str(resume_from)})
    else:
        trainer = Trainer(config.system, train_cfg, checkpoint_dir)

    tracker = ProgressTracker(train_cfg.episodes - trainer.next_episode, f"{label} episodes")
    if progress_callback:
        tracker.add_callback(progress_callback)

    def on_episode(completed: int, total: int, reward: float) -> None:
        tracker.update_progress(f"episode {completed}/{total} reward {reward:.3f}")

    log = trainer.run(on_episode, cancel_event)
    path = write_train_log_csv(out / f"{label}_train.csv", log)
    logger.info(f"{label}: {log.n_episodes} episodes, final mean reward "
                f"{log.final_mean(config.final_window):.4f}")
    return log, path


def run_training_sweep(config: ExperimentConfig, study: str, out_dir: Optional[PathLike] = None,
                       progress_callback: Optional[Callable[[Dict[str, Any]], None]] = None,
                       cancel_event: Optional[threading.Event] = None) -> Tuple[Path, List[List[Any]]]:
    """
    Discount-factor or learning-rate sweep.

    The gamma sweep trains the configured algorithm; the learning-rate sweep
    trains both MATD3 and MADDPG. Each grid value writes its own curve CSV and
    the summary CSV lists the final-window mean reward of every run.
    """
    if study == "gamma":
        runs = [(config.train.algorithm, "gamma", g) for g in config.gamma_grid]
    elif study == "lr":
        runs = [(alg, "lr", lr) for alg in LEARNED_SCHEMES for lr in config.lr_grid]
    else:
        raise ValueError(f"Unknown sweep '{study}', expected 'gamma' or 'lr'")

    out = _out_dir(config, out_dir)
    rows = []
    for algorithm, field, value in runs:
        if cancel_event is not None and cancel_event.is_set():
            logger.info(f"{study} sweep cancelled")
            break
        train_cfg = config.train.model_copy(update={"algorithm": algorithm, field: value})
        train_cfg = TrainConfig.model_validate(train_cfg.model_dump())
        label = f"{study}_{algorithm}_{value:g}"
        log, _ = run_training(config, out, progress_callback=progress_callback,
                              cancel_event=cancel_event, train_cfg=train_cfg, label=label)
        rows.append([study, algorithm, value, log.n_episodes, log.final_mean(config.final_window)])

    path = write_rows_csv(out / f"{study}_sweep_summary.csv", SWEEP_HEADER, rows)
    return path, rows


# ---------------------------------------------------------------------- comparison

def _reset_eval(env: PowerControlEnv, scenario, eval_seed: int, episode: int):
    for attempt in range(MAX_RESET_ATTEMPTS):
        keys = ("eval", episode) if attempt == 0 else ("eval", episode, attempt)
        rng = derive_rng(eval_seed, *keys)
        try:
            return env.reset(scenario, rng), rng
        except SingularChannelError as e:
            logger.warning(f"Evaluation seed {eval_seed} episode {episode}: {e.message}; redrawing")
    raise SingularChannelError(f"No usable realization for evaluation episode {episode}",
                               {"eval_seed": eval_seed, "episode": episode})


def evaluate_scheme(scheme: str, env: PowerControlEnv, scenario, eval_seed: int, episodes: int,
                    ensemble: Optional[AgentEnsemble] = None) -> Dict[str, Any]:
    """
    Roll ``episodes`` evaluation episodes of one scheme on one held-out seed.

    Channels and pilot noise come from derive_rng(eval_seed, "eval", episode),
    so every scheme sees the same realizations; ul_random draws its powers
    from a separate stream.

    Returns:
        Dict with per-episode rewards, weighted rates and channel digests.
    """
    t_max = env.train_cfg.t_max
    rewards, sum_rates, digests = [], [], []
    for episode in range(episodes):
        obs, rng = _reset_eval(env, scenario, eval_seed, episode)
        digests.append(env.snapshot.digest)
        policy_rng = derive_rng(eval_seed, "policy", scheme, episode)
        total_reward, total_rate = 0.0, 0.0
        for _ in range(t_max):
            if ensemble is not None:
                obs, step_rewards, _ = env.step(ensemble.act(obs), rng)
            else:
                allocation = baseline_allocation(scheme, env.cfg, env.snapshot.beamformers, policy_rng,
                                                 env.train_cfg.ul_equal_fraction)
                obs, step_rewards = env.apply(allocation, rng)
            total_reward += float(np.sum(step_rewards))
            total_rate += env.last_sum_rate
        rewards.append(total_reward / t_max)
        sum_rates.append(total_rate / t_max)
    return {"rewards": rewards, "sum_rates": sum_rates, "digests": digests}


def _stderr(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=np.float64)
    return float(np.std(arr, ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0


def channel_digests(digest_rows: List[List[Any]], scheme: str) -> List[List[Any]]:
    """(seed, episode, digest) rows of one scheme."""
    return [row[1:] for row in digest_rows if row[0] == scheme]


def _scheme_policy(config: ExperimentConfig, scheme: str) -> Optional[AgentEnsemble]:
    """Actor ensemble of a learned scheme; None for baselines.

    Only the actors are taken from the checkpoint. Evaluation always runs under
    config.train, so every scheme is scored with the same reward and episode
    length.
    """
    if scheme in BASELINE_SCHEMES:
        return None
    path = config.checkpoints.get(scheme)
    if not path:
        raise CheckpointError(f"No checkpoint configured for learned scheme '{scheme}'",
                              {"scheme": scheme})
    ensemble, system, train_cfg = load_policy(path)
    if system != config.system:
        raise CheckpointError(f"Checkpoint for '{scheme}' was trained on another system",
                              {"scheme": scheme, "path": path})
    if train_cfg.algorithm != scheme:
        raise CheckpointError(f"Checkpoint {path} holds a {train_cfg.algorithm} policy, not {scheme}",
                              {"scheme": scheme, "path": path})
    if train_cfg.eta_reference != config.train.eta_reference:
        raise CheckpointError(
            f"Checkpoint {path} maps actions with eta_reference={train_cfg.eta_reference}, "
            f"evaluation uses {config.train.eta_reference}",
            {"scheme": scheme, "path": path, "fields": ["eta_reference"]},
        )
    return ensemble


def compare_schemes(config: ExperimentConfig, out_dir: Optional[PathLike] = None,
                    progress_callback: Optional[Callable[[Dict[str, Any]], None]] = None,
                    cancel_event: Optional[threading.Event] = None,
                    max_workers: Optional[int] = None) -> Tuple[Path, List[List[Any]]]:
    """
    Evaluate learned and baseline schemes on identical held-out channel seeds.

    All schemes run on the training topology of config.system. Learned schemes
    act deterministically from their checkpoints.

    Returns:
        (table CSV path, rows)

    Raises:
        CheckpointError: A learned scheme has no usable checkpoint.
        ChannelMismatchError: Schemes saw different channel realizations.
    """
    out = _out_dir(config, out_dir)
    scenario = training_topology(config.system)
    policies = {scheme: _scheme_policy(config, scheme) for scheme in config.schemes}

    tracker = ProgressTracker(len(config.schemes) * len(config.eval_seeds), "evaluations")
    if progress_callback:
        tracker.add_callback(progress_callback)

    results: Dict[Tuple[str, int], Dict[str, Any]] = {}
    with ThreadPoolExecutor(max_workers=max_workers or settings.max_workers) as executor:
        future_to_task = {}
        for scheme, ensemble in policies.items():
            for seed in config.eval_seeds:
                env = PowerControlEnv(config.system, config.train)
                future = executor.submit(evaluate_scheme, scheme, env, scenario, seed,
                                         config.eval_episodes, ensemble)
                future_to_task[future] = (scheme, seed)
        for future in as_completed(future_to_task):
            scheme, seed = future_to_task[future]
            try:
                results[(scheme, seed)] = future.result()
                tracker.update_progress(f"{scheme} seed {seed}")
            except Exception as e:
                logger.error(f"Evaluation of {scheme} on seed {seed} failed: {str(e)}")
                raise
            if cancel_event is not None and cancel_event.is_set():
                pending = [f for f in future_to_task if f.cancel()]
                logger.info(f"Comparison cancelled; dropped {len(pending)} queued evaluations")
                break

    finished = [scheme for scheme in config.schemes
                if all((scheme, seed) in results for seed in config.eval_seeds)]
    rows, digest_rows = [], []
    for scheme in finished:
        rewards = [r for seed in config.eval_seeds for r in results[(scheme, seed)]["rewards"]]
        sum_rates = [r for seed in config.eval_seeds for r in results[(scheme, seed)]["sum_rates"]]
        rows.append([scheme, len(rewards), float(np.mean(rewards)), _stderr(rewards),
                     float(np.mean(sum_rates)), _stderr(sum_rates)])
        for seed in config.eval_seeds:
            for episode, digest in enumerate(results[(scheme, seed)]["digests"]):
                digest_rows.append([scheme, seed, episode, digest])
        logger.info(f"{scheme}: mean reward {rows[-1][2]:.4f} +- {rows[-1][3]:.4f}")

    write_rows_csv(out / "compare_digests.csv", ["scheme", "seed", "episode", "digest"], digest_rows)
    mismatched = [scheme for scheme in finished[1:]
                  if channel_digests(digest_rows, scheme) != channel_digests(digest_rows, finished[0])]
    if mismatched:
        logger.error(f"Channel digests of {mismatched} differ from {finished[0]}; no table written")
        raise ChannelMismatchError(
            f"Schemes {mismatched} saw other channels than {finished[0]}",
            {"reference": finished[0], "schemes": mismatched},
        )

    path = write_rows_csv(out / "compare.csv", COMPARE_HEADER, rows)
    return path, rows


# ---------------------------------------------------------------------- background jobs

class ExperimentJobManager:
    """
    Background job manager for training and comparison runs.

    Jobs run on daemon threads; each carries a ProgressTracker and a
    cancellation event checked between episodes or evaluations.
    """

    def __init__(self, base_out_dir: Optional[PathLike] = None):
        """
        Initialize the job manager.

        Args:
            base_out_dir: Parent directory of per-job output directories.
        """
        self.base_out_dir = Path(base_out_dir) if base_out_dir else Path(settings.output_dir)
        self.jobs: Dict[str, Dict[str, Any]] = {}
        self._lock = threading.Lock()

        logger.info(f"ExperimentJobManager initialized with output directory: {self.base_out_dir}")

    def start_job(self, kind: str, config: ExperimentConfig,
                  runner: Optional[Callable[..., Tuple[Any, Path]]] = None) -> str:
        """
        Start a background job.

        Args:
            kind: ``train`` or ``compare``.
            config: Experiment configuration for the job.
            runner: Override of the study function (used by tests).

        Returns:
            Job ID for tracking
        """
        if kind not in ("train", "compare"):
            raise ValueError(f"Unknown job kind '{kind}'")
        if runner is None:
            runner = run_training if kind == "train" else compare_schemes

        job_id = str(uuid.uuid4())
        out_dir = self.base_out_dir / job_id
        cancel_event = threading.Event()
        status = JobStatus(job_id=job_id, kind=kind)

        with self._lock:
            self.jobs[job_id] = {
                'status': status,
                'cancel_event': cancel_event,
                'start_time': datetime.now(),
            }

        def on_progress(info: Dict[str, Any]) -> None:
            status.progress = info['progress_percent']
            status.message = str(info['current_item'])

        def run_job():
            try:
                status.status = 'running'
                runner(config, out_dir, progress_callback=on_progress, cancel_event=cancel_event)
                status.outputs = sorted(str(p) for p in out_dir.rglob("*") if p.is_file())
                status.status = 'cancelled' if cancel_event.is_set() else 'completed'
                if status.status == 'completed':
                    status.progress = 100.0
                logger.info(f"Job {job_id} finished ({status.status}) with {len(status.outputs)} outputs")
            except Exception as e:
                logger.error(f"Error in job {job_id}: {str(e)}")
                status.status = 'failed'
                status.message = str(e)
            finally:
                status.finished_at = datetime.now()

        thread = threading.Thread(target=run_job)
        thread.daemon = True
        thread.start()
        with self._lock:
            self.jobs[job_id]['thread'] = thread

        logger.info(f"Started {kind} job: {job_id}")
        return job_id

    def get_status(self, job_id: str) -> Optional[JobStatus]:
        """Status of one job, or None when the ID is unknown."""
        job = self.jobs.get(job_id)
        return job['status'] if job else None

    def wait(self, job_id: str, timeout: Optional[float] = None) -> Optional[JobStatus]:
        job = self.jobs.get(job_id)
        if not job:
            return None
        job['thread'].join(timeout)
        return job['status']

    def cancel_job(self, job_id: str) -> bool:
        """
        Request cancellation of a running job.

        Returns:
            True if the job exists and was still active.
        """
        job = self.jobs.get(job_id)
        if not job or job['status'].status not in ('pending', 'running'):
            return False
        job['cancel_event'].set()
        logger.info(f"Cancellation requested for job: {job_id}")
        return True

    def cleanup_finished_jobs(self, max_age_hours: int = 24) -> int:
        """
        Forget finished jobs older than ``max_age_hours``.

        Returns:
            Number of jobs removed.
        """
        cutoff_time = datetime.now() - timedelta(hours=max_age_hours)
        with self._lock:
            stale = [job_id for job_id, job in self.jobs.items()
                     if job['status'].status in ('completed', 'failed', 'cancelled')
                     and job['start_time'] < cutoff_time]
            for job_id in stale:
                del self.jobs[job_id]
        if stale:
            logger.info(f"Cleaned up {len(stale)} finished jobs")
        return len(stale)

    def list_jobs(self) -> List[JobStatus]:
        return [job['status'] for job in self.jobs.values()]

