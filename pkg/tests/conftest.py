import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from models.experiment_models import ExperimentConfig
from models.system_models import SystemConfig
from models.training_models import TrainConfig
from phy.scenario import generate_topology
from services.network_service import NetworkSimulator
from utils.errors import SingularChannelError
from utils.seeding import derive_rng


def realize_snapshot(simulator, scenario, seed, *keys):
    """Realize a snapshot, skipping the rare ill-conditioned draw."""
    for attempt in range(10):
        try:
            return simulator.realize(scenario, derive_rng(seed, *keys, attempt))
        except SingularChannelError:
            continue
    raise RuntimeError("no usable realization")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_system():
    """2/2 APs, 2/2 users, 4 antennas, 2 RF chains."""
    return SystemConfig(n_tap=2, n_rap=2, n_ul_users=2, n_dl_users=2, n_ant=4, n_rf=2,
                        master_seed=7)


@pytest.fixture
def tiny_train():
    return TrainConfig(batch_size=4, t_max=3, episodes=2, hidden_units=8, replay_capacity=200)


@pytest.fixture
def tiny_scenario(tiny_system):
    return generate_topology(tiny_system, derive_rng(tiny_system.master_seed, "topology"))


@pytest.fixture
def tiny_simulator(tiny_system):
    return NetworkSimulator(tiny_system)


@pytest.fixture
def tiny_snapshot(tiny_simulator, tiny_scenario, tiny_system):
    return realize_snapshot(tiny_simulator, tiny_scenario, tiny_system.master_seed, "fixture")


@pytest.fixture
def tiny_experiment(tiny_system, tiny_train, tmp_path):
    """Experiment config small enough for unit tests; outputs go to tmp_path."""
    return ExperimentConfig(
        system=tiny_system,
        train=tiny_train,
        snr_grid_db=[0.0, 20.0],
        rf_chains=[1, 2, "full"],
        nmse_n_ant=4,
        nmse_trials=6,
        gamma_grid=[0.9, 0.95],
        lr_grid=[0.001, 0.0005],
        final_window=2,
        schemes=["ul_equal", "ul_max"],
        eval_seeds=[11, 12],
        eval_episodes=1,
        mc_trials=200,
        jensen_scenarios=1,
        mmse_trials=2000,
        out_dir=str(tmp_path / "runs"),
    )
