"""
Checkpoint Service for the NAFD cell-free mmWave lab.

Writes and reads training checkpoints (a JSON document plus a compressed .npz
sidecar for large arrays) and the CSV/JSON artifacts every command emits.
All artifacts carry the schema version from the settings.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import SCHEMA_VERSION
from models.training_models import TrainLog
from utils.errors import CheckpointError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".npz")


def write_checkpoint(path: PathLike, payload: Dict[str, Any],
                     arrays: Optional[Dict[str, np.ndarray]] = None) -> Path:
    """
    Write a checkpoint document and its optional array sidecar.

    Args:
        path: Target JSON path.
        payload: JSON-serializable content (network parameters, logs, config).
        arrays: Arrays stored in ``<path>.npz`` and referenced from the JSON.

    Returns:
        Path of the JSON document.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"schema_version": SCHEMA_VERSION, **payload}
    if arrays:
        sidecar = _sidecar_path(path)
        np.savez_compressed(sidecar, **arrays)
        document["arrays_file"] = sidecar.name
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle)
    logger.info(f"Wrote checkpoint {path}")
    return path


def read_checkpoint(path: PathLike) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Read a checkpoint written by write_checkpoint.

    Returns:
        (payload, arrays); arrays is empty when no sidecar was written.

    Raises:
        CheckpointError: Missing file, unreadable content or schema mismatch.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}", {"path": str(path)})
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Cannot read checkpoint {path}: {str(e)}")
        raise CheckpointError(f"Unreadable checkpoint: {path}", {"path": str(path)}) from e

    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise CheckpointError(
            f"Checkpoint schema {version} does not match {SCHEMA_VERSION}",
            {"path": str(path), "schema_version": version},
        )

    arrays: Dict[str, np.ndarray] = {}
    sidecar_name = document.pop("arrays_file", None)
    if sidecar_name:
        sidecar = path.parent / sidecar_name
        if not sidecar.exists():
            raise CheckpointError(f"Checkpoint sidecar not found: {sidecar}", {"path": str(sidecar)})
        with np.load(sidecar) as data:
            arrays = {key: data[key] for key in data.files}
    logger.info(f"Loaded checkpoint {path}")
    return document, arrays


def write_rows_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a CSV with a trailing schema_version column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(header) + ["schema_version"])
        for row in rows:
            writer.writerow(list(row) + [SCHEMA_VERSION])
    logger.info(f"Wrote {path}")
    return path


def read_rows_csv(path: PathLike) -> List[Dict[str, str]]:
    with open(path, "r", newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def train_log_rows(log: TrainLog) -> Tuple[List[str], List[List[Any]]]:
    """Header and rows of the training curve (wall clock excluded for reproducibility)."""
    n_agents = len(log.agent_rewards[0]) if log.agent_rewards else 0
    header = ["episode", "mean_reward"] + [f"agent_{i}" for i in range(n_agents)]
    rows = [[episode, reward] + list(agents)
            for episode, (reward, agents) in enumerate(zip(log.episode_rewards, log.agent_rewards))]
    return header, rows


def write_train_log_csv(path: PathLike, log: TrainLog) -> Path:
    header, rows = train_log_rows(log)
    return write_rows_csv(path, header, rows)


def write_json(path: PathLike, document: Dict[str, Any]) -> Path:
    """Write a JSON document with sorted keys so reruns are byte-identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2, sort_keys=True, default=str)
    logger.info(f"Wrote {path}")
    return path
