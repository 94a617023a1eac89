import json

import numpy as np
import pytest

from config import SCHEMA_VERSION
from models.training_models import TrainLog
from services.checkpoint_service import (
    read_checkpoint, read_rows_csv, train_log_rows, write_checkpoint, write_json, write_rows_csv,
    write_train_log_csv
)
from utils.errors import CheckpointError


class TestCheckpoint:
    def test_round_trip_with_sidecar(self, tmp_path):
        weights = np.arange(6.0).reshape(2, 3)
        path = write_checkpoint(tmp_path / "ckpt" / "run.json", {"episode": 3}, {"w": weights})
        assert (tmp_path / "ckpt" / "run.npz").exists()
        payload, arrays = read_checkpoint(path)
        assert payload["episode"] == 3
        assert payload["schema_version"] == SCHEMA_VERSION
        assert "arrays_file" not in payload
        assert np.array_equal(arrays["w"], weights)

    def test_without_arrays(self, tmp_path):
        path = write_checkpoint(tmp_path / "plain.json", {"a": [1, 2]})
        payload, arrays = read_checkpoint(path)
        assert payload["a"] == [1, 2]
        assert arrays == {}
        assert not (tmp_path / "plain.npz").exists()

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError) as exc:
            read_checkpoint(tmp_path / "missing.json")
        assert exc.value.error_code == "CHECKPOINT_ERROR"

    def test_unreadable(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(CheckpointError):
            read_checkpoint(path)

    def test_schema_mismatch(self, tmp_path):
        path = tmp_path / "old.json"
        path.write_text(json.dumps({"schema_version": SCHEMA_VERSION + 1}))
        with pytest.raises(CheckpointError) as exc:
            read_checkpoint(path)
        assert exc.value.details["schema_version"] == SCHEMA_VERSION + 1

    def test_missing_sidecar(self, tmp_path):
        path = write_checkpoint(tmp_path / "run.json", {}, {"w": np.ones(2)})
        (tmp_path / "run.npz").unlink()
        with pytest.raises(CheckpointError):
            read_checkpoint(path)


class TestTables:
    def test_csv_has_schema_column(self, tmp_path):
        path = write_rows_csv(tmp_path / "out" / "t.csv", ["a", "b"], [[1, 2.5], [3, 4.0]])
        rows = read_rows_csv(path)
        assert rows == [
            {"a": "1", "b": "2.5", "schema_version": str(SCHEMA_VERSION)},
            {"a": "3", "b": "4.0", "schema_version": str(SCHEMA_VERSION)},
        ]

    def test_train_log_rows_exclude_wall_clock(self):
        log = TrainLog(algorithm="matd3", episode_rewards=[1.0, 2.0],
                       agent_rewards=[[0.5, 0.5], [1.0, 1.0]], wall_clock_s=[9.0, 8.0])
        header, rows = train_log_rows(log)
        assert header == ["episode", "mean_reward", "agent_0", "agent_1"]
        assert rows == [[0, 1.0, 0.5, 0.5], [1, 2.0, 1.0, 1.0]]

    def test_empty_train_log(self, tmp_path):
        path = write_train_log_csv(tmp_path / "empty.csv", TrainLog(algorithm="maddpg"))
        assert read_rows_csv(path) == []

    def test_json_is_sorted_and_stable(self, tmp_path):
        first = write_json(tmp_path / "a.json", {"b": 1, "a": {"d": 2, "c": 3}})
        second = write_json(tmp_path / "b.json", {"a": {"c": 3, "d": 2}, "b": 1})
        assert first.read_bytes() == second.read_bytes()
        assert list(json.loads(first.read_text())) == ["a", "b"]
