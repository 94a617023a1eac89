import json

import pytest

from cli import EXIT_ERROR, EXIT_OK, EXIT_VALIDATION_FAILED, build_parser, load_config, main
from services.checkpoint_service import read_rows_csv


@pytest.fixture
def config_file(tiny_experiment, tmp_path):
    path = tmp_path / "experiment.json"
    tiny_experiment.to_json_file(path)
    return path


def test_overrides_apply_per_verb(config_file, tmp_path):
    args = build_parser().parse_args(["train", "--config", str(config_file), "--seed", "3",
                                      "--episodes", "9", "--algorithm", "maddpg", "--out", str(tmp_path)])
    config = load_config(args)
    assert config.system.master_seed == 3
    assert config.train.episodes == 9
    assert config.train.algorithm == "maddpg"
    assert config.out_dir == str(tmp_path)

    args = build_parser().parse_args(["compare", "--config", str(config_file), "--episodes", "4",
                                      "--checkpoint", "matd3=run/matd3_final.json"])
    config = load_config(args)
    assert config.eval_episodes == 4
    assert config.train.episodes == 2
    assert config.checkpoints == {"matd3": "run/matd3_final.json"}


def test_nmse_sweep(config_file, tmp_path):
    out = tmp_path / "nmse"
    assert main(["nmse-sweep", "--config", str(config_file), "--out", str(out), "--trials", "3"]) == EXIT_OK
    rows = read_rows_csv(out / "nmse_sweep.csv")
    assert len(rows) == 6
    assert {row["trials"] for row in rows} == {"3"}


def test_train(config_file, tmp_path):
    out = tmp_path / "train"
    assert main(["train", "--config", str(config_file), "--out", str(out), "--episodes", "1"]) == EXIT_OK
    assert len(read_rows_csv(out / "matd3_train.csv")) == 1
    assert (out / "checkpoints" / "matd3" / "matd3_final.json").exists()


def test_validate_writes_report(config_file, tmp_path):
    out = tmp_path / "validate"
    code = main(["validate", "--config", str(config_file), "--out", str(out),
                 "--suites", "kronecker", "gradient_check"])
    assert code == EXIT_OK
    report = json.loads((out / "validation_report.json").read_text())
    assert [s["name"] for s in report["suites"]] == ["kronecker", "gradient_check"]
    assert report["schema_version"] == 1


def test_failed_suite_exit_code(config_file, tmp_path, mocker):
    mocker.patch.dict("services.validation_service.SUITES",
                      {"kronecker": lambda config, fault: (False, {}, "forced")})
    code = main(["validate", "--config", str(config_file), "--out", str(tmp_path), "--suites", "kronecker"])
    assert code == EXIT_VALIDATION_FAILED


def test_invalid_config_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"nmse_trials": 0}))
    assert main(["nmse-sweep", "--config", str(path), "--out", str(tmp_path)]) == EXIT_ERROR


def test_missing_config_file(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "none.json")]) == EXIT_ERROR


def test_resume_with_sweep_is_rejected(config_file, tmp_path):
    code = main(["train", "--config", str(config_file), "--out", str(tmp_path),
                 "--sweep", "gamma", "--resume", str(tmp_path / "x.json")])
    assert code == EXIT_ERROR


def test_compare_without_checkpoint(config_file, tmp_path):
    data = json.loads(config_file.read_text())
    data["schemes"] = ["matd3", "ul_equal"]
    config_file.write_text(json.dumps(data))
    assert main(["compare", "--config", str(config_file), "--out", str(tmp_path)]) == EXIT_ERROR


def test_malformed_checkpoint_flag(config_file, tmp_path):
    code = main(["compare", "--config", str(config_file), "--out", str(tmp_path), "--checkpoint", "matd3"])
    assert code == EXIT_ERROR


def test_unknown_verb():
    with pytest.raises(SystemExit):
        main(["deploy"])
