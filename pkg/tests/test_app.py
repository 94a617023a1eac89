import pytest
from fastapi.testclient import TestClient

import app as app_module
from models.experiment_models import JobStatus


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.setattr(app_module, "RUNS_DIR", tmp_path)
    return TestClient(app_module.app)


@pytest.fixture
def body(tiny_experiment):
    return {"config": tiny_experiment.model_dump(mode="json")}


def test_health(client):
    response = client.get("/api/health")
    assert response.status_code == 200
    assert response.json()["status"] == "healthy"


def test_config_lists_suites(client):
    data = client.get("/api/config").json()
    assert "jensen" in data["validation_suites"]
    assert data["max_covariance_antennas"] == 32


def test_validate_subset(client, body):
    response = client.post("/api/validate", json={**body, "suites": ["kronecker"]})
    assert response.status_code == 200
    data = response.json()
    assert data["passed"] is True
    assert [s["name"] for s in data["report"]["suites"]] == ["kronecker"]


def test_validate_unknown_suite(client):
    response = client.post("/api/validate", json={"suites": ["astrology"]})
    assert response.status_code == 400
    assert response.json()["error_code"] == "HTTP_400"


def test_nmse_sweep(client, body, tmp_path):
    response = client.post("/api/nmse-sweep", json=body)
    assert response.status_code == 200
    data = response.json()
    assert len(data["rows"]) == 6
    assert data["csv_path"].startswith(str(tmp_path))


def test_capacity_error_is_client_error(client, body):
    config = body["config"]
    config["nmse_n_ant"] = 33
    response = client.post("/api/nmse-sweep", json={"config": config})
    assert response.status_code == 422
    assert response.json()["error_code"] == "CAPACITY_EXCEEDED"


def test_invalid_body(client):
    response = client.post("/api/jobs/train", json={"config": {"nmse_trials": 0}})
    assert response.status_code == 422
    data = response.json()
    assert data["error_code"] == "VALIDATION_ERROR"
    assert data["details"]["field_errors"]


def test_start_job(client, body, mocker):
    start = mocker.patch.object(app_module.job_manager, "start_job", return_value="job-1")
    response = client.post("/api/jobs/compare", json=body)
    assert response.status_code == 200
    assert response.json()["status_url"] == "/api/jobs/job-1"
    assert start.call_args.args[0] == "compare"


def test_unknown_job_kind(client, body):
    response = client.post("/api/jobs/sweep", json=body)
    assert response.status_code == 404


def test_job_status_and_listing(client, mocker):
    status = JobStatus(job_id="job-2", kind="train", status="running", progress=40.0)
    mocker.patch.object(app_module.job_manager, "get_status", return_value=status)
    mocker.patch.object(app_module.job_manager, "list_jobs", return_value=[status])
    data = client.get("/api/jobs/job-2").json()["data"]
    assert data["progress"] == 40.0
    listing = client.get("/api/jobs").json()
    assert listing["count"] == 1


def test_missing_job(client):
    assert client.get("/api/jobs/does-not-exist").status_code == 404
    assert client.delete("/api/jobs/does-not-exist").status_code == 404


def test_cancel_job(client, mocker):
    cancel = mocker.patch.object(app_module.job_manager, "cancel_job", return_value=True)
    response = client.delete("/api/jobs/job-3")
    assert response.status_code == 200
    cancel.assert_called_once_with("job-3")
