from fastapi import FastAPI, Request, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.exceptions import RequestValidationError
from starlette.exceptions import HTTPException as StarletteHTTPException
import logging
import uuid
from datetime import datetime

from config import settings, RUNS_DIR
from models.experiment_models import ErrorResponse, ExperimentRequest, ValidationRequest
from services.experiment_service import ExperimentJobManager, nmse_sweep
from services.validation_service import SUITES, run_validation
from utils.errors import (
    CapacityError, CheckpointError, DomainError, GeometryInfeasibleError,
    NafdError, NoSignalDirectionError, PilotContaminationError
)
from contextlib import asynccontextmanager

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.log_level),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(settings.log_file),
        logging.StreamHandler()
    ]
)
logger = logging.getLogger(__name__)

# Errors caused by the submitted configuration rather than by the server
CLIENT_ERRORS = (DomainError, GeometryInfeasibleError, CapacityError,
                 NoSignalDirectionError, PilotContaminationError)

job_manager = ExperimentJobManager(RUNS_DIR / "jobs")


# Application lifecycle events using modern lifespan
@asynccontextmanager
async def lifespan(app: FastAPI):
    """Handle application lifespan events."""
    logger.info(f"Starting {settings.app_name} v{settings.app_version}")
    logger.info(f"Debug mode: {settings.debug}")
    logger.info(f"Job outputs under {job_manager.base_out_dir}")

    job_manager.cleanup_finished_jobs(max_age_hours=24)

    yield

    active = [job.job_id for job in job_manager.list_jobs() if job.status in ("pending", "running")]
    for job_id in active:
        job_manager.cancel_job(job_id)
    logger.info(f"Shutting down application; cancelled {len(active)} active jobs")


# Create FastAPI application
app = FastAPI(
    title=settings.app_name,
    description="Simulation lab for network-assisted full-duplex cell-free mmWave systems",
    version=settings.app_version,
    debug=settings.debug,
    docs_url="/api/docs" if settings.debug else None,
    redoc_url="/api/redoc" if settings.debug else None,
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def error_json(status_code: int, message: str, error_code: str, details=None) -> JSONResponse:
    error_response = ErrorResponse(message=message, error_code=error_code, details=details)
    return JSONResponse(status_code=status_code, content=error_response.model_dump(mode="json"))


# Exception handlers
@app.exception_handler(NafdError)
async def nafd_exception_handler(request: Request, exc: NafdError):
    """Map domain errors to ErrorResponse bodies."""
    if isinstance(exc, CLIENT_ERRORS):
        status_code = 422
    elif isinstance(exc, CheckpointError):
        status_code = 404
    else:
        status_code = 500
    logger.error(f"{exc.error_code}: {exc.message} - URL: {request.url}")
    return error_json(status_code, exc.message, exc.error_code, exc.details or None)


@app.exception_handler(StarletteHTTPException)
async def http_exception_handler(request: Request, exc: StarletteHTTPException):
    """Handle HTTP exceptions with the shared error body."""
    logger.error(f"HTTP {exc.status_code}: {exc.detail} - URL: {request.url}")
    details = {"status_code": exc.status_code}
    if settings.debug:
        details.update({"url": str(request.url), "method": request.method})
    return error_json(exc.status_code, str(exc.detail), f"HTTP_{exc.status_code}", details)


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    """Handle request validation errors with field-level information."""
    logger.error(f"Validation error: {exc.errors()} - URL: {request.url}")

    field_errors = {}
    for error in exc.errors():
        field_path = " -> ".join(str(loc) for loc in error["loc"])
        field_errors[field_path] = error["msg"]

    return error_json(422, "Invalid request data - please check the highlighted fields",
                      "VALIDATION_ERROR", {"field_errors": field_errors})


@app.exception_handler(Exception)
async def general_exception_handler(request: Request, exc: Exception):
    """Handle unexpected exceptions."""
    error_id = str(uuid.uuid4())[:8]
    logger.error(
        f"Unexpected error [{error_id}]: {str(exc)} - URL: {request.url} - Type: {type(exc).__name__}",
        exc_info=True
    )
    details = {"error_id": error_id}
    if settings.debug:
        details["error_type"] = type(exc).__name__
    return error_json(500, "An unexpected error occurred", "INTERNAL_ERROR", details)


# System endpoints
@app.get("/api/health", tags=["System"])
async def health_check():
    """Health check endpoint to verify the server is running."""
    return {
        "message": f"{settings.app_name} is running",
        "status": "healthy",
        "timestamp": datetime.now().isoformat(),
        "version": settings.app_version,
        "debug": settings.debug
    }


@app.get("/api/config", tags=["System"])
async def get_configuration():
    """
    Get current process-level configuration.

    Returns:
        Dictionary with current settings and the available validation suites
    """
    return {
        "app_name": settings.app_name,
        "app_version": settings.app_version,
        "debug": settings.debug,
        "output_dir": settings.output_dir,
        "schema_version": settings.schema_version,
        "max_workers": settings.max_workers,
        "max_covariance_antennas": settings.max_covariance_antennas,
        "validation_suites": list(SUITES),
        "timestamp": datetime.now().isoformat()
    }


# Synchronous studies (intended for small configurations)
@app.post("/api/validate", tags=["Studies"])
def validate(request: ValidationRequest):
    """
    Run the invariant suites and return the report.

    Returns 200 with ``passed: false`` when a suite fails; the report itself
    carries the per-suite messages.
    """
    if request.suites:
        unknown = [name for name in request.suites if name not in SUITES]
        if unknown:
            raise HTTPException(status_code=400, detail=f"Unknown validation suites: {unknown}")
    report = run_validation(request.config, request.suites)
    return {
        "success": True,
        "passed": report.passed,
        "report": report.model_dump(mode="json"),
        "timestamp": datetime.now().isoformat()
    }


@app.post("/api/nmse-sweep", tags=["Studies"])
def run_nmse_sweep(request: ExperimentRequest):
    """Run an NMSE sweep and return its rows alongside the CSV path."""
    out_dir = RUNS_DIR / "nmse" / datetime.now().strftime("%Y%m%d_%H%M%S_%f")
    path, rows = nmse_sweep(request.config, out_dir)
    return {
        "success": True,
        "csv_path": str(path),
        "rows": rows,
        "timestamp": datetime.now().isoformat()
    }


# Background jobs
@app.post("/api/jobs/{kind}", tags=["Jobs"])
async def start_job(kind: str, request: ExperimentRequest):
    """
    Start a background training or comparison job.

    Args:
        kind: ``train`` or ``compare``
        request: Experiment configuration for the job

    Returns:
        Job ID and the URL to poll for status
    """
    if kind not in ("train", "compare"):
        raise HTTPException(status_code=404, detail=f"Unknown job kind: {kind}")
    job_id = job_manager.start_job(kind, request.config)
    return {
        "success": True,
        "message": f"{kind} job started",
        "job_id": job_id,
        "status_url": f"/api/jobs/{job_id}",
        "timestamp": datetime.now().isoformat()
    }


@app.get("/api/jobs/{job_id}", tags=["Jobs"])
async def get_job_status(job_id: str):
    """Status and progress of a background job."""
    status = job_manager.get_status(job_id)
    if status is None:
        raise HTTPException(status_code=404, detail=f"Job not found: {job_id}")
    return {"success": True, "data": status.model_dump(mode="json"),
            "timestamp": datetime.now().isoformat()}


@app.delete("/api/jobs/{job_id}", tags=["Jobs"])
async def cancel_job(job_id: str):
    """Request cancellation of an active job."""
    if not job_manager.cancel_job(job_id):
        raise HTTPException(status_code=404, detail=f"Job not found or already finished: {job_id}")
    return {"success": True, "message": f"Cancellation requested for job {job_id}",
            "timestamp": datetime.now().isoformat()}


@app.get("/api/jobs", tags=["Jobs"])
async def list_jobs():
    """All jobs known to the server."""
    jobs = [job.model_dump(mode="json") for job in job_manager.list_jobs()]
    return {"success": True, "count": len(jobs), "data": jobs,
            "timestamp": datetime.now().isoformat()}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=settings.host, port=settings.port, reload=settings.debug)
