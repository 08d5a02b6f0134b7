import logging
from typing import Dict, List, Optional

from fastapi import APIRouter, Depends, HTTPException, Path
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from qesdx.exceptions import QESError
from qesdx.models.jobs import Job, Report
from qesdx.services.jobs import JobService, render_report, reverify_report

logger = logging.getLogger(__name__)

api_router = APIRouter(prefix="/api")

_service: Optional[JobService] = None


# Models for request/response
class RenderResponse(BaseModel):
    """Response model for the render endpoint.

    Attributes:
        text: Human-readable report
        exit_code: Exit code the command line would return
    """

    text: str
    exit_code: int


class ExamplesResponse(BaseModel):
    """Response model for the example listing.

    Attributes:
        examples: Example job names
    """

    examples: List[str]


class ReverifyResponse(BaseModel):
    """Response model for report re-verification.

    Attributes:
        residuals: Recomputed residual per "<potential>:<state>"
        max_residual: Largest recomputed residual
        error: Error message if the report could not be re-verified
    """

    residuals: Dict[str, float] = {}
    max_residual: float = 0.0
    error: Optional[str] = None


# Dependency functions for services
async def get_job_service() -> JobService:
    """Dependency for the job service.

    Returns:
        Job service with the example jobs loaded
    """
    global _service
    if _service is None:
        _service = JobService()
    return _service


@api_router.post("/jobs/run", response_model=Report)
async def run_job(job: Job, service: JobService = Depends(get_job_service)):
    """Run a job and return its verified report.

    Parameters:
        job: Job document
        service: Job service

    Returns:
        The report; input errors carry exit code 1
    """
    logger.info(f"Received {job.action.value} job for {job.model}")
    return service.run(job)


@api_router.post("/jobs/render", response_model=RenderResponse)
async def render_job(
    job: Job, service: JobService = Depends(get_job_service)
):
    """Run a job and return the human-readable report."""
    report = service.run(job)
    return RenderResponse(
        text=render_report(report), exit_code=report.exit_code
    )


@api_router.post("/jobs/sample", response_class=PlainTextResponse)
async def sample_job(
    job: Job, service: JobService = Depends(get_job_service)
):
    """Sample the job's potentials and states on its grid as CSV."""
    try:
        return PlainTextResponse(service.sample(job), media_type="text/csv")
    except QESError as e:
        logger.error(f"Error sampling job: {str(e)}")
        raise HTTPException(status_code=422, detail=str(e))


@api_router.post("/jobs/reverify", response_model=ReverifyResponse)
async def reverify(report: Report):
    """Recompute every state residual from a report's coefficient lists."""
    try:
        residuals = reverify_report(report)
        return ReverifyResponse(
            residuals=residuals,
            max_residual=max(residuals.values(), default=0.0),
        )
    except (QESError, KeyError) as e:
        logger.error(f"Error re-verifying report: {str(e)}")
        return ReverifyResponse(error=str(e))


@api_router.get("/jobs/examples", response_model=ExamplesResponse)
async def list_examples(service: JobService = Depends(get_job_service)):
    """List the example jobs shipped with the service."""
    return ExamplesResponse(examples=sorted(service.examples))


@api_router.get("/jobs/examples/{name}", response_model=Job)
async def get_example(
    name: str = Path(..., description="Example job name"),
    service: JobService = Depends(get_job_service),
):
    """Get one example job document."""
    if name not in service.examples:
        raise HTTPException(status_code=404, detail=f"no example {name!r}")
    return service.examples[name]


@api_router.post("/jobs/examples/{name}/run", response_model=Report)
async def run_example(
    name: str = Path(..., description="Example job name"),
    service: JobService = Depends(get_job_service),
):
    """Run one example job."""
    if name not in service.examples:
        raise HTTPException(status_code=404, detail=f"no example {name!r}")
    return service.run(service.examples[name])


@api_router.get("/health")
async def api_health_check():
    """API health check endpoint.

    Returns:
        Health status information
    """
    return {"status": "healthy"}
