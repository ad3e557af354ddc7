from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel
from typing import List, Dict, Any, Optional
import sys
import logging
from pathlib import Path
from contextlib import asynccontextmanager

sys.path.append(str(Path(__file__).parent.parent.parent))

from config.settings import API_HOST, API_PORT, LOG_LEVEL, SCENARIO_DIR
from src.domain.errors import HybridClusterError, OrchestratorError, ScenarioError, ScenarioInvalid
from src.domain.validation import load_scenario, parse_scenario, validate_scenario
from src.overlay.topology import plan_initial_topology, topology_to_dict
from src.sim.engine import compare_scenarios, run_scenario
from src.sim.metrics import summarize

# Configure logging
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler()
    ]
)
logger = logging.getLogger("hybrid_cluster.api")

bundled_scenarios: Dict[str, str] = {}


class RunRequest(BaseModel):
    scenario: Dict[str, Any]
    seed: Optional[int] = None


class CompareRequest(BaseModel):
    a: Dict[str, Any]
    b: Dict[str, Any]
    seed: Optional[int] = None


class ValidationResponse(BaseModel):
    valid: bool
    problems: List[str] = []


def load_bundled_scenarios() -> int:
    """Index the scenario fixtures shipped with the repository"""
    bundled_scenarios.clear()
    for path in sorted(Path(SCENARIO_DIR).glob("*.json")):
        bundled_scenarios[path.stem] = str(path)
    return len(bundled_scenarios)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Lifespan event handler for startup and shutdown events"""
    if not load_bundled_scenarios():
        logger.warning(f"No bundled scenarios found under {SCENARIO_DIR}")
    yield


app = FastAPI(
    title="Hybrid Cluster Simulator API",
    version="1.0.0",
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def to_http_error(e: HybridClusterError) -> HTTPException:
    if isinstance(e, ScenarioInvalid):
        return HTTPException(status_code=400, detail=[str(p) for p in e.problems])
    if isinstance(e, ScenarioError):
        return HTTPException(status_code=400, detail=str(e))
    if isinstance(e, OrchestratorError):
        return HTTPException(status_code=409, detail=str(e))
    return HTTPException(status_code=500, detail=f"{type(e).__name__}: {e}")


def _scenario(document: Dict[str, Any]):
    try:
        return validate_scenario(parse_scenario(document))
    except HybridClusterError as e:
        logger.warning(f"Rejected scenario: {e}")
        raise to_http_error(e)


@app.get("/")
async def root():
    return {"message": "Hybrid Cluster Simulator API", "status": "running"}


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {"status": "healthy", "bundled_scenarios": len(bundled_scenarios)}


@app.get("/scenarios")
async def list_scenarios():
    """List the bundled scenario fixtures"""
    return {"scenarios": sorted(bundled_scenarios), "total": len(bundled_scenarios)}


@app.get("/scenarios/{name}")
async def get_scenario(name: str):
    if name not in bundled_scenarios:
        raise HTTPException(status_code=404, detail=f"No bundled scenario named '{name}'")
    return load_scenario(bundled_scenarios[name]).model_dump(mode="json")


@app.post("/validate", response_model=ValidationResponse)
def validate(document: Dict[str, Any]):
    try:
        validate_scenario(parse_scenario(document))
    except ScenarioInvalid as e:
        return ValidationResponse(valid=False, problems=[str(p) for p in e.problems])
    return ValidationResponse(valid=True)


@app.post("/topology")
def topology(document: Dict[str, Any]):
    """Overlay planned for the scenario's initial deployment"""
    scenario = _scenario(document)
    try:
        planned, routes = plan_initial_topology(scenario)
    except HybridClusterError as e:
        raise to_http_error(e)
    return topology_to_dict(planned, routes)


@app.post("/run")
def run(request: RunRequest):
    scenario = _scenario(request.scenario)
    logger.info(f"Running scenario with {len(scenario.workload)} blocks, seed={request.seed}")
    try:
        return summarize(run_scenario(scenario, request.seed))
    except HybridClusterError as e:
        logger.error(f"Simulation failed: {e}")
        raise to_http_error(e)


@app.post("/compare")
def compare(request: CompareRequest):
    a, b = _scenario(request.a), _scenario(request.b)
    try:
        return compare_scenarios(a, b, request.seed)
    except HybridClusterError as e:
        logger.error(f"Comparison failed: {e}")
        raise to_http_error(e)


if __name__ == "__main__":
    import uvicorn
    logger.info("Starting Hybrid Cluster Simulator API...")
    logger.info(f"API docs available at: http://localhost:{API_PORT}/docs")
    uvicorn.run(app, host=API_HOST, port=API_PORT)
