"""HTTP facade over the design calculators and the simulation harness.

Calculator endpoints are stateless and deterministic: the same resolved
request body produces the same response bytes, and every response carries
a request_id (the first 16 hex digits of SHA-256 over the canonical JSON
of the resolved body) so downstream displays can cite their source.
Malformed payloads map to 400 with field-level messages; domain
violations (invalid correlation triples, impossible allocations, cap
overruns) map to 422 with the library's own message, which names the
violated eigenvalue for correlation failures.

Simulations run as jobs on an in-process worker pool with an in-memory
LRU store, polled via GET /v1/jobs/{id}; nothing persists across
restarts.  Request caps keep the service desk-scale: cluster size m*k*l
at most 10,000, replications at most 1,000 per scenario, grids at most
201 steps per axis, 64 scenarios per job.
"""

from __future__ import annotations

import json
import uuid
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from hashlib import sha256
from threading import Lock

from fastapi import FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from . import __version__
from .correlation import BlockDims, CorrelationParams, is_valid
from .design import (
    DesignSpec,
    OutcomeModel,
    clusters_via_design_effect,
    design_effect,
    optimal_allocation,
    predicted_power,
    required_clusters,
    sensitivity_grid,
)
from .errors import CapExceededError, DomainError
from .estimation import ESTIMATOR_NAMES
from .harness import REPORT_COLUMNS, Scenario, run_grid, scenario_seed

MKL_CAP = 10_000
REPLICATION_CAP = 1_000
AXIS_STEP_CAP = 201
SCENARIO_CAP = 64


class _Body(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DimsBody(_Body):
    m: int
    k: int
    l: int


class IccBody(_Body):
    alpha0: float
    alpha1: float
    alpha2: float


class OutcomeBody(_Body):
    link: str = "logit"
    variance_family: str = "binomial"
    mu_c: float
    mu_t: float
    phi: float = 1.0
    kappa_c: float | None = None
    kappa_t: float | None = None


class DesignBody(_Body):
    dims: DimsBody
    icc: IccBody
    outcome: OutcomeBody
    n_clusters: int | None = None
    pi_c: float = 0.5
    rand_level: int = 4
    alpha_level: float = 0.05
    target_power: float = 0.8


class SampleSizeBody(DesignBody):
    real_valued: bool = False


class DesignEffectBody(DesignBody):
    unclustered_n: int | None = None


class IccValidateBody(_Body):
    icc: IccBody
    dims: DimsBody


class AxisBody(_Body):
    param: str
    lo: float
    hi: float
    steps: int


class GridBody(_Body):
    base: DesignBody
    axis1: AxisBody
    axis2: AxisBody


class ScenarioBody(_Body):
    name: str = ""
    p0: float
    p1: float
    icc: str | list[float]
    n: int
    dims: list[int]
    seed: int | None = None
    replications: int = 1000
    cv: float = 0.0
    pi_c: float = 0.5
    rand_level: int = 4
    workings: list[str] = ["ene"]
    estimators: list[str] = list(ESTIMATOR_NAMES)
    alpha_level: float = 0.05
    freeze_sizes: bool = False


class SimulateBody(_Body):
    scenarios: list[ScenarioBody]
    master_seed: int | None = None
    parallelism: int = 1


def _check_mkl(dims: DimsBody) -> None:
    size = dims.m * dims.k * dims.l
    if size > MKL_CAP:
        raise CapExceededError(
            f"cluster size m*k*l = {size} exceeds the service cap {MKL_CAP}"
        )


def _to_outcome(body: OutcomeBody) -> OutcomeModel:
    return OutcomeModel(
        body.link, body.variance_family, body.mu_c, body.mu_t,
        phi=body.phi, kappa_c=body.kappa_c, kappa_t=body.kappa_t,
    )


def _to_spec(body: DesignBody) -> DesignSpec:
    _check_mkl(body.dims)
    return DesignSpec(
        dims=BlockDims(body.dims.m, body.dims.k, body.dims.l),
        corr=CorrelationParams(body.icc.alpha0, body.icc.alpha1,
                               body.icc.alpha2),
        outcome=_to_outcome(body.outcome),
        n_clusters=body.n_clusters,
        pi_c=body.pi_c,
        rand_level=body.rand_level,
        alpha_level=body.alpha_level,
        target_power=body.target_power,
    )


def _request_id(body: BaseModel) -> str:
    canonical = json.dumps(body.model_dump(), sort_keys=True,
                           separators=(",", ":"))
    return sha256(canonical.encode()).hexdigest()[:16]


def _to_scenario(body: ScenarioBody, index: int, master_seed,
                 replication_cap: int) -> Scenario:
    if body.replications > replication_cap:
        raise CapExceededError(
            f"scenario {index}: {body.replications} replications exceed "
            f"the service cap {replication_cap}"
        )
    size = 1
    for d in body.dims:
        size *= d
    if size > MKL_CAP:
        raise CapExceededError(
            f"scenario {index}: cluster size {size} exceeds the service "
            f"cap {MKL_CAP}"
        )
    if body.seed is not None:
        seed = body.seed
    elif master_seed is not None:
        seed = scenario_seed(master_seed, index)
    else:
        raise DomainError(
            f"scenario {index}: no seed given and no master_seed to "
            "derive one from"
        )
    corr = body.icc if isinstance(body.icc, str) else tuple(body.icc)
    return Scenario(
        name=body.name or f"scenario-{index}",
        p0=body.p0,
        p1=body.p1,
        corr=corr,
        n_clusters=body.n,
        dims=tuple(body.dims),
        seed=seed,
        cv=body.cv,
        pi_c=body.pi_c,
        rand_level=body.rand_level,
        replications=body.replications,
        workings=tuple(body.workings),
        estimators=tuple(body.estimators),
        alpha_level=body.alpha_level,
        freeze_sizes=body.freeze_sizes,
    )


class _JobStore:
    """Thread-safe bounded job table; inserting past capacity evicts the
    oldest entry regardless of its state."""

    def __init__(self, capacity: int):
        self._capacity = capacity
        self._jobs = OrderedDict()
        self._lock = Lock()

    def put(self, job_id: str, record: dict) -> None:
        with self._lock:
            while len(self._jobs) >= self._capacity:
                self._jobs.popitem(last=False)
            self._jobs[job_id] = record

    def get(self, job_id: str):
        with self._lock:
            record = self._jobs.get(job_id)
            return None if record is None else dict(record)

    def update(self, job_id: str, **fields) -> None:
        with self._lock:
            record = self._jobs.get(job_id)
            if record is not None:
                record.update(fields)


def _execute_job(store: _JobStore, job_id: str, scenarios, parallelism):
    store.update(job_id, status="running")
    try:
        report = run_grid(scenarios, parallelism=parallelism)
        store.update(job_id, status="done", result={
            "columns": list(REPORT_COLUMNS),
            "rows": list(report.rows),
            "errors": list(report.errors),
        })
    except Exception as exc:
        store.update(job_id, status="error",
                     error=f"{type(exc).__name__}: {exc}")


def create_app(max_workers: int = 2, job_capacity: int = 64,
               replication_cap: int = REPLICATION_CAP) -> FastAPI:
    """Build the service; module-level `app` uses the defaults."""
    store = _JobStore(job_capacity)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.pool = ThreadPoolExecutor(max_workers=max_workers)
        try:
            yield
        finally:
            app.state.pool.shutdown(wait=True)

    app = FastAPI(
        title="crt4 design service",
        description="Power, sample size, and Monte Carlo validation for "
                    "four-level cluster randomized trials.",
        version=__version__,
        lifespan=lifespan,
    )
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def _on_validation_error(request, exc):
        detail = [
            {
                "field": ".".join(str(part) for part in err["loc"]
                                  if part != "body"),
                "message": err["msg"],
            }
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.exception_handler(DomainError)
    async def _on_domain_error(request, exc):
        return JSONResponse(
            status_code=422,
            content={"error": str(exc), "type": type(exc).__name__},
        )

    @app.post("/v1/power")
    def power(body: DesignBody):
        spec = _to_spec(body)
        if spec.n_clusters is None:
            raise DomainError("n_clusters is required for a power "
                              "evaluation")
        return {
            "request_id": _request_id(body),
            "spec": body.model_dump(),
            "power": predicted_power(spec),
        }

    @app.post("/v1/sample-size")
    def sample_size(body: SampleSizeBody):
        spec = _to_spec(body)
        n = required_clusters(spec, real_valued=body.real_valued)
        return {
            "request_id": _request_id(body),
            "spec": body.model_dump(),
            "n_clusters": n,
            "power": predicted_power(spec, n_clusters=n),
        }

    @app.post("/v1/design-effect")
    def design_effect_route(body: DesignEffectBody):
        spec = _to_spec(body)
        payload = {
            "request_id": _request_id(body),
            "spec": body.model_dump(),
            "design_effect": design_effect(spec),
            "route": None,
        }
        if body.unclustered_n is not None:
            route = clusters_via_design_effect(spec, body.unclustered_n)
            payload["route"] = {
                "clustered_patients": route.clustered_patients,
                "n_clusters": route.n_clusters,
            }
        return payload

    @app.post("/v1/allocation")
    def allocation(body: OutcomeBody):
        outcome = _to_outcome(body)
        return {
            "request_id": _request_id(body),
            "outcome": body.model_dump(),
            "pi_c": optimal_allocation(outcome),
        }

    @app.post("/v1/icc/validate")
    def icc_validate(body: IccValidateBody):
        report = is_valid(
            CorrelationParams(body.icc.alpha0, body.icc.alpha1,
                              body.icc.alpha2),
            BlockDims(body.dims.m, body.dims.k, body.dims.l),
        )
        spectrum = report.spectrum
        return {
            "request_id": _request_id(body),
            "valid": report.valid,
            "spectrum": {
                "lambda1": spectrum.lambda1, "mult1": spectrum.mult1,
                "lambda2": spectrum.lambda2, "mult2": spectrum.mult2,
                "lambda3": spectrum.lambda3, "mult3": spectrum.mult3,
                "lambda4": spectrum.lambda4, "mult4": spectrum.mult4,
            },
            "violations": list(report.violations),
            "repeated": [list(pair) for pair in report.repeated],
        }

    @app.post("/v1/sensitivity-grid")
    def sensitivity(body: GridBody):
        for axis in (body.axis1, body.axis2):
            if axis.steps > AXIS_STEP_CAP:
                raise CapExceededError(
                    f"axis {axis.param!r}: {axis.steps} steps exceed the "
                    f"service cap {AXIS_STEP_CAP}"
                )
        spec = _to_spec(body.base)
        grid = sensitivity_grid(
            spec,
            (body.axis1.param, (body.axis1.lo, body.axis1.hi),
             body.axis1.steps),
            (body.axis2.param, (body.axis2.lo, body.axis2.hi),
             body.axis2.steps),
        )
        power_cells = [
            [float(grid.power[i, j]) if grid.valid[i, j] else None
             for j in range(len(grid.values2))]
            for i in range(len(grid.values1))
        ]
        valid_cells = [
            [bool(grid.valid[i, j]) for j in range(len(grid.values2))]
            for i in range(len(grid.values1))
        ]
        return {
            "request_id": _request_id(body),
            "param1": grid.param1,
            "values1": list(grid.values1),
            "param2": grid.param2,
            "values2": list(grid.values2),
            "power": power_cells,
            "valid": valid_cells,
        }

    @app.post("/v1/simulate", status_code=202)
    def simulate(body: SimulateBody):
        if len(body.scenarios) > SCENARIO_CAP:
            raise CapExceededError(
                f"{len(body.scenarios)} scenarios exceed the service cap "
                f"{SCENARIO_CAP}"
            )
        scenarios = [
            _to_scenario(sb, index, body.master_seed, replication_cap)
            for index, sb in enumerate(body.scenarios)
        ]
        job_id = uuid.uuid4().hex[:16]
        store.put(job_id, {"job_id": job_id, "status": "queued",
                           "result": None, "error": None})
        app.state.pool.submit(_execute_job, store, job_id, scenarios,
                              max(1, body.parallelism))
        return {"job_id": job_id}

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str):
        record = store.get(job_id)
        if record is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown job id {job_id!r}")
        return record

    return app


app = create_app()
