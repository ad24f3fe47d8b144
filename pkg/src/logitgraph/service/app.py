"""FastAPI wiring: routes delegate to the api handlers; library errors map
to structured 4xx bodies whose message text the clients surface verbatim."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import LogitGraphError
from . import api, schemas


def create_app() -> FastAPI:
    app = FastAPI(title="logitgraph", version=api.version().version)

    @app.exception_handler(LogitGraphError)
    async def _domain_error(_: Request, exc: LogitGraphError) -> JSONResponse:
        body = schemas.ErrorBody(
            error_type=type(exc).__name__,
            message=str(exc),
            exit_code=exc.exit_code,
        )
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.get("/v1/version", response_model=schemas.VersionResponse)
    def version() -> schemas.VersionResponse:
        return api.version()

    @app.post("/v1/compute", response_model=schemas.ComputeResponse)
    def compute(req: schemas.ComputeRequest) -> schemas.ComputeResponse:
        return api.compute(req)

    @app.post("/v1/graph-export", response_model=schemas.GraphResponse)
    def graph_export(req: schemas.GraphRequest) -> schemas.GraphResponse:
        return api.graph_export(req)

    @app.post("/v1/verify-bound", response_model=schemas.SweepResponse)
    def verify_bound(req: schemas.VerifyBoundRequest) -> schemas.SweepResponse:
        return api.verify_bound(req)

    @app.post("/v1/gradcheck", response_model=schemas.SweepResponse)
    def gradcheck(req: schemas.GradcheckRequest) -> schemas.SweepResponse:
        return api.gradcheck(req)

    @app.post("/v1/lipschitz", response_model=schemas.SweepResponse)
    def lipschitz(req: schemas.LipschitzRequest) -> schemas.SweepResponse:
        return api.lipschitz(req)

    @app.post("/v1/benchmark", response_model=schemas.SweepResponse)
    def benchmark(req: schemas.BenchmarkRequest) -> schemas.SweepResponse:
        return api.benchmark(req)

    @app.post("/v1/distribution-sweep", response_model=schemas.SweepResponse)
    def distribution_sweep(req: schemas.DistributionSweepRequest) -> schemas.SweepResponse:
        return api.distribution_sweep(req)

    @app.post("/v1/fixtures", response_model=schemas.FixturesResponse)
    def fixtures(req: schemas.FixturesRequest) -> schemas.FixturesResponse:
        return api.fixtures(req)

    return app


app = create_app()
