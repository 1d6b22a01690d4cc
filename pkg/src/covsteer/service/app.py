"""HTTP service exposing the solvers.

Thin FastAPI wrapper over the handler layer; domain errors become JSON
bodies carrying the same stable exit codes the CLI uses.
"""

from __future__ import annotations

import logging
import os

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import CovsteerError
from . import handlers, schemas

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}


def _configure_logging() -> None:
    level = os.environ.get("COVSTEER_LOG", "error").lower()
    logging.getLogger("covsteer").setLevel(_LOG_LEVELS.get(level,
                                                           logging.ERROR))


def create_app() -> FastAPI:
    _configure_logging()
    app = FastAPI(title="covsteer", version="1.0")

    @app.exception_handler(CovsteerError)
    async def _domain_error(request: Request, exc: CovsteerError):
        code = handlers.exit_code_for(exc)
        status = 422 if code == handlers.EXIT_VALIDATION else 409
        body = schemas.ErrorBody(error_kind=type(exc).__name__,
                                 message=str(exc), exit_code=code)
        return JSONResponse(status_code=status, content=body.model_dump())

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        body = schemas.ErrorBody(error_kind=type(exc).__name__,
                                 message=str(exc),
                                 exit_code=handlers.EXIT_VALIDATION)
        return JSONResponse(status_code=422, content=body.model_dump())

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.post("/validate", response_model=schemas.ReportResponse)
    async def validate(req: schemas.ValidateRequest):
        return handlers.validate_scenario(req.scenario.as_document())

    @app.post("/steer", response_model=schemas.SolutionResponse)
    async def steer(req: schemas.SteerRequest):
        overrides = {}
        if req.tol is not None:
            overrides["newton_tol"] = req.tol
        if req.max_iters is not None:
            overrides["max_newton_iters"] = req.max_iters
        scenario = req.scenario.as_document()
        if req.grid_steps is not None:
            scenario.setdefault("horizon", {})["steps"] = req.grid_steps
        return handlers.run_steer(scenario, method=req.method,
                                  overrides=overrides or None)

    @app.post("/stationary", response_model=schemas.SolutionResponse)
    async def stationary(req: schemas.StationaryRequest):
        return handlers.run_stationary(req.scenario.as_document())

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    async def simulate(req: schemas.SimulateRequest):
        return handlers.run_simulate(req.scenario.as_document(), req.solution,
                                     paths=req.paths, dt=req.dt,
                                     seed=req.seed)

    @app.post("/verify", response_model=schemas.ReportResponse)
    async def verify(req: schemas.VerifyRequest):
        return handlers.run_verify(req.scenario.as_document(), req.solution)

    return app


app = create_app()
