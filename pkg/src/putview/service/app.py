"""FastAPI application exposing the putview operations.

Run with: uvicorn putview.service.app:app

A put rejection is a domain outcome, not a transport failure, so /put
answers 200 with accepted=false; malformed programs, schemas or queries
answer 400 with the error class and message.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import PutviewError, ValidationFailed
from . import ops
from .models import (
    CheckResponse,
    DeriveRequest,
    DeriveResponse,
    GetRequest,
    GetResponse,
    LineageRequest,
    LineageResponse,
    PutRequest,
    PutResponse,
    RoundtripRequest,
    SimulateRequest,
    SimulateResponse,
    ValidateRequest,
    ValidateResponse,
    ValidityRequest,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="putview",
        version=__version__,
        description="Relational views defined by update strategies: derived "
        "queries, putback execution, law checking, lineage payments and a "
        "federation simulator.",
    )

    @app.exception_handler(PutviewError)
    async def putview_error(request: Request, exc: PutviewError):
        detail = {"error": type(exc).__name__, "detail": str(exc)}
        if isinstance(exc, ValidationFailed):
            detail["errors"] = [str(e) for e in exc.errors]
        return JSONResponse(status_code=400, content=detail)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/derive", response_model=DeriveResponse)
    def derive(request: DeriveRequest) -> DeriveResponse:
        return ops.derive(request)

    @app.post("/get", response_model=GetResponse)
    def get(request: GetRequest) -> GetResponse:
        return ops.get(request)

    @app.post("/put", response_model=PutResponse)
    def put(request: PutRequest) -> PutResponse:
        return ops.put_view(request)

    @app.post("/validate", response_model=ValidateResponse)
    def validate(request: ValidateRequest) -> ValidateResponse:
        return ops.validate_program(request)

    @app.post("/check/roundtrip", response_model=CheckResponse)
    def roundtrip(request: RoundtripRequest) -> CheckResponse:
        return ops.roundtrip(request)

    @app.post("/check/validity", response_model=CheckResponse)
    def validity(request: ValidityRequest) -> CheckResponse:
        return ops.validity(request)

    @app.post("/lineage", response_model=LineageResponse)
    def lineage(request: LineageRequest) -> LineageResponse:
        return ops.lineage(request)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(request: SimulateRequest) -> SimulateResponse:
        return ops.simulate(request)

    return app


app = create_app()
