"""FastAPI application exposing the simulation operations over HTTP."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from . import handlers, schemas


def create_app() -> FastAPI:
    api = FastAPI(title="falsim", version=__version__)

    @api.exception_handler(ValueError)
    async def bad_value(request: Request, exc: ValueError) -> JSONResponse:
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @api.exception_handler(FileNotFoundError)
    async def missing_file(request: Request, exc: FileNotFoundError) -> JSONResponse:
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @api.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @api.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
        return handlers.synth(req)

    @api.post("/partition", response_model=schemas.PartitionResponse)
    def partition(req: schemas.PartitionRequest) -> schemas.PartitionResponse:
        return handlers.partition(req)

    @api.post("/run", response_model=schemas.RunResponse)
    def run(req: schemas.RunRequest) -> schemas.RunResponse:
        return handlers.run(req)

    @api.post("/compare", response_model=schemas.CompareResponse)
    def compare(req: schemas.CompareRequest) -> schemas.CompareResponse:
        return handlers.compare(req)

    @api.post("/shift", response_model=schemas.ShiftResponse)
    def shift(req: schemas.ShiftRequest) -> schemas.ShiftResponse:
        return handlers.shift(req)

    @api.post("/plotdata", response_model=schemas.PlotdataResponse)
    def plotdata(req: schemas.PlotdataRequest) -> schemas.PlotdataResponse:
        return handlers.plotdata(req)

    return api


app = create_app()
