"""REST service wrapping the optimization core.

POST /solve runs one optimization synchronously and returns the convergence
trace; POST /compare runs several methods on the same configuration. Runs at
the benchmark mesh take tens of seconds, so clients should use generous
request timeouts.
"""

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import ConfigurationError, config_from_dict
from ..optimize import METHODS, run as run_optimization
from .models import (
    CompareRequest,
    CompareResponse,
    IterationRow,
    RunSummary,
    SolveRequest,
    SolveResponse,
)

app = FastAPI(title="simpltopo", version=__version__,
              description="Sigmoidal mirror descent topology optimization")


def _summarize(report, include_history, include_density):
    history = None
    if include_history:
        history = [IterationRow(
            iter=rec.k, compliance=rec.compliance, stationarity=rec.stationarity,
            stationarity_l2=rec.stationarity_l2, step=rec.step,
            ls_trials=rec.ls_trials, volume_error=rec.volume_error,
            increment_l2=rec.increment_l2) for rec in report.history]
    density = report.final_density.tolist() if include_density else None
    return RunSummary(
        method=report.method, converged=report.converged,
        iterations=report.iterations, objective_evals=report.objective_evals,
        gradient_evals=report.gradient_evals,
        final_compliance=report.final_compliance, failure=report.failure,
        history=history, density=density)


def _config_or_422(document, method=None):
    try:
        if method is not None:
            document = dict(document, method=method)
        return config_from_dict(document)
    except ConfigurationError as err:
        raise HTTPException(status_code=422, detail=str(err)) from err


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/solve", response_model=SolveResponse, response_model_exclude_none=True)
def solve(request: SolveRequest):
    cfg = _config_or_422(request.config.as_document())
    report = run_optimization(cfg)
    return SolveResponse(
        run=_summarize(report, request.include_history, request.include_density),
        mesh={"nx": cfg.nx, "ny": cfg.ny, "lx": cfg.lx, "ly": cfg.ly})


@app.post("/compare", response_model=CompareResponse, response_model_exclude_none=True)
def compare(request: CompareRequest):
    for method in request.methods:
        if method not in METHODS:
            raise HTTPException(status_code=422,
                                detail=f"unknown method {method!r}, expected one of {list(METHODS)}")
    document = request.config.as_document()
    document.pop("method", None)
    runs = []
    cfg = None
    for method in request.methods:
        cfg = _config_or_422(document, method=method)
        report = run_optimization(cfg)
        runs.append(_summarize(report, request.include_history, False))
    return CompareResponse(
        runs=runs, mesh={"nx": cfg.nx, "ny": cfg.ny, "lx": cfg.lx, "ly": cfg.ly})
