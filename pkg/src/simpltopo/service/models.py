"""Pydantic request/response schemas for the REST service.

The request mirrors the JSON configuration document accepted by the CLI;
validation beyond basic shape happens in the shared configuration layer so
the two front ends cannot drift apart.
"""

from typing import Optional

from pydantic import BaseModel, Field

__all__ = [
    "MeshOptions",
    "LineSearchOptions",
    "StoppingOptions",
    "ConfigDocument",
    "SolveRequest",
    "CompareRequest",
    "IterationRow",
    "RunSummary",
    "SolveResponse",
    "CompareResponse",
]


class MeshOptions(BaseModel):
    nx: Optional[int] = None
    ny: Optional[int] = None
    lx: Optional[float] = None
    ly: Optional[float] = None
    h: Optional[float] = None


class LineSearchOptions(BaseModel):
    beta: Optional[float] = None
    c1: Optional[float] = None
    max_trials: Optional[int] = None
    initial_step: Optional[float] = None
    step_cap: Optional[float] = None


class StoppingOptions(BaseModel):
    tol_stationarity: Optional[float] = None
    tol_objective: Optional[float] = None
    probe_step: Optional[float] = None
    max_iters: Optional[int] = None


class ConfigDocument(BaseModel):
    """JSON configuration document; omitted fields use benchmark defaults."""

    method: Optional[str] = None
    mesh: Optional[MeshOptions] = None
    theta: Optional[float] = None
    rho0: Optional[float] = None
    penal: Optional[float] = None
    r_min: Optional[float] = None
    E: Optional[float] = None
    nu: Optional[float] = None
    line_search: Optional[LineSearchOptions] = None
    stopping: Optional[StoppingOptions] = None
    pgd_step: Optional[float] = None
    oc_move_limit: Optional[float] = None
    oc_damping: Optional[float] = None
    volume_tol: Optional[float] = None
    pde_rel_tol: Optional[float] = None

    def as_document(self):
        return self.model_dump(exclude_none=True)


class SolveRequest(BaseModel):
    config: ConfigDocument = Field(default_factory=ConfigDocument)
    include_history: bool = True
    include_density: bool = False


class CompareRequest(BaseModel):
    config: ConfigDocument = Field(default_factory=ConfigDocument)
    methods: list[str] = ["simpl-a", "simpl-b", "oc"]
    include_history: bool = False


class IterationRow(BaseModel):
    iter: int
    compliance: float
    stationarity: float
    stationarity_l2: float
    step: float
    ls_trials: int
    volume_error: float
    increment_l2: float


class RunSummary(BaseModel):
    method: str
    converged: bool
    iterations: int
    objective_evals: int
    gradient_evals: int
    final_compliance: float
    failure: Optional[str] = None
    history: Optional[list[IterationRow]] = None
    density: Optional[list[float]] = None


class SolveResponse(BaseModel):
    run: RunSummary
    mesh: dict


class CompareResponse(BaseModel):
    runs: list[RunSummary]
    mesh: dict
