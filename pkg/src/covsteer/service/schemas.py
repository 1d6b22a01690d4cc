"""Request and response models for the HTTP service.

The scenario payload mirrors the schema owned by the model module; unknown
keys are rejected here by pydantic and again (by name) in the parser, so the
CLI and the service reject the same inputs with the same messages.
"""

from __future__ import annotations

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

Matrix = List[List[float]]


class PlantModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    A: Matrix
    B1: Matrix
    B2: Matrix
    C: Matrix


class HorizonModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    T: float
    steps: Optional[int] = None


class StationaryTargetModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    Sigma: Matrix


class SolverModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    newton_tol: Optional[float] = None
    max_newton_iters: Optional[int] = None
    fd_step: Optional[float] = None
    blowup_threshold: Optional[float] = None
    homotopy_steps: Optional[int] = None
    seed: Optional[int] = None


class ScenarioModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    plant: PlantModel
    horizon: Optional[HorizonModel] = None
    Q: Optional[Matrix] = None
    Sigma0: Optional[Matrix] = None
    SigmaT: Optional[Matrix] = None
    stationary: Optional[StationaryTargetModel] = None
    solver: Optional[SolverModel] = None

    def as_document(self) -> dict:
        return self.model_dump(exclude_none=True)


class SteerRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    scenario: ScenarioModel
    method: Literal["shooting", "minimax"] = "shooting"
    tol: Optional[float] = None
    max_iters: Optional[int] = None
    grid_steps: Optional[int] = None


class StationaryRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    scenario: ScenarioModel


class SimulateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    scenario: ScenarioModel
    solution: dict
    paths: int = Field(default=10_000, ge=2)
    dt: float = Field(default=1e-3, gt=0)
    seed: int = Field(default=42, ge=0)


class VerifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    scenario: ScenarioModel
    solution: dict


class ValidateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    scenario: ScenarioModel


class CheckItem(BaseModel):
    name: str
    passed: bool
    evidence: dict


class ReportResponse(BaseModel):
    passed: bool
    checks: List[CheckItem]
    notes: List[str] = []


class SolutionResponse(BaseModel):
    summary: dict
    document: dict


class SimulateResponse(BaseModel):
    passed: bool
    threshold: float
    distances: List[float]
    times: List[float]
    rows: List[dict]


class ErrorBody(BaseModel):
    error_kind: str
    message: str
    exit_code: int
