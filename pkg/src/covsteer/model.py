"""Problem data types, well-posedness validation and the scenario schema.

All types are immutable after construction and safe to share across
concurrent readers.  Matrices that are symmetric up to the documented
tolerance are symmetrized on construction, since scenario files carry
decimal round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import numkit
from .errors import (
    DimensionMismatch,
    NonPositiveHorizon,
    NotPositiveDefinite,
    NotSymmetric,
    UnknownKey,
)

# Relative Frobenius asymmetry accepted (and silently repaired) on inputs.
SYMMETRY_RTOL = 1e-10


def _as_matrix(M, name: str) -> np.ndarray:
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _as_symmetric(M, name: str) -> np.ndarray:
    arr = _as_matrix(M, name)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {arr.shape}")
    nrm = np.linalg.norm(arr)
    asym = np.linalg.norm(arr - arr.T)
    if asym > SYMMETRY_RTOL * max(nrm, 1e-300):
        raise NotSymmetric(
            f"{name} asymmetry {asym:.3e} exceeds {SYMMETRY_RTOL:g} relative"
        )
    return numkit.symmetrize(arr)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    evidence: dict

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        details = ", ".join(f"{k}={v}" for k, v in self.evidence.items())
        return f"[{status}] {self.name}: {details}"


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self):
        return "\n".join(str(c) for c in self.checks)


@dataclass(frozen=True)
class Plant:
    """Controlled diffusion dx = Ax dt + B1 u dt + B2 v dt + C dw."""

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        mats = {"A": A}
        for name in ("B1", "B2", "C"):
            M = _as_matrix(getattr(self, name), name)
            if M.shape[0] != n:
                raise DimensionMismatch(
                    f"{name} has {M.shape[0]} rows, expected {n}"
                )
            mats[name] = M
        for name, M in mats.items():
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B1.shape[1]

    @property
    def p(self) -> int:
        return self.B2.shape[1]

    @property
    def noise_cov(self) -> np.ndarray:
        return self.C @ self.C.T

    @property
    def channel_gap(self) -> np.ndarray:
        """B1 B1' - B2 B2', the sign-indefinite game channel."""
        return self.B1 @ self.B1.T - self.B2 @ self.B2.T


@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-9
    max_newton_iters: int = 100
    fd_step: float = 1e-6
    blowup_threshold: float = 1e8
    homotopy_steps: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("newton_tol", "fd_step", "blowup_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be positive")
        if self.homotopy_steps < 0:
            raise ValueError("homotopy_steps must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


DEFAULT_GRID_STEPS = 200


@dataclass(frozen=True)
class FiniteHorizonProblem:
    """Problem 1 input: steer the Nash closed loop from Sigma0 to SigmaT."""

    plant: Plant
    Q: np.ndarray
    horizon_T: float
    Sigma0: np.ndarray
    SigmaT: np.ndarray
    grid_steps: int = DEFAULT_GRID_STEPS

    def __post_init__(self):
        n = self.plant.n
        for name in ("Q", "Sigma0", "SigmaT"):
            M = _as_symmetric(getattr(self, name), name)
            if M.shape[0] != n:
                raise DimensionMismatch(f"{name} must be {n}x{n}")
            object.__setattr__(self, name, M)
        if not self.horizon_T > 0:
            raise NonPositiveHorizon(f"horizon_T={self.horizon_T} must be positive")
        if self.grid_steps < 2:
            raise ValueError("grid_steps must be at least 2")

    @property
    def grid(self) -> numkit.TimeGrid:
        return numkit.TimeGrid(0.0, float(self.horizon_T), int(self.grid_steps))


@dataclass(frozen=True)
class StationaryProblem:
    """Problem 2 input: prescribed stationary covariance."""

    plant: Plant
    Sigma: np.ndarray

    def __post_init__(self):
        M = _as_symmetric(self.Sigma, "Sigma")
        if M.shape[0] != self.plant.n:
            raise DimensionMismatch(f"Sigma must be {self.plant.n}x{self.plant.n}")
        object.__setattr__(self, "Sigma", M)


def validate_plant(plant: Plant) -> ValidationReport:
    """Kalman-rank controllability checks for (A,B1), (A,B2), (A,C)."""
    n = plant.n
    checks = []
    for name, B in (("B1", plant.B1), ("B2", plant.B2), ("C", plant.C)):
        rank = numkit.kalman_rank(plant.A, B)
        checks.append(CheckResult(
            name=f"controllable(A,{name})",
            passed=rank == n,
            evidence={"rank": rank, "n": n},
        ))
    return ValidationReport(checks=tuple(checks))


def _spd_check(name: str, M: np.ndarray) -> CheckResult:
    min_eig = numkit.sym_eig_floor(M)
    return CheckResult(
        name=f"positive_definite({name})",
        passed=min_eig > 0.0,
        evidence={"min_eigenvalue": min_eig},
    )


def validate_problem(problem) -> ValidationReport:
    """Full structural validation; includes the plant controllability checks.

    Symmetry and dimension errors are raised at construction time, so this
    report covers definiteness and controllability.  Idempotent and pure.
    """
    checks = list(validate_plant(problem.plant).checks)
    if isinstance(problem, FiniteHorizonProblem):
        min_q = numkit.sym_eig_floor(problem.Q)
        checks.append(CheckResult(
            name="positive_semidefinite(Q)",
            passed=min_q >= -SYMMETRY_RTOL * max(1.0, np.linalg.norm(problem.Q)),
            evidence={"min_eigenvalue": min_q},
        ))
        checks.append(_spd_check("Sigma0", problem.Sigma0))
        checks.append(_spd_check("SigmaT", problem.SigmaT))
        checks.append(CheckResult(
            name="positive_horizon",
            passed=problem.horizon_T > 0,
            evidence={"T": problem.horizon_T},
        ))
    elif isinstance(problem, StationaryProblem):
        checks.append(_spd_check("Sigma", problem.Sigma))
    else:
        raise TypeError(f"unsupported problem type {type(problem).__name__}")
    return ValidationReport(checks=tuple(checks))


def require_valid(problem) -> ValidationReport:
    """Raise NotPositiveDefinite on a failing definiteness/controllability check."""
    report = validate_problem(problem)
    if not report.passed:
        failing = [c.name for c in report.checks if not c.passed]
        raise NotPositiveDefinite(f"validation failed: {', '.join(failing)}")
    return report


# ---------------------------------------------------------------------------
# Scenario document schema (consumed by the CLI and the service layer)
# ---------------------------------------------------------------------------

_PLANT_KEYS = {"A", "B1", "B2", "C"}
_FINITE_KEYS = {"plant", "horizon", "Q", "Sigma0", "SigmaT", "solver"}
_STATIONARY_KEYS = {"plant", "stationary", "solver"}
_HORIZON_KEYS = {"T", "steps"}
_SOLVER_KEYS = {"newton_tol", "max_newton_iters", "fd_step", "blowup_threshold",
                "homotopy_steps", "seed"}


def _reject_unknown(doc: dict, allowed: set, where: str):
    for key in doc:
        if key not in allowed:
            raise UnknownKey(f"unknown key '{key}' in {where}")


def scenario_from_dict(doc: dict) -> Union[FiniteHorizonProblem, StationaryProblem]:
    """Parse a scenario document; unknown keys are rejected by name."""
    if not isinstance(doc, dict):
        raise ValueError("scenario document must be a JSON object")
    if "plant" not in doc:
        raise UnknownKey("scenario is missing the 'plant' section")
    plant_doc = doc["plant"]
    _reject_unknown(plant_doc, _PLANT_KEYS, "'plant'")
    missing = _PLANT_KEYS - set(plant_doc)
    if missing:
        raise UnknownKey(f"'plant' is missing key(s) {sorted(missing)}")
    plant = Plant(A=plant_doc["A"], B1=plant_doc["B1"], B2=plant_doc["B2"],
                  C=plant_doc["C"])

    if "stationary" in doc:
        _reject_unknown(doc, _STATIONARY_KEYS, "scenario")
        stat = doc["stationary"]
        _reject_unknown(stat, {"Sigma"}, "'stationary'")
        if "Sigma" not in stat:
            raise UnknownKey("'stationary' is missing key 'Sigma'")
        return StationaryProblem(plant=plant, Sigma=np.asarray(stat["Sigma"]))

    _reject_unknown(doc, _FINITE_KEYS, "scenario")
    for key in ("horizon", "Q", "Sigma0", "SigmaT"):
        if key not in doc:
            raise UnknownKey(f"scenario is missing key '{key}'")
    horizon = doc["horizon"]
    _reject_unknown(horizon, _HORIZON_KEYS, "'horizon'")
    if "T" not in horizon:
        raise UnknownKey("'horizon' is missing key 'T'")
    return FiniteHorizonProblem(
        plant=plant,
        Q=np.asarray(doc["Q"]),
        horizon_T=float(horizon["T"]),
        Sigma0=np.asarray(doc["Sigma0"]),
        SigmaT=np.asarray(doc["SigmaT"]),
        grid_steps=int(horizon.get("steps", DEFAULT_GRID_STEPS)),
    )


def solver_options_from_dict(doc: dict, overrides: Optional[dict] = None) -> SolverOptions:
    """Build SolverOptions from the optional 'solver' section plus CLI overrides."""
    solver_doc = doc.get("solver", {}) if isinstance(doc, dict) else {}
    _reject_unknown(solver_doc, _SOLVER_KEYS, "'solver'")
    opts = SolverOptions(**solver_doc)
    if overrides:
        opts = replace(opts, **overrides)
    return opts
