"""Solution document serialization.

JSON documents that round-trip losslessly: matrices are row-major nested
lists of doubles, trajectories are arrays of [t, matrix] pairs.  Python's
JSON float formatting is shortest-round-trip, so write-then-read restores
every double bit-exactly.  Timings live in a separate diagnostics key so
determinism comparisons can drop them.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import numkit
from .steering import IncentiveSolution
from .stationary import StationarySolution

SCHEMA_VERSION = "1"
TIMINGS_KEY = "timings_ms"


def matrix_to_lists(M: np.ndarray) -> list:
    return np.asarray(M, dtype=float).tolist()


def matrix_from_lists(rows) -> np.ndarray:
    return np.asarray(rows, dtype=float)


def trajectory_to_doc(traj: numkit.MatrixTrajectory) -> list:
    nodes = traj.grid.nodes
    return [[float(t), matrix_to_lists(traj.values[k])]
            for k, t in enumerate(nodes)]


def trajectory_from_doc(entries) -> numkit.MatrixTrajectory:
    times = np.array([float(e[0]) for e in entries])
    values = np.array([matrix_from_lists(e[1]) for e in entries])
    grid = numkit.TimeGrid(float(times[0]), float(times[-1]), len(entries) - 1)
    return numkit.MatrixTrajectory(grid=grid, values=values)


def steering_solution_to_doc(scenario: dict, solution: IncentiveSolution,
                             method: str = "shooting",
                             timings_ms: dict | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "steering",
        "method": method,
        "scenario": scenario,
        "solution": {
            "F": matrix_to_lists(solution.F),
            "pi_traj": trajectory_to_doc(solution.pi_traj),
            "sigma_traj": trajectory_to_doc(solution.sigma_traj),
            "h_traj": trajectory_to_doc(solution.h_traj),
            "K1": trajectory_to_doc(solution.law.K1),
            "K2": trajectory_to_doc(solution.law.K2),
        },
        "diagnostics": {
            "terminal_residual": solution.terminal_residual,
            "newton_iters": solution.newton_iters,
            "homotopy_used": solution.homotopy_used,
            TIMINGS_KEY: timings_ms or {},
        },
    }


def stationary_solution_to_doc(scenario: dict, solution: StationarySolution,
                               timings_ms: dict | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "stationary",
        "scenario": scenario,
        "solution": {
            "P": matrix_to_lists(solution.P),
            "Q_out": matrix_to_lists(solution.Q_out),
            "K1": matrix_to_lists(solution.K1),
            "K2": matrix_to_lists(solution.K2),
            "closed_loop": matrix_to_lists(solution.closed_loop),
        },
        "diagnostics": {
            "hurwitz_margin": solution.hurwitz_margin,
            "epsilon_used": solution.epsilon_used,
            "lyapunov_residual": solution.lyapunov_residual,
            "nonunique_controls": solution.nonunique_controls,
            TIMINGS_KEY: timings_ms or {},
        },
    }


def steering_solution_from_doc(doc: dict) -> IncentiveSolution:
    """Rebuild an IncentiveSolution from its document form."""
    from .game import FeedbackLaw  # local import to avoid a cycle at module load

    if doc.get("kind") != "steering":
        raise ValueError(f"not a steering document (kind={doc.get('kind')!r})")
    sol = doc["solution"]
    diag = doc.get("diagnostics", {})
    law = FeedbackLaw(K1=trajectory_from_doc(sol["K1"]),
                      K2=trajectory_from_doc(sol["K2"]))
    return IncentiveSolution(
        F=matrix_from_lists(sol["F"]),
        pi_traj=trajectory_from_doc(sol["pi_traj"]),
        sigma_traj=trajectory_from_doc(sol["sigma_traj"]),
        h_traj=trajectory_from_doc(sol["h_traj"]),
        law=law,
        terminal_residual=float(diag.get("terminal_residual", np.nan)),
        newton_iters=int(diag.get("newton_iters", 0)),
        homotopy_used=bool(diag.get("homotopy_used", False)),
    )


def write_document(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_document(path) -> dict:
    return json.loads(Path(path).read_text())


def strip_timings(doc: dict) -> dict:
    """Copy of the document with the timings diagnostics removed, for
    determinism comparisons."""
    out = json.loads(json.dumps(doc))
    diag = out.get("diagnostics")
    if isinstance(diag, dict):
        diag.pop(TIMINGS_KEY, None)
    return out


def documents_equal(a: dict, b: dict, ignore_timings: bool = True) -> bool:
    if ignore_timings:
        a, b = strip_timings(a), strip_timings(b)
    return a == b
