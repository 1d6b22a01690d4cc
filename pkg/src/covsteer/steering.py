"""Finite-horizon incentive synthesis by shooting.

The unknown is the terminal cost F (packed symmetric vector).  A residual
evaluation integrates the game Riccati equation backward from F, forms the
Nash law, propagates the covariance forward from Sigma0 and returns the
terminal mismatch against SigmaT.  A damped Newton iteration with
forward-difference Jacobian drives the residual to zero; a homotopy on the
adversary channel B2 is used as a fallback.  Non-convergence is a reported
outcome, not a crash: existence of the coupled boundary-value system is not
guaranteed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

import numpy as np

from . import game, numkit
from .errors import NoConvergence, RiccatiBlowUp
from .model import FiniteHorizonProblem, Plant, SolverOptions
from .numkit import MatrixTrajectory

_MAX_BACKTRACKS = 30


@dataclass(frozen=True)
class IncentiveSolution:
    F: np.ndarray
    pi_traj: MatrixTrajectory
    sigma_traj: MatrixTrajectory
    h_traj: MatrixTrajectory
    law: game.FeedbackLaw
    terminal_residual: float
    newton_iters: int
    homotopy_used: bool


def _scaled_plant(plant: Plant, s: float) -> Plant:
    if s == 1.0:
        return plant
    return Plant(A=plant.A, B1=plant.B1, B2=s * plant.B2, C=plant.C)


def _residual_pieces(problem: FiniteHorizonProblem, F: np.ndarray,
                     opts: SolverOptions, plant: Plant):
    pi_traj = game.integrate_game_riccati(plant, problem.Q, F, problem.grid,
                                          blowup_threshold=opts.blowup_threshold)
    law = game.nash_gains(plant, pi_traj)
    sigma_traj = game.propagate_covariance(plant, law, problem.Sigma0,
                                           blowup_threshold=opts.blowup_threshold)
    return pi_traj, law, sigma_traj


def shooting_residual(problem: FiniteHorizonProblem, F: np.ndarray,
                      opts: SolverOptions = SolverOptions(),
                      plant: Plant | None = None) -> np.ndarray:
    """Packed terminal mismatch Sigma(T; F) - SigmaT.

    Raises RiccatiBlowUp when the Riccati integration escapes; callers in the
    Newton loop treat that as an infinite residual.
    """
    plant = plant or problem.plant
    F = numkit.symmetrize(np.atleast_2d(np.asarray(F, dtype=float)))
    *_, sigma_traj = _residual_pieces(problem, F, opts, plant)
    return numkit.pack_sym(sigma_traj.terminal - problem.SigmaT)


def _newton(problem: FiniteHorizonProblem, F0: np.ndarray, opts: SolverOptions,
            plant: Plant):
    """Damped Newton on the packed unknown; returns (F, iters, best_norm, ok)."""
    n = problem.plant.n
    d = numkit.sym_dim(n)
    target = opts.newton_tol * np.linalg.norm(problem.SigmaT)

    def try_residual(F):
        try:
            return shooting_residual(problem, F, opts, plant)
        except RiccatiBlowUp:
            return None

    F = F0.copy()
    r = try_residual(F)
    if r is None:
        raise RiccatiBlowUp(problem.horizon_T,
                            "Riccati escape at the initial shooting guess")
    best = np.linalg.norm(r)
    for it in range(1, opts.max_newton_iters + 1):
        if np.linalg.norm(r) <= target:
            return F, it - 1, np.linalg.norm(r), True
        # Forward-difference Jacobian, one packed coordinate at a time.
        step = opts.fd_step * max(1.0, np.linalg.norm(F))
        J = np.empty((d, d))
        f = numkit.pack_sym(F)
        bail = False
        for j in range(d):
            fj = f.copy()
            fj[j] += step
            rj = try_residual(numkit.unpack_sym(fj, n))
            if rj is None:
                bail = True
                break
            J[:, j] = (rj - r) / step
        if bail:
            return F, it, best, False
        delta, *_ = np.linalg.lstsq(J, -r, rcond=None)
        dF = numkit.unpack_sym(delta, n)
        # Backtracking line search; blow-ups count as failed trial steps.
        alpha = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            r_try = try_residual(F + alpha * dF)
            if r_try is not None and np.linalg.norm(r_try) < np.linalg.norm(r):
                F = numkit.symmetrize(F + alpha * dF)
                r = r_try
                best = min(best, np.linalg.norm(r))
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return F, it, best, False
    ok = np.linalg.norm(r) <= target
    return F, opts.max_newton_iters, np.linalg.norm(r), ok


def solve_steering(problem: FiniteHorizonProblem,
                   opts: SolverOptions = SolverOptions(),
                   F0: np.ndarray | None = None) -> IncentiveSolution:
    """Solve Problem 1: find F so that Nash play steers Sigma0 to SigmaT.

    Starts plain Newton from F = 0 (or a caller-supplied guess); on
    stagnation restarts with a homotopy that scales B2 from a small fraction
    up to 1, warm-starting F at each stage.
    """
    n = problem.plant.n
    F = np.zeros((n, n)) if F0 is None else \
        numkit.symmetrize(np.atleast_2d(np.asarray(F0, dtype=float)))
    total_iters = 0
    homotopy_used = False
    best_norm = np.inf

    try:
        F_out, iters, norm, ok = _newton(problem, F, opts, problem.plant)
        total_iters += iters
        best_norm = min(best_norm, norm)
    except RiccatiBlowUp:
        ok = False
        F_out = F

    if not ok and opts.homotopy_steps > 0:
        homotopy_used = True
        F_h = np.zeros((n, n)) if F0 is None else F.copy()
        for stage in range(1, opts.homotopy_steps + 1):
            s = stage / opts.homotopy_steps
            plant_s = _scaled_plant(problem.plant, s)
            F_h, iters, norm, ok = _newton(problem, F_h, opts, plant_s)
            total_iters += iters
            if not ok:
                break
        if ok:
            F_out = F_h
            best_norm = min(best_norm, norm)
        else:
            best_norm = min(best_norm, norm)

    pi_traj, law, sigma_traj = _residual_pieces(problem, F_out, opts, problem.plant)
    terminal_residual = (np.linalg.norm(sigma_traj.terminal - problem.SigmaT)
                         / np.linalg.norm(problem.SigmaT))
    if not ok or terminal_residual > opts.newton_tol:
        raise NoConvergence(min(best_norm / np.linalg.norm(problem.SigmaT),
                                terminal_residual))

    h_vals = np.array([numkit.sym_inverse(S) for S in sigma_traj.values]) - pi_traj.values
    h_traj = MatrixTrajectory(sigma_traj.grid, h_vals)
    return IncentiveSolution(
        F=numkit.symmetrize(F_out),
        pi_traj=pi_traj,
        sigma_traj=sigma_traj,
        h_traj=h_traj,
        law=law,
        terminal_residual=float(terminal_residual),
        newton_iters=total_iters,
        homotopy_used=homotopy_used,
    )


@dataclass(frozen=True)
class CoupledSystemReport:
    """Residuals of the Schroedinger-like coupled system on a solved instance."""

    h_ode_residual: float          # max interior-node residual of the H equation
    boundary0_residual: float      # || Sigma0^-1 - Pi(0) - H(0) ||_F
    boundaryT_residual: float      # || SigmaT^-1 - Pi(T) - H(T) ||_F
    cross_term_max: float          # max_k || (Pi+H)(D - CC')(Pi+H) ||_F

    @property
    def decouples(self) -> bool:
        return self.cross_term_max <= 1e-10


def verify_coupled_system(solution: IncentiveSolution, plant: Plant,
                          Q: np.ndarray, Sigma0: np.ndarray | None = None,
                          SigmaT: np.ndarray | None = None) -> CoupledSystemReport:
    """Check the H-equation by central differences at interior nodes plus the
    two boundary couplings.  Pure report; residuals decay at O(dt^2)."""
    grid = solution.h_traj.grid
    dt = grid.dt
    A = plant.A
    D = plant.channel_gap
    CC = plant.noise_cov
    Q = numkit.symmetrize(np.asarray(Q, dtype=float))
    H = solution.h_traj.values
    Pi = solution.pi_traj.values

    max_res = 0.0
    cross_max = 0.0
    for k in range(1, grid.steps):
        Hd = (H[k + 1] - H[k - 1]) / (2.0 * dt)
        S = Pi[k] + H[k]
        cross = S @ (D - CC) @ S
        rhs = -(A.T @ H[k] + H[k] @ A) - H[k] @ D @ H[k] + Q + cross
        max_res = max(max_res, float(np.linalg.norm(Hd - rhs)))
        cross_max = max(cross_max, float(np.linalg.norm(cross)))

    b0 = bT = 0.0
    if Sigma0 is not None:
        b0 = float(np.linalg.norm(numkit.sym_inverse(Sigma0) - Pi[0] - H[0]))
    if SigmaT is not None:
        bT = float(np.linalg.norm(numkit.sym_inverse(SigmaT) - Pi[-1] - H[-1]))
    return CoupledSystemReport(h_ode_residual=max_res, boundary0_residual=b0,
                               boundaryT_residual=bT, cross_term_max=cross_max)
