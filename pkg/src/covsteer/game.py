"""Zero-sum LQ game machinery.

Backward game Riccati integration, Nash feedback gains, closed-loop
covariance propagation, cost evaluation and saddle-point spot checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numkit
from .errors import BlowUp, RiccatiBlowUp, SaddleViolation
from .model import FiniteHorizonProblem, Plant
from .numkit import MatrixTrajectory, TimeGrid

SADDLE_TOL = 1e-9


@dataclass(frozen=True)
class FeedbackLaw:
    """Nodewise gain schedules u = K1(t) x, v = K2(t) x on a shared grid.

    Gains are interpolated piecewise-linearly between nodes so the law is
    defined at RK4 substeps.
    """

    K1: MatrixTrajectory
    K2: MatrixTrajectory

    def __post_init__(self):
        if self.K1.grid != self.K2.grid:
            raise ValueError("K1 and K2 must share a grid")

    @property
    def grid(self) -> TimeGrid:
        return self.K1.grid

    def closed_loop(self, plant: Plant, t: float) -> np.ndarray:
        return plant.A + plant.B1 @ self.K1.interpolate(t) + plant.B2 @ self.K2.interpolate(t)

    def perturbed(self, player: int, delta: np.ndarray) -> "FeedbackLaw":
        """Add a constant-in-time gain perturbation to one player's schedule."""
        delta = np.asarray(delta, dtype=float)
        if player == 1:
            K1 = MatrixTrajectory(self.K1.grid, self.K1.values + delta)
            return FeedbackLaw(K1=K1, K2=self.K2)
        if player == 2:
            K2 = MatrixTrajectory(self.K2.grid, self.K2.values + delta)
            return FeedbackLaw(K1=self.K1, K2=K2)
        raise ValueError("player must be 1 or 2")


@dataclass(frozen=True)
class GameValue:
    """Player-1 cost j1 with its completion-of-squares decomposition when the
    law is the Nash law of a Riccati trajectory (j2 = -j1 by construction)."""

    j1: float
    initial_term: Optional[float] = None
    noise_term: Optional[float] = None

    @property
    def j2(self) -> float:
        return -self.j1


def integrate_game_riccati(plant: Plant, Q: np.ndarray, F: np.ndarray,
                           grid: TimeGrid, blowup_threshold: float = 1e8) -> MatrixTrajectory:
    """Backward RK4 for the game Riccati equation with terminal value F.

    The quadratic term carries the sign-indefinite channel B1 B1' - B2 B2';
    a finite-time escape is reported as RiccatiBlowUp (the game may simply
    not admit a solution for this F).
    """
    A = plant.A
    D = plant.channel_gap
    Q = numkit.symmetrize(np.asarray(Q, dtype=float))

    def rhs(t, P):
        return -(A.T @ P + P @ A) + P @ D @ P - Q

    try:
        return numkit.integrate_matrix_ode(rhs, F, grid, direction="backward",
                                           blowup_threshold=blowup_threshold)
    except BlowUp as exc:
        raise RiccatiBlowUp(exc.time) from exc


def nash_gains(plant: Plant, pi_traj: MatrixTrajectory) -> FeedbackLaw:
    """Nodewise Nash gains K1 = -B1' Pi, K2 = +B2' Pi."""
    K1 = np.einsum("ji,kjl->kil", -plant.B1, pi_traj.values)
    K2 = np.einsum("ji,kjl->kil", plant.B2, pi_traj.values)
    return FeedbackLaw(
        K1=MatrixTrajectory(pi_traj.grid, K1),
        K2=MatrixTrajectory(pi_traj.grid, K2),
    )


def propagate_covariance(plant: Plant, law: FeedbackLaw, Sigma0: np.ndarray,
                         blowup_threshold: float = 1e8) -> MatrixTrajectory:
    """Forward RK4 of the closed-loop covariance Lyapunov ODE."""
    CC = plant.noise_cov

    def rhs(t, S):
        Acl = law.closed_loop(plant, t)
        return Acl @ S + S @ Acl.T + CC

    return numkit.integrate_matrix_ode(rhs, Sigma0, law.grid, direction="forward",
                                       blowup_threshold=blowup_threshold)


def min_covariance_eigenvalue(sigma_traj: MatrixTrajectory) -> float:
    return min(numkit.sym_eig_floor(S) for S in sigma_traj.values)


def evaluate_cost(problem: FiniteHorizonProblem, law: FeedbackLaw, F: np.ndarray,
                  pi_traj: Optional[MatrixTrajectory] = None) -> GameValue:
    """Player-1 cost of a linear law: quadrature of tr((Q + K1'K1 - K2'K2) Sigma)
    plus the terminal term tr(F Sigma(T)).

    When the Riccati trajectory generating the law is supplied, the
    completion-of-squares decomposition tr(Pi(0) Sigma0) + int tr(Pi CC') dt
    is reported alongside.
    """
    F = numkit.symmetrize(np.asarray(F, dtype=float))
    sigma_traj = propagate_covariance(problem.plant, law, problem.Sigma0)

    def weight(t):
        K1 = law.K1.interpolate(t)
        K2 = law.K2.interpolate(t)
        return problem.Q + K1.T @ K1 - K2.T @ K2

    running = numkit.trapezoid_trace_integral(sigma_traj, weight)
    j1 = running + float(np.trace(F @ sigma_traj.terminal))
    if pi_traj is None:
        return GameValue(j1=j1)
    CC = problem.plant.noise_cov
    initial_term = float(np.trace(pi_traj.initial @ problem.Sigma0))
    noise_term = numkit.trapezoid_trace_integral(pi_traj, lambda t: CC)
    return GameValue(j1=j1, initial_term=initial_term, noise_term=noise_term)


@dataclass(frozen=True)
class SaddleReport:
    j1_star: float
    margins_player1: np.ndarray  # j1(K1 + dK, K2*) - j1*, expected >= -tol
    margins_player2: np.ndarray  # j1(K1*, K2 + dK) - j1*, expected <= +tol

    @property
    def min_margin_player1(self) -> float:
        return float(np.min(self.margins_player1))

    @property
    def max_margin_player2(self) -> float:
        return float(np.max(self.margins_player2))


def _perturbation(rng_seed: int, index: int, shape, magnitude: float) -> np.ndarray:
    # The perturbation stream depends only on (seed, index), not on ordering.
    rng = np.random.default_rng(np.random.SeedSequence(entropy=rng_seed,
                                                       spawn_key=(index,)))
    direction = rng.standard_normal(shape)
    nrm = np.linalg.norm(direction)
    if nrm == 0.0:
        return np.zeros(shape)
    return magnitude * direction / nrm


SADDLE_EVAL_STEPS = 800


def saddle_check(problem: FiniteHorizonProblem, F: np.ndarray, perturbations: int,
                 magnitude: float, seed: int = 0) -> SaddleReport:
    """Verify the two one-sided Nash inequalities under random constant gain
    perturbations applied to each player in turn.

    Costs are evaluated on a refined grid: the margins scale with the square
    of the perturbation magnitude, so the quadrature bias of a coarse
    problem grid would otherwise drown them.
    """
    grid = problem.grid
    if grid.steps < SADDLE_EVAL_STEPS:
        grid = numkit.TimeGrid(grid.t0, grid.t1, SADDLE_EVAL_STEPS)
    pi_traj = integrate_game_riccati(problem.plant, problem.Q, F, grid)
    law = nash_gains(problem.plant, pi_traj)

    n = problem.plant.n
    dK1 = np.stack([_perturbation(seed, 2 * i, (problem.plant.m, n), magnitude)
                    for i in range(perturbations)])
    dK2 = np.stack([_perturbation(seed, 2 * i + 1, (problem.plant.p, n),
                                  magnitude)
                    for i in range(perturbations)])
    j1_star = _batched_costs(problem, law, F,
                             np.zeros((1,) + dK1.shape[1:]),
                             np.zeros((1,) + dK2.shape[1:]))[0]
    margins1 = _batched_costs(problem, law, F, dK1, None) - j1_star
    margins2 = _batched_costs(problem, law, F, None, dK2) - j1_star

    if np.min(margins1) < -SADDLE_TOL:
        i = int(np.argmin(margins1))
        raise SaddleViolation(1, margins1[i], dK1[i])
    if np.max(margins2) > SADDLE_TOL:
        i = int(np.argmax(margins2))
        raise SaddleViolation(2, margins2[i], dK2[i])
    return SaddleReport(j1_star=j1_star, margins_player1=margins1,
                        margins_player2=margins2)


def _batched_costs(problem: FiniteHorizonProblem, law: FeedbackLaw,
                   F: np.ndarray, dK1, dK2) -> np.ndarray:
    """Player-1 costs of a batch of constant-offset gain perturbations.

    Replays the scalar pipeline (linear gain interpolation, RK4 covariance
    propagation, trapezoid quadrature) with the batch dimension in front;
    one of dK1/dK2 may be None meaning that player stays at Nash.
    """
    plant = problem.plant
    grid = law.grid
    M = grid.steps
    dt = grid.dt
    CC = plant.noise_cov
    Fs = numkit.symmetrize(np.asarray(F, dtype=float))

    K1n, K2n = law.K1.values, law.K2.values
    batch = (dK1 if dK1 is not None else dK2).shape[0]
    K1b = K1n[None] + (dK1[:, None] if dK1 is not None else 0.0)
    K2b = K2n[None] + (dK2[:, None] if dK2 is not None else 0.0)
    acl = (plant.A[None, None] + np.einsum("ij,bkjl->bkil", plant.B1, K1b)
           + np.einsum("ij,bkjl->bkil", plant.B2, K2b))
    acl_mid = 0.5 * (acl[:, :-1] + acl[:, 1:])  # linear gain interpolation

    def lyap(G, S):
        return G @ S + np.swapaxes(G @ np.swapaxes(S, -1, -2), -1, -2) + CC

    S = np.broadcast_to(problem.Sigma0, (batch,) + problem.Sigma0.shape).copy()
    weights = (problem.Q[None, None] + np.swapaxes(K1b, -1, -2) @ K1b
               - np.swapaxes(K2b, -1, -2) @ K2b)
    run = 0.5 * np.einsum("bij,bji->b", weights[:, 0], S)
    for k in range(M):
        k1 = lyap(acl[:, k], S)
        k2 = lyap(acl_mid[:, k], S + 0.5 * dt * k1)
        k3 = lyap(acl_mid[:, k], S + 0.5 * dt * k2)
        k4 = lyap(acl[:, k + 1], S + dt * k3)
        S = S + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        S = 0.5 * (S + np.swapaxes(S, -1, -2))
        w = 1.0 if k + 1 < M else 0.5
        run += w * np.einsum("bij,bji->b", weights[:, k + 1], S)
    return dt * run + np.einsum("ij,bji->b", Fs, S)
