"""Shared fixtures: the golden scalar scenario, a 2-state cross-method
instance, the random instance generators, and cached expensive solves
shared between the module tests and the acceptance suite."""

import functools

import numpy as np
import pytest

from covsteer import model

GOLDEN_F = (np.sqrt(5.0) - 1.0) / 2.0


def golden_plant() -> model.Plant:
    return model.Plant(A=[[0.0]], B1=[[np.sqrt(2.0)]], B2=[[1.0]], C=[[1.0]])


@pytest.fixture
def golden_problem() -> model.FiniteHorizonProblem:
    return make_golden_problem()


@pytest.fixture
def golden_stationary() -> model.StationaryProblem:
    return model.StationaryProblem(plant=golden_plant(), Sigma=[[0.5]])


@pytest.fixture
def two_state_problem() -> model.FiniteHorizonProblem:
    """Damped oscillator driven on the velocity channel, no adversary."""
    return make_two_state_problem()


def random_steering_problem(rng: np.random.Generator, n: int,
                            b2_scale: float = 0.4,
                            grid_steps: int = 200) -> model.FiniteHorizonProblem:
    """Stable drift, identity primary channel, bounded adversary channel."""
    A = rng.standard_normal((n, n))
    A = A - (np.max(np.real(np.linalg.eigvals(A))) + 0.5) * np.eye(n)
    B1 = np.eye(n)
    B2 = b2_scale * rng.standard_normal((n, n))
    nb2 = np.linalg.norm(B2)
    cap = 0.5 * np.linalg.norm(B1)
    if nb2 > cap:
        B2 *= cap / nb2
    C = 0.3 * np.eye(n) + 0.1 * rng.standard_normal((n, n))
    G = rng.standard_normal((n, n))
    M0 = rng.standard_normal((n, n))
    MT = rng.standard_normal((n, n))
    return model.FiniteHorizonProblem(
        plant=model.Plant(A=A, B1=B1, B2=B2, C=C),
        Q=0.1 * (G @ G.T) / n,
        Sigma0=np.eye(n) + 0.3 * (M0 @ M0.T) / n,
        SigmaT=0.8 * np.eye(n) + 0.3 * (MT @ MT.T) / n,
        horizon_T=1.0,
        grid_steps=grid_steps,
    )


def make_golden_problem(grid_steps: int = 400) -> model.FiniteHorizonProblem:
    return model.FiniteHorizonProblem(
        plant=golden_plant(),
        Q=[[0.0]],
        Sigma0=[[1.0]],
        SigmaT=[[1.0]],
        horizon_T=1.0,
        grid_steps=grid_steps,
    )


def make_two_state_problem(grid_steps: int = 100) -> model.FiniteHorizonProblem:
    return model.FiniteHorizonProblem(
        plant=model.Plant(
            A=[[0.0, 1.0], [-1.0, -0.5]],
            B1=[[0.0], [1.0]],
            B2=[[0.0], [0.0]],
            C=np.diag([0.2, 0.5]),
        ),
        Q=0.1 * np.eye(2),
        Sigma0=np.diag([1.0, 0.5]),
        SigmaT=np.diag([0.4, 0.3]),
        horizon_T=1.0,
        grid_steps=grid_steps,
    )


@functools.lru_cache(maxsize=None)
def cached_shooting(which: str):
    """Shooting solutions reused by the minimax and acceptance suites."""
    from covsteer import steering
    problem = {"golden": make_golden_problem,
               "golden100": lambda: make_golden_problem(100),
               "two_state": make_two_state_problem}[which]()
    return problem, steering.solve_steering(problem)


@functools.lru_cache(maxsize=None)
def cached_minimax(which: str):
    """Richardson-extrapolated minimax solutions at M=100."""
    from covsteer import minimax
    problem = {"golden": lambda: make_golden_problem(100),
               "two_state": make_two_state_problem}[which]()
    return problem, minimax.solve_minimax(problem)


def random_stationary_problem(rng: np.random.Generator,
                              n: int) -> model.StationaryProblem:
    A = rng.standard_normal((n, n))
    B1 = rng.standard_normal((n, n)) + 2.0 * np.eye(n)
    B2 = 0.4 * rng.standard_normal((n, max(1, n - 1)))
    C = 0.4 * np.eye(n) + 0.1 * rng.standard_normal((n, n))
    M = rng.standard_normal((n, n))
    Sigma = 0.5 * np.eye(n) + 0.2 * (M @ M.T) / n
    return model.StationaryProblem(plant=model.Plant(A=A, B1=B1, B2=B2, C=C),
                                   Sigma=Sigma)
