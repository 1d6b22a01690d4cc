"""Infinite-horizon covariance assignment."""

import numpy as np
import pytest

from covsteer import game, model, numkit, stationary
from covsteer.errors import Infeasible, SingularKKT

from conftest import random_stationary_problem


def zero_margin_problem():
    """3-state instance whose exact closed loop has a pure rotation block
    invisible to the noise, hence Hurwitz margin exactly zero."""
    Acl0 = np.array([[0.0, 1.0, 0.0],
                     [-1.0, 0.0, 0.0],
                     [0.0, 0.0, -1.0]])
    C = np.diag([0.0, 0.0, np.sqrt(2.0)])
    B1 = np.eye(3)
    B2 = 0.5 * np.eye(3)
    D = B1 @ B1.T - B2 @ B2.T   # 0.75 I
    P = np.array([[0.2, 0.05, 0.0],
                  [0.05, 0.3, 0.1],
                  [0.0, 0.1, 0.25]])
    A = Acl0 + D @ P            # so that A - D P = Acl0 with Sigma = I
    plant = model.Plant(A=A, B1=B1, B2=B2, C=C)
    return model.StationaryProblem(plant=plant, Sigma=np.eye(3)), P


def test_scalar_oracle(golden_stationary):
    sol = stationary.solve_stationary(golden_stationary)
    assert abs(sol.P[0, 0] - 1.0) < 1e-10
    assert abs(sol.Q_out[0, 0] - 1.0) < 1e-10
    assert abs(sol.K1[0, 0] + np.sqrt(2.0)) < 1e-10
    assert abs(sol.K2[0, 0] - 1.0) < 1e-10
    assert abs(sol.closed_loop[0, 0] + 1.0) < 1e-10
    assert abs(sol.hurwitz_margin - 1.0) < 1e-10
    assert sol.epsilon_used == 0.0


def test_scalar_unstable_drift():
    problem = model.StationaryProblem(
        plant=model.Plant(A=[[1.0]], B1=[[np.sqrt(2.0)]], B2=[[1.0]],
                          C=[[1.0]]),
        Sigma=[[0.5]])
    sol = stationary.solve_stationary(problem)
    assert abs(sol.P[0, 0] - 2.0) < 1e-10
    assert abs(sol.Q_out[0, 0]) < 1e-10
    assert abs(sol.closed_loop[0, 0] + 1.0) < 1e-10


def test_equal_channels_singular():
    problem = model.StationaryProblem(
        plant=model.Plant(A=[[0.0]], B1=[[1.0]], B2=[[1.0]], C=[[1.0]]),
        Sigma=[[0.5]])
    with pytest.raises(SingularKKT):
        stationary.solve_stationary(problem)


def test_feasibility_full_row_rank_channel():
    rng = np.random.default_rng(2)
    plant = model.Plant(A=rng.standard_normal((3, 3)),
                        B1=np.eye(3), B2=rng.standard_normal((3, 1)),
                        C=np.eye(3))
    feasible, ranks = stationary.stationary_feasibility(plant, np.eye(3))
    assert feasible


def test_feasibility_structural_obstruction():
    # the channel can only touch the second row/column, but the drift+noise
    # balance W has a nonzero (1,1) entry
    plant = model.Plant(A=[[0.0, 1.0], [0.0, 0.0]],
                        B1=[[0.0], [1.0]], B2=[[0.0], [1.0]],
                        C=np.eye(2))
    feasible, ranks = stationary.stationary_feasibility(plant, np.eye(2))
    assert not feasible
    assert ranks == (3, 2)
    with pytest.raises(Infeasible):
        stationary.solve_stationary(
            model.StationaryProblem(plant=plant, Sigma=np.eye(2)))


def test_feasibility_matching_zero_pattern():
    plant = model.Plant(A=[[0.0, 1.0], [0.0, 0.0]],
                        B1=[[0.0], [1.0]], B2=[[0.0], [1.0]],
                        C=[[0.0], [1.0]])
    feasible, ranks = stationary.stationary_feasibility(plant, np.eye(2))
    assert feasible
    assert ranks == (2, 2)


def test_epsilon_regularize_scalar():
    plant = model.Plant(A=[[0.0]], B1=[[np.sqrt(2.0)]], B2=[[1.0]],
                        C=[[1.0]])
    K1 = np.array([[-np.sqrt(2.0)]])
    K2 = np.array([[1.0]])
    K1e, K2e, margin = stationary.epsilon_regularize(plant, K1, K2,
                                                     np.array([[0.5]]), 0.1)
    assert abs(K1e[0, 0] + 1.1 * np.sqrt(2.0)) < 1e-12
    assert abs(K2e[0, 0] - 0.9) < 1e-12
    assert margin > 0
    # eps = 0 leaves the gains untouched
    K1z, K2z, _ = stationary.epsilon_regularize(plant, K1, K2,
                                                np.array([[0.5]]), 0.0)
    assert np.allclose(K1z, K1) and np.allclose(K2z, K2)


def test_covariance_gap_scalar():
    plant = model.Plant(A=[[0.0]], B1=[[np.sqrt(2.0)]], B2=[[1.0]],
                        C=[[1.0]])
    Sigma = np.array([[0.5]])
    K1 = np.array([[-np.sqrt(2.0)]])
    K2 = np.array([[1.0]])
    eps = 0.01
    K1e, K2e, _ = stationary.epsilon_regularize(plant, K1, K2, Sigma, eps)
    delta, ratio = stationary.covariance_gap(plant, K1e, K2e, Sigma, eps)
    # Sigma_eps = 1/(2(1+3 eps)), Delta = 3 eps / (2(1+3 eps))
    assert abs(delta[0, 0] - 3 * eps / (2 * (1 + 3 * eps))) < 1e-12
    assert abs(ratio - 1.456) < 1e-3


def test_gap_ratio_converges():
    plant = model.Plant(A=[[0.0]], B1=[[np.sqrt(2.0)]], B2=[[1.0]],
                        C=[[1.0]])
    Sigma = np.array([[0.5]])
    K1 = np.array([[-np.sqrt(2.0)]])
    K2 = np.array([[1.0]])
    ratios = {}
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        K1e, K2e, _ = stationary.epsilon_regularize(plant, K1, K2, Sigma, eps)
        _, ratios[eps] = stationary.covariance_gap(plant, K1e, K2e, Sigma, eps)
    assert abs(ratios[1e-4] - 1.5) < 1e-3
    # bounded: small-eps ratio within 2x of the large-eps linear extrapolation
    extrapolated = ratios[1e-1] + (ratios[1e-2] - ratios[1e-1]) / (1e-2 - 1e-1) \
        * (1e-4 - 1e-1)
    assert ratios[1e-4] <= 2.0 * extrapolated
    assert ratios[1e-4] >= 0.5 * extrapolated
    # the paper-level bound: ratio stays below twice the limit for eps <= 1e-2
    assert all(r <= 2 * 1.5 for r in ratios.values())


def test_zero_margin_instance_regularizes():
    problem, P_expected = zero_margin_problem()
    sol = stationary.solve_stationary(problem)
    assert np.linalg.norm(sol.P - P_expected) < 1e-10
    # exact loop margin is zero to rounding
    exact = problem.plant.A - problem.plant.channel_gap @ P_expected
    _, margin0 = numkit.is_hurwitz(exact)
    assert abs(margin0) < 1e-12
    # every ladder epsilon stabilizes, and the solver returns a stable loop
    for eps in stationary.EPSILON_LADDER:
        _, _, margin = stationary.epsilon_regularize(
            problem.plant, -problem.plant.B1.T @ P_expected,
            problem.plant.B2.T @ P_expected, problem.Sigma, eps)
        assert margin > 0
    assert sol.hurwitz_margin > 0 or abs(sol.hurwitz_margin) < 1e-12


def test_random_instances_consistency():
    rng = np.random.default_rng(777)
    for _ in range(10):
        n = int(rng.integers(2, 5))
        problem = random_stationary_problem(rng, n)
        sol = stationary.solve_stationary(problem)
        if sol.epsilon_used == 0.0:
            assert sol.lyapunov_residual <= 1e-8
        ricc = stationary.riccati_consistency(problem.plant, sol)
        assert ricc <= 1e-9 * (1.0 + np.linalg.norm(sol.P) ** 2)
        xg = stationary.stationary_extragradient(problem)
        assert np.linalg.norm(xg.P - sol.P) <= 1e-4


def test_extragradient_scalar_oracle(golden_stationary):
    xg = stationary.stationary_extragradient(golden_stationary)
    assert abs(xg.P[0, 0] - 1.0) < 1e-8


def test_p_is_riccati_fixed_point(golden_stationary):
    sol = stationary.solve_stationary(golden_stationary)
    grid = numkit.TimeGrid(t0=0.0, t1=20.0, steps=2000)
    traj = game.integrate_game_riccati(golden_stationary.plant, sol.Q_out,
                                       sol.P, grid)
    drift = np.max(np.linalg.norm(traj.values - sol.P, axis=(1, 2)))
    assert drift < 1e-6
