"""Monte Carlo validation layer."""

import numpy as np
import pytest

from covsteer import game, model, numkit, sim, steering
from covsteer.errors import NonFinitePath

from conftest import cached_shooting


def golden_law():
    problem, sol = cached_shooting("golden")
    return problem, sol


def test_golden_monte_carlo_passes():
    problem, sol = golden_law()
    config = sim.SimConfig(paths=10_000, dt=1e-3, seed=42)
    report = sim.monte_carlo_check(problem.plant, sol.law, problem.Sigma0,
                                   sol.sigma_traj, problem.horizon_T, config)
    assert report.passed
    assert np.all(report.distances <= 3.0 / np.sqrt(10_000) + 10.0 * 1e-3)


def test_seed_determinism_is_bitwise():
    problem, sol = golden_law()
    config = sim.SimConfig(paths=500, dt=1e-3, seed=42)
    a = sim.simulate_paths(problem.plant, sol.law, problem.Sigma0,
                           problem.horizon_T, config)
    b = sim.simulate_paths(problem.plant, sol.law, problem.Sigma0,
                           problem.horizon_T, config)
    assert np.array_equal(a.covariances, b.covariances)
    c = sim.simulate_paths(problem.plant, sol.law, problem.Sigma0,
                           problem.horizon_T,
                           sim.SimConfig(paths=500, dt=1e-3, seed=43))
    assert not np.array_equal(a.covariances, c.covariances)


def test_stream_independent_of_batching():
    # the per-path generator depends only on (seed, index), so simulating a
    # subset of paths reproduces the prefix of the larger ensemble exactly
    problem, sol = golden_law()
    big = sim.simulate_paths(problem.plant, sol.law, problem.Sigma0,
                             problem.horizon_T,
                             sim.SimConfig(paths=300, dt=1e-2, seed=7))
    z0_big, dw_big = sim._path_draws(7, 5, 100, 1, 1, 0.1)
    z0_again, dw_again = sim._path_draws(7, 5, 100, 1, 1, 0.1)
    assert np.array_equal(z0_big, z0_again)
    assert np.array_equal(dw_big, dw_again)


def test_single_path_matches_vectorized_kernel():
    problem, sol = golden_law()
    dt = 1e-2
    steps = 100
    finals = []
    for index in (0, 1):
        z0, dw = sim._path_draws(11, index, steps, 1, 1, np.sqrt(dt))
        x0 = numkit.sym_sqrt(problem.Sigma0) @ z0
        xs = sim.euler_maruyama_path(problem.plant, sol.law, x0,
                                     problem.horizon_T, dt, dw)
        finals.append(xs[-1, 0])
    emp = sim.simulate_paths(problem.plant, sol.law, problem.Sigma0,
                             problem.horizon_T,
                             sim.SimConfig(paths=2, dt=dt, seed=11),
                             snapshot_times=np.array([1.0]))
    assert np.isclose(emp.covariances[0][0, 0],
                      np.mean(np.square(finals)))


def test_brownian_pairing_step_halving():
    # drive the same Brownian path at dt and dt/2: the strong Euler error
    # against the finer solution shrinks roughly linearly in dt
    problem, sol = golden_law()
    rng = np.random.default_rng(0)
    T = 1.0
    errs = []
    for steps in (200, 400):
        dt = T / steps
        fine_steps = 4 * steps
        fine_dt = T / fine_steps
        dw_fine = np.sqrt(fine_dt) * rng.standard_normal((fine_steps, 1))
        dw = dw_fine.reshape(steps, 4, 1).sum(axis=1)
        x0 = np.array([0.7])
        xs = sim.euler_maruyama_path(problem.plant, sol.law, x0, T, dt, dw)
        xf = sim.euler_maruyama_path(problem.plant, sol.law, x0, T, fine_dt,
                                     dw_fine)
        errs.append(abs(xs[-1, 0] - xf[-1, 0]))
    assert errs[1] < errs[0]


def test_distance_threshold_formula():
    assert np.isclose(sim.distance_threshold(2, 10_000, 1e-3),
                      6.0 / 100.0 + 1e-2)


def test_covariance_distance():
    assert np.isclose(sim.covariance_distance(np.eye(2), 2 * np.eye(2)), 0.5)


def test_non_finite_path_raises():
    plant = model.Plant(A=[[50.0]], B1=[[1.0]], B2=[[1.0]], C=[[1.0]])
    grid = numkit.TimeGrid(t0=0.0, t1=20.0, steps=2)
    zeros = numkit.MatrixTrajectory(grid=grid, values=np.zeros((3, 1, 1)))
    law = game.FeedbackLaw(K1=zeros, K2=zeros)
    dw = np.zeros((2000, 1))
    with np.errstate(over="ignore"), pytest.raises(NonFinitePath):
        sim.euler_maruyama_path(plant, law, np.array([1.0]), 20.0, 1e-2, dw)


def test_config_validation():
    with pytest.raises(ValueError):
        sim.SimConfig(paths=1)
    with pytest.raises(ValueError):
        sim.SimConfig(dt=0.0)
