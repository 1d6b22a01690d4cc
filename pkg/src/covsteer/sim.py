"""Monte Carlo validation of the synthesized closed loop.

Euler-Maruyama sample paths of the Nash closed loop, empirical covariance
snapshots and a sampling-aware distance test against the Lyapunov
prediction.  Path generation is deterministic per (seed, path index): every
path draws from its own SeedSequence spawn, so the ensemble is independent
of path ordering and of how work might be batched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit
from .errors import NonFinitePath
from .game import FeedbackLaw
from .model import Plant

# Empirical covariance error budget: statistical term plus Euler bias term.
_STAT_FACTOR = 3.0
_BIAS_FACTOR = 10.0


@dataclass(frozen=True)
class SimConfig:
    paths: int = 10_000
    dt: float = 1e-3
    seed: int = 42

    def __post_init__(self):
        if self.paths < 2:
            raise ValueError("need at least 2 paths")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class EmpiricalCovariance:
    """Empirical second moments at the snapshot times."""

    times: np.ndarray        # (S,)
    covariances: np.ndarray  # (S, n, n), mean of outer products
    paths: int


def _path_rng(seed: int, index: int) -> np.random.Generator:
    """One generator per (seed, path index); the path's initial-state draw
    comes first, then its Brownian increments, so the stream is independent
    of batching."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    )


def _path_draws(seed: int, index: int, steps: int, q: int, n: int,
                sqrt_dt: float):
    rng = _path_rng(seed, index)
    z0 = rng.standard_normal(n)
    dw = sqrt_dt * rng.standard_normal((steps, q))
    return z0, dw


def euler_maruyama_path(plant: Plant, law: FeedbackLaw, x0: np.ndarray,
                        horizon_T: float, dt: float,
                        increments: np.ndarray,
                        path_index: int = -1) -> np.ndarray:
    """Integrate one path given precomputed Brownian increments.

    Exposed separately so tests can drive two coupled systems with the same
    Brownian path.  Returns the state at every step, shape (steps+1, n).
    """
    steps = increments.shape[0]
    C = plant.C
    xs = np.empty((steps + 1, plant.n))
    xs[0] = x0
    x = np.asarray(x0, dtype=float)
    t = 0.0
    for k in range(steps):
        Acl = law.closed_loop(plant, min(t, horizon_T))
        x = x + dt * (Acl @ x) + C @ increments[k]
        t += dt
        if not np.all(np.isfinite(x)):
            raise NonFinitePath(path_index, t)
        xs[k + 1] = x
    return xs


def simulate_paths(plant: Plant, law: FeedbackLaw, Sigma0: np.ndarray,
                   horizon_T: float, config: SimConfig,
                   snapshot_times: np.ndarray | None = None) -> EmpiricalCovariance:
    """Simulate the closed-loop ensemble and accumulate second moments.

    Initial states are sqrt(Sigma0) times a standard normal draw; the
    empirical covariance is the plain mean of outer products (the process
    is zero-mean by construction, so no mean subtraction).
    """
    dt = config.dt
    steps = int(round(horizon_T / dt))
    if steps < 1:
        raise ValueError("horizon shorter than one simulation step")
    times = np.asarray(snapshot_times if snapshot_times is not None
                       else [horizon_T], dtype=float)
    snap_set = set(np.clip(np.round(times / dt).astype(int), 0, steps))
    sqrt_dt = np.sqrt(dt)
    sqrt_S0 = numkit.sym_sqrt(Sigma0)
    n = plant.n
    q = plant.C.shape[1]
    CT = plant.C.T
    acc = {k: np.zeros((n, n)) for k in snap_set}

    # Per-path streams keep determinism; integration is batched over paths.
    block = 2000
    for start in range(0, config.paths, block):
        count = min(block, config.paths - start)
        x = np.empty((count, n))
        dw = np.empty((count, steps, q))
        for j in range(count):
            z0, dwj = _path_draws(config.seed, start + j, steps, q, n, sqrt_dt)
            x[j] = sqrt_S0 @ z0
            dw[j] = dwj
        if 0 in acc:
            acc[0] += x.T @ x
        t = 0.0
        for k in range(steps):
            Acl = law.closed_loop(plant, min(t, horizon_T))
            x = x + dt * (x @ Acl.T) + dw[:, k, :] @ CT
            t += dt
            bad = ~np.all(np.isfinite(x), axis=1)
            if np.any(bad):
                raise NonFinitePath(start + int(np.argmax(bad)), t)
            if k + 1 in acc:
                acc[k + 1] += x.T @ x

    snap_idx = np.clip(np.round(times / dt).astype(int), 0, steps)
    covs = np.array([acc[k] / config.paths for k in snap_idx])
    return EmpiricalCovariance(times=times, covariances=covs,
                               paths=config.paths)


def covariance_distance(empirical: np.ndarray, model: np.ndarray) -> float:
    """Relative Frobenius distance, normalized by the model covariance."""
    scale = max(float(np.linalg.norm(model)), 1e-300)
    return float(np.linalg.norm(empirical - model)) / scale


def distance_threshold(n: int, paths: int, dt: float) -> float:
    """Acceptance threshold: 3 n / sqrt(N) sampling error plus an
    allowance for the O(dt) Euler-Maruyama covariance bias."""
    return _STAT_FACTOR * n / np.sqrt(paths) + _BIAS_FACTOR * dt


@dataclass(frozen=True)
class MonteCarloReport:
    times: np.ndarray
    distances: np.ndarray
    threshold: float
    paths: int

    @property
    def passed(self) -> bool:
        return bool(np.all(self.distances <= self.threshold))


def monte_carlo_check(plant: Plant, law: FeedbackLaw, Sigma0: np.ndarray,
                      model_traj, horizon_T: float,
                      config: SimConfig = SimConfig(),
                      snapshot_times: np.ndarray | None = None) -> MonteCarloReport:
    """Compare the simulated ensemble against a model covariance trajectory
    (a MatrixTrajectory) at the snapshot times."""
    if snapshot_times is None:
        snapshot_times = np.array([0.5 * horizon_T, horizon_T])
    emp = simulate_paths(plant, law, Sigma0, horizon_T, config, snapshot_times)
    dists = np.array([
        covariance_distance(emp.covariances[s], model_traj.interpolate(t))
        for s, t in enumerate(emp.times)
    ])
    return MonteCarloReport(
        times=emp.times,
        distances=dists,
        threshold=distance_threshold(plant.n, config.paths, config.dt),
        paths=config.paths,
    )
