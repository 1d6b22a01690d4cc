"""Direct saddle-point solver for the covariance steering game.

The finite-horizon problem is discretized in the affine control
parametrization Y_i = K_i Sigma: the covariance update is explicit Euler
(keeping the constraint multilinear, hence the Lagrangian convex-concave),
the running cost uses trapezoid weights for the state term and rectangle
weights for the control terms (which live on interval left endpoints), and
each covariance equality constraint carries a symmetric matrix multiplier.

With the control effort written as tr(Y Sigma^-1 Y'), the cost is jointly
convex in (Y1, Sigma) and concave in Y2, so the iteration groups Sigma with
the minimizing player and ascends the multipliers along the constraint
residual.  An extragradient (predictor-corrector) sweep on that monotone
field converges to the discrete saddle point.  The terminal incentive F is
read off the last two multipliers by half-node extrapolation (the k-th Euler
multiplier sits half a node before t_{k+1}) and the remaining O(dt) bias is
removed by Richardson extrapolation against a half-resolution solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit
from .errors import NoConvergence
from .model import FiniteHorizonProblem

_FLOOR_FRACTION = 1e-6      # sigma_floor default: fraction of ||Sigma0||_F
_DIVERGENCE_FACTOR = 1e6    # field-norm growth that triggers a step restart
_INCREASE_STREAK = 50       # consecutive field-norm increases before halving
_MAX_STEP_HALVINGS = 12


def _sym(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + np.swapaxes(X, -1, -2))


@dataclass(frozen=True)
class MinimaxOptions:
    step: float = 0.5
    max_iters: int = 200_000
    tol: float = 1e-9
    sigma_floor: float | None = None   # None: _FLOOR_FRACTION * ||Sigma0||_F
    richardson: bool = True

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class SaddleIterate:
    """Decision variables of the discrete saddle problem on one grid.

    Y1, Y2 live on interval left endpoints (M entries); Sigma on all M+1
    nodes with pinned endpoints; Pi_mult is the multiplier of the k-th Euler
    constraint, k = 0..M-1.
    """

    Y1: np.ndarray        # (M, m, n)
    Y2: np.ndarray        # (M, p, n)
    Sigma: np.ndarray     # (M+1, n, n)
    Pi_mult: np.ndarray   # (M, n, n)


@dataclass(frozen=True)
class SaddleReport:
    field_norm: float
    constraint_norm: float
    F_recovered: np.ndarray
    iterations: int
    iterate: SaddleIterate
    grid: numkit.TimeGrid


@dataclass(frozen=True)
class MinimaxSolution:
    F: np.ndarray
    fine: SaddleReport
    coarse: SaddleReport | None
    richardson: bool


@dataclass(frozen=True)
class DiscretizedSaddle:
    """Grid-level data: constraint and cost evaluators of the Euler
    transcription."""

    problem: FiniteHorizonProblem
    grid: numkit.TimeGrid

    @property
    def dt(self) -> float:
        return self.grid.dt

    def constraint(self, it: SaddleIterate) -> np.ndarray:
        """Residuals Sigma_k + dt*G_k - Sigma_{k+1}, shape (M, n, n)."""
        plant = self.problem.plant
        A = plant.A
        BY = plant.B1 @ it.Y1 + plant.B2 @ it.Y2
        G = A @ it.Sigma[:-1] + it.Sigma[:-1] @ A.T \
            + BY + np.swapaxes(BY, -1, -2) + plant.noise_cov
        return it.Sigma[:-1] + self.dt * G - it.Sigma[1:]

    def cost(self, it: SaddleIterate) -> float:
        """tr(Q Sigma) with trapezoid weights plus rectangle-weighted
        control effort tr(Y1 Sigma^-1 Y1' - Y2 Sigma^-1 Y2')."""
        dt = self.dt
        M = self.grid.steps
        sinv = np.linalg.inv(it.Sigma[:-1])
        effort = dt * float(
            np.einsum("kij,kji->", it.Y1 @ sinv, np.swapaxes(it.Y1, -1, -2))
            - np.einsum("kij,kji->", it.Y2 @ sinv, np.swapaxes(it.Y2, -1, -2))
        )
        w = np.full(M + 1, dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        return effort + float(np.einsum("k,kij,ji->", w, it.Sigma,
                                        self.problem.Q))

    def lagrangian(self, it: SaddleIterate) -> float:
        return self.cost(it) + float(
            np.einsum("kij,kji->", it.Pi_mult, self.constraint(it))
        )


def discretize(problem: FiniteHorizonProblem,
               grid_steps: int | None = None) -> DiscretizedSaddle:
    M = int(grid_steps or problem.grid_steps)
    if M < 4:
        raise ValueError("saddle discretization needs at least 4 grid steps")
    grid = numkit.TimeGrid(0.0, float(problem.horizon_T), M)
    return DiscretizedSaddle(problem=problem, grid=grid)


def kkt_gradients(data: DiscretizedSaddle, it: SaddleIterate):
    """Analytic gradients of the discrete Lagrangian.

    Returns (gY1, gY2, gSigma, residual); gSigma covers every node including
    the endpoints (pinning belongs to the iteration, not the calculus) and
    residual is the multiplier-block gradient.
    """
    plant = data.problem.plant
    dt = data.dt
    M = data.grid.steps
    A, B1, B2 = plant.A, plant.B1, plant.B2
    Pi = it.Pi_mult
    sinv = np.linalg.inv(it.Sigma[:-1])

    r = data.constraint(it)
    gY1 = 2.0 * dt * (it.Y1 @ sinv + B1.T @ Pi)
    gY2 = 2.0 * dt * (-it.Y2 @ sinv + B2.T @ Pi)

    w = np.full(M + 1, dt)
    w[0] *= 0.5
    w[-1] *= 0.5
    gS = w[:, None, None] * data.problem.Q[None, :, :]
    Y1t = np.swapaxes(it.Y1, -1, -2)
    Y2t = np.swapaxes(it.Y2, -1, -2)
    gS[:-1] += dt * (-sinv @ Y1t @ it.Y1 @ sinv + sinv @ Y2t @ it.Y2 @ sinv)
    gS[:-1] += Pi + dt * (A.T @ Pi + Pi @ A)
    gS[1:] -= Pi
    return gY1, gY2, _sym(gS), _sym(r)


def kkt_field(data: DiscretizedSaddle, it: SaddleIterate):
    """Monotone first-order field: descend the minimizer block (Y1, Sigma),
    ascend the maximizer Y2 and the multipliers; endpoint covariances are
    pinned so their field entries vanish.  Returns (VY1, VY2, VSigma, VPi,
    residual)."""
    gY1, gY2, gS, r = kkt_gradients(data, it)
    gS[0] = 0.0
    gS[-1] = 0.0
    return gY1, -gY2, gS, -r, r


def _project_sigma(sigma, floor, Sigma0, SigmaT):
    sigma = _sym(sigma)
    evals, vecs = np.linalg.eigh(sigma)
    evals = np.clip(evals, floor, None)
    out = (vecs * evals[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    out[0] = Sigma0
    out[-1] = SigmaT
    return out


def _initial_iterate(problem: FiniteHorizonProblem, M: int) -> SaddleIterate:
    n, m, p = problem.plant.n, problem.plant.m, problem.plant.p
    ts = np.arange(M + 1) / M
    sigma = np.array([(1.0 - t) * problem.Sigma0 + t * problem.SigmaT
                      for t in ts])
    return SaddleIterate(Y1=np.zeros((M, m, n)), Y2=np.zeros((M, p, n)),
                         Sigma=sigma, Pi_mult=np.zeros((M, n, n)))


def _field_norm(V) -> float:
    return float(np.sqrt(sum(np.sum(v * v) for v in V[:4])))


def _recover_F(Pi: np.ndarray) -> np.ndarray:
    # Half-node extrapolation: multiplier k sits at t_{k + 1/2}.
    return _sym(1.5 * Pi[-1] - 0.5 * Pi[-2])


def extragradient_solve(problem: FiniteHorizonProblem,
                        opts: MinimaxOptions = MinimaxOptions(),
                        grid_steps: int | None = None,
                        initial: SaddleIterate | None = None) -> SaddleReport:
    """Run the extragradient iteration to the discrete saddle on one grid.

    The step is halved after 50 consecutive field-norm increases, and halved
    with a restart from the initial iterate on outright divergence;
    NoConvergence carries the best field norm seen.
    """
    data = discretize(problem, grid_steps)
    M = data.grid.steps
    floor = opts.sigma_floor
    if floor is None:
        floor = _FLOOR_FRACTION * float(np.linalg.norm(problem.Sigma0))
    S0, ST = problem.Sigma0, problem.SigmaT
    start = initial if initial is not None else _initial_iterate(problem, M)

    step = opts.step
    best_norm = np.inf
    total_iters = 0
    for _ in range(_MAX_STEP_HALVINGS + 1):
        Y1, Y2 = start.Y1.copy(), start.Y2.copy()
        sigma = _project_sigma(start.Sigma.copy(), floor, S0, ST)
        Pi = _sym(start.Pi_mult.copy())
        it_pt = SaddleIterate(Y1, Y2, sigma, Pi)
        V = kkt_field(data, it_pt)
        fn0 = max(_field_norm(V), opts.tol)
        fn = fn0
        run_best = fn
        streak = 0
        diverged = False
        it = 0
        while it < opts.max_iters:
            if fn <= opts.tol:
                break
            if not np.isfinite(fn) or fn > _DIVERGENCE_FACTOR * fn0:
                diverged = True
                break
            half = SaddleIterate(
                Y1=Y1 - step * V[0],
                Y2=Y2 - step * V[1],
                Sigma=_project_sigma(sigma - step * V[2], floor, S0, ST),
                Pi_mult=_sym(Pi - step * V[3]),
            )
            Vh = kkt_field(data, half)
            Y1 = Y1 - step * Vh[0]
            Y2 = Y2 - step * Vh[1]
            sigma = _project_sigma(sigma - step * Vh[2], floor, S0, ST)
            Pi = _sym(Pi - step * Vh[3])
            it_pt = SaddleIterate(Y1, Y2, sigma, Pi)
            V = kkt_field(data, it_pt)
            fn = _field_norm(V)
            # A transient rise is normal; only a sustained sit above twice
            # the best norm indicates the step is too aggressive.
            run_best = min(run_best, fn)
            streak = streak + 1 if fn > 2.0 * run_best else 0
            if streak >= _INCREASE_STREAK:
                step *= 0.5
                streak = 0
            it += 1
        total_iters += it
        if np.isfinite(fn):
            best_norm = min(best_norm, fn)
        if fn <= opts.tol:
            return SaddleReport(
                field_norm=fn,
                constraint_norm=float(np.linalg.norm(V[4])),
                F_recovered=_recover_F(Pi),
                iterations=total_iters,
                iterate=it_pt,
                grid=data.grid,
            )
        if not diverged:
            break  # stable but out of iterations; a smaller step won't help
        step *= 0.5
    raise NoConvergence(best_norm,
                        f"extragradient stalled at field norm {best_norm:.3e}")


def solve_minimax(problem: FiniteHorizonProblem,
                  opts: MinimaxOptions = MinimaxOptions()) -> MinimaxSolution:
    """Solve the discrete saddle and recover the terminal incentive F.

    With richardson enabled (default) coarser solves at M/2 (and M/4 when
    the grid allows) remove the O(dt) and O(dt^2) bias of the Euler
    transcription: F = (8 F_M - 6 F_{M/2} + F_{M/4}) / 3.
    """
    fine = extragradient_solve(problem, opts)
    if not opts.richardson or problem.grid_steps < 8:
        return MinimaxSolution(F=fine.F_recovered, fine=fine, coarse=None,
                               richardson=False)
    coarse = extragradient_solve(problem, opts,
                                 grid_steps=problem.grid_steps // 2)
    if problem.grid_steps >= 16:
        coarsest = extragradient_solve(problem, opts,
                                       grid_steps=problem.grid_steps // 4)
        F = (8.0 * fine.F_recovered - 6.0 * coarse.F_recovered
             + coarsest.F_recovered) / 3.0
    else:
        F = 2.0 * fine.F_recovered - coarse.F_recovered
    return MinimaxSolution(F=_sym(F), fine=fine, coarse=coarse,
                           richardson=True)
