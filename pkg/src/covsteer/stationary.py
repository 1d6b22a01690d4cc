"""Stationary covariance assignment for the zero-sum game.

Given a target stationary covariance Sigma, find a running cost Q_out and
Nash gains K1, K2 so that the closed loop A + B1 K1 + B2 K2 holds Sigma
invariant.  The construction goes through a symmetric multiplier P solving
the bilateral equation D P Sigma + Sigma P D = A Sigma + Sigma A' + C C'
with D = B1 B1' - B2 B2'; then K1 = -B1' P, K2 = B2' P and
Q_out = P D P - A' P - P A.  When the exact closed loop has no stability
margin, the gains are shifted by an epsilon-regularization that trades an
O(eps) covariance offset for strict stability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit
from .errors import Infeasible, NoConvergence, SingularKKT
from .model import Plant, StationaryProblem

# Relative bilateral-solve residual beyond which the KKT system is rejected.
_KKT_RESIDUAL_RTOL = 1e-8
# Smallest-first regularization ladder; beyond 1e-1 the covariance
# distortion defeats the purpose.
EPSILON_LADDER = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)


@dataclass(frozen=True)
class StationarySolution:
    P: np.ndarray
    Q_out: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    closed_loop: np.ndarray
    hurwitz_margin: float
    epsilon_used: float       # 0 when no regularization was needed
    lyapunov_residual: float
    nonunique_controls: bool


def _drift_gram(plant: Plant, Sigma: np.ndarray) -> np.ndarray:
    return plant.A @ Sigma + Sigma @ plant.A.T + plant.noise_cov


def stationary_feasibility(plant: Plant, Sigma: np.ndarray):
    """Rank test: Sigma is holdable iff bordering the drift mismatch
    W = A Sigma + Sigma A' + CC' by the stacked channels B = [B1 B2] does
    not raise the rank of the bordered zero block.

    Returns (feasible, (rank_with_W, rank_without_W)).
    """
    B = np.hstack([plant.B1, plant.B2])
    W = _drift_gram(plant, numkit.symmetrize(np.asarray(Sigma, dtype=float)))
    q = B.shape[1]
    zero = np.zeros((q, q))
    lhs = numkit.numerical_rank(np.block([[W, B], [B.T, zero]]))
    rhs = numkit.numerical_rank(np.block([[np.zeros_like(W), B],
                                          [B.T, zero]]))
    return lhs == rhs, (lhs, rhs)


def solve_stationary(problem: StationaryProblem) -> StationarySolution:
    """Exact stationary synthesis through the bilateral KKT equation.

    Raises Infeasible when the rank test fails and SingularKKT when the
    bilateral operator is singular and even the least-squares P leaves a
    non-negligible residual (which covers D = 0, e.g. B1 B1' = B2 B2').
    If the exact closed loop is not Hurwitz the gains are shifted by the
    smallest ladder epsilon that achieves a positive margin.
    """
    plant = problem.plant
    Sigma = problem.Sigma
    feasible, ranks = stationary_feasibility(plant, Sigma)
    if not feasible:
        raise Infeasible(
            f"target covariance is not holdable: bordered rank {ranks[0]} "
            f"vs channel rank {ranks[1]}"
        )
    D = plant.channel_gap
    W = _drift_gram(plant, Sigma)
    P, residual, singular = numkit.solve_bilateral_sym(D, Sigma, W)
    if residual > _KKT_RESIDUAL_RTOL * max(np.linalg.norm(W), 1.0):
        raise SingularKKT(
            f"bilateral KKT residual {residual:.3e} exceeds tolerance"
        )
    P = numkit.symmetrize(P)
    K1 = -plant.B1.T @ P
    K2 = plant.B2.T @ P
    Q_out = numkit.symmetrize(P @ D @ P - plant.A.T @ P - P @ plant.A)

    eps_used = 0.0
    K1f, K2f = K1, K2
    Acl = plant.A + plant.B1 @ K1 + plant.B2 @ K2
    hurwitz, margin = numkit.is_hurwitz(Acl)
    if not hurwitz:
        for eps in EPSILON_LADDER:
            K1e, K2e, margin_e = epsilon_regularize(plant, K1, K2, Sigma, eps)
            if margin_e > 0.0:
                eps_used = eps
                K1f, K2f = K1e, K2e
                margin = margin_e
                break
        else:
            raise NoConvergence(
                margin, "no ladder epsilon stabilizes the closed loop"
            )
    Acl = plant.A + plant.B1 @ K1f + plant.B2 @ K2f
    lyap = Acl @ Sigma + Sigma @ Acl.T + plant.noise_cov
    B = np.hstack([plant.B1, plant.B2])
    nonunique = numkit.numerical_rank(B) < B.shape[1] or singular
    return StationarySolution(
        P=P,
        Q_out=Q_out,
        K1=K1f,
        K2=K2f,
        closed_loop=Acl,
        hurwitz_margin=margin,
        epsilon_used=eps_used,
        lyapunov_residual=float(np.linalg.norm(lyap)),
        nonunique_controls=bool(nonunique),
    )


def riccati_consistency(plant: Plant, solution: StationarySolution) -> float:
    """Residual of the algebraic game Riccati equation
    A' P + P A - P D P + Q_out = 0 at the synthesized (P, Q_out)."""
    P, Q = solution.P, solution.Q_out
    res = plant.A.T @ P + P @ plant.A - P @ plant.channel_gap @ P + Q
    return float(np.linalg.norm(res))


def epsilon_regularize(plant: Plant, K1: np.ndarray, K2: np.ndarray,
                       Sigma: np.ndarray, epsilon: float):
    """Shift both gains by -eps/2 B_i' Sigma^-1; returns (K1e, K2e, margin).

    When (K1, K2) held Sigma stationary the shifted loop satisfies
    Acl_e Sigma + Sigma Acl_e' = -CC' - eps B B', hence the extra margin.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if epsilon == 0.0:
        Acl = plant.A + plant.B1 @ K1 + plant.B2 @ K2
        return K1, K2, numkit.is_hurwitz(Acl)[1]
    Sinv = numkit.sym_inverse(Sigma)
    K1e = K1 - 0.5 * epsilon * plant.B1.T @ Sinv
    K2e = K2 - 0.5 * epsilon * plant.B2.T @ Sinv
    Acl = plant.A + plant.B1 @ K1e + plant.B2 @ K2e
    return K1e, K2e, numkit.is_hurwitz(Acl)[1]


def covariance_gap(plant: Plant, K1_eps: np.ndarray, K2_eps: np.ndarray,
                   Sigma: np.ndarray, epsilon: float):
    """Offset Delta = Sigma - Sigma_eps of the regularized stationary
    covariance; returns (Delta, ratio) with ratio = ||Delta||_F / eps.

    Delta is PSD when the regularized loop is Hurwitz: it solves the
    Lyapunov equation of that loop with forcing eps B B'.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    Acl = plant.A + plant.B1 @ K1_eps + plant.B2 @ K2_eps
    hurwitz, margin = numkit.is_hurwitz(Acl)
    if not hurwitz:
        raise NoConvergence(margin, "regularized closed loop is not stable")
    Sigma_eps = numkit.solve_lyapunov(Acl, plant.noise_cov)
    Delta = numkit.symmetrize(Sigma - Sigma_eps)
    if numkit.sym_eig_floor(Delta) < -1e-10 * max(1.0, np.linalg.norm(Delta)):
        raise NoConvergence(numkit.sym_eig_floor(Delta),
                            "covariance offset unexpectedly indefinite")
    return Delta, float(np.linalg.norm(Delta)) / epsilon


def stationary_extragradient(problem: StationaryProblem,
                             step: float | None = None,
                             max_iters: int = 500_000,
                             tol: float = 1e-12) -> StationarySolution:
    """Solve the stationary saddle by extragradient instead of the KKT solve.

    Single-node analogue of the finite-horizon field: minimize
    tr(Y1 Sigma^-1 Y1') (maximize over Y2) subject to stationarity of Sigma,
    ascending the multiplier P along the constraint residual.  Slower than
    solve_stationary but shares no linear algebra with it, so agreement is a
    real consistency check.
    """
    plant = problem.plant
    Sigma = problem.Sigma
    Sinv = numkit.sym_inverse(Sigma)
    A, B1, B2 = plant.A, plant.B1, plant.B2
    CC = plant.noise_cov
    n, m, p = plant.n, plant.m, plant.p
    W0 = A @ Sigma + Sigma @ A.T + CC

    def fld(Y1, Y2, P):
        r = numkit.symmetrize(W0 + B1 @ Y1 + Y1.T @ B1.T
                              + B2 @ Y2 + Y2.T @ B2.T)
        gY1 = 2.0 * (Y1 @ Sinv + B1.T @ P)
        gY2 = 2.0 * (-Y2 @ Sinv + B2.T @ P)
        return gY1, -gY2, -r

    # The field is affine and low-dimensional; assemble its linear part
    # column by column, with the multiplier restricted to the packed
    # symmetric basis (asymmetric P directions form a spurious nullspace).
    # The top singular value sizes the extragradient step, and the matrix
    # feeds the fallback residual descent.
    d_sym = numkit.sym_dim(n)
    dim = m * n + p * n + d_sym

    def _vec(V):
        return np.concatenate([V[0].ravel(), V[1].ravel(),
                               numkit.pack_sym(V[2])])

    base = fld(np.zeros((m, n)), np.zeros((p, n)), np.zeros((n, n)))
    base_vec = _vec(base)
    J = np.empty((dim, dim))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        Vd = fld(e[:m * n].reshape(m, n),
                 e[m * n:m * n + p * n].reshape(p, n),
                 numkit.unpack_sym(e[m * n + p * n:], n))
        J[:, j] = _vec(Vd) - base_vec
    L = float(np.linalg.svd(J, compute_uv=False)[0])
    if step is None:
        step = 0.5 / max(L, 1e-12)
    # Extragradient needs a monotone field; a shared-constraint saddle can
    # fail that, in which case the residual solve below is used directly.
    monotone = numkit.sym_eig_floor(0.5 * (J + J.T)) >= -1e-10 * L

    best = np.inf
    converged = False
    Y1 = np.zeros((m, n))
    Y2 = np.zeros((p, n))
    P = np.zeros((n, n))
    for _ in range(13 if monotone else 0):  # halve the step on divergence
        Y1 = np.zeros((m, n))
        Y2 = np.zeros((p, n))
        P = np.zeros((n, n))
        fn0 = None
        diverged = False
        for _ in range(max_iters):
            V = fld(Y1, Y2, P)
            fn = float(np.sqrt(sum(np.sum(v * v) for v in V)))
            if fn0 is None:
                fn0 = max(fn, tol)
            if not np.isfinite(fn) or fn > 1e6 * fn0:
                diverged = True
                break
            best = min(best, fn)
            if fn <= tol:
                converged = True
                break
            Vh = fld(Y1 - step * V[0], Y2 - step * V[1],
                     numkit.symmetrize(P - step * V[2]))
            Y1 = Y1 - step * Vh[0]
            Y2 = Y2 - step * Vh[1]
            P = numkit.symmetrize(P - step * Vh[2])
        if converged or not diverged:
            break
        step *= 0.5
    if not converged:
        # Conjugate gradients on the normal equations of the KKT residual:
        # first-order field evaluations only, and convergent for any
        # consistent affine system regardless of monotonicity.
        x = np.zeros(dim)
        JT = J.T
        g = JT @ (J @ x + base_vec)
        d = -g
        for _ in range(10 * dim):
            fn = float(np.linalg.norm(J @ x + base_vec))
            best = min(best, fn)
            if fn <= tol:
                converged = True
                break
            Jd = J @ d
            denom = float(Jd @ Jd)
            if denom <= 0.0:
                break
            alpha = float(g @ g) / denom
            x = x + alpha * d
            g_new = JT @ (J @ x + base_vec)
            beta = float(g_new @ g_new) / max(float(g @ g), 1e-300)
            d = -g_new + beta * d
            g = g_new
        Y1 = x[:m * n].reshape(m, n)
        Y2 = x[m * n:m * n + p * n].reshape(p, n)
        P = numkit.unpack_sym(x[m * n + p * n:], n)
    if not converged:
        raise NoConvergence(best, "stationary extragradient stalled")

    K1 = Y1 @ Sinv
    K2 = Y2 @ Sinv
    Acl = A + B1 @ K1 + B2 @ K2
    lyap = Acl @ Sigma + Sigma @ Acl.T + CC
    hurwitz, margin = numkit.is_hurwitz(Acl)
    Q_out = numkit.symmetrize(P @ plant.channel_gap @ P - A.T @ P - P @ A)
    B = np.hstack([B1, B2])
    return StationarySolution(
        P=numkit.symmetrize(P),
        Q_out=Q_out,
        K1=K1,
        K2=K2,
        closed_loop=Acl,
        hurwitz_margin=margin,
        epsilon_used=0.0,
        lyapunov_residual=float(np.linalg.norm(lyap)),
        nonunique_controls=numkit.numerical_rank(B) < B.shape[1],
    )
