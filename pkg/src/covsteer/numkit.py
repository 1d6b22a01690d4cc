"""Shared numerical kernel.

Fixed-step RK4 matrix ODE integration, dense Lyapunov/bilateral linear solves,
Hurwitz tests, symmetric-matrix packing and PSD utilities.  Everything here is
a pure function over immutable inputs; target problem sizes are small (n <= 10)
so dense O(n^6) vectorized solves are acceptable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUp, NotPositiveDefinite, SingularOperator

_SQRT2 = np.sqrt(2.0)

# Numerical rank threshold convention: n * sigma_max * RANK_RTOL.
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with nodes t_k = t0 + k*(t1-t0)/steps, k = 0..steps."""

    t0: float
    t1: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("grid needs at least one step")
        if not self.t1 > self.t0:
            raise ValueError("grid requires t1 > t0")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + np.arange(self.steps + 1) * self.dt


@dataclass(frozen=True)
class MatrixTrajectory:
    """One matrix per grid node, stored time-ascending as an (M+1, r, c) array."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape[0] != self.grid.steps + 1:
            raise ValueError("trajectory length does not match grid node count")
        object.__setattr__(self, "values", vals)

    def at_node(self, k: int) -> np.ndarray:
        return self.values[k]

    def interpolate(self, t: float) -> np.ndarray:
        """Piecewise-linear value at an arbitrary time inside the grid."""
        s = (t - self.grid.t0) / self.grid.dt
        k = int(np.clip(np.floor(s), 0, self.grid.steps - 1))
        w = s - k
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]


def symmetrize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def sym_dim(n: int) -> int:
    return n * (n + 1) // 2


def pack_sym(X: np.ndarray) -> np.ndarray:
    """Pack a symmetric matrix into its upper triangle, off-diagonals scaled
    by sqrt(2) so the packing is a Frobenius isometry."""
    n = X.shape[0]
    iu, ju = np.triu_indices(n)
    v = X[iu, ju].astype(float).copy()
    v[iu != ju] *= _SQRT2
    return v


def unpack_sym(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of pack_sym."""
    iu, ju = np.triu_indices(n)
    w = np.asarray(v, dtype=float).copy()
    w[iu != ju] /= _SQRT2
    X = np.zeros((n, n))
    X[iu, ju] = w
    X[ju, iu] = w
    return X


def integrate_matrix_ode(rhs, initial, grid: TimeGrid, direction="forward",
                         blowup_threshold=1e8) -> MatrixTrajectory:
    """Classical fixed-step RK4 for a symmetric matrix ODE.

    The trajectory is stored time-ascending regardless of direction; the
    backward direction integrates from t1 down to t0 with a negated step.
    Every node is re-symmetrized to suppress asymmetry drift.
    """
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    X0 = symmetrize(np.atleast_2d(np.asarray(initial, dtype=float)))
    M = grid.steps
    values = np.empty((M + 1,) + X0.shape)
    nodes = grid.nodes

    def check(X, t):
        nrm = np.linalg.norm(X)
        if not np.isfinite(nrm) or nrm > blowup_threshold:
            raise BlowUp(t)

    if direction == "forward":
        order = range(M)
        h = grid.dt
        values[0] = X0
        check(X0, nodes[0])
        idx_from, idx_to = lambda k: k, lambda k: k + 1
    else:
        order = range(M, 0, -1)
        h = -grid.dt
        values[M] = X0
        check(X0, nodes[M])
        idx_from, idx_to = lambda k: k, lambda k: k - 1

    for k in order:
        t = nodes[idx_from(k)]
        X = values[idx_from(k)]
        k1 = rhs(t, X)
        k2 = rhs(t + 0.5 * h, X + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, X + 0.5 * h * k2)
        k4 = rhs(t + h, X + h * k3)
        Xn = symmetrize(X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        check(Xn, nodes[idx_to(k)])
        values[idx_to(k)] = Xn

    return MatrixTrajectory(grid=grid, values=values)


def solve_lyapunov(Acl: np.ndarray, RHS: np.ndarray) -> np.ndarray:
    """Solve Acl X + X Acl' + RHS = 0 for symmetric X by dense vectorization."""
    A = np.asarray(Acl, dtype=float)
    W = symmetrize(np.asarray(RHS, dtype=float))
    n = A.shape[0]
    I = np.eye(n)
    # Row-major vec: vec(A X) = (A (x) I) vec X, vec(X A') = (I (x) A) vec X.
    K = np.kron(A, I) + np.kron(I, A)
    svals = np.linalg.svd(K, compute_uv=False)
    if svals[-1] <= K.shape[0] * svals[0] * RANK_RTOL:
        raise SingularOperator(
            "Lyapunov operator singular (eigenvalue pair of Acl sums to zero)"
        )
    x = np.linalg.solve(K, -W.reshape(-1))
    return symmetrize(x.reshape(n, n))


def _sym_basis(n: int) -> np.ndarray:
    """Orthonormal (Frobenius) basis of symmetric n x n matrices, shape (d, n, n)."""
    d = sym_dim(n)
    basis = np.zeros((d, n, n))
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        basis[i] = unpack_sym(e, n)
    return basis


def solve_bilateral_sym(D: np.ndarray, S: np.ndarray, W: np.ndarray):
    """Solve D P S + S P D = W for symmetric P over the packed symmetric space.

    Returns (P, residual, singular_flag).  A singular operator is not an
    error: the minimum-norm least-squares P is returned with its residual
    and the flag set; callers decide how to react.
    """
    D = symmetrize(np.asarray(D, dtype=float))
    S = symmetrize(np.asarray(S, dtype=float))
    W = symmetrize(np.asarray(W, dtype=float))
    n = D.shape[0]
    d = sym_dim(n)
    basis = _sym_basis(n)
    L = np.empty((d, d))
    for j in range(d):
        E = basis[j]
        L[:, j] = pack_sym(symmetrize(D @ E @ S + S @ E @ D))
    w = pack_sym(W)
    svals = np.linalg.svd(L, compute_uv=False)
    singular = svals[-1] <= d * svals[0] * RANK_RTOL if svals[0] > 0 else True
    if singular:
        p, *_ = np.linalg.lstsq(L, w, rcond=RANK_RTOL * d)
    else:
        p = np.linalg.solve(L, w)
    P = unpack_sym(p, n)
    residual = np.linalg.norm(D @ P @ S + S @ P @ D - W)
    return P, residual, bool(singular)


def is_hurwitz(Acl: np.ndarray):
    """Return (stable, margin) with margin = -max Re(eig(Acl))."""
    eigs = np.linalg.eigvals(np.asarray(Acl, dtype=float))
    margin = -float(np.max(eigs.real))
    return margin > 0.0, margin


def sym_eig_floor(X: np.ndarray) -> float:
    return float(np.min(np.linalg.eigvalsh(symmetrize(X))))


def sym_inverse(X: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via eigendecomposition."""
    Xs = symmetrize(np.asarray(X, dtype=float))
    evals, vecs = np.linalg.eigh(Xs)
    if np.min(evals) <= 0.0:
        raise NotPositiveDefinite(
            f"matrix not positive definite (min eigenvalue {np.min(evals):.3e})"
        )
    return symmetrize((vecs / evals) @ vecs.T)


def sym_sqrt(X: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (eigenvalues clipped at 0)."""
    Xs = symmetrize(np.asarray(X, dtype=float))
    evals, vecs = np.linalg.eigh(Xs)
    if np.min(evals) < -1e-12 * max(1.0, np.max(np.abs(evals))):
        raise NotPositiveDefinite("matrix not positive semidefinite")
    return symmetrize((vecs * np.sqrt(np.clip(evals, 0.0, None))) @ vecs.T)


def trapezoid_trace_integral(traj: MatrixTrajectory, weight) -> float:
    """Composite trapezoid rule for integral of tr(weight(t) X(t)) dt."""
    nodes = traj.grid.nodes
    vals = np.array([np.trace(np.atleast_2d(weight(t)) @ traj.values[k])
                     for k, t in enumerate(nodes)])
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite integrand on the grid")
    # np.trapz was renamed in numpy 2.0; support both
    _trapz = getattr(np, "trapezoid", None) or np.trapz
    return float(_trapz(vals, dx=traj.grid.dt))


def numerical_rank(M: np.ndarray) -> int:
    """Rank with threshold n_rows * sigma_max * RANK_RTOL."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    svals = np.linalg.svd(M, compute_uv=False)
    if svals.size == 0 or svals[0] == 0.0:
        return 0
    tol = M.shape[0] * svals[0] * RANK_RTOL
    return int(np.sum(svals > tol))


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def kalman_rank(A: np.ndarray, B: np.ndarray) -> int:
    return numerical_rank(controllability_matrix(A, B))
