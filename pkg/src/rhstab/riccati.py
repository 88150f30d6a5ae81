"""Linear-quadratic synthesis: Lyapunov solutions, stabilizing gains,
finite-horizon Riccati recursions, and the drift constants they induce.

Pure functions over immutable matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .policy import StagePolicy

__all__ = [
    "QuadraticValue",
    "LqSynthesis",
    "UnstableClosedLoop",
    "RiccatiDivergence",
    "solve_lyapunov",
    "riccati_gain",
    "synthesize_lq",
    "finite_horizon_lq_value",
]


class UnstableClosedLoop(ValueError):
    """Spectral radius of the closed-loop matrix is not below 1."""


class RiccatiDivergence(RuntimeError):
    """Riccati iteration failed to converge; carries the trailing norms."""

    def __init__(self, msg: str, trace: list[float]):
        super().__init__(msg)
        self.trace = trace


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class QuadraticValue:
    """``x -> x' P x + offset`` with P symmetric PSD and offset >= 0."""

    P: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if np.linalg.norm(P - P.T) > 1e-10 * max(1.0, np.linalg.norm(P)):
            raise ValueError("P must be symmetric")
        if np.linalg.eigvalsh(_sym(P)).min() < -1e-10 * max(1.0, np.linalg.norm(P)):
            raise ValueError("P must be positive semidefinite")
        if self.offset < -1e-12:
            raise ValueError("offset must be nonnegative")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.P, x) + self.offset


def solve_lyapunov(Acl, Q) -> np.ndarray:
    """Solve ``Acl' P Acl - P = -Q`` for symmetric PSD P.

    Requires the spectral radius of ``Acl`` below 1; the returned P has
    residual norm at most 1e-9.
    """
    Acl = np.asarray(Acl, dtype=float)
    Q = np.asarray(Q, dtype=float)
    rho = max(abs(np.linalg.eigvals(Acl)))
    if rho >= 1.0:
        raise UnstableClosedLoop(f"unstable closed loop: spectral radius {rho:.6g} >= 1")
    P = _sym(scipy.linalg.solve_discrete_lyapunov(Acl.T, Q))
    residual = np.linalg.norm(Acl.T @ P @ Acl - P + Q)
    if residual > 1e-9 * max(1.0, np.linalg.norm(Q)):
        raise RuntimeError(f"Lyapunov residual too large: {residual:.3g}")
    return P


def riccati_gain(A, B, Q_stage, R_stage, tol: float = 1e-12,
                 max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Converged backward Riccati iteration; returns ``(K, P_inf)``.

    The fixed point solves the discrete algebraic Riccati equation for
    the stage weights; K is the associated stabilizing gain.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q_stage = np.asarray(Q_stage, dtype=float)
    R_stage = np.asarray(R_stage, dtype=float)
    P = Q_stage.copy()
    history: list[float] = []
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            G = R_stage + B.T @ P @ B
            K = -np.linalg.solve(G, B.T @ P @ A)
            Pn = _sym(Q_stage + K.T @ R_stage @ K + (A + B @ K).T @ P @ (A + B @ K))
            # max-abs norms: Frobenius squares overflow long before entries do
            size = float(np.max(np.abs(Pn)))
            history.append(size)
            if not np.all(np.isfinite(Pn)):
                raise RiccatiDivergence(
                    "Riccati iteration produced non-finite values", history[-20:])
            if float(np.max(np.abs(Pn - P))) <= tol * max(1.0, size):
                return K, Pn
            P = Pn
    raise RiccatiDivergence(
        f"Riccati iteration did not converge within {max_iter} steps "
        "(pair may not be stabilizable)", history[-20:])


@dataclass(frozen=True)
class LqSynthesis:
    """Stabilizing gain plus the drift constants of the quadratic analysis.

    ``lambda_circ`` is the one-step contraction factor of ``x'Px``
    outside the sublevel set ``{x'Px <= K_set_level}``; ``beta`` bounds
    the one-step expectation inside it.  ``R`` is the largest isotropic
    control weight that keeps the cost pair drift-compatible (the stage
    cost with any larger weight would violate the terminal-cost drift
    inequality on the boundary of the sublevel set).
    """

    A: np.ndarray
    B: np.ndarray
    K_gain: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Sigma: np.ndarray
    alpha: float
    lambda_circ: float
    beta: float
    K_set_level: float
    lyapunov_residual: float

    @property
    def Acl(self) -> np.ndarray:
        return self.A + self.B @ self.K_gain

    def policy(self, control_set=None) -> StagePolicy:
        return StagePolicy.from_gain(self.K_gain, control_set)

    def value(self) -> QuadraticValue:
        return QuadraticValue(self.P, 0.0)


def _gen_eig_extreme(M, P, which: str) -> float:
    vals = scipy.linalg.eigh(_sym(M), _sym(P), eigvals_only=True)
    return float(vals[-1] if which == "max" else vals[0])


def synthesize_lq(A, B, Q, Sigma, alpha: float = 0.5) -> LqSynthesis:
    """Full quadratic synthesis for ``x+ = Ax + Bu + w``.

    Computes the converged-Riccati stabilizing gain (stage weights
    ``Q``, identity), the Lyapunov matrix P of the closed loop, the
    contraction factor ``lambda_circ = 1 - sigma_min(Q)/(2 sigma_max(P))``,
    the sublevel radius ``K_set_level = (2/lambda_circ) trace(P Sigma)``,
    the inside-set bound ``beta`` (exact, via generalized eigenvalues),
    and the control weight ``R = r I`` with r maximal subject to the
    drift compatibility of the stage cost.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    if np.linalg.eigvalsh(_sym(Q)).min() <= 0:
        raise ValueError("Q must be symmetric positive definite")

    K, _ = riccati_gain(A, B, Q, np.eye(B.shape[1]))
    Acl = A + B @ K
    P = solve_lyapunov(Acl, Q)
    residual = float(np.linalg.norm(Acl.T @ P @ Acl - P + Q))

    sig_min_q = float(np.linalg.svd(Q, compute_uv=False).min())
    sig_max_p = float(np.linalg.svd(P, compute_uv=False).max())
    lam = 1.0 - sig_min_q / (2.0 * sig_max_p)
    trace_ps = float(np.trace(P @ Sigma))
    level = 2.0 * trace_ps / lam
    beta = _gen_eig_extreme(Acl.T @ P @ Acl, P, "max") * level + trace_ps

    R = _select_control_weight(K, Q, P, alpha, lam, level, trace_ps)
    return LqSynthesis(A=A, B=B, K_gain=K, P=P, Q=Q, R=R, Sigma=Sigma,
                       alpha=float(alpha), lambda_circ=lam, beta=beta,
                       K_set_level=level, lyapunov_residual=residual)


def _select_control_weight(K, Q, P, alpha, lam, level, trace_ps,
                           tol: float = 1e-8) -> np.ndarray:
    """Largest ``r I`` keeping ``K'RK <= Q`` and the stage cost drift-compatible.

    Outside the sublevel set the cost pair must satisfy
    ``alpha x'(Q - K'RK)x >= trace(P Sigma)``; on the boundary this pins
    ``r`` through a generalized eigenvalue condition.  With zero noise
    only the partial-order constraint ``K'RK <= Q`` remains.
    """
    m = K.shape[0]
    KtK = K.T @ K

    def feasible(r: float) -> bool:
        M = Q - r * KtK
        if np.linalg.eigvalsh(_sym(M)).min() < -1e-12 * max(1.0, np.linalg.norm(Q)):
            return False
        if trace_ps <= 0 or alpha <= 0:
            return True
        return alpha * _gen_eig_extreme(M, P, "min") * level >= trace_ps * (1 + 1e-9)

    if not feasible(0.0):
        return np.zeros((m, m))
    hi = 1.0
    while feasible(hi) and hi < 1e12:
        hi *= 2.0
    lo = 0.0 if not feasible(hi) else hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo * np.eye(m)


def finite_horizon_lq_value(A, B, Q_stage, R_stage, P_terminal, Sigma,
                            N: int) -> tuple[list[QuadraticValue], list[StagePolicy]]:
    """Backward Riccati recursion over a finite horizon.

    Returns ``(values, policies)`` where ``values[k]`` is the optimal
    cost-to-go from stage k (k = 0..N; ``values[N]`` is the terminal
    cost) and ``policies[k]`` the optimal linear gain at stage k.  The
    offsets accumulate the per-stage noise cost ``trace(P_{k+1} Sigma)``;
    the gains themselves are independent of ``Sigma``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q_stage = np.asarray(Q_stage, dtype=float)
    R_stage = np.asarray(R_stage, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    if N < 1:
        raise ValueError("horizon must be at least 1")

    P = np.asarray(P_terminal, dtype=float)
    offset = 0.0
    values = [QuadraticValue(P, 0.0)]
    gains: list[np.ndarray] = []
    for _ in range(N):
        G = R_stage + B.T @ P @ B
        if abs(np.linalg.det(G)) < 1e-300:
            raise np.linalg.LinAlgError("singular control curvature R + B'PB")
        K = -np.linalg.solve(G, B.T @ P @ A)
        offset = offset + float(np.trace(P @ Sigma))
        P = _sym(Q_stage + K.T @ R_stage @ K + (A + B @ K).T @ P @ (A + B @ K))
        values.append(QuadraticValue(P, offset))
        gains.append(K)
    values.reverse()
    gains.reverse()
    return values, [StagePolicy.from_gain(K) for K in gains]
