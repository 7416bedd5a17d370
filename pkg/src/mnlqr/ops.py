"""Mean-square stability operators, generalized Lyapunov/Riccati solvers,
analytic policy gradient, and runtime-checkable inequality certificates.

All functions are pure in their inputs; problems and gains are never mutated.
Vectorization uses the column-major convention, under which
vec(M X M^T) = (M kron M) vec(X) holds for arbitrary (not just symmetric) X.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

DIRECT_SOLVE_MAX_N = 30          # vectorized direct Lyapunov solve up to here
DENSE_EIG_MAX_DIM = 900          # dense eigensolve for operators up to 900x900
POWER_ITER_TOL = 1e-10
POWER_ITER_MAX = 10_000
LYAP_RESIDUAL_RTOL = 1e-9


class MeanSquareUnstableError(RuntimeError):
    """The closed loop is not mean-square stable (rho(F_K) >= 1)."""

    def __init__(self, rho, msg=None):
        super().__init__(msg or f"gain is not mean-square stabilizing "
                                f"(rho(F_K) = {rho:.6g} >= 1)")
        self.rho = float(rho)


class NotStabilizableError(RuntimeError):
    """Value iteration diverged: not mean-square stabilizable at this noise level."""


class NumericalError(RuntimeError):
    """A solver failed to meet its accuracy contract."""


def vec(X) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, n) -> np.ndarray:
    return np.asarray(v).reshape((n, n), order="F")


def sym(X) -> np.ndarray:
    return 0.5 * (X + X.T)


def _spectral_norm(X) -> float:
    return float(np.linalg.norm(X, 2))


def _sigma_min(X) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(sym(X)).min())


def closed_loop_matrix(problem, K) -> np.ndarray:
    """Nominal closed-loop matrix A_K = A + B K."""
    return problem.A + problem.B @ K


def state_cost_matrix(problem, K) -> np.ndarray:
    """Closed-loop state cost Q_K = Q + K^T R K."""
    return problem.Q + K.T @ problem.R @ K


def closed_loop_operator(problem, K) -> np.ndarray:
    """Matrix form of the covariance map F_K, of size n^2 x n^2.

    vec(Sigma_{t+1}) = F_K vec(Sigma_t) with
    F_K = A_K kron A_K + sum_i alpha_i A_i kron A_i
        + sum_j beta_j (B_j K) kron (B_j K).
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    n, m = problem.n, problem.m
    if K.shape != (m, n):
        raise ValueError(f"gain must have shape ({m}, {n}), got {K.shape}")
    AK = closed_loop_matrix(problem, K)
    F = np.kron(AK, AK)
    for a, Ai in zip(problem.alphas, problem.Astack):
        F += a * np.kron(Ai, Ai)
    for b, Bj in zip(problem.betas, problem.Bstack):
        BjK = Bj @ K
        F += b * np.kron(BjK, BjK)
    return F


def apply_closed_loop(problem, K, X) -> np.ndarray:
    """F_K(X) evaluated term by term, without forming the n^2 x n^2 matrix."""
    AK = closed_loop_matrix(problem, K)
    Y = AK @ X @ AK.T
    for a, Ai in zip(problem.alphas, problem.Astack):
        Y += a * (Ai @ X @ Ai.T)
    for b, Bj in zip(problem.betas, problem.Bstack):
        BjK = Bj @ K
        Y += b * (BjK @ X @ BjK.T)
    return Y


def spectral_radius(F) -> float:
    """Spectral radius of a square operator matrix.

    Dense nonsymmetric eigensolve up to DENSE_EIG_MAX_DIM; beyond that, power
    iteration on the vectorized PSD cone seeded with vec(I). F_K preserves the
    cone, so power iteration converges to rho.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValueError("spectral_radius expects a square matrix")
    dim = F.shape[0]
    if dim <= DENSE_EIG_MAX_DIM:
        try:
            return float(np.abs(np.linalg.eigvals(F)).max())
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigensolve did not converge: {exc}") from exc
    n = int(round(np.sqrt(dim)))
    v = vec(np.eye(n)) if n * n == dim else np.ones(dim)
    v /= np.linalg.norm(v)
    rho_prev = np.inf
    for _ in range(POWER_ITER_MAX):
        w = F @ v
        rho = float(np.linalg.norm(w))
        if rho == 0.0:
            return 0.0
        v = w / rho
        if abs(rho - rho_prev) <= POWER_ITER_TOL * max(rho, 1.0):
            return rho
        rho_prev = rho
    raise NumericalError("power iteration for spectral radius did not converge")


def ms_spectral_radius(problem, K) -> float:
    """rho(F_K) for a problem/gain pair."""
    return spectral_radius(closed_loop_operator(problem, K))


def is_ms_stabilizing(problem, K, margin: float = 0.0) -> bool:
    """True iff rho(F_K) < 1 - margin."""
    return ms_spectral_radius(problem, K) < 1.0 - margin


def _lyap_direct(F, rhs_mat, transpose):
    n = rhs_mat.shape[0]
    M = F.T if transpose else F
    X = unvec(np.linalg.solve(np.eye(n * n) - M, vec(rhs_mat)), n)
    return sym(X)


def _lyap_fixed_point(problem, K, rhs_mat, value_side, rho):
    # Iterate the recursion X <- rhs + F(X) (or its adjoint for the value
    # equation); linear convergence at rate rho, used only for n > 30.
    X = rhs_mat.copy()
    tail = np.inf
    AK = closed_loop_matrix(problem, K)
    for _ in range(POWER_ITER_MAX):
        if value_side:
            Y = rhs_mat + AK.T @ X @ AK
            for a, Ai in zip(problem.alphas, problem.Astack):
                Y += a * (Ai.T @ X @ Ai)
            for b, Bj in zip(problem.betas, problem.Bstack):
                BjK = Bj @ K
                Y += b * (BjK.T @ X @ BjK)
        else:
            Y = rhs_mat + apply_closed_loop(problem, K, X)
        tail = np.linalg.norm(Y - X)
        X = Y
        if tail <= 0.25 * (1.0 - rho) * 1e-12 * max(np.linalg.norm(X), 1.0):
            return sym(X)
    raise NumericalError("fixed-point Lyapunov iteration did not converge")


def _check_lyap_residual(residual, scale):
    if residual > LYAP_RESIDUAL_RTOL * max(scale, 1e-300):
        raise NumericalError(
            f"Lyapunov residual {residual:.3e} exceeds "
            f"{LYAP_RESIDUAL_RTOL:.1e} * {scale:.3e}")


def solve_value_lyapunov(problem, K, method: str = "auto") -> np.ndarray:
    """Unique PSD solution P_K of the generalized value Lyapunov equation

    P = Q_K + A_K^T P A_K + sum_i alpha_i A_i^T P A_i
        + sum_j beta_j (B_j K)^T P (B_j K).

    Raises MeanSquareUnstableError when rho(F_K) >= 1.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    F = closed_loop_operator(problem, K)
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise MeanSquareUnstableError(rho)
    QK = state_cost_matrix(problem, K)
    if method == "direct" or (method == "auto" and problem.n <= DIRECT_SOLVE_MAX_N):
        P = _lyap_direct(F, QK, transpose=True)
    else:
        P = _lyap_fixed_point(problem, K, QK, value_side=True, rho=rho)
    resid = np.linalg.norm(P - QK - unvec(F.T @ vec(P), problem.n))
    _check_lyap_residual(resid, np.linalg.norm(QK))
    return P


def solve_covariance_lyapunov(problem, K, method: str = "auto") -> np.ndarray:
    """Unique PSD solution Sigma_K of the dual generalized Lyapunov equation

    Sigma = Sigma0 + A_K Sigma A_K^T + sum_i alpha_i A_i Sigma A_i^T
            + sum_j beta_j (B_j K) Sigma (B_j K)^T.

    Equals the limit of the covariance series sum_t F_K^t(Sigma0).
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    F = closed_loop_operator(problem, K)
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise MeanSquareUnstableError(rho)
    if method == "direct" or (method == "auto" and problem.n <= DIRECT_SOLVE_MAX_N):
        S = _lyap_direct(F, problem.Sigma0, transpose=False)
    else:
        S = _lyap_fixed_point(problem, K, problem.Sigma0, value_side=False, rho=rho)
    resid = np.linalg.norm(S - problem.Sigma0 - unvec(F @ vec(S), problem.n))
    _check_lyap_residual(resid, np.linalg.norm(problem.Sigma0))
    return S


def input_weight(problem, P) -> np.ndarray:
    """R_K = R + B^T P B + sum_j beta_j B_j^T P B_j."""
    RK = problem.R + problem.B.T @ P @ problem.B
    for b, Bj in zip(problem.betas, problem.Bstack):
        RK += b * (Bj.T @ P @ Bj)
    return sym(RK)


def gradient_factor(problem, P, K) -> np.ndarray:
    """E_K = R_K K + B^T P A; the policy gradient is 2 E_K Sigma_K."""
    return input_weight(problem, P) @ K + problem.B.T @ P @ problem.A


@dataclass(frozen=True)
class PolicyEvaluation:
    """Full closed-loop evaluation of a gain, or an instability marker.

    `stable` is equivalent to rho < 1; the solution fields are present only
    when stable. Cost is Tr(P_K Sigma0) = Tr(Q_K Sigma_K) (duality).
    """

    stable: bool
    rho: float
    P: Optional[np.ndarray] = None
    Sigma: Optional[np.ndarray] = None
    RK: Optional[np.ndarray] = None
    EK: Optional[np.ndarray] = None
    cost: Optional[float] = None
    grad: Optional[np.ndarray] = None

    @property
    def grad_norm(self) -> Optional[float]:
        return None if self.grad is None else float(np.linalg.norm(self.grad))


def evaluate(problem, K) -> PolicyEvaluation:
    """Evaluate a gain: P_K, Sigma_K, R_K, E_K, C(K), grad C(K), rho(F_K).

    Returns stable=False with only rho populated when the gain is not
    mean-square stabilizing; the infinite cost is a marker, never a float.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    F = closed_loop_operator(problem, K)
    rho = spectral_radius(F)
    if rho >= 1.0:
        return PolicyEvaluation(stable=False, rho=rho)
    n = problem.n
    QK = state_cost_matrix(problem, K)
    if n <= DIRECT_SOLVE_MAX_N:
        P = _lyap_direct(F, QK, transpose=True)
        S = _lyap_direct(F, problem.Sigma0, transpose=False)
    else:
        P = _lyap_fixed_point(problem, K, QK, value_side=True, rho=rho)
        S = _lyap_fixed_point(problem, K, problem.Sigma0, value_side=False, rho=rho)
    RK = input_weight(problem, P)
    EK = RK @ K + problem.B.T @ P @ problem.A
    cost = float(np.trace(P @ problem.Sigma0))
    grad = 2.0 * EK @ S
    return PolicyEvaluation(stable=True, rho=rho, P=P, Sigma=S, RK=RK, EK=EK,
                            cost=cost, grad=grad)


def gare_residual(problem, P) -> float:
    """Frobenius norm of the generalized Riccati equation residual at P."""
    RP = input_weight(problem, P)
    APB = problem.A.T @ P @ problem.B
    rhs = problem.Q + problem.A.T @ P @ problem.A
    for a, Ai in zip(problem.alphas, problem.Astack):
        rhs += a * (Ai.T @ P @ Ai)
    rhs -= APB @ np.linalg.solve(RP, APB.T)
    return float(np.linalg.norm(rhs - P))


@dataclass(frozen=True)
class RiccatiSolution:
    """Fixed point of the generalized Riccati equation and its optimal gain."""

    P_star: np.ndarray
    K_star: np.ndarray
    iterations: int
    residual: float
    rho: float


def riccati_value_iteration(problem, tol: float = 1e-12,
                            max_iter: int = 100_000) -> RiccatiSolution:
    """Solve the generalized Riccati equation by value iteration from P0 = Q.

    Exits when ||P_{k+1} - P_k||_F <= tol * ||P_k||_F or the step difference
    stops improving (floating-point floor). Divergence (||P|| exceeding
    1e12 ||Q||) raises NotStabilizableError with a noise-level diagnostic.
    """
    P = problem.Q.copy()
    q_norm = np.linalg.norm(problem.Q)
    best_diff = np.inf
    stall = 0
    for k in range(1, max_iter + 1):
        RP = input_weight(problem, P)
        BPA = problem.B.T @ P @ problem.A
        Pn = problem.Q + problem.A.T @ P @ problem.A
        for a, Ai in zip(problem.alphas, problem.Astack):
            Pn += a * (Ai.T @ P @ Ai)
        Pn -= BPA.T @ np.linalg.solve(RP, BPA)
        Pn = sym(Pn)
        diff = np.linalg.norm(Pn - P)
        P = Pn
        if np.linalg.norm(P) > 1e12 * q_norm or not np.isfinite(diff):
            raise NotStabilizableError(
                "value iteration diverged: problem is not mean-square "
                "stabilizable at this noise level")
        if diff <= tol * np.linalg.norm(P):
            break
        if diff < best_diff * (1.0 - 1e-3):
            best_diff = diff
            stall = 0
        else:
            stall += 1
            if stall >= 50:   # converged to the floating-point floor
                break
    else:
        raise NotStabilizableError(
            f"value iteration did not converge within {max_iter} iterations")
    RP = input_weight(problem, P)
    K_star = -np.linalg.solve(RP, problem.B.T @ P @ problem.A)
    rho = ms_spectral_radius(problem, K_star)
    if rho >= 1.0:
        raise NotStabilizableError(
            f"value iteration fixed point yields rho(F_K*) = {rho:.6g} >= 1")
    return RiccatiSolution(P_star=P, K_star=K_star, iterations=k,
                           residual=gare_residual(problem, P), rho=rho)


def _require_stable(problem, K) -> PolicyEvaluation:
    ev = evaluate(problem, K)
    if not ev.stable:
        raise MeanSquareUnstableError(ev.rho)
    return ev


def certify_gradient_domination(problem, K, Kstar_eval) -> float:
    """Slack (RHS - LHS) of the gradient domination inequality

    C(K) - C(K*) <= ||Sigma_K*|| / (4 sigma_min(R) sigma_min(Sigma0)^2)
                    * ||grad C(K)||_F^2.
    """
    ev = _require_stable(problem, K)
    lhs = ev.cost - Kstar_eval.cost
    coef = _spectral_norm(Kstar_eval.Sigma) / (
        4.0 * _sigma_min(problem.R) * _sigma_min(problem.Sigma0) ** 2)
    rhs = coef * float(np.linalg.norm(ev.grad)) ** 2
    return rhs - lhs


def certify_almost_smoothness(problem, K, Kprime) -> float:
    """Residual of the exact cost-difference identity

    C(K') - C(K) = 2 Tr(Sigma_K' Delta^T E_K) + Tr(Sigma_K' Delta^T R_K Delta).
    """
    ev = _require_stable(problem, K)
    evp = _require_stable(problem, Kprime)
    D = np.atleast_2d(Kprime) - np.atleast_2d(K)
    pred = 2.0 * np.trace(evp.Sigma @ D.T @ ev.EK) \
        + np.trace(evp.Sigma @ D.T @ ev.RK @ D)
    return float(abs(evp.cost - ev.cost - pred))


def certify_cost_bounds(problem, K):
    """Slacks of ||P_K|| <= C(K)/sigma_min(Sigma0) and
    ||Sigma_K|| <= C(K)/sigma_min(Q)."""
    ev = _require_stable(problem, K)
    slack1 = ev.cost / _sigma_min(problem.Sigma0) - _spectral_norm(ev.P)
    slack2 = ev.cost / _sigma_min(problem.Q) - _spectral_norm(ev.Sigma)
    return float(slack1), float(slack2)


def certify_trace_bound(problem, K) -> float:
    """Slack of Tr(Sigma_K) >= sigma_min(Sigma0) / (1 - rho(F_K))."""
    ev = _require_stable(problem, K)
    bound = _sigma_min(problem.Sigma0) / (1.0 - ev.rho)
    return float(np.trace(ev.Sigma) - bound)


def robust_margin_scalar(a: float, alpha: float) -> float:
    """Largest constant perturbation phi such that a + phi stays stable, given
    mean-square stability of the scalar system with variance alpha.

    Returns sqrt(a^2 + alpha) - |a|; collapses to 0 when alpha = 0.
    """
    ms = a * a + alpha
    if ms >= 1.0:
        raise MeanSquareUnstableError(ms, "scalar system is mean-square "
                                          f"unstable (a^2 + alpha = {ms:.6g})")
    return float(np.sqrt(ms) - abs(a))
