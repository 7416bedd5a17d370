"""Model-based descent methods: gradient, natural gradient, and
Gauss-Newton/policy-iteration steps, with convergence-certified step sizes
and Armijo backtracking line search.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import ops

ARMIJO_SLACK_RTOL = 1e-12
MAX_HALVINGS = 60

METHODS = ("gd", "npg", "gn")


class NoProductiveStepError(RuntimeError):
    """Backtracking exhausted its halvings without a productive step."""


class InvalidDirectionError(ValueError):
    """The supplied direction is not a descent direction."""


@dataclass(frozen=True)
class StepPolicy:
    """Step-size selection rule.

    kind: "constant" (use eta), "bound" (the method's theorem bound scaled by
    `safety`), or "backtracking" (Armijo with parameters alpha, beta starting
    from eta_init).
    """

    kind: str = "backtracking"
    eta: Optional[float] = None
    alpha: float = 0.01
    beta: float = 0.5
    safety: float = 1.0
    eta_init: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "bound", "backtracking"):
            raise ValueError(f"unknown step policy kind {self.kind!r}")
        if self.kind == "constant" and (self.eta is None or self.eta <= 0):
            raise ValueError("constant step policy requires eta > 0")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("backtracking alpha must be in (0, 0.5)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("backtracking beta must be in (0, 1)")
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("safety multiplier must be in (0, 1]")


@dataclass(frozen=True)
class TracePoint:
    iteration: int
    K: np.ndarray
    cost: Optional[float]      # None marks a mean-square unstable iterate
    grad_norm: Optional[float]
    eta: Optional[float]
    rho: float


@dataclass
class DescentTrace:
    """Append-only record of an optimizer run."""

    method: str
    points: list = field(default_factory=list)
    termination: str = ""

    def append(self, point: TracePoint):
        self.points.append(point)

    @property
    def final(self) -> TracePoint:
        return self.points[-1]

    def costs(self) -> list:
        return [pt.cost for pt in self.points]


@dataclass(frozen=True)
class BoundBundle:
    """Step-size bounds and auxiliary polynomials evaluated at a reference gain."""

    h_B: float
    h_Delta: float
    h0: float
    h1: float
    h2: float
    c_pg: float
    c_npg: float


def step_gradient(problem, K, eta: float):
    """One policy gradient step K' = K - eta * grad C(K).

    Returns (K', evaluation of K'); the evaluation carries stable=False when
    the step left the mean-square stabilizing set.
    """
    ev = ops.evaluate(problem, K)
    if not ev.stable:
        raise ops.MeanSquareUnstableError(ev.rho)
    Kn = K - eta * ev.grad
    return Kn, ops.evaluate(problem, Kn)


def step_natural(problem, K, eta: float):
    """One natural gradient step K' = K - eta * grad C(K) Sigma_K^{-1}.

    Uses the simplification grad C(K) Sigma_K^{-1} = 2 E_K, asserted against
    the explicit inverse to 1e-8.
    """
    ev = ops.evaluate(problem, K)
    if not ev.stable:
        raise ops.MeanSquareUnstableError(ev.rho)
    direction = 2.0 * ev.EK
    explicit = ev.grad @ np.linalg.inv(ev.Sigma)
    if np.linalg.norm(direction - explicit) > 1e-8 * (1.0 + np.linalg.norm(direction)):
        raise ops.NumericalError(
            "natural gradient simplification disagrees with explicit inverse")
    Kn = K - eta * direction
    return Kn, ops.evaluate(problem, Kn)


def step_gauss_newton(problem, K, eta: float):
    """One Gauss-Newton step K' = K - eta * R_K^{-1} grad C(K) Sigma_K^{-1}.

    At eta = 1/2 this is exactly the policy-iteration update
    -(R + B^T P_K B + sum_j beta_j B_j^T P_K B_j)^{-1} B^T P_K A.
    """
    ev = ops.evaluate(problem, K)
    if not ev.stable:
        raise ops.MeanSquareUnstableError(ev.rho)
    direction = 2.0 * np.linalg.solve(ev.RK, ev.EK)
    Kn = K - eta * direction
    return Kn, ops.evaluate(problem, Kn)


def policy_iteration_gain(problem, P) -> np.ndarray:
    """Closed-form policy improvement gain for a value matrix P."""
    RP = ops.input_weight(problem, P)
    return -np.linalg.solve(RP, problem.B.T @ P @ problem.A)


def compute_bounds(problem, K0, Kstar_eval=None) -> BoundBundle:
    """Evaluate the convergence-theorem step-size bounds at K0.

    c_npg = (1/2) (||R|| + (||B||^2 + sum_j beta_j ||B_j||^2)
                   C(K0)/sigma_min(Sigma0))^{-1}
    c_pg  = (1/16) min{ (sigma_min(Q) sigma_min(Sigma0)/C(K0))^2
                        / (h_B h1 (||A|| + ||B|| h2 + 1)),
                        sigma_min(Q) / (C(K0) ||R_K0||) }

    When Kstar_eval is unavailable, C(K*) is replaced by its lower bound 0,
    which enlarges h0 and shrinks c_pg (still certified).
    """
    ev = ops.evaluate(problem, K0)
    if not ev.stable:
        raise ops.MeanSquareUnstableError(ev.rho)
    C0 = ev.cost
    Cstar = 0.0 if Kstar_eval is None else Kstar_eval.cost
    normA = np.linalg.norm(problem.A, 2)
    normB = np.linalg.norm(problem.B, 2)
    beta_term = sum(b * np.linalg.norm(Bj, 2) ** 2
                    for b, Bj in zip(problem.betas, problem.Bstack))
    sigQ = ops._sigma_min(problem.Q)
    sig0 = ops._sigma_min(problem.Sigma0)
    sigR = ops._sigma_min(problem.R)
    normRK = np.linalg.norm(ev.RK, 2)
    normAK = np.linalg.norm(ops.closed_loop_matrix(problem, K0), 2)

    h_B = (normB ** 2 + beta_term) / normB
    h0 = float(np.sqrt(normRK * max(C0 - Cstar, 0.0) / sig0))
    h1 = 2.0 * C0 * h0 / sigQ
    h2 = (h0 + np.linalg.norm(problem.B.T @ ev.P @ problem.A, 2)) / sigR
    h_Delta = sigQ * sig0 / (4.0 * h_B * C0 * (normAK + 1.0))
    c_npg = 0.5 / (np.linalg.norm(problem.R, 2) + (normB ** 2 + beta_term) * C0 / sig0)
    denom = h_B * h1 * (normA + normB * h2 + 1.0)
    first = (sigQ * sig0 / C0) ** 2 / denom if denom > 0 else np.inf
    c_pg = min(first, sigQ / (C0 * normRK)) / 16.0
    return BoundBundle(h_B=float(h_B), h_Delta=float(h_Delta), h0=h0,
                       h1=float(h1), h2=float(h2), c_pg=float(c_pg),
                       c_npg=float(c_npg))


def bound_eta(method: str, bundle: BoundBundle, safety: float = 1.0) -> float:
    """The method's certified constant step size, scaled by `safety`."""
    if method == "gn":
        return 0.5 * safety
    if method == "npg":
        return bundle.c_npg * safety
    if method == "gd":
        return bundle.c_pg * safety
    raise ValueError(f"unknown method {method!r}")


def backtracking_eta(problem, K, direction, alpha: float = 0.01,
                     beta: float = 0.5, eta_init: float = 1.0,
                     cost_oracle: Optional[Callable] = None,
                     grad_inner: Optional[float] = None) -> float:
    """Largest eta = beta^k * eta_init satisfying stability and the Armijo
    condition C(K - eta d) <= C(K) - alpha eta <grad C(K), d>_F.

    `cost_oracle(K) -> (cost, ok)` replaces the exact evaluation when given
    (the model-free loop passes a rollout estimator); `grad_inner` overrides
    the exact inner product for the same reason. Raises NoProductiveStepError
    after MAX_HALVINGS rejections.
    """
    if cost_oracle is None:
        ev = ops.evaluate(problem, K)
        if not ev.stable:
            raise ops.MeanSquareUnstableError(ev.rho)

        def cost_oracle(Kc):
            e = ops.evaluate(problem, Kc)
            return (e.cost, True) if e.stable else (None, False)

        base_cost = ev.cost
        if grad_inner is None:
            grad_inner = float(np.sum(ev.grad * direction))
    else:
        base_cost, ok = cost_oracle(K)
        if not ok:
            raise ops.MeanSquareUnstableError(np.nan, "base gain rejected by cost oracle")
        if grad_inner is None:
            raise ValueError("grad_inner is required with a custom cost oracle")
    if grad_inner < 0:
        raise InvalidDirectionError(
            f"<grad, direction> = {grad_inner:.3e} < 0 is not a descent direction")
    slack = ARMIJO_SLACK_RTOL * (1.0 + abs(base_cost))
    eta = float(eta_init)
    for _ in range(MAX_HALVINGS + 1):
        cand, ok = cost_oracle(K - eta * direction)
        if ok and cand <= base_cost - alpha * eta * grad_inner + slack:
            return eta
        eta *= beta
    raise NoProductiveStepError(
        f"no productive step within {MAX_HALVINGS} halvings of eta_init={eta_init}")


def optimize(problem, K0, method: str, step_policy: StepPolicy,
             stop) -> DescentTrace:
    """Run a model-based descent method from K0.

    `stop` is (grad_tol, max_iter). The trace records every iterate with its
    cost, gradient norm, the step size used to reach the next iterate, and
    rho(F_K); termination is one of grad_tol, max_iter, lost_stability,
    stationary, or no_productive_step.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    grad_tol, max_iter = stop
    K = np.atleast_2d(np.asarray(K0, dtype=float))
    ev = ops.evaluate(problem, K)
    if not ev.stable:
        raise ops.MeanSquareUnstableError(ev.rho)
    trace = DescentTrace(method=method)
    eta_bound = None
    if step_policy.kind == "bound":
        bundle = compute_bounds(problem, K)
        eta_bound = bound_eta(method, bundle, step_policy.safety)

    for it in range(max_iter + 1):
        gnorm = ev.grad_norm
        if gnorm <= grad_tol:
            trace.append(TracePoint(it, K, ev.cost, gnorm, None, ev.rho))
            trace.termination = "stationary" if gnorm == 0.0 else "grad_tol"
            return trace
        if it == max_iter:
            trace.append(TracePoint(it, K, ev.cost, gnorm, None, ev.rho))
            trace.termination = "max_iter"
            return trace

        if method == "gd":
            direction = ev.grad
        elif method == "npg":
            direction = 2.0 * ev.EK
        else:
            direction = 2.0 * np.linalg.solve(ev.RK, ev.EK)

        if step_policy.kind == "constant":
            eta = step_policy.eta
        elif step_policy.kind == "bound":
            eta = eta_bound
        else:
            try:
                eta = backtracking_eta(problem, K, direction,
                                       alpha=step_policy.alpha,
                                       beta=step_policy.beta,
                                       eta_init=step_policy.eta_init)
            except NoProductiveStepError:
                trace.append(TracePoint(it, K, ev.cost, gnorm, None, ev.rho))
                trace.termination = "no_productive_step"
                return trace

        trace.append(TracePoint(it, K, ev.cost, gnorm, eta, ev.rho))
        Kn = K - eta * direction
        evn = ops.evaluate(problem, Kn)
        if not evn.stable:
            trace.append(TracePoint(it + 1, Kn, None, None, None, evn.rho))
            trace.termination = "lost_stability"
            return trace
        K, ev = Kn, evn

    return trace
