"""Stochastic rollout simulation and zeroth-order policy gradient estimation.

Gradient estimates perturb the gain uniformly on a Frobenius-norm sphere of
radius r, simulate finite-horizon rollouts, and average (mn/r^2) * Chat_i U_i.
Batches are reproducible: draws for sample i are a pure function of
(master_seed, i), obtained from counter-based Philox streams keyed per fixed
chunk of CHUNK samples, and reductions run in sample order, so parallel
execution over chunks is bitwise identical to sequential execution.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import descent, ops
from .problem import NoiseSpec

try:  # compiled kernel, with pure-numpy fallback
    from . import _rollout_cy as _kernel
except ImportError:  # pragma: no cover - depends on build environment
    from . import _rollout_np as _kernel
from . import _rollout_np

if os.environ.get("MNLQR_BACKEND") == "numpy":
    _kernel = _rollout_np

CHUNK = 8192
OVERFLOW = 1e150
_RHO_CHECK_BYTES = 32 * 2**20   # per-slab memory cap for batched F matrices

# Variance of a standard normal truncated to |x| <= 3 (for the
# truncated-gaussian noise kind, which rescales to the requested variance).
_PHI3 = math.exp(-4.5) / math.sqrt(2.0 * math.pi)
_CDF3 = 0.5 * (1.0 + math.erf(3.0 / math.sqrt(2.0)))
_TRUNC3_VAR = 1.0 - 6.0 * _PHI3 / (2.0 * _CDF3 - 1.0)


def active_backend() -> str:
    """Name of the rollout kernel in use ("cython" or "numpy")."""
    return _kernel.BACKEND


class BatchRejectedError(RuntimeError):
    """Some sampled gain K + U_i is mean-square destabilizing."""

    def __init__(self, n_bad, n_total, r, h_delta):
        super().__init__(
            f"{n_bad} of {n_total} sampled gains are mean-square "
            f"destabilizing at exploration radius r={r:.6g}; shrink r "
            f"(perturbations up to h_Delta(K)={h_delta:.6g} are certified safe)")
        self.n_bad = n_bad
        self.r = r
        self.h_delta = h_delta


class RolloutResult(NamedTuple):
    trajectory: np.ndarray
    chat: float
    diverged: bool


@dataclass(frozen=True)
class RolloutBatch:
    """Per-sample records of one gradient-estimation batch."""

    r: float
    ell: int
    n_sample: int
    U: np.ndarray            # (n_sample, m, n), each with Frobenius norm r
    x0: Optional[np.ndarray]
    chat: np.ndarray
    diverged: np.ndarray
    master_seed: int

    def to_dict(self) -> dict:
        return {
            "r": self.r, "ell": self.ell, "n_sample": self.n_sample,
            "master_seed": self.master_seed,
            "U": self.U.tolist(),
            "x0": None if self.x0 is None else self.x0.tolist(),
            "chat": self.chat.tolist(),
            "diverged": self.diverged.tolist(),
        }


@dataclass(frozen=True)
class GradientEstimate:
    """Zeroth-order gradient estimate (mn/r^2) * mean_i Chat_i U_i."""

    grad_hat: np.ndarray
    n_sample: int
    ell: int
    r: float
    master_seed: int
    n_diverged: int = 0
    relative_error_vs_truth: Optional[float] = None
    batch: Optional[RolloutBatch] = None

    def to_dict(self) -> dict:
        return {
            "grad_hat": self.grad_hat.tolist(), "n_sample": self.n_sample,
            "ell": self.ell, "r": self.r, "master_seed": self.master_seed,
            "n_diverged": self.n_diverged,
            "relative_error_vs_truth": self.relative_error_vs_truth,
        }


def child_seed(master_seed: int, *key) -> int:
    """Derive an independent integer seed by counter-based splitting."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _chunk_rng(master_seed: int, chunk_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(master_seed, spawn_key=(int(chunk_index),))
    return np.random.Generator(np.random.Philox(ss))


def _sqrtm_psd(X) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (X + X.T))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def default_L0(problem) -> float:
    """Almost-sure norm bound of sphere-sampled initial states."""
    lam_max = float(np.linalg.eigvalsh(problem.Sigma0).max())
    return math.sqrt(problem.n * lam_max)


def sample_sphere(m: int, n: int, r: float, rng) -> np.ndarray:
    """One m x n matrix uniform on the Frobenius sphere of radius r."""
    if r <= 0:
        raise ValueError("exploration radius r must be positive")
    U = rng.standard_normal((m, n))
    nrm = np.linalg.norm(U)
    while nrm == 0.0:
        U = rng.standard_normal((m, n))
        nrm = np.linalg.norm(U)
    return (r / nrm) * U


def _sample_sphere_batch(count, m, n, r, rng):
    U = rng.standard_normal((count, m, n))
    nrm = np.sqrt(np.einsum("imn,imn->i", U, U))
    nrm[nrm == 0.0] = 1.0
    return U * (r / nrm)[:, None, None]


def _draw_scaled(rng, variances, count, ell, kind):
    """(count, ell, k) draws with mean 0 and the given per-column variances."""
    k = len(variances)
    if k == 0 or ell == 0:
        return np.zeros((count, ell, k))
    if kind == "uniform":
        base = rng.uniform(-1.0, 1.0, size=(count, ell, k))
        return base * np.sqrt(3.0 * np.asarray(variances))
    if kind == "gaussian":
        base = rng.standard_normal((count, ell, k))
        return base * np.sqrt(np.asarray(variances))
    if kind == "truncated-gaussian":
        base = rng.standard_normal((count, ell, k))
        bad = np.abs(base) > 3.0
        while bad.any():
            base[bad] = rng.standard_normal(int(bad.sum()))
            bad = np.abs(base) > 3.0
        return base * np.sqrt(np.asarray(variances) / _TRUNC3_VAR)
    raise ValueError(f"unknown noise kind {kind!r}")


def _draw_x0(rng, count, problem, spec, S0half):
    g = rng.standard_normal((count, problem.n))
    if spec.x0_mode == "gaussian":
        return g @ S0half
    nrm = np.linalg.norm(g, axis=1)
    nrm[nrm == 0.0] = 1.0
    return math.sqrt(problem.n) * (g / nrm[:, None]) @ S0half


def simulate_rollout(problem, K, noise_spec, x0, ell, rng) -> RolloutResult:
    """Simulate one closed-loop trajectory for `ell` steps.

    Fresh i.i.d. noise draws each step; returns the (ell+1, n) trajectory and
    Chat = sum_{t=0}^{ell} x_t^T (Q + K^T R K) x_t. On state overflow the
    sample is marked diverged and its running cost is retained.
    """
    if ell < 1:
        raise ValueError("rollout length ell must be >= 1")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    x = np.asarray(x0, dtype=float).ravel()
    traj = np.zeros((ell + 1, problem.n))
    traj[0] = x
    chat = 0.0
    diverged = False
    for t in range(ell + 1):
        u = K @ x
        chat += float(x @ problem.Q @ x + u @ problem.R @ u)
        if t == ell or diverged:
            break
        d = _draw_scaled(rng, problem.alphas, 1, 1, noise_spec.kind)[0, 0]
        g = _draw_scaled(rng, problem.betas, 1, 1, noise_spec.kind)[0, 0]
        xn = problem.A @ x + problem.B @ u
        for i in range(problem.p):
            xn += d[i] * (problem.Astack[i] @ x)
        for j in range(problem.q):
            xn += g[j] * (problem.Bstack[j] @ u)
        if np.abs(xn).max() > OVERFLOW:
            diverged = True
            traj = traj[:t + 2]
            traj[t + 1] = xn
            break
        x = xn
        traj[t + 1] = x
    return RolloutResult(traj, chat, diverged)


def finite_horizon_cost(problem, K, ell: int) -> float:
    """Exact expected truncated cost C^(ell)(K) = sum_{t<ell} Tr(Q_K F_K^t(Sigma0)).

    Finite for any gain at finite ell; increases to C(K) as ell -> infinity
    when K is mean-square stabilizing.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    QK = ops.state_cost_matrix(problem, K)
    X = problem.Sigma0.copy()
    total = 0.0
    for _ in range(ell):
        total += float(np.trace(QK @ X))
        X = ops.apply_closed_loop(problem, K, X)
    return total


def _perturbation_radius_bound(problem, K, ev) -> float:
    """h_Delta(K): perturbations below this norm keep the gain stabilizing."""
    normB = np.linalg.norm(problem.B, 2)
    beta_term = sum(b * np.linalg.norm(Bj, 2) ** 2
                    for b, Bj in zip(problem.betas, problem.Bstack))
    h_B = (normB ** 2 + beta_term) / normB
    sigQ = ops._sigma_min(problem.Q)
    sig0 = ops._sigma_min(problem.Sigma0)
    normAK = np.linalg.norm(problem.A + problem.B @ K, 2)
    return sigQ * sig0 / (4.0 * h_B * ev.cost * (normAK + 1.0))


def _batch_rho(problem, Kbatch) -> np.ndarray:
    """Spectral radii rho(F_K) for a batch of gains, chunked to cap memory."""
    Kbatch = np.asarray(Kbatch, dtype=float)
    N = Kbatch.shape[0]
    n = problem.n
    dim = n * n
    Fnoise = np.zeros((dim, dim))
    for a, Ai in zip(problem.alphas, problem.Astack):
        Fnoise += a * np.kron(Ai, Ai)
    slab = max(1, _RHO_CHECK_BYTES // (dim * dim * 8))
    rho = np.empty(N)
    for s in range(0, N, slab):
        Kc = Kbatch[s:s + slab]
        C = Kc.shape[0]
        AK = problem.A + np.einsum("nm,cmk->cnk", problem.B, Kc)
        F = (AK[:, :, None, :, None] * AK[:, None, :, None, :]).reshape(C, dim, dim)
        F += Fnoise
        for b, Bj in zip(problem.betas, problem.Bstack):
            BK = np.einsum("nm,cmk->cnk", Bj, Kc)
            F += b * (BK[:, :, None, :, None] * BK[:, None, :, None, :]).reshape(C, dim, dim)
        rho[s:s + slab] = np.abs(np.linalg.eigvals(F)).max(axis=1)
    return rho


def _chunk_plan(n_sample):
    return [(s, min(CHUNK, n_sample - s)) for s in range(0, n_sample, CHUNK)]


def _contig(problem):
    return (np.ascontiguousarray(problem.A), np.ascontiguousarray(problem.B),
            np.ascontiguousarray(problem.Astack), np.ascontiguousarray(problem.Bstack),
            np.ascontiguousarray(problem.Q), np.ascontiguousarray(problem.R))


def _run_chunks(jobs, workers):
    if workers is not None and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda f: f(), jobs))
    else:
        for job in jobs:
            job()


def estimate_gradient(problem, K, n_sample: int, ell: int, r: float,
                      noise_spec: Optional[NoiseSpec] = None,
                      master_seed: int = 0, workers: Optional[int] = None,
                      check: str = "auto",
                      cost_oracle: Optional[Callable] = None,
                      truth: Optional[np.ndarray] = None,
                      collect: bool = False) -> GradientEstimate:
    """Zeroth-order gradient estimate at K from n_sample perturbed rollouts.

    Deterministic in master_seed (counter-based chunk streams; fixed-order
    reduction), regardless of `workers`. `check` governs the mean-square
    stability precheck of the sampled gains: "auto" skips the per-sample
    check when r <= h_Delta(K) certifies safety, "exact" always checks,
    "off" disables it (tests only). A batch containing a destabilizing
    sample is rejected with guidance to shrink r.

    `cost_oracle(K) -> (cost, ok)` replaces simulation with exact costs
    (diagnostics/tests). `truth` attaches the relative error against a known
    gradient.
    """
    if n_sample < 1:
        raise ValueError("n_sample must be >= 1")
    if r <= 0:
        raise ValueError("exploration radius r must be positive")
    if check not in ("auto", "exact", "off"):
        raise ValueError(f"unknown check mode {check!r}")
    spec = noise_spec or NoiseSpec()
    K = np.atleast_2d(np.asarray(K, dtype=float))
    m, n = K.shape
    ev = ops.evaluate(problem, K)
    if not ev.stable:
        raise ops.MeanSquareUnstableError(ev.rho)
    h_delta = _perturbation_radius_bound(problem, K, ev)

    A, B, Astack, Bstack, Q, R = _contig(problem)
    S0half = _sqrtm_psd(problem.Sigma0)
    U = np.empty((n_sample, m, n))
    chat = np.empty(n_sample)
    div = np.zeros(n_sample, dtype=np.uint8)
    x0_all = np.empty((n_sample, n)) if collect and cost_oracle is None else None
    oracle_ok = np.ones(n_sample, dtype=bool)

    def make_job(ci, start, count):
        def job():
            rng = _chunk_rng(master_seed, ci)
            Uc = _sample_sphere_batch(count, m, n, r, rng)
            U[start:start + count] = Uc
            if cost_oracle is not None:
                for k in range(count):
                    c, ok = cost_oracle(K + Uc[k])
                    chat[start + k] = c if ok else np.nan
                    oracle_ok[start + k] = ok
                return
            x0c = _draw_x0(rng, count, problem, spec, S0half)
            if x0_all is not None:
                x0_all[start:start + count] = x0c
            dc = _draw_scaled(rng, problem.alphas, count, ell, spec.kind)
            gc = _draw_scaled(rng, problem.betas, count, ell, spec.kind)
            costs, dflags = _kernel.rollout_costs(
                np.ascontiguousarray(x0c), np.ascontiguousarray(K[None] + Uc),
                np.ascontiguousarray(dc), np.ascontiguousarray(gc),
                A, B, Astack, Bstack, Q, R, ell, OVERFLOW)
            chat[start:start + count] = costs
            div[start:start + count] = dflags
        return job

    jobs = [make_job(ci, s, c) for ci, (s, c) in enumerate(_chunk_plan(n_sample))]
    _run_chunks(jobs, workers)

    if cost_oracle is not None:
        if not oracle_ok.all():
            raise BatchRejectedError(int((~oracle_ok).sum()), n_sample, r, h_delta)
    elif check == "exact" or (check == "auto" and r > h_delta):
        rho = _batch_rho(problem, K[None] + U)
        n_bad = int((rho >= 1.0).sum())
        if n_bad:
            raise BatchRejectedError(n_bad, n_sample, r, h_delta)

    scale = (m * n) / (r * r)
    grad_hat = scale * np.einsum("i,imn->mn", chat, U) / n_sample
    rel = None
    if truth is not None:
        rel = float(np.linalg.norm(grad_hat - truth) / np.linalg.norm(truth))
    batch = None
    if collect:
        batch = RolloutBatch(r=r, ell=ell, n_sample=n_sample, U=U, x0=x0_all,
                             chat=chat, diverged=div, master_seed=master_seed)
    return GradientEstimate(grad_hat=grad_hat, n_sample=n_sample, ell=ell, r=r,
                            master_seed=master_seed, n_diverged=int(div.sum()),
                            relative_error_vs_truth=rel, batch=batch)


def estimate_cost(problem, K, n_sample: int, ell: int,
                  noise_spec: Optional[NoiseSpec] = None, master_seed: int = 0,
                  workers: Optional[int] = None):
    """Monte-Carlo finite-horizon cost estimate at a single gain.

    Returns (mean Chat, ok); ok is False when any rollout diverged. Uses only
    trajectory data (no model knowledge), so the model-free loop may call it.
    """
    spec = noise_spec or NoiseSpec()
    K = np.atleast_2d(np.asarray(K, dtype=float))
    A, B, Astack, Bstack, Q, R = _contig(problem)
    S0half = _sqrtm_psd(problem.Sigma0)
    Kc = np.ascontiguousarray(K[None])
    chat = np.empty(n_sample)
    div = np.zeros(n_sample, dtype=np.uint8)

    def make_job(ci, start, count):
        def job():
            rng = _chunk_rng(master_seed, ci)
            x0c = _draw_x0(rng, count, problem, spec, S0half)
            dc = _draw_scaled(rng, problem.alphas, count, ell, spec.kind)
            gc = _draw_scaled(rng, problem.betas, count, ell, spec.kind)
            costs, dflags = _kernel.rollout_costs(
                np.ascontiguousarray(x0c), Kc,
                np.ascontiguousarray(dc), np.ascontiguousarray(gc),
                A, B, Astack, Bstack, Q, R, ell, OVERFLOW)
            chat[start:start + count] = costs
            div[start:start + count] = dflags
        return job

    jobs = [make_job(ci, s, c) for ci, (s, c) in enumerate(_chunk_plan(n_sample))]
    _run_chunks(jobs, workers)
    return float(chat.mean()), not bool(div.any())


def estimate_z(problem, K, noise_spec=None, ell: int = 20,
               n_calib: int = 1000, master_seed: int = 0) -> float:
    """Empirical cost concentration constant: max sample cost over mean cost
    across a calibration batch (clipped to >= 1)."""
    spec = noise_spec or NoiseSpec()
    K = np.atleast_2d(np.asarray(K, dtype=float))
    A, B, Astack, Bstack, Q, R = _contig(problem)
    S0half = _sqrtm_psd(problem.Sigma0)
    rng = _chunk_rng(master_seed, 0)
    x0c = _draw_x0(rng, n_calib, problem, spec, S0half)
    dc = _draw_scaled(rng, problem.alphas, n_calib, ell, spec.kind)
    gc = _draw_scaled(rng, problem.betas, n_calib, ell, spec.kind)
    costs, _ = _kernel.rollout_costs(
        np.ascontiguousarray(x0c), np.ascontiguousarray(K[None]),
        np.ascontiguousarray(dc), np.ascontiguousarray(gc),
        A, B, Astack, Bstack, Q, R, ell, OVERFLOW)
    mean = costs.mean()
    if mean <= 0:
        return 1.0
    return max(1.0, float(costs.max() / mean))


def optimize_model_free(problem, K0, step_policy, per_iter, stop,
                        master_seed: int = 0,
                        noise_spec: Optional[NoiseSpec] = None,
                        workers: Optional[int] = None,
                        n_cost: Optional[int] = None,
                        sample_check: str = "auto",
                        cost_oracle: Optional[Callable] = None,
                        grad_oracle: Optional[Callable] = None) -> descent.DescentTrace:
    """Model-free gradient descent using zeroth-order gradient estimates.

    per_iter = (n_sample, ell, r); stop = (grad_tol, max_iter), with grad_tol
    applied to the estimated gradient norm. Backtracking evaluates candidate
    costs with rollout estimates (n_cost rollouts, default n_sample // 10,
    common random numbers across candidates within an iteration). The trace
    records true cost and rho via the exact solvers for diagnostics only.

    sample_check is forwarded to estimate_gradient; batch rejection
    propagates. Passing "off" runs the estimator on every sampled gain even
    when some are mean-square destabilizing (their finite-horizon costs stay
    finite); exploration radii large enough to be useful on plants operating
    near the mean-square stability margin require this.

    cost_oracle substitutes exact costs for rollouts inside the estimator;
    grad_oracle(K) -> grad bypasses estimation entirely (loop-machinery
    tests).
    """
    n_sample, ell, r = per_iter
    grad_tol, max_iter = stop
    spec = noise_spec or NoiseSpec()
    if n_cost is None:
        n_cost = max(1, n_sample // 10)
    K = np.atleast_2d(np.asarray(K0, dtype=float))
    diag = ops.evaluate(problem, K)
    if not diag.stable:
        raise ops.MeanSquareUnstableError(diag.rho)
    trace = descent.DescentTrace(method="gd-free")

    for it in range(max_iter + 1):
        if grad_oracle is not None:
            ghat = np.atleast_2d(grad_oracle(K))
        else:
            est = estimate_gradient(
                problem, K, n_sample, ell, r, noise_spec=spec,
                master_seed=child_seed(master_seed, it, 0), workers=workers,
                check=sample_check, cost_oracle=cost_oracle)
            ghat = est.grad_hat
        gnorm = float(np.linalg.norm(ghat))
        if gnorm <= grad_tol or it == max_iter:
            trace.append(descent.TracePoint(it, K, diag.cost, gnorm, None, diag.rho))
            trace.termination = "grad_tol" if gnorm <= grad_tol else "max_iter"
            return trace

        if step_policy.kind == "constant":
            eta = step_policy.eta
        elif step_policy.kind == "backtracking":
            if cost_oracle is not None or grad_oracle is not None:
                oracle = cost_oracle or (lambda Kc: _exact_cost(problem, Kc))
            else:
                cseed = child_seed(master_seed, it, 1)

                def oracle(Kc, _seed=cseed):
                    return estimate_cost(problem, Kc, n_cost, ell, spec,
                                         master_seed=_seed, workers=workers)
            try:
                eta = descent.backtracking_eta(
                    problem, K, ghat, alpha=step_policy.alpha,
                    beta=step_policy.beta, eta_init=step_policy.eta_init,
                    cost_oracle=oracle, grad_inner=gnorm * gnorm)
            except descent.NoProductiveStepError:
                trace.append(descent.TracePoint(it, K, diag.cost, gnorm, None, diag.rho))
                trace.termination = "no_productive_step"
                return trace
        else:
            raise ValueError("model-free optimizer supports constant or "
                             "backtracking step policies")

        trace.append(descent.TracePoint(it, K, diag.cost, gnorm, eta, diag.rho))
        K = K - eta * ghat
        diag = ops.evaluate(problem, K)
        if not diag.stable:
            trace.append(descent.TracePoint(it + 1, K, None, None, None, diag.rho))
            trace.termination = "lost_stability"
            return trace
    return trace


def _exact_cost(problem, Kc):
    e = ops.evaluate(problem, Kc)
    return (e.cost, True) if e.stable else (None, False)


@dataclass(frozen=True)
class ReferenceSampleSizes:
    """Certified (very conservative) algorithm parameters for one descent step:
    exploration radius cap h_r, rollout length floor h_ell, and sample count
    floor h_sample, with explicit matrix-Bernstein constants."""

    h_r: float
    h_ell: float
    h_sample: float
    z_used: float
    epsilon: float
    mu: float


def reference_sample_sizes(problem, K, epsilon: float, mu: float,
                           noise_spec: Optional[NoiseSpec] = None,
                           Kstar_eval=None, z_seed: int = 0) -> ReferenceSampleSizes:
    """Evaluate the explicit sample-complexity reference formulas at K.

    h_r = min{h_Delta, 1/h_cost, eps/(4 h_grad)};
    h_ell = 4 m n^2 C(K)^2 (||Q|| + ||R|| ||K||^2) / (h_r eps sigma_min(Sigma0)
            sigma_min(Q)^2);
    h_sample = 32 min(m,n)/eps^2 (sigma^2 + R eps / (12 sqrt(min(m,n))))
               log((m+n)/mu), with
    R = 2 m n z L0^2 C(K)/(h_r sigma_min(Sigma0)) + eps/2 + h1(K) and
    sigma^2 = (2 m n z L0^2 C(K)/(h_r sigma_min(Sigma0)))^2 + (eps/2 + h1(K))^2.

    These are certification references and are documented as extremely
    conservative; they are not used to size actual experiment batches.
    """
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must be in (0, 1)")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    spec = noise_spec or NoiseSpec()
    K = np.atleast_2d(np.asarray(K, dtype=float))
    m, n = K.shape
    ev = ops.evaluate(problem, K)
    if not ev.stable:
        raise ops.MeanSquareUnstableError(ev.rho)
    if Kstar_eval is None:
        sol = ops.riccati_value_iteration(problem)
        Kstar_eval = ops.evaluate(problem, sol.K_star)
    C = ev.cost
    Cstar = Kstar_eval.cost
    sigQ = ops._sigma_min(problem.Q)
    sig0 = ops._sigma_min(problem.Sigma0)
    normA = np.linalg.norm(problem.A, 2)
    normB = np.linalg.norm(problem.B, 2)
    normK = np.linalg.norm(K, 2)
    normAK = np.linalg.norm(ops.closed_loop_matrix(problem, K), 2)
    beta_term = sum(b * np.linalg.norm(Bj, 2) ** 2
                    for b, Bj in zip(problem.betas, problem.Bstack))
    h_B = (normB ** 2 + beta_term) / normB
    h_delta = sigQ * sig0 / (4.0 * h_B * C * (normAK + 1.0))
    h0 = math.sqrt(np.linalg.norm(ev.RK, 2) * max(C - Cstar, 0.0) / sig0)
    h1 = 2.0 * C * h0 / sigQ
    trS0 = float(np.trace(problem.Sigma0))
    normR = np.linalg.norm(problem.R, 2)
    h_cost = (4.0 * trS0 * normR / (sig0 * sigQ)) * (
        normK + 0.5 * h_delta
        + normB * normK ** 2 * (normAK + 1.0) * C / (sig0 * sigQ))
    h_grad = 4.0 * (C / sigQ) * (
        normR
        + normB * (normA + h_B * (normK + h_delta)) * (h_cost * C / trS0)
        + h_B * normB * (C / sig0)) \
        + 8.0 * (C / sigQ) ** 2 * (normB * (normAK + 1.0) / sig0) * h0
    h_r = min(h_delta, 1.0 / h_cost, epsilon / (4.0 * h_grad))
    normQ = np.linalg.norm(problem.Q, 2)
    h_ell = 4.0 * m * n ** 2 * C ** 2 * (normQ + normR * normK ** 2) / (
        h_r * epsilon * sig0 * sigQ ** 2)
    L0 = spec.L0 if spec.L0 is not None else default_L0(problem)
    if spec.x0_mode == "gaussian" and spec.L0 is None:
        raise ValueError("gaussian x0 sampling has no almost-sure norm bound; "
                         "set NoiseSpec.L0 explicitly")
    z = spec.z if spec.z is not None else estimate_z(
        problem, K, spec, ell=max(20, min(200, int(round(10 / max(1e-6, 1 - ev.rho))))),
        master_seed=z_seed)
    big_r = 2.0 * m * n * z * L0 ** 2 * C / (h_r * sig0) + 0.5 * epsilon + h1
    sig2 = (2.0 * m * n * z * L0 ** 2 * C / (h_r * sig0)) ** 2 \
        + (0.5 * epsilon + h1) ** 2
    dmin = min(m, n)
    h_sample = (32.0 * dmin / epsilon ** 2) * (
        sig2 + big_r * epsilon / (12.0 * math.sqrt(dmin))) \
        * math.log((m + n) / mu)
    return ReferenceSampleSizes(h_r=float(h_r), h_ell=float(h_ell),
                                h_sample=float(h_sample), z_used=float(z),
                                epsilon=float(epsilon), mu=float(mu))


def smoothed_gradient_reference(problem, K, ell: int, r: float,
                                nodes: int = 4096) -> np.ndarray:
    """Exact mean of the zeroth-order estimator at K:

    E[ghat] = (mn/r^2) E_{U ~ sphere}[ Chat_mean(K+U) U ],

    where Chat_mean is the exact expected rollout cost (ell+1 stage terms)
    from the covariance recursion. For a 1 x 2 gain the sphere is a circle
    and the expectation is a midpoint-rule quadrature; other shapes use a
    fixed-seed quasi-random average over `nodes` directions.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    m, n = K.shape
    acc = np.zeros((m, n))
    if m * n == 2:
        thetas = (np.arange(nodes) + 0.5) * (2.0 * np.pi / nodes)
        for th in thetas:
            U = r * np.array([np.cos(th), np.sin(th)]).reshape(m, n)
            acc += finite_horizon_cost(problem, K + U, ell + 1) * U
    else:
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(2 ** 31, spawn_key=(m, n))))
        for _ in range(nodes):
            U = sample_sphere(m, n, r, rng)
            acc += finite_horizon_cost(problem, K + U, ell + 1) * U
    return (m * n / r ** 2) * acc / nodes


def gradient_error_sweep(problem, K, grid, ell: int, r: float, replicas: int,
                         noise_spec: Optional[NoiseSpec] = None,
                         master_seed: int = 0, workers: Optional[int] = None,
                         check: str = "auto"):
    """Relative gradient estimation error vs n_sample.

    The error of an n-sample estimate is its sampling deviation from the
    estimator's exact mean (smoothed_gradient_reference), normalized by the
    analytic gradient norm, averaged over `replicas` independent estimates
    per grid point. At the study's operating point the smoothing itself
    biases the estimator mean away from the analytic gradient; that bias is
    a property of the smoothing radius, not of the sample count, and is
    returned separately.

    For each replica the largest batch is simulated once and grid points are
    prefix means over the leading samples, so points within a replica share
    draws while replicas stay independent. Returns (grid, mean relative
    errors, relative smoothing bias).
    """
    spec = noise_spec or NoiseSpec()
    grid = sorted(int(g) for g in grid)
    n_max = grid[-1]
    K = np.atleast_2d(np.asarray(K, dtype=float))
    m, n = K.shape
    ev = ops.evaluate(problem, K)
    if not ev.stable:
        raise ops.MeanSquareUnstableError(ev.rho)
    gnorm = np.linalg.norm(ev.grad)
    mean_hat = smoothed_gradient_reference(problem, K, ell, r)
    bias = float(np.linalg.norm(mean_hat - ev.grad) / gnorm)
    scale = (m * n) / (r * r)
    errs = np.zeros((replicas, len(grid)))
    for j in range(replicas):
        est = estimate_gradient(problem, K, n_max, ell, r, noise_spec=spec,
                                master_seed=child_seed(master_seed, j),
                                workers=workers, check=check, collect=True)
        cu = est.batch.chat[:, None, None] * est.batch.U
        csum = np.cumsum(cu, axis=0)
        for gi, g in enumerate(grid):
            ghat = scale * csum[g - 1] / g
            errs[j, gi] = np.linalg.norm(ghat - mean_hat) / gnorm
    return np.asarray(grid), errs.mean(axis=0), bias
