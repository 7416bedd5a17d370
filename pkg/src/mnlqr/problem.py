"""Problem data model for linear-quadratic control with multiplicative noise.

A problem instance holds the nominal dynamics (A, B), a list of state-noise
directions (alpha_i, A_i) and input-noise directions (beta_j, B_j), the
quadratic cost weights Q, R, and the initial-state covariance Sigma0.
Instances are immutable after construction and safe to share across threads.
"""

import json
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

SYM_RTOL = 1e-12


class ProblemFormatError(ValueError):
    """Raised when a problem/gain file cannot be parsed or is malformed."""


class StateNoise(NamedTuple):
    alpha: float
    Ai: np.ndarray


class InputNoise(NamedTuple):
    beta: float
    Bj: np.ndarray


def _ro(a) -> np.ndarray:
    """Return a read-only float64 copy of `a`."""
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LqrmProblem:
    """Linear system with multiplicative noise and quadratic cost.

    Dynamics: x_{t+1} = (A + sum_i delta_ti A_i) x_t + (B + sum_j gamma_tj B_j) u_t
    with E[delta_ti^2] = alpha_i, E[gamma_tj^2] = beta_j, E[x0 x0^T] = Sigma0,
    and stage cost x^T Q x + u^T R u.
    """

    A: np.ndarray
    B: np.ndarray
    state_noise: tuple
    input_noise: tuple
    Q: np.ndarray
    R: np.ndarray
    Sigma0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _ro(self.A))
        object.__setattr__(self, "B", _ro(np.atleast_2d(self.B)))
        object.__setattr__(self, "Q", _ro(self.Q))
        object.__setattr__(self, "R", _ro(np.atleast_2d(self.R)))
        object.__setattr__(self, "Sigma0", _ro(self.Sigma0))
        sn = tuple(StateNoise(float(a), _ro(Ai)) for a, Ai in self.state_noise)
        inn = tuple(InputNoise(float(b), _ro(Bj)) for b, Bj in self.input_noise)
        object.__setattr__(self, "state_noise", sn)
        object.__setattr__(self, "input_noise", inn)
        n, m = self.A.shape[0], self.B.shape[1] if self.B.ndim == 2 else 1
        object.__setattr__(self, "_alphas", _ro([t.alpha for t in sn]))
        object.__setattr__(self, "_betas", _ro([t.beta for t in inn]))
        astack = np.stack([t.Ai for t in sn]) if sn else np.zeros((0, n, n))
        bstack = np.stack([t.Bj for t in inn]) if inn else np.zeros((0, n, m))
        object.__setattr__(self, "_Astack", _ro(astack))
        object.__setattr__(self, "_Bstack", _ro(bstack))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return len(self.state_noise)

    @property
    def q(self) -> int:
        return len(self.input_noise)

    @property
    def alphas(self) -> np.ndarray:
        return self._alphas

    @property
    def betas(self) -> np.ndarray:
        return self._betas

    @property
    def Astack(self) -> np.ndarray:
        """State-noise directions stacked as a (p, n, n) array."""
        return self._Astack

    @property
    def Bstack(self) -> np.ndarray:
        """Input-noise directions stacked as a (q, n, m) array."""
        return self._Bstack

    def with_zero_noise(self) -> "LqrmProblem":
        """The same problem with all noise variances removed."""
        return LqrmProblem(self.A, self.B, (), (), self.Q, self.R, self.Sigma0)


@dataclass(frozen=True)
class Gain:
    """Feedback gain u = K x with free-form provenance label."""

    K: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "K", _ro(np.atleast_2d(self.K)))


@dataclass(frozen=True)
class NoiseSpec:
    """Sampling rules for the stochastic simulator.

    kind: distribution of the multiplicative noises delta/gamma. "uniform"
        (bounded, default) and "truncated-gaussian" have compact support as
        required by the model-free convergence theorem; "gaussian" is allowed
        for reproduction studies but violates that bounded-support hypothesis.
    x0_mode: "sphere" scales a uniform unit-sphere direction by sqrt(n) and
        Sigma0^{1/2}, giving E[x0 x0^T] = Sigma0 exactly with ||x0|| <= L0
        almost surely; "gaussian" draws x0 ~ N(0, Sigma0) (unbounded).
    L0: almost-sure initial-state norm bound; derived from the problem when
        unset and x0_mode == "sphere".
    z: cost concentration constant (>= 1); estimated empirically when unset.
    """

    kind: str = "uniform"
    x0_mode: str = "sphere"
    L0: Optional[float] = None
    z: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "truncated-gaussian", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.x0_mode not in ("sphere", "gaussian"):
            raise ValueError(f"unknown x0 mode {self.x0_mode!r}")
        if self.z is not None and self.z < 1.0:
            raise ValueError("z must be >= 1")

    @property
    def bounded(self) -> bool:
        return self.kind in ("uniform", "truncated-gaussian")


def _is_symmetric(X) -> bool:
    nrm = np.linalg.norm(X)
    return np.linalg.norm(X - X.T) <= SYM_RTOL * max(nrm, 1e-300)


def _min_eig_sym(X) -> float:
    return float(np.linalg.eigvalsh(0.5 * (X + X.T)).min())


def validate(problem: LqrmProblem) -> list:
    """Return a list of invariant violations (empty when the problem is valid)."""
    v = []
    A, B = problem.A, problem.B
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        v.append(f"A must be square, got shape {A.shape}")
        return v
    n = A.shape[0]
    if B.ndim != 2 or B.shape[0] != n:
        v.append(f"B must have {n} rows, got shape {B.shape}")
        return v
    m = B.shape[1]
    for name, X, dim in (("Q", problem.Q, n), ("R", problem.R, m),
                         ("Sigma0", problem.Sigma0, n)):
        if X.shape != (dim, dim):
            v.append(f"{name} must have shape ({dim}, {dim}), got {X.shape}")
            continue
        if not _is_symmetric(X):
            v.append(f"{name} not symmetric")
        if _min_eig_sym(X) <= 0.0:
            v.append(f"{name} not positive definite")
    for i, term in enumerate(problem.state_noise):
        if term.alpha < 0:
            v.append(f"negative noise variance alpha_{i + 1}")
        if term.Ai.shape != (n, n):
            v.append(f"state noise direction A_{i + 1} must have shape "
                     f"({n}, {n}), got {term.Ai.shape}")
    for j, term in enumerate(problem.input_noise):
        if term.beta < 0:
            v.append(f"negative noise variance beta_{j + 1}")
        if term.Bj.shape != (n, m):
            v.append(f"input noise direction B_{j + 1} must have shape "
                     f"({n}, {m}), got {term.Bj.shape}")
    return v


def make_suspension() -> LqrmProblem:
    """4-state, 1-input active two-mass suspension benchmark.

    Open-loop mean stable but mean-square unstable at the given noise level.
    """
    A = np.array([[+0.261, +0.315, +0.093, -0.008],
                  [-2.955, +0.261, +0.373, -0.033],
                  [+1.019, +0.255, -0.853, +0.011],
                  [-3.170, -0.793, -4.902, -0.146]])
    B = np.array([[0.133], [0.532], [0.161], [2.165]])
    state_noise = []
    for i in range(4):
        Ai = np.zeros((4, 4))
        Ai[:, i] = 1.0
        state_noise.append((0.017, Ai))
    input_noise = [(0.035, np.ones((4, 1)))]
    return LqrmProblem(A, B, tuple(state_noise), tuple(input_noise),
                       np.eye(4), np.eye(1), np.eye(4))


def make_diffusion_network() -> LqrmProblem:
    """4-state, 4-input lossy diffusion network benchmark.

    Stochastic edge weights on the six node pairs plus per-input actuator
    noise; open-loop mean-square stable.
    """
    A = np.array([[0.795, 0.050, 0.100, 0.050],
                  [0.050, 0.845, 0.050, 0.050],
                  [0.100, 0.050, 0.695, 0.150],
                  [0.050, 0.050, 0.150, 0.745]])
    edges = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]
    alphas = [0.005, 0.015, 0.010, 0.015, 0.005, 0.020]
    state_noise = []
    for (c, d), a in zip(edges, alphas):
        Ai = np.zeros((4, 4))
        Ai[c - 1, c - 1] = 1.0
        Ai[d - 1, d - 1] = 1.0
        Ai[c - 1, d - 1] = -1.0
        Ai[d - 1, c - 1] = -1.0
        state_noise.append((a, Ai))
    betas = [0.050, 0.150, 0.050, 0.100]
    input_noise = []
    for j, b in enumerate(betas):
        Bj = np.zeros((4, 4))
        Bj[j, j] = 1.0
        input_noise.append((b, Bj))
    return LqrmProblem(A, np.eye(4), tuple(state_noise), tuple(input_noise),
                       np.eye(4), np.eye(4), np.eye(4))


def make_gradient_estimation_example() -> LqrmProblem:
    """2-state, 1-input system used for gradient-estimation error studies."""
    A = np.array([[0.8, 0.1], [0.1, 0.8]])
    B = np.array([[1.0], [0.0]])
    D = np.array([[0.0, 1.0], [1.0, 0.0]])
    return LqrmProblem(A, B, ((0.1, D),), (), np.eye(2), np.eye(1), np.eye(2))


def make_random(n: int, m: int, p: int, q: int, seed: int,
                spectral_target: float) -> LqrmProblem:
    """Random instance whose open-loop (K=0) operator spectral radius equals
    `spectral_target`.

    Deterministic in `seed`. The rescaling multiplies A and the state-noise
    directions by sqrt(c), leaving the variances alpha_i untouched, so
    variance ratios are preserved exactly. Q = R = Sigma0 = I.
    """
    if min(n, m, p, q) < 0 or n < 1 or m < 1:
        raise ValueError("n, m must be >= 1 and p, q >= 0")
    if spectral_target <= 0:
        raise ValueError("spectral_target must be positive")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    B = rng.standard_normal((n, m)) / np.sqrt(m)
    Astack = rng.standard_normal((p, n, n)) / n
    alphas = rng.uniform(0.2, 1.0, size=p)
    Bstack = rng.standard_normal((q, n, m)) / n
    betas = rng.uniform(0.02, 0.1, size=q)

    F0 = np.kron(A, A)
    for a, Ai in zip(alphas, Astack):
        F0 += a * np.kron(Ai, Ai)
    rho0 = float(np.abs(np.linalg.eigvals(F0)).max())
    scale = np.sqrt(spectral_target / rho0)
    A = scale * A
    Astack = scale * Astack

    state_noise = tuple((alphas[i], Astack[i]) for i in range(p))
    input_noise = tuple((betas[j], Bstack[j]) for j in range(q))
    return LqrmProblem(A, B, state_noise, input_noise,
                       np.eye(n), np.eye(m), np.eye(n))


PRESETS = {
    "suspension": make_suspension,
    "network": make_diffusion_network,
    "gradest": make_gradient_estimation_example,
}


def problem_to_dict(problem: LqrmProblem) -> dict:
    return {
        "A": problem.A.tolist(),
        "B": problem.B.tolist(),
        "state_noise": [{"alpha": t.alpha, "Ai": t.Ai.tolist()}
                        for t in problem.state_noise],
        "input_noise": [{"beta": t.beta, "Bj": t.Bj.tolist()}
                        for t in problem.input_noise],
        "Q": problem.Q.tolist(),
        "R": problem.R.tolist(),
        "Sigma0": problem.Sigma0.tolist(),
    }


def problem_from_dict(d: dict) -> LqrmProblem:
    try:
        state = tuple((t["alpha"], np.array(t["Ai"], dtype=float))
                      for t in d.get("state_noise", []))
        inp = tuple((t["beta"], np.array(t["Bj"], dtype=float))
                    for t in d.get("input_noise", []))
        return LqrmProblem(np.array(d["A"], dtype=float),
                           np.array(d["B"], dtype=float),
                           state, inp,
                           np.array(d["Q"], dtype=float),
                           np.array(d["R"], dtype=float),
                           np.array(d["Sigma0"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFormatError(f"invalid problem data: {exc}") from exc


def load_problem(path) -> LqrmProblem:
    """Load a problem from a JSON file; parse errors carry line/column."""
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
            f"{exc.msg}") from exc
    return problem_from_dict(data)


def save_problem(problem: LqrmProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh, indent=1)
        fh.write("\n")


def load_gain(path) -> Gain:
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
            f"{exc.msg}") from exc
    try:
        return Gain(np.array(data["K"], dtype=float), data.get("label", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFormatError(f"invalid gain data: {exc}") from exc


def save_gain(gain: Gain, path) -> None:
    with open(path, "w") as fh:
        json.dump({"K": gain.K.tolist(), "label": gain.label}, fh, indent=1)
        fh.write("\n")
