import numpy as np
import pytest

from mnlqr import make_diffusion_network, make_suspension, ops


@pytest.fixture(scope="session")
def diffusion():
    return make_diffusion_network()


@pytest.fixture(scope="session")
def suspension():
    return make_suspension()


@pytest.fixture(scope="session")
def diffusion_riccati(diffusion):
    return ops.riccati_value_iteration(diffusion, tol=1e-14)


@pytest.fixture(scope="session")
def diffusion_kstar_eval(diffusion, diffusion_riccati):
    return ops.evaluate(diffusion, diffusion_riccati.K_star)


@pytest.fixture(scope="session")
def suspension_riccati(suspension):
    return ops.riccati_value_iteration(suspension, tol=1e-14)


def scalar_problem(a=0.5, b=1.0, alpha=0.2, beta=0.0, q=1.0, r=1.0, s0=1.0):
    """1-state, 1-input instance with closed-form solutions."""
    from mnlqr import LqrmProblem
    state = ((alpha, np.array([[1.0]])),) if alpha else ()
    inp = ((beta, np.array([[1.0]])),) if beta else ()
    return LqrmProblem([[a]], [[b]], state, inp, [[q]], [[r]], [[s0]])


def stabilizing_gains_near(problem, center, count, seed, scale=0.3):
    """Rejection-sample `count` stabilizing gains around a center gain."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        K = center + scale * rng.standard_normal(center.shape)
        if ops.is_ms_stabilizing(problem, K):
            out.append(K)
    return out


def random_stabilizing_pair(seed, n_max=4, m_max=3, target=0.85):
    """Seeded random problem plus a random mean-square stabilizing gain."""
    from mnlqr import make_random
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    prob = make_random(n, m, p=2, q=1, seed=seed,
                       spectral_target=float(rng.uniform(0.3, target)))
    for scale in (0.3, 0.1, 0.03, 0.01, 0.0):
        K = scale * rng.standard_normal((m, n))
        if ops.is_ms_stabilizing(prob, K):
            return prob, K
    return prob, np.zeros((m, n))
