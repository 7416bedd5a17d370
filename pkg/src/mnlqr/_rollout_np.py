"""Pure-numpy rollout kernel: batch simulation of the closed loop with
multiplicative noise, vectorized across samples.

Same contract as the compiled kernel in _rollout_cy; selected as the fallback
when the extension is unavailable.
"""

import numpy as np

BACKEND = "numpy"


def rollout_costs(x0, gains, delta, gamma, A, B, Astack, Bstack, Q, R,
                  ell, overflow=1e150):
    """Simulate `ell` steps for a batch of samples and accumulate costs.

    x0: (N, n) initial states; gains: (N, m, n) per-sample gains or (1, m, n)
    shared; delta: (N, ell, p) and gamma: (N, ell, q) noise draws. The cost of
    sample i is sum_{t=0}^{ell} x_t^T Q x_t + u_t^T R u_t with u_t = K_i x_t.
    A sample whose state exceeds `overflow` (max-abs) is flagged diverged and
    frozen, retaining its running cost.
    """
    x0 = np.asarray(x0, dtype=float)
    N, n = x0.shape
    gains = np.asarray(gains, dtype=float)
    shared = gains.shape[0] == 1
    p = Astack.shape[0]
    q = Bstack.shape[0]
    x = x0.copy()
    costs = np.zeros(N)
    alive = np.ones(N, dtype=bool)
    for t in range(ell + 1):
        if shared:
            u = x @ gains[0].T
        else:
            u = np.einsum("imn,in->im", gains, x)
        costs += np.einsum("ij,jk,ik->i", x, Q, x)
        costs += np.einsum("ij,jk,ik->i", u, R, u)
        if t == ell:
            break
        xn = x @ A.T + u @ B.T
        if p:
            xn += np.einsum("ip,pjk,ik->ij", delta[:, t, :], Astack, x)
        if q:
            xn += np.einsum("iq,qjk,ik->ij", gamma[:, t, :], Bstack, u)
        blown = alive & (np.abs(xn).max(axis=1) > overflow)
        if blown.any():
            alive &= ~blown
        if not alive.all():
            xn[~alive] = 0.0
        x = xn
    return costs, (~alive).astype(np.uint8)
