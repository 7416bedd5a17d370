# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled rollout kernel: per-sample closed-loop simulation with
multiplicative noise. Same contract as _rollout_np.rollout_costs; the hot
loop runs without the GIL so chunks can execute on real threads.
"""

import numpy as np

cimport cython
from libc.math cimport fabs

BACKEND = "cython"


def rollout_costs(const double[:, ::1] x0, const double[:, :, ::1] gains,
                  const double[:, :, ::1] delta, const double[:, :, ::1] gamma,
                  const double[:, ::1] A, const double[:, ::1] B,
                  const double[:, :, ::1] Astack, const double[:, :, ::1] Bstack,
                  const double[:, ::1] Q, const double[:, ::1] R,
                  int ell, double overflow=1e150):
    cdef Py_ssize_t N = x0.shape[0]
    cdef Py_ssize_t n = x0.shape[1]
    cdef Py_ssize_t m = B.shape[1]
    cdef Py_ssize_t p = Astack.shape[0]
    cdef Py_ssize_t q = Bstack.shape[0]
    cdef bint shared = gains.shape[0] == 1

    costs_arr = np.zeros(N, dtype=np.float64)
    div_arr = np.zeros(N, dtype=np.uint8)
    work = np.empty(3 * n + m, dtype=np.float64)
    cdef double[::1] costs = costs_arr
    cdef unsigned char[::1] diverged = div_arr
    cdef double[::1] buf = work

    cdef Py_ssize_t i, t, a, b, e, g
    cdef double s, stage, coef, mx, c
    cdef unsigned char dead

    with nogil:
        for i in range(N):
            g = 0 if shared else i
            for a in range(n):
                buf[a] = x0[i, a]          # buf[0:n] holds x
            c = 0.0
            dead = 0
            for t in range(ell + 1):
                for a in range(m):         # u = K x in buf[2n : 2n+m]
                    s = 0.0
                    for b in range(n):
                        s += gains[g, a, b] * buf[b]
                    buf[2 * n + a] = s
                stage = 0.0
                for a in range(n):
                    s = 0.0
                    for b in range(n):
                        s += Q[a, b] * buf[b]
                    stage += buf[a] * s
                for a in range(m):
                    s = 0.0
                    for b in range(m):
                        s += R[a, b] * buf[2 * n + b]
                    stage += buf[2 * n + a] * s
                c += stage
                if t == ell:
                    break
                for a in range(n):         # x' = A x + B u in buf[n : 2n]
                    s = 0.0
                    for b in range(n):
                        s += A[a, b] * buf[b]
                    for b in range(m):
                        s += B[a, b] * buf[2 * n + b]
                    buf[n + a] = s
                for e in range(p):
                    coef = delta[i, t, e]
                    for a in range(n):
                        s = 0.0
                        for b in range(n):
                            s += Astack[e, a, b] * buf[b]
                        buf[n + a] += coef * s
                for e in range(q):
                    coef = gamma[i, t, e]
                    for a in range(n):
                        s = 0.0
                        for b in range(m):
                            s += Bstack[e, a, b] * buf[2 * n + b]
                        buf[n + a] += coef * s
                mx = 0.0
                for a in range(n):
                    if fabs(buf[n + a]) > mx:
                        mx = fabs(buf[n + a])
                if mx > overflow:
                    dead = 1
                    break
                for a in range(n):
                    buf[a] = buf[n + a]
            costs[i] = c
            diverged[i] = dead
    return costs_arr, div_arr
