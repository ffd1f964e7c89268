"""Compiled inner loops for SGD training.

Loops are written so that at t=1 the block kernel performs the exact same
float operations in the same order as the scalar kernel; the two trainers
then agree bit-for-bit given identical seeds.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def block_epoch(U, V, us, iis, targets, order, lr, l2):
    """One pass of simultaneous-update SGD over the given visit order.

    U: (n_users, t, d), V: (n_items, d, t), targets: (n, t, t).
    Both factor updates use the residual computed from pre-update values.
    """
    t = U.shape[1]
    d = U.shape[2]
    E = np.empty((t, t), dtype=np.float64)
    Uold = np.empty((t, d), dtype=np.float64)
    for idx in order:
        u = us[idx]
        i = iis[idx]
        for a in range(t):
            for b in range(t):
                s = 0.0
                for k in range(d):
                    s += U[u, a, k] * V[i, k, b]
                E[a, b] = s - targets[idx, a, b]
        for a in range(t):
            for k in range(d):
                Uold[a, k] = U[u, a, k]
        # U_u -= lr * (2 E V^T + 2 l2 U_u), V_i -= lr * (2 Uold^T E + 2 l2 V_i)
        for a in range(t):
            for k in range(d):
                g = 0.0
                for b in range(t):
                    g += E[a, b] * V[i, k, b]
                U[u, a, k] -= lr * (2.0 * g + 2.0 * l2 * Uold[a, k])
        for k in range(d):
            for b in range(t):
                g = 0.0
                for a in range(t):
                    g += Uold[a, k] * E[a, b]
                V[i, k, b] -= lr * (2.0 * g + 2.0 * l2 * V[i, k, b])


@numba.njit(cache=True)
def block_loss(U, V, us, iis, targets):
    """Sum of squared residual entries over all listed pairs."""
    t = U.shape[1]
    d = U.shape[2]
    total = 0.0
    for idx in range(us.shape[0]):
        u = us[idx]
        i = iis[idx]
        for a in range(t):
            for b in range(t):
                s = 0.0
                for k in range(d):
                    s += U[u, a, k] * V[i, k, b]
                e = s - targets[idx, a, b]
                total += e * e
    return total


@numba.njit(cache=True)
def scalar_epoch(P, Q, us, iis, targets, order, lr, l2):
    """One SGD pass for the scalar model; targets are normalized ratings."""
    d = P.shape[1]
    Pold = np.empty(d, dtype=np.float64)
    for idx in order:
        u = us[idx]
        i = iis[idx]
        s = 0.0
        for k in range(d):
            s += P[u, k] * Q[i, k]
        e = s - targets[idx]
        for k in range(d):
            Pold[k] = P[u, k]
        for k in range(d):
            g = e * Q[i, k]
            P[u, k] -= lr * (2.0 * g + 2.0 * l2 * Pold[k])
        for k in range(d):
            g = Pold[k] * e
            Q[i, k] -= lr * (2.0 * g + 2.0 * l2 * Q[i, k])


@numba.njit(cache=True)
def scalar_loss(P, Q, us, iis, targets):
    """Sum of squared scalar residuals over all listed pairs."""
    d = P.shape[1]
    total = 0.0
    for idx in range(us.shape[0]):
        u = us[idx]
        i = iis[idx]
        s = 0.0
        for k in range(d):
            s += P[u, k] * Q[i, k]
        e = s - targets[idx]
        total += e * e
    return total
