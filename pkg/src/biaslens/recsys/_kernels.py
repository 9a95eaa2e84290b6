"""Hot inner loops for the SGD-style trainers.

Each kernel is written once as a plain function and compiled with numba when
it is installed. fastmath stays off, so compiled and interpreted runs produce
bit-identical IEEE results; `*_py` names always point at the interpreted
versions for cross-checking.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(f):
            return f

        return deco


def _sgd_epoch_impl(P, Q, bu, bi, mu, us, cs, rs, order, lr, reg, use_bias):
    # one pass over observed cells in the given order; all per-cell updates
    # read pre-update values
    n_factors = P.shape[1]
    for t in range(order.shape[0]):
        k = order[t]
        u = us[k]
        i = cs[k]
        pred = 0.0
        for f in range(n_factors):
            pred += P[u, f] * Q[i, f]
        if use_bias:
            pred += mu + bu[u] + bi[i]
        e = rs[k] - pred
        if use_bias:
            bu[u] += lr * (e - reg * bu[u])
            bi[i] += lr * (e - reg * bi[i])
        for f in range(n_factors):
            pf = P[u, f]
            qf = Q[i, f]
            P[u, f] = pf + lr * (e * qf - reg * pf)
            Q[i, f] = qf + lr * (e * pf - reg * qf)


def _bpr_epoch_impl(P, Q, us, pos, neg, lr, reg):
    n_factors = P.shape[1]
    for t in range(us.shape[0]):
        u = us[t]
        i = pos[t]
        j = neg[t]
        if i == j:  # sentinel for a user with no unseen items; skip
            continue
        x = 0.0
        for f in range(n_factors):
            x += P[u, f] * (Q[i, f] - Q[j, f])
        if x > 0.0:
            ex = np.exp(-x)
            s = ex / (1.0 + ex)
        else:
            s = 1.0 / (1.0 + np.exp(x))
        for f in range(n_factors):
            pf = P[u, f]
            qi = Q[i, f]
            qj = Q[j, f]
            P[u, f] = pf + lr * (s * (qi - qj) - reg * pf)
            Q[i, f] = qi + lr * (s * pf - reg * qi)
            Q[j, f] = qj + lr * (-s * pf - reg * qj)


def _wmf_solve_side_impl(X, Y, BtB, ptr, idx, val, alpha, reg):
    # normal-equation solve per row of X with the rank-one correction trick:
    # A = Y'Y + sum_obs (c-1) y y' + reg I, b = sum_obs c y, c = 1 + alpha*r
    n_factors = Y.shape[1]
    for u in range(X.shape[0]):
        A = BtB.copy()
        for f in range(n_factors):
            A[f, f] += reg
        rhs = np.zeros(n_factors)
        for t in range(ptr[u], ptr[u + 1]):
            i = idx[t]
            cm1 = alpha * val[t]
            c = 1.0 + cm1
            for f1 in range(n_factors):
                yf1 = Y[i, f1]
                rhs[f1] += c * yf1
                for f2 in range(n_factors):
                    A[f1, f2] += cm1 * yf1 * Y[i, f2]
        X[u] = np.linalg.solve(A, rhs)


if HAVE_NUMBA:
    sgd_epoch_kernel = njit(cache=True)(_sgd_epoch_impl)
    bpr_epoch_kernel = njit(cache=True)(_bpr_epoch_impl)
    wmf_solve_side_kernel = njit(cache=True)(_wmf_solve_side_impl)
else:  # pragma: no cover
    sgd_epoch_kernel = _sgd_epoch_impl
    bpr_epoch_kernel = _bpr_epoch_impl
    wmf_solve_side_kernel = _wmf_solve_side_impl

sgd_epoch_py = _sgd_epoch_impl
bpr_epoch_py = _bpr_epoch_impl
wmf_solve_side_py = _wmf_solve_side_impl
