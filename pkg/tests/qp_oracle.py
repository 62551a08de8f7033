"""Exact solution of small SVM duals, independent of the SMO code path.

An interior-point QP solve (cvxopt) identifies the active set; the KKT
system restricted to the free variables is then solved directly, which
removes the interior-point residual.
"""

import numpy as np
from cvxopt import matrix, solvers

solvers.options["show_progress"] = False
solvers.options["abstol"] = 1e-12
solvers.options["reltol"] = 1e-12
solvers.options["feastol"] = 1e-12
solvers.options["maxiters"] = 200


def gaussian_gram(X, Z, gamma):
    d = ((X[:, None, :] - Z[None, :, :]) ** 2).sum(-1)
    return np.exp(-gamma * d)


def _rho_from_bounds(a, y, g, C):
    # interval of feasible rho when every variable sits at a bound
    yg = y * g
    lo, hi = -np.inf, np.inf
    for i in range(len(a)):
        at_c = a[i] >= C
        if (at_c and y[i] < 0) or (not at_c and y[i] > 0):
            hi = min(hi, yg[i])
        else:
            lo = max(lo, yg[i])
    if np.isinf(hi):
        return lo
    if np.isinf(lo):
        return hi
    return 0.5 * (lo + hi)


def solve(K, y, C):
    """Return ``(alpha, rho, objective)`` for min 1/2 a'Qa - e'a."""
    n = len(y)
    Q = np.outer(y, y) * K
    P = matrix(Q + 1e-14 * np.eye(n))
    q = matrix(-np.ones(n))
    G = matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = matrix(np.concatenate([np.zeros(n), C * np.ones(n)]))
    A = matrix(y.reshape(1, -1).astype(float))
    b = matrix(0.0)
    sol = solvers.qp(P, q, G, h, A, b)
    a = np.clip(np.array(sol["x"]).ravel(), 0, C)

    eps = 1e-6 * max(C, 1.0)
    free = (a > eps) & (a < C - eps)
    at_c = a >= C - eps
    a_fixed = np.where(at_c, C, 0.0)
    polished = a_fixed.copy()
    rho = None
    if free.any():
        F = np.flatnonzero(free)
        U = np.flatnonzero(~free)
        m = len(F)
        M = np.zeros((m + 1, m + 1))
        M[:m, :m] = Q[np.ix_(F, F)]
        M[:m, m] = y[F]
        M[m, :m] = y[F]
        rhs = np.concatenate([1.0 - Q[np.ix_(F, U)] @ a_fixed[U], [-(y[U] @ a_fixed[U])]])
        z = np.linalg.lstsq(M, rhs, rcond=None)[0]
        polished[F] = z[:m]
        if np.all(polished[F] > 0) and np.all(polished[F] < C):
            rho = -z[m]
        else:
            polished = a
    else:
        # every variable bounded: keep the bounds if they are feasible
        if abs(y @ a_fixed) < 1e-9:
            polished = a_fixed
        else:
            polished = a
    g = Q @ polished - 1.0
    if rho is None:
        free = (polished > 0) & (polished < C)
        rho = float((y * g)[free].mean()) if free.any() else _rho_from_bounds(polished, y, g, C)
    obj = 0.5 * polished @ Q @ polished - polished.sum()
    return polished, float(rho), float(obj)
