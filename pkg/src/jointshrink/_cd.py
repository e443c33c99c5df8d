"""Compiled coordinate-descent kernels.

Both solvers work on Gram matrices so a coordinate update costs O(p)
rather than O(n).
"""

import numpy as np
from numba import njit

# partial correlations live in (-1, 1); updates are projected onto this box
RHO_BOUND = 1.0 - 1e-10


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True, nogil=True)
def space_coef_matrix(rho, omega):
    """Column i holds b_i with X @ b_i the residual of regression i."""
    p = omega.shape[0]
    B = np.empty((p, p))
    for i in range(p):
        for j in range(p):
            if i == j:
                B[j, i] = 1.0
            else:
                B[j, i] = -rho[i, j] * np.sqrt(omega[j] / omega[i])
    return B


@njit(cache=True, nogil=True)
def _space_update(i, j, G, C, rho, omega, eta, lam):
    a_ij = np.sqrt(omega[j] / omega[i])
    a_ji = 1.0 / a_ij
    r = rho[i, j]
    num = (eta[i] * a_ij * (C[j, i] + r * a_ij * G[j, j])
           + eta[j] * a_ji * (C[i, j] + r * a_ji * G[i, i]))
    den = eta[i] * a_ij * a_ij * G[j, j] + eta[j] * a_ji * a_ji * G[i, i]
    # exact minimiser of a convex 1-d problem on an interval: clip the free one
    new = min(max(_soft(num, lam) / den, -RHO_BOUND), RHO_BOUND)
    delta = new - r
    if delta != 0.0:
        p = G.shape[0]
        ci = delta * a_ij
        cj = delta * a_ji
        for k in range(p):
            C[k, i] -= ci * G[k, j]
            C[k, j] -= cj * G[k, i]
        rho[i, j] = new
        rho[j, i] = new
    # change measured in gradient units so the stopping rule is scale-free
    return abs(delta) * den


@njit(cache=True, nogil=True)
def space_rho_step(G, rho, omega, eta, lam, tol, max_sweeps):
    """Minimise the penalised joint loss over rho with omega, eta fixed.

    ``rho`` (symmetric, zero diagonal) is updated in place. Pairs are
    visited in lexicographic order; after each full sweep the nonzero
    pairs are cycled until stable, then a full sweep looks for violators.
    A coordinate's change is ``|delta rho| * curvature``, the shift it
    induces in its own gradient, so ``tol`` bounds the KKT residual
    independently of n and of the omega scale.

    Returns (sweeps, converged).
    """
    p = G.shape[0]
    B = space_coef_matrix(rho, omega)
    C = G @ B
    sweeps = 0
    n_pairs = p * (p - 1) // 2
    act_i = np.empty(n_pairs, dtype=np.int64)
    act_j = np.empty(n_pairs, dtype=np.int64)
    while sweeps < max_sweeps:
        # full sweep
        max_change = 0.0
        for i in range(p):
            for j in range(i + 1, p):
                d = _space_update(i, j, G, C, rho, omega, eta, lam)
                if d > max_change:
                    max_change = d
        sweeps += 1
        if max_change <= tol:
            return sweeps, True
        n_act = 0
        for i in range(p):
            for j in range(i + 1, p):
                if rho[i, j] != 0.0:
                    act_i[n_act] = i
                    act_j[n_act] = j
                    n_act += 1
        while sweeps < max_sweeps:
            max_change = 0.0
            for k in range(n_act):
                d = _space_update(act_i[k], act_j[k], G, C, rho, omega, eta, lam)
                if d > max_change:
                    max_change = d
            sweeps += 1
            if max_change <= tol:
                break
    return sweeps, False


@njit(cache=True, nogil=True)
def space_gradient(G, rho, omega, eta):
    """Coordinate gradient of the unpenalised joint loss for every pair."""
    p = G.shape[0]
    B = space_coef_matrix(rho, omega)
    C = G @ B
    grad = np.zeros((p, p))
    for i in range(p):
        for j in range(i + 1, p):
            a_ij = np.sqrt(omega[j] / omega[i])
            g = -(eta[i] * a_ij * C[j, i] + eta[j] / a_ij * C[i, j])
            grad[i, j] = g
            grad[j, i] = g
    return grad


@njit(cache=True, nogil=True)
def space_rss(G, rho, omega):
    """Residual sums of squares b_i' G b_i of the p regressions."""
    p = G.shape[0]
    B = space_coef_matrix(rho, omega)
    C = G @ B
    out = np.empty(p)
    for i in range(p):
        s = 0.0
        for k in range(p):
            s += B[k, i] * C[k, i]
        out[i] = s
    return out


@njit(cache=True, nogil=True)
def lasso_gram(Q, c, lam, beta, tol, max_sweeps):
    """Coordinate descent for 0.5 * b'Qb - c'b + lam * ||b||_1.

    With Q = X'X/n and c = X'y/n this is the usual
    (1/2n)||y - Xb||^2 + lam ||b||_1 lasso. ``beta`` is updated in place.
    Returns (sweeps, converged).
    """
    m = Q.shape[0]
    grad = c - Q @ beta  # X'(y - Xb)/n
    sweeps = 0
    active = np.empty(m, dtype=np.int64)
    while sweeps < max_sweeps:
        max_change = 0.0
        for k in range(m):
            old = beta[k]
            z = grad[k] + Q[k, k] * old
            new = _soft(z, lam) / Q[k, k]
            d = new - old
            if d != 0.0:
                for l in range(m):
                    grad[l] -= d * Q[l, k]
                beta[k] = new
                if abs(d) > max_change:
                    max_change = abs(d)
        sweeps += 1
        if max_change <= tol:
            return sweeps, True
        n_act = 0
        for k in range(m):
            if beta[k] != 0.0:
                active[n_act] = k
                n_act += 1
        while sweeps < max_sweeps:
            max_change = 0.0
            for a in range(n_act):
                k = active[a]
                old = beta[k]
                z = grad[k] + Q[k, k] * old
                new = _soft(z, lam) / Q[k, k]
                d = new - old
                if d != 0.0:
                    for l in range(m):
                        grad[l] -= d * Q[l, k]
                    beta[k] = new
                    if abs(d) > max_change:
                        max_change = abs(d)
            sweeps += 1
            if max_change <= tol:
                break
    return sweeps, False
