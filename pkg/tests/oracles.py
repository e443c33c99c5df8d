"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical kernels; the point is to
check them against plain numpy/scipy formulations of the same quantities.
"""

import numpy as np
from scipy.optimize import minimize


def standardized(X, scale=True):
    """Centered columns, optionally scaled to unit 1/n variance."""
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(axis=0)
    if not scale:
        return Xc
    return Xc / np.sqrt(np.mean(Xc**2, axis=0))


def smooth_loss(Z, rho_mat, omega, eta):
    a = np.sqrt(np.outer(1.0 / omega, omega))
    B = rho_mat * a
    R = Z - Z @ B.T
    return 0.5 * np.sum(eta * np.sum(R**2, axis=0))


def smooth_gradient(Z, rho_mat, omega, eta):
    """d/d rho_ij of the unpenalized joint loss, as a symmetric matrix."""
    a = np.sqrt(np.outer(1.0 / omega, omega))  # a[i, j] = sqrt(w_j / w_i)
    B = rho_mat * a
    R = Z - Z @ B.T  # residual of regression i in column i
    C = Z.T @ R  # C[j, i] = Z_j' r_i
    term = eta[None, :] * a.T * C  # [j, i] -> eta_i a_ij Z_j' r_i
    g = -(term + term.T)
    np.fill_diagonal(g, 0.0)
    return g


def space_kkt_violation(Z, rho_mat, omega, eta, lam):
    g = smooth_gradient(Z, rho_mat, omega, eta)
    iu = np.triu_indices(rho_mat.shape[0], 1)
    gv, rv = g[iu], rho_mat[iu]
    nz = rv != 0
    v = np.zeros_like(gv)
    v[nz] = np.abs(gv[nz] + lam * np.sign(rv[nz]))
    v[~nz] = np.maximum(np.abs(gv[~nz]) - lam, 0.0)
    return float(v.max())


def space_rho_minimizer(Z, omega, eta, x0=None):
    """Unpenalized minimizer over rho with omega and eta held fixed."""
    p = Z.shape[1]
    iu = np.triu_indices(p, 1)

    def unpack(v):
        R = np.zeros((p, p))
        R[iu] = v
        return R + R.T

    def f(v):
        return smooth_loss(Z, unpack(v), omega, eta)

    def grad(v):
        return smooth_gradient(Z, unpack(v), omega, eta)[iu]

    x0 = np.zeros(iu[0].size) if x0 is None else x0
    res = minimize(f, x0, jac=grad, method="BFGS", options={"gtol": 1e-12, "maxiter": 10000})
    return res.x


def constrained_min_variance(sigma, A, b):
    """argmin w' sigma w subject to A w = b, via the KKT linear system."""
    p = sigma.shape[0]
    m = A.shape[0]
    K = np.zeros((p + m, p + m))
    K[:p, :p] = 2.0 * sigma
    K[:p, p:] = A.T
    K[p:, :p] = A
    rhs = np.concatenate([np.zeros(p), b])
    return np.linalg.solve(K, rhs)[:p]


def lasso_kkt_violation(X, y, coef, lam):
    """Subgradient check for (1/2n)||y - X b||^2 + lam ||b||_1."""
    n = X.shape[0]
    g = -X.T @ (y - X @ coef) / n
    nz = coef != 0
    v = np.zeros_like(g)
    v[nz] = np.abs(g[nz] + lam * np.sign(coef[nz]))
    v[~nz] = np.maximum(np.abs(g[~nz]) - lam, 0.0)
    return float(v.max()) if v.size else 0.0


def random_pd(rng, p, cond=20.0):
    Q, _ = np.linalg.qr(rng.normal(size=(p, p)))
    ev = np.geomspace(1.0, cond, p) * rng.uniform(0.5, 2.0)
    return (Q * ev) @ Q.T
