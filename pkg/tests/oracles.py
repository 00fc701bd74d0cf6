"""Brute-force reference implementations used only to check the library.

Everything here deliberately uses explicit dense inverses and literal
delete-one refits so it shares no code path with the package internals.
"""

import numpy as np
from scipy.spatial.distance import cdist


def matern52_ref(d, theta):
    h = np.sqrt(5.0) * np.asarray(d, dtype=float) / theta
    return (1.0 + h + h * h / 3.0) * np.exp(-h)


def corr_ref(X, theta, nugget):
    R = matern52_ref(cdist(X, X), theta)
    return R + nugget * np.eye(len(X))


def dense_gls(X, y, F, theta, nugget):
    """Trend, process variance and projected quantities via explicit inverses."""
    R = corr_ref(X, theta, nugget)
    Ri = np.linalg.inv(R)
    G = F.T @ Ri @ F
    a = np.linalg.solve(G, F.T @ Ri @ y)
    resid = y - F @ a
    sigma2 = float(resid @ Ri @ resid) / len(y)
    return a, sigma2, Ri, G


def dense_nll(X, y, F, theta, nugget, floor=0.0):
    a, sigma2, Ri, _ = dense_gls(X, y, F, theta, nugget)
    sigma2 = max(sigma2, floor)
    sign, logdet = np.linalg.slogdet(corr_ref(X, theta, nugget))
    n = len(y)
    return 0.5 * (logdet + n * np.log(2.0 * np.pi * sigma2) + n)


def dense_predict(X, y, F, theta, nugget, xq, fq):
    """Universal-Kriging mean/variance at one point, explicit-inverse route."""
    a, sigma2, Ri, G = dense_gls(X, y, F, theta, nugget)
    r = matern52_ref(np.linalg.norm(X - xq, axis=1), theta)
    mean = float(fq @ a + r @ Ri @ (y - F @ a))
    v = fq - F.T @ Ri @ r
    var = sigma2 * (1.0 - r @ Ri @ r + v @ np.linalg.solve(G, v))
    return mean, float(var)


def literal_loo(X, y, F, theta, nugget):
    """Delete-one refits with the kernel scale held fixed."""
    n = len(y)
    e = np.empty(n)
    s2 = np.empty(n)
    for s in range(n):
        idx = np.delete(np.arange(n), s)
        mean, var = dense_predict(X[idx], y[idx], F[idx], theta, nugget, X[s], F[s])
        e[s] = y[s] - mean
        s2[s] = var
    return e, s2, float(np.mean(e * e))


def nearest_site_scan(sites, u):
    """Exhaustive nearest-neighbor index with lowest-index tie break."""
    d = np.linalg.norm(sites - u, axis=1)
    return int(np.argmin(d))
