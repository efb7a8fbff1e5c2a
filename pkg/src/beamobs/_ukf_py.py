"""Reference NumPy implementation of the unscented Kalman filter loop.

The compiled extension `_ukf_cy` implements the identical algorithm; this
module is the import-time fallback and the ground truth the extension is
tested against.
"""

from __future__ import annotations

import numpy as np


class FilterNumericsError(RuntimeError):
    """Covariance factorization failed beyond the jitter retry."""


def sigma_weights(n: int, alpha: float, beta: float, kappa_u: float):
    """Scaled sigma-point weights (gamma, mean weights, covariance weights)."""
    lam = alpha * alpha * (n + kappa_u) - n
    cfac = n + lam
    if cfac <= 0.0:
        raise ValueError(f"alpha^2 (n + kappa_u) = {cfac:.3e} must be positive")
    wm = np.full(2 * n + 1, 1.0 / (2.0 * cfac))
    wc = wm.copy()
    wm[0] = lam / cfac
    wc[0] = lam / cfac + (1.0 - alpha * alpha + beta)
    return float(np.sqrt(cfac)), wm, wc


def _factor_with_jitter(P: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor with one jitter retry.

    An exactly zero covariance (degenerate but consistent filter state) gets
    the zero factor instead of an error.
    """
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    if not P.any():
        return np.zeros_like(P)
    n = P.shape[0]
    jitter = 1e-12 * np.trace(P) / n
    try:
        return np.linalg.cholesky(P + jitter * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise FilterNumericsError(
            f"covariance factorization failed after jitter {jitter:.3e}"
        ) from exc


def _sigma_points(mean: np.ndarray, P: np.ndarray, gamma: float) -> np.ndarray:
    L = _factor_with_jitter(P)
    n = len(mean)
    points = np.empty((2 * n + 1, n))
    points[0] = mean
    points[1 : n + 1] = mean + gamma * L.T
    points[n + 1 :] = mean - gamma * L.T
    return points


def ukf_update(mean, P, y, M, C, Q, R, gamma, wm, wc):
    """One predict + measurement update; returns the posterior (mean, P)."""
    points = _sigma_points(mean, P, gamma)
    predicted = points @ M.T
    mean_pred = wm @ predicted
    dev = predicted - mean_pred
    P_pred = (dev * wc[:, None]).T @ dev + Q
    P_pred = 0.5 * (P_pred + P_pred.T)

    points2 = _sigma_points(mean_pred, P_pred, gamma)
    outputs = points2 @ C.T
    y_pred = wm @ outputs
    dy = outputs - y_pred
    S = (dy * wc[:, None]).T @ dy + R
    S = 0.5 * (S + S.T)
    dx = points2 - mean_pred
    P_xy = (dx * wc[:, None]).T @ dy

    Ls = np.linalg.cholesky(S)
    gain = np.linalg.solve(Ls.T, np.linalg.solve(Ls, P_xy.T)).T
    mean_new = mean_pred + gain @ (y - y_pred)
    P_new = P_pred - gain @ S @ gain.T
    P_new = 0.5 * (P_new + P_new.T)
    return mean_new, P_new


def run_filter(M, C, Q, R, measurements, mean0, P0, alpha, beta, kappa_u):
    """Filter a whole measurement sequence; returns (means, covariances).

    ``measurements[k]`` is taken at step k+1; row 0 of the outputs holds the
    prior (mean0, P0).
    """
    n = len(mean0)
    gamma, wm, wc = sigma_weights(n, alpha, beta, kappa_u)
    K = measurements.shape[0]
    means = np.empty((K + 1, n))
    covs = np.empty((K + 1, n, n))
    means[0] = mean0
    covs[0] = P0
    mean, P = np.array(mean0, dtype=float), np.array(P0, dtype=float)
    for k in range(K):
        mean, P = ukf_update(mean, P, measurements[k], M, C, Q, R, gamma, wm, wc)
        means[k + 1] = mean
        covs[k + 1] = P
    return means, covs
