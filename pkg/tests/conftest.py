"""Shared helpers: instance builders and dense brute-force oracles.

The oracles here deliberately use plain numpy (dense N x N algebra,
np.linalg.solve / slogdet) rather than the package's Woodbury or
recursive code paths, so they stay independent of what they check.
"""

from __future__ import annotations

import numpy as np

from streamgp import Hyperparameters, ModelSpec, kernel_matrix
from streamgp.kernel import kernel_diag

LOG_2PI = float(np.log(2.0 * np.pi))


def farthest_point_subset(X: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Well-spread subset of rows (keeps test K_RR matrices well conditioned)."""
    X = np.atleast_2d(X)
    idx = [int(rng.integers(X.shape[0]))]
    d2 = np.sum((X - X[idx[0]]) ** 2, axis=1)
    for _ in range(m - 1):
        nxt = int(np.argmax(d2))
        idx.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[idx].copy()


def make_instance(
    seed: int,
    n: int,
    d: int = 1,
    m: int = 8,
    lengthscale=0.25,
    sigma0: float = 1.2,
    noise_std: float = 0.2,
):
    """Random regression instance with spread-out inducing inputs."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, (n, d))
    ls = np.broadcast_to(np.asarray(lengthscale, dtype=float), (d,))
    h = Hyperparameters(
        log_sigma0=float(np.log(sigma0)),
        log_lengthscales=np.log(ls).copy(),
        log_sigma_n=float(np.log(noise_std)),
        inducing_inputs=farthest_point_subset(X, m, rng),
    )
    K = kernel_matrix(X, X, h)
    f = np.linalg.cholesky(K + 1e-10 * np.eye(n)) @ rng.standard_normal(n)
    y = f + noise_std * rng.standard_normal(n)
    return X, y, h


# -- dense oracles -------------------------------------------------------------


def dense_Q(A: np.ndarray, B: np.ndarray, h: Hyperparameters) -> np.ndarray:
    """Q_AB = K_AR K_RR^-1 K_RB via a plain dense solve."""
    R = h.inducing_inputs
    K_RR = kernel_matrix(R, R, h)
    return kernel_matrix(A, R, h) @ np.linalg.solve(K_RR, kernel_matrix(R, B, h))


def dense_noise_diag(X: np.ndarray, h: Hyperparameters, spec: ModelSpec) -> np.ndarray:
    """diag(V) = c * diag(K_XX - Q_XX) + sigma_n^2 built densely."""
    d = np.maximum(kernel_diag(X, h) - np.diag(dense_Q(X, X, h)), 0.0)
    if spec.variant == "pep":
        c = spec.alpha
    elif spec.variant == "fitc":
        c = 1.0
    else:
        c = 0.0
    return c * d + h.sigma_n ** 2


def gauss_logpdf(y: np.ndarray, cov: np.ndarray) -> float:
    """log N(y | 0, cov) via slogdet and a dense solve."""
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    return -0.5 * (y.size * LOG_2PI + logdet + float(y @ np.linalg.solve(cov, y)))


def dense_bound(X: np.ndarray, y: np.ndarray, h: Hyperparameters, spec: ModelSpec) -> float:
    """Collapsed lower bound of the variant, written out with N x N matrices."""
    Q = dense_Q(X, X, h)
    v = dense_noise_diag(X, h, spec)
    gaussian = gauss_logpdf(y, Q + np.diag(v))
    d = np.maximum(kernel_diag(X, h) - np.diag(Q), 0.0)
    if spec.variant == "vfe":
        reg = float(np.sum(d)) / (2.0 * h.sigma_n ** 2)
    elif spec.variant == "pep":
        a = spec.alpha
        reg = (1.0 - a) / (2.0 * a) * float(np.sum(np.log1p(a * d / h.sigma_n ** 2)))
    else:
        reg = 0.0
    return gaussian - reg


def dense_predictive(
    X: np.ndarray, y: np.ndarray, X_star: np.ndarray, h: Hyperparameters, spec: ModelSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Published batch predictive of each variant, all dense.

    mean = Q_*X (Q_XX + V)^-1 y
    cov  = T_** - Q_*X (Q_XX + V)^-1 Q_X*

    with T = Q for SoR (overconfident by construction) and T = K for the
    corrected variants, V the variant noise diagonal.
    """
    Q_sX = dense_Q(X_star, X, h)
    mid = dense_Q(X, X, h) + np.diag(dense_noise_diag(X, h, spec))
    mean = Q_sX @ np.linalg.solve(mid, y)
    if spec.variant == "sor":
        T = dense_Q(X_star, X_star, h)
    else:
        T = kernel_matrix(X_star, X_star, h)
    cov = T - Q_sX @ np.linalg.solve(mid, Q_sX.T)
    return mean, 0.5 * (cov + cov.T)
