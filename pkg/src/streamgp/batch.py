"""Batch-mode reference computations.

Full-GP prediction and log marginal likelihood, the one-shot sparse
posterior, and the collapsed lower bounds of the sparse variants, all
evaluated the classical way.  These are the oracles the streaming
recursion is validated against; none of them share the recursion's code
path beyond the kernel and variant definitions.

Everything sparse goes through the M x M Woodbury route, so no N x N
matrix is formed outside the size-guarded full-GP operations.  This
module deliberately has no analytic gradients: the recursive propagation
is the analytic path, and :func:`fd_gradient` supplies the independent
numerical one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractViolationError, NumericalError
from .inference import LOG_2PI, PredictiveDistribution
from .kernel import Hyperparameters, kernel_diag, kernel_matrix, _check_inputs
from .linalg import chol_with_jitter, symmetrize, tri_solve
from .model import ModelSpec, regularizer

DENSE_SIZE_GUARD = 5000


@dataclass(frozen=True)
class BatchBoundReport:
    """Collapsed lower bound split into its two parts.

    ``value = gaussian_term - regularizer_term`` always holds;
    ``gradient`` is filled by central finite differences when requested.
    """

    value: float
    gaussian_term: float
    regularizer_term: float
    gradient: np.ndarray | None = None


def _check_xy(X: np.ndarray, y: np.ndarray, h: Hyperparameters) -> tuple[np.ndarray, np.ndarray]:
    X = _check_inputs(X, h, "X")
    y = np.asarray(y, dtype=float).ravel()
    if y.size != X.shape[0] or y.size < 1:
        raise ContractViolationError(f"X has {X.shape[0]} rows but y has {y.size} entries")
    return X, y


def _guard(n: int, max_n: int, what: str) -> None:
    if n > max_n:
        raise ContractViolationError(
            f"{what} refused for N={n} > guard {max_n}; dense O(N^3) path only"
        )


def full_gp_predict(
    X: np.ndarray,
    y: np.ndarray,
    X_star: np.ndarray,
    h: Hyperparameters,
    with_noise: bool = False,
    max_n: int = DENSE_SIZE_GUARD,
) -> PredictiveDistribution:
    """Exact GP posterior predictive via Cholesky of K_XX + sigma_n^2 I."""
    X, y = _check_xy(X, y, h)
    X_star = _check_inputs(X_star, h, "X_star")
    _guard(X.shape[0], max_n, "full_gp_predict")
    Kyy = kernel_matrix(X, X, h) + h.noise_variance * np.eye(X.shape[0])
    factor = chol_with_jitter(Kyy, "K_XX + sigma_n^2 I")
    K_sX = kernel_matrix(X_star, X, h)
    mean = K_sX @ factor.solve(y)
    half = tri_solve(factor.L, K_sX.T)
    cov = symmetrize(kernel_matrix(X_star, X_star, h) - half.T @ half)
    if with_noise:
        cov = cov + h.noise_variance * np.eye(cov.shape[0])
    return PredictiveDistribution(mean=mean, cov=cov, includes_observation_noise=with_noise)


def full_gp_lml(
    X: np.ndarray, y: np.ndarray, h: Hyperparameters, max_n: int = DENSE_SIZE_GUARD
) -> float:
    """Exact log marginal likelihood log N(y | 0, K_XX + sigma_n^2 I)."""
    X, y = _check_xy(X, y, h)
    n = y.size
    _guard(n, max_n, "full_gp_lml")
    Kyy = kernel_matrix(X, X, h) + h.noise_variance * np.eye(n)
    factor = chol_with_jitter(Kyy, "K_XX + sigma_n^2 I")
    alpha = factor.solve(y)
    return -0.5 * (n * LOG_2PI + factor.logdet + float(y @ alpha))


def _sparse_pieces(X: np.ndarray, h: Hyperparameters, spec: ModelSpec):
    """Shared Woodbury ingredients: A = L^-1 K_RX, d, v."""
    K_RR = kernel_matrix(h.inducing_inputs, h.inducing_inputs, h)
    K_XR = kernel_matrix(X, h.inducing_inputs, h)
    factor = chol_with_jitter(K_RR, "K_RR")
    A = tri_solve(factor.L, K_XR.T)  # (M, N)
    d = np.maximum(kernel_diag(X, h) - np.sum(A * A, axis=0), 0.0)
    v = spec.noise_scale * d + h.noise_variance
    return factor, A, d, v


def batch_sparse_posterior(
    X: np.ndarray, y: np.ndarray, h: Hyperparameters, spec: ModelSpec
) -> tuple[np.ndarray, np.ndarray]:
    """One-shot posterior over inducing outputs (standard parametrization):

        Sigma_K = (K_RR^-1 + H^T V^-1 H)^-1,   mu_K = Sigma_K H^T V^-1 y.
    """
    X, y = _check_xy(X, y, h)
    factor, A, d, v = _sparse_pieces(X, h, spec)
    H = tri_solve(factor.L, A, trans=True).T  # K_XR K_RR^-1, (N, M)
    Lambda = symmetrize(factor.inverse() + (H.T / v[None, :]) @ H)
    post = chol_with_jitter(Lambda, "batch Lambda")
    Sigma_K = post.inverse()
    mu_K = Sigma_K @ (H.T @ (y / v))
    return mu_K, Sigma_K


def batch_bound(
    X: np.ndarray,
    y: np.ndarray,
    h: Hyperparameters,
    spec: ModelSpec,
    with_gradient: bool = True,
    fd_step: float = 1e-5,
) -> BatchBoundReport:
    """Collapsed lower bound of the selected variant.

    Gaussian term log N(y | 0, Q_XX + diag(v)) via the M x M Woodbury
    identity, minus half the variant regularizer.  The gradient entries
    come from :func:`fd_gradient` on the flat parameter vector.
    """
    X, y = _check_xy(X, y, h)
    n = y.size

    def value_at(theta: np.ndarray | None = None) -> tuple[float, float]:
        hh = h if theta is None else h.with_vector(theta)
        factor, A, d, v = _sparse_pieces(X, hh, spec)
        sqrt_v = np.sqrt(v)
        Abar = A / sqrt_v[None, :]
        Bmat = np.eye(A.shape[0]) + Abar @ Abar.T
        Lb = chol_with_jitter(Bmat, "Woodbury core")
        beta = y / sqrt_v
        cvec = tri_solve(Lb.L, Abar @ beta)
        logdet = float(np.sum(np.log(v))) + Lb.logdet
        quad = float(beta @ beta) - float(cvec @ cvec)
        gaussian = -0.5 * (n * LOG_2PI + logdet + quad)
        reg = 0.5 * regularizer(d, spec, hh)
        return gaussian, reg

    gaussian, reg = value_at()
    grad = None
    if with_gradient:
        grad = fd_gradient(lambda th: float(np.subtract(*value_at(th))), h.to_vector(), fd_step)
    return BatchBoundReport(
        value=gaussian - reg, gaussian_term=gaussian, regularizer_term=reg, gradient=grad
    )


def fd_gradient(
    f: Callable[[np.ndarray], float], theta: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central finite differences, step relative to max(1, |theta_i|)."""
    theta = np.asarray(theta, dtype=float)
    grad = np.empty(theta.size)
    for i in range(theta.size):
        hi = step * max(1.0, abs(theta[i]))
        up = theta.copy()
        up[i] += hi
        down = theta.copy()
        down[i] -= hi
        f_up, f_down = f(up), f(down)
        if not (np.isfinite(f_up) and np.isfinite(f_down)):
            raise NumericalError(f"non-finite objective while differencing coordinate {i}")
        grad[i] = (f_up - f_down) / (2.0 * hi)
    return grad
