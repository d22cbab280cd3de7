"""Recursive Bayesian inference for the weight-space sparse GP model.

The posterior over the inducing outputs is propagated in natural
parameters

    eta_k    = eta_{k-1}    + H_k^T V_k^-1 y_k
    Lambda_k = Lambda_{k-1} + H_k^T V_k^-1 H_k

which is the information-filter form of the Kalman update: precision and
precision-weighted mean accumulate additively, so the result after K
mini-batches is independent of their order and equals the batch posterior.

Two parametrizations are supported.  The standard one uses
H = K_XR K_RR^-1 with prior precision Lambda_0 = K_RR^-1; the transformed
one uses H = K_XR with Lambda_0 = K_RR, avoiding the per-batch solve.
Predictions and the accumulated lower bound are identical in both.

Updates are functional (they return a fresh state), so a posterior is
safe to hand between threads as long as a single stream of updates owns
it; predictions and bound reads never mutate anything.

Each update also appends one term of the streaming collapsed lower bound

    psi_k = psi_{k-1} - (B/2) log 2pi
            - 1/2 [ logdet(Lambda_k) - logdet(Lambda_{k-1}) - logdet(V_k^-1)
                    + r_k^T S_k^-1 r_k + a_k ]

where r_k is the innovation, S_k = H_k Sigma_{k-1} H_k^T + V_k its
covariance (handled implicitly through S_k^-1 = V^-1 - V^-1 H Sigma_k H^T V^-1,
so no B x B matrix is ever formed), and a_k the variant regularizer.
After one pass over all data at fixed parameters, psi equals the batch
lower bound of the selected variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, DataError, IllConditionedError, NumericalError
from .kernel import Hyperparameters, _check_inputs, kernel_matrix
from .linalg import chol_with_jitter, symmetrize
from .model import (
    BatchGeometry,
    ModelSpec,
    basis,
    batch_geometry,
    prediction_correction,
    regularizer,
)

PARAM_STANDARD = "standard"
PARAM_TRANSFORMED = "transformed"
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class MiniBatch:
    """One block of training data."""

    X: np.ndarray  # (B, D)
    y: np.ndarray  # (B,)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.shape[0] != y.size or X.shape[0] < 1:
            raise ContractViolationError(
                f"mini-batch shapes disagree or empty: X {X.shape}, y {y.shape}"
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("mini-batch contains non-finite values")

    @property
    def size(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class PosteriorState:
    """Gaussian posterior over inducing outputs in natural parameters.

    ``Sigma`` caches Lambda^-1 (refreshed from a Cholesky factorization at
    every update), ``psi`` is the accumulated streaming lower bound and
    ``k`` counts absorbed mini-batches.
    """

    eta: np.ndarray  # (M,)
    Lambda: np.ndarray  # (M, M)
    Sigma: np.ndarray  # (M, M)
    logdet_Lambda: float
    psi: float
    k: int
    parametrization: str

    @property
    def mu(self) -> np.ndarray:
        """Posterior mean Sigma @ eta in the state's parametrization."""
        return self.Sigma @ self.eta

    @property
    def num_inducing(self) -> int:
        return self.eta.size


@dataclass
class KalmanIntermediates:
    """Innovation quantities from one update, kept for diagnostics and
    for the gradient recursion.

    Only O(B) / O(BM) pieces are stored eagerly; the full innovation
    covariance ``S`` and gain ``G`` are reconstructed on demand so that
    large batches never materialize a B x B matrix.
    """

    r: np.ndarray  # innovation residual (B,)
    v: np.ndarray  # diag of V_k (B,)
    t: np.ndarray  # H^T V^-1 r (M,)
    w: np.ndarray  # H Sigma_k H^T V^-1 r (B,)
    s_inv_r: np.ndarray  # S_k^-1 r (B,)
    Sigma_prev: np.ndarray  # (M, M)
    Sigma_new: np.ndarray  # (M, M)
    geometry: BatchGeometry

    @property
    def S(self) -> np.ndarray:
        """Innovation covariance H Sigma_{k-1} H^T + V (B x B, on demand)."""
        H = self.geometry.H
        return symmetrize(H @ self.Sigma_prev @ H.T) + np.diag(self.v)

    @property
    def G(self) -> np.ndarray:
        """Kalman gain Sigma_{k-1} H^T S^-1 = Sigma_k H^T V^-1 (M x B)."""
        H = self.geometry.H
        return self.Sigma_new @ (H.T / self.v[None, :])


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: np.ndarray  # (A,)
    cov: np.ndarray  # (A, A)
    includes_observation_noise: bool

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.cov).copy()


def init_state(
    h: Hyperparameters, spec: ModelSpec, parametrization: str = PARAM_STANDARD
) -> PosteriorState:
    """Prior state before any data.

    Standard parametrization: Sigma_0 = K_RR, Lambda_0 = K_RR^-1.
    Transformed: Sigma_0 = K_RR^-1, Lambda_0 = K_RR.  psi starts at 0 and
    collects a -(B/2) log 2pi constant with every batch, which sums to
    the usual -(N/2) log 2pi without requiring N up front.
    """
    if parametrization not in (PARAM_STANDARD, PARAM_TRANSFORMED):
        raise ContractViolationError(f"unknown parametrization {parametrization!r}")
    K_RR = kernel_matrix(h.inducing_inputs, h.inducing_inputs, h)
    factor = chol_with_jitter(K_RR, "K_RR")
    M = h.num_inducing
    if parametrization == PARAM_STANDARD:
        Lambda0 = factor.inverse()
        Sigma0 = K_RR
        logdet = -factor.logdet
    else:
        Lambda0 = K_RR
        Sigma0 = factor.inverse()
        logdet = factor.logdet
    return PosteriorState(
        eta=np.zeros(M),
        Lambda=Lambda0,
        Sigma=Sigma0,
        logdet_Lambda=logdet,
        psi=0.0,
        k=0,
        parametrization=parametrization,
    )


def update(
    state: PosteriorState,
    batch: MiniBatch,
    h: Hyperparameters,
    spec: ModelSpec,
) -> tuple[PosteriorState, KalmanIntermediates]:
    """Absorb one mini-batch into the posterior and the bound."""
    try:
        geom = batch_geometry(
            batch.X, h, spec, transformed=state.parametrization == PARAM_TRANSFORMED
        )
    except IllConditionedError as err:
        raise IllConditionedError(
            err.matrix_name, f"update of mini-batch {state.k + 1}: {err}"
        ) from None
    return update_with_geometry(state, batch, geom, h, spec)


def update_with_geometry(
    state: PosteriorState,
    batch: MiniBatch,
    geom: BatchGeometry,
    h: Hyperparameters,
    spec: ModelSpec,
) -> tuple[PosteriorState, KalmanIntermediates]:
    """Update path for callers that already built the batch geometry."""
    H, v = geom.H, geom.v
    y = batch.y
    a_k = regularizer(geom.d, spec, h)

    r = y - H @ (state.Sigma @ state.eta)
    eta_new = state.eta + H.T @ (y / v)
    Lambda_new = symmetrize(state.Lambda + (H.T / v[None, :]) @ H)
    try:
        factor = chol_with_jitter(Lambda_new, "Lambda")
    except IllConditionedError as err:
        raise IllConditionedError("Lambda", f"update of mini-batch {state.k + 1}: {err}") from None
    Sigma_new = factor.inverse()
    logdet_new = factor.logdet

    t = H.T @ (r / v)
    w = H @ (Sigma_new @ t)
    s_inv_r = (r - w) / v
    quad = float(r @ s_inv_r)
    logdet_V_inv = -float(np.sum(np.log(v)))

    psi_new = state.psi - 0.5 * (
        batch.size * LOG_2PI
        + logdet_new
        - state.logdet_Lambda
        - logdet_V_inv
        + quad
        + a_k
    )
    if not np.isfinite(psi_new):
        raise NumericalError(f"non-finite bound term at mini-batch {state.k + 1}")

    new_state = PosteriorState(
        eta=eta_new,
        Lambda=Lambda_new,
        Sigma=Sigma_new,
        logdet_Lambda=logdet_new,
        psi=psi_new,
        k=state.k + 1,
        parametrization=state.parametrization,
    )
    km = KalmanIntermediates(
        r=r,
        v=v,
        t=t,
        w=w,
        s_inv_r=s_inv_r,
        Sigma_prev=state.Sigma,
        Sigma_new=Sigma_new,
        geometry=geom,
    )
    return new_state, km


def predict(
    state: PosteriorState,
    X_star: np.ndarray,
    h: Hyperparameters,
    spec: ModelSpec,
    with_noise: bool = False,
) -> PredictiveDistribution:
    """Predictive distribution of the latent function (or noisy targets).

    mean = H_* mu_k, cov = H_* Sigma_k H_*^T + V_*, with H_* built to
    match the state's parametrization so no back-transform is needed.
    """
    X_star = _check_inputs(X_star, h, "X_star")
    H_star = basis(X_star, h, transformed=state.parametrization == PARAM_TRANSFORMED)
    mean = H_star @ (state.Sigma @ state.eta)
    cov = symmetrize(H_star @ state.Sigma @ H_star.T) + prediction_correction(X_star, spec, h)
    if with_noise:
        cov = cov + h.noise_variance * np.eye(cov.shape[0])
    return PredictiveDistribution(mean=mean, cov=symmetrize(cov), includes_observation_noise=with_noise)


def cumulative_bound(state: PosteriorState) -> float:
    """Accumulated streaming lower bound psi after ``state.k`` batches."""
    return state.psi


def kf_update_moments(
    mu: np.ndarray,
    Sigma: np.ndarray,
    batch: MiniBatch,
    h: Hyperparameters,
    spec: ModelSpec,
    transformed: bool = False,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Kalman update in moment form; cross-check path for the natural
    recursion.

        r = y - H mu;  S = H Sigma H^T + V;  G = Sigma H^T S^-1
        mu' = mu + G r;  Sigma' = Sigma - G S G^T

    Returns (mu', Sigma', psi_increment) where the increment matches the
    term :func:`update` adds to psi.  Forms the B x B innovation
    covariance, so intended for moderate batch sizes only.
    """
    geom = batch_geometry(batch.X, h, spec, transformed=transformed)
    H, v = geom.H, geom.v
    r = batch.y - H @ mu
    S = symmetrize(H @ Sigma @ H.T) + np.diag(v)
    factor = chol_with_jitter(S, "S")
    G = factor.solve(H @ Sigma).T
    mu_new = mu + G @ r
    Sigma_new = symmetrize(Sigma - G @ S @ G.T)
    a_k = regularizer(geom.d, spec, h)
    psi_inc = -0.5 * (
        batch.size * LOG_2PI + factor.logdet + float(r @ factor.solve(r)) + a_k
    )
    return mu_new, Sigma_new, psi_inc


def split_into_batches(n: int, batch_size: int, order: np.ndarray | None = None) -> list[np.ndarray]:
    """Index blocks of size ``batch_size`` (last one may be smaller)."""
    if batch_size < 1:
        raise ContractViolationError("batch_size must be >= 1")
    idx = np.arange(n) if order is None else np.asarray(order)
    return [idx[i : i + batch_size] for i in range(0, n, batch_size)]
