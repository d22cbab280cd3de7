"""Weight-space view of inducing-point sparse GP variants.

Every supported approximation is a Bayesian linear regression on basis
functions of the inducing outputs,

    y_k = H_k u + gamma_k + eps_k,    u ~ N(0, K_RR),

where the variants differ only in three model-specific quantities:

* the extra per-point observation noise  diag(Vbar_k)  added to sigma_n^2,
* the prediction covariance correction  V_*,
* the regularizer  a_k  subtracted (times 1/2) from each term of the
  streaming lower bound.

variant   diag(Vbar)   V_*            a_k
-------   ----------   ------------   -------------------------------------
SoR       0            0              0
DTC       0            K** - Q**      0
FITC      d            K** - Q**      0
VFE       0            K** - Q**      sum_i d_i / sigma_n^2
PEP       alpha * d    K** - Q**      (1-alpha)/alpha * sum_i [log v_i - log sigma_n^2]

with d = diag(K_XX - Q_XX) >= 0 and v = diag(Vbar) + sigma_n^2.  PEP
interpolates between VFE (alpha -> 0) and FITC (alpha = 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError
from .kernel import Hyperparameters, kernel_diag, kernel_matrix, _check_inputs
from .linalg import CholFactor, chol_with_jitter, symmetrize, tri_solve

VARIANTS = ("sor", "dtc", "fitc", "vfe", "pep")


@dataclass(frozen=True)
class ModelSpec:
    """Sparse-variant selector; ``alpha`` is only meaningful for PEP."""

    variant: str
    alpha: float = 1.0

    def __post_init__(self):
        v = self.variant.lower()
        if v not in VARIANTS:
            raise ContractViolationError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        object.__setattr__(self, "variant", v)
        if v == "pep" and not 0.0 < self.alpha <= 1.0:
            raise ContractViolationError(f"PEP requires 0 < alpha <= 1, got {self.alpha}")

    @property
    def noise_scale(self) -> float:
        """Coefficient c in diag(Vbar) = c * d."""
        if self.variant == "pep":
            return self.alpha
        if self.variant == "fitc":
            return 1.0
        return 0.0


@dataclass
class BatchGeometry:
    """Per-mini-batch quantities shared between inference and gradients.

    ``H`` is the basis in the requested parametrization (K_XR K_RR^-1 when
    ``transformed`` is False, plain K_XR otherwise); ``d`` / ``v`` are the
    clamped Schur-complement diagonal and total per-point noise variance.
    The raw kernel matrices and the K_RR factor are kept because the
    gradient recursion consumes them.
    """

    H: np.ndarray  # (B, M)
    d: np.ndarray  # (B,)
    v: np.ndarray  # (B,)
    transformed: bool
    X: np.ndarray  # (B, D)
    K_XR: np.ndarray  # (B, M)
    K_RR: np.ndarray  # (M, M)
    prior_chol: CholFactor
    H_std: np.ndarray  # standard basis K_XR K_RR^-1, whatever the parametrization
    _K_RR_inv: np.ndarray | None = field(default=None, repr=False)

    @property
    def batch_size(self) -> int:
        return self.H.shape[0]

    def K_RR_inv(self) -> np.ndarray:
        """Dense inverse of the (jittered) K_RR, cached per batch."""
        if self._K_RR_inv is None:
            self._K_RR_inv = self.prior_chol.inverse()
        return self._K_RR_inv


def basis(X: np.ndarray, h: Hyperparameters, transformed: bool = False) -> np.ndarray:
    """Basis functions of the inducing outputs for inputs ``X``.

    Untransformed: H = K_XR K_RR^-1 (via Cholesky solve, never an explicit
    inverse).  Transformed: simply K_XR.
    """
    X = _check_inputs(X, h, "X")
    K_XR = kernel_matrix(X, h.inducing_inputs, h)
    if transformed:
        return K_XR
    factor = chol_with_jitter(kernel_matrix(h.inducing_inputs, h.inducing_inputs, h), "K_RR")
    return factor.solve(K_XR.T).T


def schur_diag(X: np.ndarray, h: Hyperparameters, H_std: np.ndarray, K_XR: np.ndarray) -> np.ndarray:
    """diag(K_XX - Q_XX) from already-built pieces, clamped at 0.

    Row-wise sums of H_std * K_XR give diag(Q_XX) without materializing
    any B x B matrix; the diagonal of a PSD Schur complement is clamped
    against round-off.
    """
    q_diag = np.sum(H_std * K_XR, axis=1)
    return np.maximum(kernel_diag(X, h) - q_diag, 0.0)


def noise_correction(d: np.ndarray, spec: ModelSpec, h: Hyperparameters) -> np.ndarray:
    """diag(Vbar): the variant-specific extra observation noise."""
    d = np.asarray(d, dtype=float)
    return spec.noise_scale * d


def total_noise(d: np.ndarray, spec: ModelSpec, h: Hyperparameters) -> np.ndarray:
    """diag(V) = diag(Vbar) + sigma_n^2."""
    return noise_correction(d, spec, h) + h.noise_variance


def regularizer(d: np.ndarray, spec: ModelSpec, h: Hyperparameters) -> float:
    """Bound regularizer a_k; enters the streaming bound as -a_k / 2.

    PEP:  (1-alpha)/alpha * sum_i [log(alpha d_i + sigma_n^2) - log sigma_n^2]
    VFE:  sum_i d_i / sigma_n^2
    SoR / DTC / FITC: 0.
    """
    d = np.asarray(d, dtype=float)
    if spec.variant == "vfe":
        return float(np.sum(d) / h.noise_variance)
    if spec.variant == "pep":
        a = spec.alpha
        v = a * d + h.noise_variance
        return float((1.0 - a) / a * (np.sum(np.log(v)) - d.size * np.log(h.noise_variance)))
    return 0.0


def prediction_correction(X_star: np.ndarray, spec: ModelSpec, h: Hyperparameters) -> np.ndarray:
    """V_*: the correction added to the predictive covariance.

    Zero for SoR (which is overconfident away from the data by design);
    the full Schur complement K_** - Q_** for every other variant.
    """
    X_star = _check_inputs(X_star, h, "X_star")
    A = X_star.shape[0]
    if spec.variant == "sor":
        return np.zeros((A, A))
    K_ss = kernel_matrix(X_star, X_star, h)
    K_sR = kernel_matrix(X_star, h.inducing_inputs, h)
    factor = chol_with_jitter(kernel_matrix(h.inducing_inputs, h.inducing_inputs, h), "K_RR")
    half = tri_solve(factor.L, K_sR.T)  # (M, A); Q_** = half.T half
    return symmetrize(K_ss - half.T @ half)


def batch_geometry(
    X: np.ndarray, h: Hyperparameters, spec: ModelSpec, transformed: bool = False
) -> BatchGeometry:
    """Assemble all per-batch quantities behind a single K_RR factorization."""
    X = _check_inputs(X, h, "X")
    K_RR = kernel_matrix(h.inducing_inputs, h.inducing_inputs, h)
    K_XR = kernel_matrix(X, h.inducing_inputs, h)
    factor = chol_with_jitter(K_RR, "K_RR")
    H_std = factor.solve(K_XR.T).T
    d = schur_diag(X, h, H_std, K_XR)
    v = total_noise(d, spec, h)
    return BatchGeometry(
        H=K_XR if transformed else H_std,
        d=d,
        v=v,
        transformed=transformed,
        X=X,
        K_XR=K_XR,
        K_RR=K_RR,
        prior_chol=factor,
        H_std=H_std,
    )
