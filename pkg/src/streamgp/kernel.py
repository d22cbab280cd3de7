"""Squared-exponential ARD kernel, cross-covariances and analytic derivatives.

The kernel is

    k(x, x') = sigma0^2 * exp(-0.5 * sum_d (x_d - x'_d)^2 / l_d^2)

with one lengthscale per input dimension.  Amplitude, lengthscales and the
observation-noise standard deviation are stored and optimized in log space
so that positivity holds by construction; inducing-input coordinates are
unconstrained.  All derivative routines therefore return d/d(log sigma0),
d/d(log l_d), d/d(log sigma_n) or d/d(R[m][d]) directly.

The full parameter vector is laid out as

    theta = [log_sigma0, log_l_1, ..., log_l_D, log_sigma_n, R.ravel()]

giving P = D + 2 + M*D parameters in total.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolationError, DataError

# Parameter-class names used in reports and error messages.
CLASS_LOG_SIGMA0 = "log_sigma0"
CLASS_LOG_LENGTHSCALE = "log_lengthscale"
CLASS_LOG_SIGMA_N = "log_sigma_n"
CLASS_INDUCING = "inducing"


@dataclass(frozen=True, eq=False)
class Hyperparameters:
    """Kernel hyper-parameters plus inducing inputs.

    Fields hold the log of the positive quantities; ``inducing_inputs`` is
    the raw (M, D) coordinate matrix.  Construction validates finiteness,
    M >= 1, D >= 1 and that no two inducing rows are closer than
    ``min_separation`` (strictly positive distance when it is 0).
    """

    log_sigma0: float
    log_lengthscales: np.ndarray  # (D,)
    log_sigma_n: float
    inducing_inputs: np.ndarray  # (M, D)
    min_separation: float = field(default=0.0, compare=False)

    def __post_init__(self):
        ll = np.atleast_1d(np.asarray(self.log_lengthscales, dtype=float))
        R = np.asarray(self.inducing_inputs, dtype=float)
        if R.ndim != 2:
            raise ContractViolationError("inducing_inputs must be a 2-D (M, D) array")
        object.__setattr__(self, "log_lengthscales", ll)
        object.__setattr__(self, "inducing_inputs", R)
        if ll.ndim != 1 or ll.size < 1:
            raise ContractViolationError("log_lengthscales must be a 1-D array with D >= 1")
        if R.shape[0] < 1 or R.shape[1] != ll.size:
            raise ContractViolationError(
                f"inducing_inputs shape {R.shape} incompatible with D={ll.size}"
            )
        scalars = [self.log_sigma0, self.log_sigma_n]
        if not (np.all(np.isfinite(scalars)) and np.all(np.isfinite(ll)) and np.all(np.isfinite(R))):
            raise DataError("hyperparameters contain non-finite values")
        if R.shape[0] > 1:
            # Direct difference form: the expanded ||a||^2 + ||b||^2 - 2ab
            # cancels catastrophically for nearly-identical rows and would
            # report tiny separations as exact zero.
            diff = R[:, None, :] - R[None, :, :]
            d2 = np.sum(diff * diff, axis=-1)
            np.fill_diagonal(d2, np.inf)
            min_d = float(np.sqrt(d2.min()))
            if min_d <= self.min_separation:
                raise ContractViolationError(
                    f"inducing inputs too close: min pairwise distance {min_d:g} "
                    f"<= required separation {self.min_separation:g}"
                )

    # -- derived quantities ------------------------------------------------

    @property
    def sigma0(self) -> float:
        return float(np.exp(self.log_sigma0))

    @property
    def lengthscales(self) -> np.ndarray:
        return np.exp(self.log_lengthscales)

    @property
    def sigma_n(self) -> float:
        return float(np.exp(self.log_sigma_n))

    @property
    def noise_variance(self) -> float:
        return self.sigma_n ** 2

    @property
    def input_dim(self) -> int:
        return self.log_lengthscales.size

    @property
    def num_inducing(self) -> int:
        return self.inducing_inputs.shape[0]

    @property
    def n_params(self) -> int:
        return self.input_dim + 2 + self.num_inducing * self.input_dim

    # -- flat parameter vector ---------------------------------------------

    def to_vector(self) -> np.ndarray:
        """Flatten to the canonical parameter vector."""
        return np.concatenate(
            [
                [self.log_sigma0],
                self.log_lengthscales,
                [self.log_sigma_n],
                self.inducing_inputs.ravel(),
            ]
        )

    def with_vector(self, theta: np.ndarray) -> "Hyperparameters":
        """Rebuild from a flat parameter vector (same M, D and separation)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ContractViolationError(
                f"parameter vector has shape {theta.shape}, expected ({self.n_params},)"
            )
        D, M = self.input_dim, self.num_inducing
        return replace(
            self,
            log_sigma0=float(theta[0]),
            log_lengthscales=theta[1 : 1 + D].copy(),
            log_sigma_n=float(theta[1 + D]),
            inducing_inputs=theta[2 + D :].reshape(M, D).copy(),
        )

    def param_class(self, i: int) -> tuple:
        """Classify parameter ``i``.

        Returns ``("log_sigma0",)``, ``("log_lengthscale", d)``,
        ``("log_sigma_n",)`` or ``("inducing", m, d)``.
        """
        D, M = self.input_dim, self.num_inducing
        if not 0 <= i < self.n_params:
            raise ContractViolationError(f"parameter index {i} out of range [0, {self.n_params})")
        if i == 0:
            return (CLASS_LOG_SIGMA0,)
        if i <= D:
            return (CLASS_LOG_LENGTHSCALE, i - 1)
        if i == D + 1:
            return (CLASS_LOG_SIGMA_N,)
        flat = i - (D + 2)
        return (CLASS_INDUCING, flat // D, flat % D)

    def param_label(self, i: int) -> str:
        cls = self.param_class(i)
        if cls[0] == CLASS_LOG_LENGTHSCALE:
            return f"log_lengthscale[{cls[1]}]"
        if cls[0] == CLASS_INDUCING:
            return f"R[{cls[1]}][{cls[2]}]"
        return cls[0]


def _pairwise_sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Expanded form ||a||^2 + ||b||^2 - 2 a.b, clamped at 0 against round-off.
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.maximum(sq, 0.0)


def _check_inputs(a: np.ndarray, h: Hyperparameters, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != h.input_dim:
        raise ContractViolationError(
            f"{name} has shape {a.shape}, expected (*, {h.input_dim})"
        )
    return a


def se_ard(x: np.ndarray, x_other: np.ndarray, h: Hyperparameters) -> float:
    """Evaluate the kernel for a single pair of points."""
    return float(kernel_matrix(np.atleast_2d(x), np.atleast_2d(x_other), h)[0, 0])


def kernel_matrix(A: np.ndarray, B: np.ndarray, h: Hyperparameters) -> np.ndarray:
    """Cross-covariance matrix with entries k(a_i, b_j)."""
    A = _check_inputs(A, h, "A")
    B = _check_inputs(B, h, "B")
    inv_l = 1.0 / h.lengthscales
    sq = _pairwise_sqdist(A * inv_l, B * inv_l)
    return h.sigma0 ** 2 * np.exp(-0.5 * sq)


def kernel_diag(A: np.ndarray, h: Hyperparameters) -> np.ndarray:
    """diag of kernel_matrix(A, A): constant sigma0^2 for this kernel."""
    A = _check_inputs(A, h, "A")
    return np.full(A.shape[0], h.sigma0 ** 2)


def kernel_matrix_grad(
    A: np.ndarray,
    B: np.ndarray,
    h: Hyperparameters,
    wrt: int,
    a_is_inducing: bool = False,
    b_is_inducing: bool = False,
) -> np.ndarray:
    """Derivative of the cross-covariance matrix w.r.t. one parameter.

    ``wrt`` indexes the flat parameter vector.  Log-parameter derivatives
    are chain-ruled (e.g. dK/dlog sigma0 = 2K); the noise derivative is a
    zero matrix since the kernel does not involve sigma_n.  For an
    inducing coordinate R[m][d], the identity flags declare which of A, B
    actually *is* the inducing-input matrix; the result is then nonzero
    only in row/column m of the flagged side(s).
    """
    A = _check_inputs(A, h, "A")
    B = _check_inputs(B, h, "B")
    cls = h.param_class(wrt)
    if cls[0] == CLASS_LOG_SIGMA0:
        return 2.0 * kernel_matrix(A, B, h)
    if cls[0] == CLASS_LOG_SIGMA_N:
        return np.zeros((A.shape[0], B.shape[0]))
    if cls[0] == CLASS_LOG_LENGTHSCALE:
        d = cls[1]
        K = kernel_matrix(A, B, h)
        diff = A[:, d][:, None] - B[:, d][None, :]
        return K * diff ** 2 / h.lengthscales[d] ** 2
    # Inducing coordinate R[m][d].
    _, m, d = cls
    if not (a_is_inducing or b_is_inducing):
        raise ContractViolationError(
            "inducing-coordinate derivative requires A or B to be the inducing inputs"
        )
    K = kernel_matrix(A, B, h)
    l2 = h.lengthscales[d] ** 2
    out = np.zeros_like(K)
    if b_is_inducing:
        # d k(a_i, r_m) / d r_md = k * (a_id - r_md) / l_d^2
        out[:, m] += K[:, m] * (A[:, d] - h.inducing_inputs[m, d]) / l2
    if a_is_inducing:
        out[m, :] += K[m, :] * (B[:, d] - h.inducing_inputs[m, d]) / l2
    if a_is_inducing and b_is_inducing:
        out[m, m] = 0.0  # k(r_m, r_m) is constant in r_m
    return out


def inducing_grad_vectors(
    X: np.ndarray, h: Hyperparameters, K_XR: np.ndarray, K_RR: np.ndarray, m: int, d: int
) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero pieces of the inducing-coordinate kernel derivatives.

    For parameter R[m][d] the derivative matrices are sparse:

        dK_XR/dR[m][d] = gamma e_m^T      (column m only)
        dK_RR/dR[m][d] = e_m beta^T + beta e_m^T

    Returns ``(gamma, beta)`` computed from already-materialized kernel
    matrices, avoiding any dense rebuild.
    """
    l2 = h.lengthscales[d] ** 2
    gamma = K_XR[:, m] * (X[:, d] - h.inducing_inputs[m, d]) / l2
    beta = K_RR[m, :] * (h.inducing_inputs[:, d] - h.inducing_inputs[m, d]) / l2
    # beta[m] is already 0 because the coordinate difference vanishes.
    return gamma, beta
