"""Cholesky-based linear algebra helpers.

Every matrix inversion in the package goes through a Cholesky factor
obtained from :func:`chol_with_jitter`, which escalates a trace-scaled
diagonal jitter from 1e-8 up to 1e-4 before giving up.  Explicit inverses
are formed only where a full inverse matrix is genuinely required
(posterior covariance from precision); solves are used everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve as _cho_solve
from scipy.linalg import solve_triangular

from .errors import IllConditionedError

# Escalation ladder for the diagonal jitter, as multiples of mean(diag).
JITTER_START = 1e-8
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class CholFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix."""

    L: np.ndarray
    jitter: float  # absolute jitter that was added to the diagonal

    @property
    def logdet(self) -> float:
        """Log-determinant of the factored matrix."""
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b for the factored matrix A."""
        return _cho_solve((self.L, True), b, check_finite=False)

    def inverse(self) -> np.ndarray:
        """Dense inverse of the factored matrix (symmetrized)."""
        inv = self.solve(np.eye(self.L.shape[0]))
        return symmetrize(inv)


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return (a + a.T) / 2."""
    return 0.5 * (a + a.T)


def chol_with_jitter(a: np.ndarray, name: str = "matrix") -> CholFactor:
    """Cholesky-factorize ``a``, escalating diagonal jitter if needed.

    Tries the exact matrix first, then adds jitter scaled by the mean
    diagonal, multiplying by 10 each attempt from 1e-8 up to 1e-4.
    Raises :class:`IllConditionedError` naming ``name`` once the budget
    is exhausted.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise IllConditionedError(name, f"not square: shape {a.shape}")
    scale = float(np.mean(np.diag(a)))
    if not np.isfinite(scale):
        raise IllConditionedError(name, "non-finite diagonal")
    scale = max(scale, np.finfo(float).tiny)
    jitter = 0.0
    factor = JITTER_START
    while True:
        try:
            m = a if jitter == 0.0 else a + jitter * np.eye(a.shape[0])
            L = np.linalg.cholesky(m)
            return CholFactor(L=L, jitter=jitter)
        except np.linalg.LinAlgError:
            if factor > JITTER_MAX * (1 + 1e-12):
                raise IllConditionedError(
                    name, f"jitter escalated past {JITTER_MAX:g} * mean(diag)"
                ) from None
            jitter = factor * scale
            factor *= 10.0


def tri_solve(L: np.ndarray, b: np.ndarray, trans: bool = False) -> np.ndarray:
    """Solve L x = b (or L.T x = b when ``trans``) for lower-triangular L."""
    return solve_triangular(L, b, lower=True, trans=1 if trans else 0, check_finite=False)


def max_abs(a: np.ndarray) -> float:
    """max |a_ij|, 0.0 for empty arrays."""
    return float(np.max(np.abs(a))) if a.size else 0.0


def rel_diff(a: np.ndarray, b: np.ndarray, floor: float = 1.0) -> float:
    """Max absolute difference scaled by max(|b|, floor).

    Used throughout the tests as the "relative difference" between a
    computed quantity ``a`` and its reference ``b``.
    """
    denom = max(max_abs(np.asarray(b)), floor)
    return max_abs(np.asarray(a) - np.asarray(b)) / denom
