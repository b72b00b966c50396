"""Small linear-algebra helpers used throughout the package.

Inverses of Hermitian positive-definite matrices are never formed
explicitly; every application of an inverse goes through a Cholesky
solve.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla

from .errors import NumericsError

# reciprocal-condition thresholds for the Gram matrices inside projections
RCOND_ERROR = 1e-12
RCOND_WARN = 1e-8


def crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Standard circular complex Gaussian samples, unit variance per entry."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def hermitize(mat: np.ndarray) -> np.ndarray:
    """Return the Hermitian part (M + M^H)/2."""
    return 0.5 * (mat + mat.conj().swapaxes(-1, -2))


def solve_psd(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``mat x = rhs`` for Hermitian positive-definite ``mat``."""
    try:
        factor = sla.cho_factor(mat, check_finite=False)
    except sla.LinAlgError as exc:
        raise NumericsError(f"matrix not positive definite: {exc}") from exc
    return sla.cho_solve(factor, rhs, check_finite=False)


def enforce_rcond(rcond: float, context: str) -> None:
    """Conditioning policy for the Gram matrices inside projections.

    Below ``RCOND_ERROR`` is an error, below ``RCOND_WARN`` a warning.
    """
    if rcond < RCOND_ERROR:
        raise NumericsError(f"{context}: ill conditioned, rcond={rcond:.3e}")
    if rcond < RCOND_WARN:
        # stable message so repeated warnings deduplicate
        warnings.warn(f"{context}: poorly conditioned (rcond below {RCOND_WARN:g})",
                      stacklevel=4)
