"""
Singular value soft-thresholding, the proximal operator of the nuclear norm
"""

import logging

import numpy as np
from scipy import linalg

from errors import NonFiniteInputError
from models import SvdFactors

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-12


def svd(W):
    """
    Thin SVD with numerically-zero singular values dropped

    Singular values below RANK_TOLERANCE * d_1 are treated as zero, so the
    returned factors have r = numerical rank columns.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError(f"svd expects a 2-D matrix, got {W.ndim} dimension(s)")
    if not np.all(np.isfinite(W)):
        raise NonFiniteInputError("svd input contains NaN or infinite entries")

    n, q = W.shape
    if n == 0 or q == 0:
        return SvdFactors(np.zeros((n, 0)), np.zeros(0), np.zeros((q, 0)))

    try:
        U, d, Vt = linalg.svd(W, full_matrices=False, lapack_driver='gesdd', check_finite=False)
    except linalg.LinAlgError:
        logger.debug("gesdd did not converge, retrying with gesvd")
        U, d, Vt = linalg.svd(W, full_matrices=False, lapack_driver='gesvd', check_finite=False)

    keep = d > RANK_TOLERANCE * d[0] if d.size and d[0] > 0 else np.zeros(d.size, dtype=bool)
    r = int(np.count_nonzero(keep))
    return SvdFactors(U[:, :r], d[:r], Vt[:r].T)


def soft_threshold(x, threshold):
    """Elementwise sign(x) * max(|x| - threshold, 0)"""
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def soft_threshold_svd(W, lam, return_singular_values=False):
    """
    S_lam(W) = U diag((d_i - lam)_+) V^T

    The minimizer of 0.5 * ||W - Z||_F^2 + lam * ||Z||_*.

    Args:
        W: n x q matrix
        lam: non-negative threshold
        return_singular_values: also return the shrunk singular values

    Returns:
        Z, or (Z, shrunk singular values) when requested
    """
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    W = np.asarray(W, dtype=float)
    factors = svd(W)
    shrunk = np.maximum(factors.d - lam, 0.0)
    kept = shrunk > 0
    Z = (factors.U[:, kept] * shrunk[kept]) @ factors.V[:, kept].T
    if return_singular_values:
        return Z, shrunk[kept]
    return Z


def nuclear_norm(W):
    return float(np.sum(svd(W).d))


def singular_values(W):
    return svd(W).d
