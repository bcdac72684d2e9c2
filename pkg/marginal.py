"""
Confounder-corrected marginal screening

For each SNP x_i solves
    min 0.5 * ||Y - x_i beta_i - 1 mu - L||_F^2 + lam * ||L||_*
by alternating an SVT step for L with a per-gene least-squares step for
(beta_i, mu). Stacking the beta_i rows gives the initial estimate B_hat.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from tqdm import tqdm

from errors import DegenerateDesignError, DimensionMismatchError
from models import CoefficientMatrix, MarginalFit, SnpFit
from svt import singular_values, soft_threshold_svd

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100
DEFAULT_K_CAP = 20


def relative_change(previous, current):
    scale = max(abs(previous), np.finfo(float).tiny)
    return abs(previous - current) / scale


def select_screen_lambda(Y, k_cap=DEFAULT_K_CAP):
    """
    Threshold keeping at most k_cap singular values of the centered expression

    lam is the (k_cap + 1)-th singular value of Y - 1 mean(Y); with fewer
    singular values than that, the smallest one is used.
    """
    if k_cap < 1:
        raise ValueError(f"k_cap must be at least 1, got {k_cap}")
    Y = np.asarray(Y, dtype=float)
    d = singular_values(Y - Y.mean(axis=0))
    if d.size == 0:
        return 0.0
    if d.size > k_cap:
        return float(d[k_cap])
    return float(d[-1])


def fit_one_snp(Y, x, lam, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """
    Alternating fit for a single SNP

    Args:
        Y: n x q expression matrix
        x: n genotype vector
        lam: nuclear-norm weight (>= 0)
        tol: stop when the relative objective change drops below tol
        max_iter: iteration cap

    Returns:
        SnpFit(beta, mu, L, trace, iterations, converged)
    """
    Y = np.asarray(Y, dtype=float)
    x = np.asarray(x, dtype=float).ravel()
    n, q = Y.shape
    if x.size != n:
        raise DimensionMismatchError(f"Genotype vector has {x.size} entries, expression has {n} rows")
    if n < 3:
        raise DegenerateDesignError(f"Need at least 3 samples, got {n}")
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")

    x_mean = x.mean()
    xc = x - x_mean
    sxx = float(xc @ xc)
    if np.ptp(x) == 0 or sxx <= 0:
        raise DegenerateDesignError("Genotype vector is constant")

    beta = np.zeros(q)
    mu = Y.mean(axis=0)
    L = np.zeros_like(Y)
    nuclear = 0.0

    def objective():
        residual = Y - np.outer(x, beta) - mu - L
        return 0.5 * float(np.sum(residual ** 2)) + lam * nuclear

    trace = [objective()]
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        # Step 1: L given (beta, mu)
        L, shrunk = soft_threshold_svd(Y - np.outer(x, beta) - mu, lam, return_singular_values=True)
        nuclear = float(np.sum(shrunk))

        # Step 2: per-gene least squares of Y - L on x with intercept
        target = Y - L
        beta = (xc @ target) / sxx
        mu = target.mean(axis=0) - x_mean * beta

        trace.append(objective())
        if relative_change(trace[-2], trace[-1]) < tol:
            converged = True
            break

    return SnpFit(beta, mu, L, np.asarray(trace), iterations, converged)


def fit_all_snps(Y, X, lam=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                 k_cap=DEFAULT_K_CAP, threads=1, progress=False):
    """
    Marginal fits for every SNP

    Args:
        Y: ExpressionMatrix
        X: GenotypeMatrix with the same sample order
        lam: nuclear-norm weight; chosen by select_screen_lambda when None
        threads: number of worker threads; results do not depend on it

    Returns:
        MarginalFit; constant SNPs get a zero row flagged degenerate
    """
    Y.check_samples(X)
    values = Y.values
    if lam is None:
        lam = select_screen_lambda(values, k_cap)
        logger.info(f"Screen lambda set to {lam:.6g} (rank cap {k_cap})")

    n, q = values.shape
    p = X.n_snps
    column_means = values.mean(axis=0)

    def fit_column(i):
        try:
            fit = fit_one_snp(values, X.values[:, i], lam, tol=tol, max_iter=max_iter)
        except DegenerateDesignError:
            return np.zeros(q), column_means, 0, False, True
        return fit.beta, fit.mu, fit.iterations, fit.converged, False

    indices = range(p)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(tqdm(pool.map(fit_column, indices), total=p,
                                desc="Marginal fits", disable=not progress))
    else:
        results = [fit_column(i) for i in tqdm(indices, desc="Marginal fits", disable=not progress)]

    beta_hat = np.vstack([r[0] for r in results]) if p else np.zeros((0, q))
    mu_hat = np.vstack([r[1] for r in results]) if p else np.zeros((0, q))
    iterations = np.array([r[2] for r in results], dtype=int)
    converged = np.array([r[3] for r in results], dtype=bool)
    degenerate = np.array([r[4] for r in results], dtype=bool)

    n_degenerate = int(degenerate.sum())
    n_slow = int((~converged & ~degenerate).sum())
    if n_degenerate:
        logger.warning(f"{n_degenerate} constant SNP(s) skipped with zero coefficients")
    if n_slow:
        logger.warning(f"{n_slow} SNP fit(s) hit max_iter={max_iter} before converging")

    return MarginalFit(
        beta_hat=CoefficientMatrix(beta_hat, X.snp_ids, Y.probe_ids),
        mu_hat=mu_hat,
        lam=float(lam),
        iterations_per_snp=iterations,
        converged=converged,
        degenerate=degenerate,
    )
