"""
Sparse + low-rank joint regression on the screened SNPs

Minimizes
    ||Y - X_r B - 1 mu - L||_F^2 + rho * ||B||_1 + lam * ||L||_*
by block coordinate descent over L, mu and B, with Monte-Carlo
cross-validation over (rho, lam).

The loss carries no 1/2 factor, so the exact block minimizers use halved
thresholds: L <- S_{lam/2}(residual) and b_k <- soft(x_k^T r, rho/2) / ||x_k||^2.
The B block works on column-centered genotypes (mu absorbs the shift), which
decouples mu from B; the reported mu is for the uncentered X_r.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple

import numpy as np
import pandas as pd

from errors import DegenerateDesignError, DimensionMismatchError
from marginal import relative_change
from matrix_io import save_key_values, save_matrix, write_tsv
from models import Association, CvConfig, LorsFit
from svt import singular_values, soft_threshold, soft_threshold_svd

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 500
DEFAULT_GRID_POINTS = 8
MAX_REDRAWS = 10
MIN_TRAIN_SAMPLES = 10


class LorsState(NamedTuple):
    """Raw solver output on plain arrays"""

    B: np.ndarray
    mu: np.ndarray
    L: np.ndarray
    trace: list
    iterations: int
    converged: bool
    rank_L: int


# ========== LASSO BLOCK ==========

def lasso_block_update(T, X, B, rho, col_norms=None):
    """
    One cyclic coordinate-descent pass over the rows of B, all genes at once

    For every gene j minimizes ||T_j - X b_j||^2 + rho * ||b_j||_1 one
    coordinate at a time. Columns of X with zero norm keep b_k = 0.

    Args:
        T: n x q regression targets
        X: n x r design
        B: r x q current coefficients (not modified)
        rho: non-negative l1 weight
        col_norms: precomputed ||x_k||^2

    Returns:
        updated r x q coefficients
    """
    if rho < 0:
        raise ValueError(f"rho must be non-negative, got {rho}")
    if col_norms is None:
        col_norms = np.einsum('ij,ij->j', X, X)
    B = np.array(B, dtype=float, copy=True)
    residual = T - X @ B
    half_rho = rho / 2.0

    for k in range(X.shape[1]):
        x_k = X[:, k]
        old = B[k].copy()
        if col_norms[k] <= 0:
            if np.any(old):
                residual += np.outer(x_k, old)
            B[k] = 0.0
            continue
        correlation = x_k @ residual + col_norms[k] * old
        new = soft_threshold(correlation, half_rho) / col_norms[k]
        delta = new - old
        if np.any(delta):
            residual -= np.outer(x_k, delta)
        B[k] = new
    return B


def lasso_column_update(residual_col, X_r, b_col, rho, col_norms=None):
    """
    One coordinate-descent cycle for a single gene

    residual_col is the gene's target (Y_j - mu_j - L_j); the cycle lowers
    ||residual_col - X_r b||^2 + rho * ||b||_1.
    """
    residual_col = np.asarray(residual_col, dtype=float).reshape(-1, 1)
    b_col = np.asarray(b_col, dtype=float).reshape(-1, 1)
    X_r = np.asarray(X_r, dtype=float)
    if X_r.shape[0] != residual_col.shape[0] or X_r.shape[1] != b_col.shape[0]:
        raise DimensionMismatchError(
            f"Design {X_r.shape} does not fit target of length {residual_col.shape[0]} "
            f"and {b_col.shape[0]} coefficient(s)")
    return lasso_block_update(residual_col, X_r, b_col, rho, col_norms)[:, 0]


def lasso_solve(y, X, rho, tol=1e-12, max_cycles=10_000):
    """Repeat coordinate cycles until no coefficient moves by more than tol"""
    X = np.asarray(X, dtype=float)
    col_norms = np.einsum('ij,ij->j', X, X)
    b = np.zeros(X.shape[1])
    for _ in range(max_cycles):
        updated = lasso_column_update(y, X, b, rho, col_norms)
        moved = np.max(np.abs(updated - b)) if b.size else 0.0
        b = updated
        if moved <= tol:
            break
    return b


# ========== JOINT FIT ==========

def lors_objective(Y, X, B, mu, L, rho, lam):
    residual = Y - X @ B - mu - L
    penalty = rho * float(np.abs(B).sum())
    if lam > 0 and np.any(L):
        penalty += lam * float(np.sum(singular_values(L)))
    return float(np.sum(residual ** 2)) + penalty


def solve_lors(Y, X, rho, lam, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, B_init=None, L_init=None):
    """
    Block coordinate descent on plain arrays

    Each pass updates L, then mu, then B, each to its exact block minimizer,
    so the recorded objective never increases. lam = 0 switches the L block
    off (L stays 0).
    """
    if rho < 0:
        raise ValueError(f"rho must be non-negative, got {rho}")
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, q = Y.shape
    if X.shape[0] != n:
        raise DimensionMismatchError(f"Design has {X.shape[0]} rows, expression has {n}")
    r = X.shape[1]

    x_mean = X.mean(axis=0)
    Xc = X - x_mean
    col_norms = np.einsum('ij,ij->j', Xc, Xc)

    B = np.zeros((r, q)) if B_init is None else np.array(B_init, dtype=float, copy=True)
    L = np.zeros((n, q)) if (L_init is None or lam == 0) else np.array(L_init, dtype=float, copy=True)
    if B.shape != (r, q) or L.shape != (n, q):
        raise DimensionMismatchError(f"Initial values must be {r}x{q} (B) and {n}x{q} (L)")
    B[col_norms <= 0] = 0.0

    # mu_c is the intercept for the centered design
    mu_c = (Y - Xc @ B - L).mean(axis=0)
    nuclear = float(np.sum(singular_values(L))) if lam > 0 and np.any(L) else 0.0

    def objective():
        residual = Y - Xc @ B - mu_c - L
        return float(np.sum(residual ** 2)) + rho * float(np.abs(B).sum()) + lam * nuclear

    trace = [objective()]
    converged = False
    iterations = 0
    rank_L = 0

    for iterations in range(1, max_iter + 1):
        # (a) low-rank block
        if lam > 0:
            L, shrunk = soft_threshold_svd(Y - Xc @ B - mu_c, lam / 2.0, return_singular_values=True)
            nuclear = float(np.sum(shrunk))
            rank_L = int(shrunk.size)

        # (b) intercepts
        mu_c = (Y - L).mean(axis=0)

        # (c) sparse block
        B = lasso_block_update(Y - mu_c - L, Xc, B, rho, col_norms)

        trace.append(objective())
        if relative_change(trace[-2], trace[-1]) < tol:
            converged = True
            break

    mu = mu_c - x_mean @ B
    return LorsState(B, mu, L, trace, iterations, converged, rank_L)


def lors_fit(Y, X_r, rho, lam, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, B_init=None, L_init=None):
    """
    Joint fit of the expression matrix on the screened genotypes

    Args:
        Y: ExpressionMatrix
        X_r: GenotypeMatrix of the kept SNPs
        rho: l1 weight on B
        lam: nuclear-norm weight on L (0 disables L)
        B_init, L_init: optional starting values

    Returns:
        LorsFit; converged is False when max_iter was reached
    """
    Y.check_samples(X_r)
    constant = [snp for snp, spread in zip(X_r.snp_ids, np.ptp(X_r.values, axis=0)) if spread == 0]
    if constant:
        raise DegenerateDesignError(f"Constant genotype column(s): {', '.join(constant[:5])}")

    state = solve_lors(Y.values, X_r.values, rho, lam, tol=tol, max_iter=max_iter,
                       B_init=B_init, L_init=L_init)
    if not state.converged:
        logger.warning(f"Joint fit (rho={rho:.4g}, lambda={lam:.4g}) stopped at max_iter={max_iter}")

    fit = LorsFit(
        B=state.B,
        mu=state.mu,
        L=state.L,
        rho=float(rho),
        lam=float(lam),
        objective_trace=list(state.trace),
        rank_L=state.rank_L,
        nnz_B=int(np.count_nonzero(state.B)),
        row_ids=list(X_r.snp_ids),
        col_ids=list(Y.probe_ids),
        converged=state.converged,
        iterations=state.iterations,
    )
    logger.info(f"Joint fit: {fit.nnz_B} nonzero effect(s), rank(L) = {fit.rank_L}, "
                f"{fit.iterations} iteration(s)")
    return fit


# ========== CROSS-VALIDATION ==========

def null_thresholds(Y, X):
    """
    Smallest rho giving B = 0 and smallest lam giving L = 0 at the start

    Both are evaluated at mu = column means, L = 0, B = 0.
    """
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    Yc = Y - Y.mean(axis=0)
    Xc = X - X.mean(axis=0)
    rho_null = 2.0 * float(np.max(np.abs(Xc.T @ Yc))) if Xc.size and Yc.size else 0.0
    d = singular_values(Yc)
    lam_null = 2.0 * float(d[0]) if d.size else 0.0
    return rho_null, lam_null


def log_grid(upper, n_points=DEFAULT_GRID_POINTS, low_fraction=0.01):
    if upper <= 0:
        return [0.0]
    return [float(v) for v in np.geomspace(low_fraction * upper, upper, n_points)]


def default_cv_config(Y, X_r, n_points=DEFAULT_GRID_POINTS, holdout_fraction=0.25, repeats=5, seed=0):
    """Log-spaced grids from 1% of each null threshold up to the threshold"""
    Yv = Y.values if hasattr(Y, 'values') else Y
    Xv = X_r.values if hasattr(X_r, 'values') else X_r
    rho_null, lam_null = null_thresholds(Yv, Xv)
    logger.debug(f"Null thresholds: rho {rho_null:.4g}, lambda {lam_null:.4g}")
    return CvConfig(
        rho_grid=log_grid(rho_null, n_points),
        lambda_grid=log_grid(lam_null, n_points),
        holdout_fraction=holdout_fraction,
        repeats=repeats,
        seed=seed,
    )


def draw_splits(X, config):
    """
    Train/test index pairs, one per repeat

    A split whose training genotypes contain a constant column is redrawn,
    at most MAX_REDRAWS times per repeat.
    """
    n = X.shape[0]
    n_test = max(1, int(round(config.holdout_fraction * n)))
    n_train = n - n_test
    if n_train < MIN_TRAIN_SAMPLES:
        raise ValueError(f"Holdout leaves {n_train} training sample(s); at least {MIN_TRAIN_SAMPLES} needed")

    rng = np.random.default_rng(config.seed)
    splits = []
    for repeat in range(config.repeats):
        for attempt in range(MAX_REDRAWS + 1):
            order = rng.permutation(n)
            train, test = np.sort(order[:n_train]), np.sort(order[n_train:])
            if np.all(np.ptp(X[train], axis=0) > 0):
                break
            if attempt == MAX_REDRAWS:
                raise DegenerateDesignError(
                    f"CV repeat {repeat + 1}: every split left a constant training column")
            logger.warning(f"CV repeat {repeat + 1}: constant training column, redrawing split")
        splits.append((train, test))
    return splits


def _split_errors(Y, X, train, test, config, tol, max_iter):
    """Held-out error for every grid pair on one split, warm-started along rho"""
    errors = {}
    Y_tr, X_tr = Y[train], X[train]
    Y_te, X_te = Y[test], X[test]
    for lam in config.lambda_grid:
        B_prev, L_prev = None, None
        for rho in sorted(config.rho_grid, reverse=True):
            state = solve_lors(Y_tr, X_tr, rho, lam, tol=tol, max_iter=max_iter,
                               B_init=B_prev, L_init=L_prev)
            B_prev, L_prev = state.B, state.L
            # L is sample-specific, so held-out predictions use X B + mu only
            prediction = X_te @ state.B + state.mu
            errors[(rho, lam)] = float(np.sum((Y_te - prediction) ** 2))
    return errors


def lors_cv(Y, X_r, config, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, threads=1):
    """
    Monte-Carlo cross-validation over the (rho, lambda) grid

    Args:
        Y: ExpressionMatrix
        X_r: GenotypeMatrix of the kept SNPs
        config: CvConfig
        threads: repeats are evaluated in parallel; the result does not depend on it

    Returns:
        (best_rho, best_lambda, cv_table) where cv_table has one row per pair
        with the mean and standard deviation of the held-out error
    """
    Y.check_samples(X_r)
    Yv, Xv = Y.values, X_r.values
    splits = draw_splits(Xv, config)
    n_pairs = len(config.rho_grid) * len(config.lambda_grid)
    logger.info(f"Cross-validating {n_pairs} grid pair(s) over {len(splits)} split(s)")

    def evaluate(split):
        return _split_errors(Yv, Xv, split[0], split[1], config, tol, max_iter)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_split = list(pool.map(evaluate, splits))
    else:
        per_split = [evaluate(split) for split in splits]

    rows = []
    for rho in config.rho_grid:
        for lam in config.lambda_grid:
            values = np.array([errors[(rho, lam)] for errors in per_split])
            rows.append({'rho': rho, 'lambda': lam,
                         'cv_error': float(values.mean()),
                         'cv_sd': float(values.std(ddof=1)) if values.size > 1 else 0.0})
    table = pd.DataFrame(rows, columns=['rho', 'lambda', 'cv_error', 'cv_sd'])

    errors = table['cv_error'].to_numpy()
    tied = np.isclose(errors, errors.min(), rtol=1e-9, atol=0.0)
    candidates = table[tied]
    best = max(zip(candidates['rho'], candidates['lambda']))
    logger.info(f"CV selected rho = {best[0]:.4g}, lambda = {best[1]:.4g}")
    return float(best[0]), float(best[1]), table


# ========== OUTPUT ==========

def association_list(fit, top_k):
    """Largest nonzero effects by magnitude; ties ordered by (snp_id, probe_id)"""
    if top_k < 1:
        raise ValueError(f"top_k must be at least 1, got {top_k}")
    rows, cols = np.nonzero(fit.B)
    if rows.size == 0:
        return []
    effects = fit.B[rows, cols]
    snps = np.array([fit.row_ids[i] for i in rows], dtype=str)
    probes = np.array([fit.col_ids[j] for j in cols], dtype=str)
    order = np.lexsort((probes, snps, -np.abs(effects)))[:top_k]
    return [Association(str(snps[i]), str(probes[i]), float(effects[i])) for i in order]


def save_fit(fit, coefficients_path, metadata_path):
    """B as a coefficient TSV plus a key-value sidecar with the scalars"""
    save_matrix(fit.coefficients(), coefficients_path)
    save_key_values(fit.to_dict(), metadata_path)


def save_cv_table(table, path):
    write_tsv(table, path)
