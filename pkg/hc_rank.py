"""
Higher-Criticism SNP ranking

standardize() turns the marginal estimates into Z-scores, hc_statistic()
scores one Z row, hc_rank_all() ranks every SNP and screen_top_n() keeps the
top of the ranking. baseline_rank() provides the row-mean and extreme-value
rankings used for comparison.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import ndtr, ndtri

from errors import DimensionMismatchError
from models import HcScoreTable, ScreenResult, ZscoreMatrix

logger = logging.getLogger(__name__)

GRID_MODES = ('unrestricted', 'restricted')
BASELINE_METHODS = ('rowmeans', 'extremeval')

# residual variances at or below this fraction of the gene's variance count as zero
ZERO_VARIANCE_RATIO = 1e-24
# Y-sized slabs per standardization chunk
CHUNK_ENTRIES = 4_000_000


def normal_tail(t):
    """P(N(0,1) > t), kept away from 0 so the HC denominator stays finite"""
    return np.clip(ndtr(-np.asarray(t, dtype=float)), 1e-300, None)


def rank_scores(scores, snp_ids):
    """
    Ranks 1..p from descending scores

    Ties go to the lexicographically smaller snp_id.
    """
    scores = np.asarray(scores, dtype=float)
    ids = np.asarray(snp_ids, dtype=str)
    order = np.lexsort((ids, -scores))
    rank = np.empty(scores.size, dtype=int)
    rank[order] = np.arange(1, scores.size + 1)
    return rank


# ========== STANDARDIZATION ==========

def standardize(beta_hat, Y, X, center_x=True):
    """
    Z_ij = beta_ij / sqrt( (x_i^T x_i)^-1 * var(Y_j - x_i beta_ij) )

    Args:
        beta_hat: CoefficientMatrix (SNPs in rows)
        Y: ExpressionMatrix
        X: GenotypeMatrix holding every SNP in beta_hat
        center_x: use the centered x_i in x_i^T x_i

    Returns:
        ZscoreMatrix; entries with zero residual variance are 0 and flagged
    """
    Y.check_samples(X)
    if beta_hat.col_ids != Y.probe_ids:
        raise DimensionMismatchError("Coefficient columns do not match expression probes")
    if beta_hat.row_ids != X.snp_ids:
        X = X.subset(beta_hat.row_ids)

    B = beta_hat.values
    G = X.values
    Yv = Y.values
    p, q = B.shape
    n = Yv.shape[0]

    gene_var = Yv.var(axis=0, ddof=1)
    floor = ZERO_VARIANCE_RATIO * np.maximum(gene_var, 1.0)

    if center_x:
        Gc = G - G.mean(axis=0)
        sxx = np.einsum('ij,ij->j', Gc, Gc)
    else:
        sxx = np.einsum('ij,ij->j', G, G)

    Z = np.zeros((p, q))
    zero_variance = np.zeros((p, q), dtype=bool)
    chunk = max(1, CHUNK_ENTRIES // max(n * q, 1))

    for start in range(0, p, chunk):
        stop = min(start + chunk, p)
        # residuals Y_j - x_i beta_ij for the SNPs in this chunk: (chunk, n, q)
        residual = Yv[None, :, :] - G[:, start:stop].T[:, :, None] * B[start:stop, None, :]
        res_var = residual.var(axis=1, ddof=1)

        col_sxx = sxx[start:stop, None]
        valid = (res_var > floor) & (col_sxx > 0)
        scale = np.sqrt(np.where(valid, res_var, 1.0) / np.where(col_sxx > 0, col_sxx, 1.0))
        Z[start:stop] = np.where(valid, B[start:stop] / scale, 0.0)
        zero_variance[start:stop] = ~valid

    n_flagged = int(zero_variance.sum())
    if n_flagged:
        logger.warning(f"{n_flagged} SNP-probe pair(s) with zero residual variance set to Z = 0")

    return ZscoreMatrix(Z, list(beta_hat.row_ids), list(beta_hat.col_ids), zero_variance)


# ========== HIGHER CRITICISM ==========

def hc_statistic(z_row, grid='unrestricted', return_threshold=False):
    """
    HC = max_t sqrt(q) * (S(t)/q - tail(t)) / sqrt(tail(t) * (1 - tail(t)))

    S(t) counts |z_j| >= t and tail(t) = P(N(0,1) > t). The maximum runs over
    the distinct observed |z_j|; in restricted mode only thresholds with
    tail(t) >= 1/q are used, falling back to tail^-1(1/q) when none are.

    Args:
        z_row: q Z-scores
        grid: 'unrestricted' (every observed |z|, the default) or 'restricted'
        return_threshold: also return (t at the maximum, grid size)

    Returns:
        HC value, or (HC, t_star, grid_size)
    """
    if grid not in GRID_MODES:
        raise ValueError(f"grid must be one of {', '.join(GRID_MODES)}, got {grid!r}")
    z = np.abs(np.asarray(z_row, dtype=float).ravel())
    q = z.size
    if q < 2:
        raise ValueError(f"hc_statistic needs at least 2 entries, got {q}")
    if not np.all(np.isfinite(z)):
        raise ValueError("hc_statistic input contains NaN or infinite entries")

    sorted_z = np.sort(z)
    thresholds = np.unique(sorted_z)
    if grid == 'restricted':
        thresholds = thresholds[normal_tail(thresholds) >= 1.0 / q]
        if thresholds.size == 0:
            thresholds = np.array([float(-ndtri(1.0 / q))])

    counts = q - np.searchsorted(sorted_z, thresholds, side='left')
    tail = normal_tail(thresholds)
    values = np.sqrt(q) * (counts / q - tail) / np.sqrt(tail * (1.0 - tail))

    best = int(np.argmax(values))
    if return_threshold:
        return float(values[best]), float(thresholds[best]), int(thresholds.size)
    return float(values[best])


def hc_rank_all(Z, snp_ids=None, grid='unrestricted', threads=1):
    """
    Score every Z row and rank the SNPs (rank 1 = largest HC)

    Rows are scored independently; the result does not depend on threads.
    """
    values = np.asarray(Z.values if hasattr(Z, 'values') else Z, dtype=float)
    if snp_ids is None:
        snp_ids = Z.row_ids
    snp_ids = [str(s) for s in snp_ids]
    if len(snp_ids) != values.shape[0]:
        raise DimensionMismatchError(f"{len(snp_ids)} SNP ids for {values.shape[0]} Z rows")

    def score(i):
        return hc_statistic(values[i], grid=grid, return_threshold=True)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(score, range(values.shape[0])))
    else:
        results = [score(i) for i in range(values.shape[0])]

    hc = np.array([r[0] for r in results], dtype=float)
    thresholds = np.array([r[1] for r in results], dtype=float)
    grid_sizes = np.array([r[2] for r in results], dtype=int)

    logger.info(f"Scored {len(snp_ids)} SNP(s) by HC ({grid} grid)")
    return HcScoreTable(
        snp_ids=snp_ids,
        hc=hc,
        rank=rank_scores(hc, snp_ids),
        threshold_grid_size=int(grid_sizes.max()) if grid_sizes.size else 0,
        method='hc',
        thresholds=thresholds,
        grid_sizes=grid_sizes,
    )


# ========== SCREENING ==========

def screen_top_n(table, X, n_keep):
    """Keep the min(n_keep, p) best-ranked SNPs, in rank order"""
    if n_keep < 1:
        raise ValueError(f"n_keep must be at least 1, got {n_keep}")
    kept = table.rank_order()[:n_keep]
    logger.info(f"Kept {len(kept)} of {len(table.snp_ids)} SNP(s) by {table.method} rank")
    return ScreenResult(kept_snp_ids=kept, X_reduced=X.subset(kept))


def baseline_rank(beta_hat, method, absolute=False):
    """
    Rank SNPs by a simple row summary of beta_hat

    Args:
        beta_hat: CoefficientMatrix
        method: 'rowmeans' (row mean) or 'extremeval' (row max of |beta|)
        absolute: for rowmeans, average |beta| instead of the signed values

    Returns:
        HcScoreTable with method set to the baseline name
    """
    method = method.lower()
    if method not in BASELINE_METHODS:
        raise ValueError(f"method must be one of {', '.join(BASELINE_METHODS)}, got {method!r}")
    values = np.asarray(beta_hat.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("beta_hat contains NaN or infinite entries")

    if method == 'rowmeans':
        scores = np.abs(values).mean(axis=1) if absolute else values.mean(axis=1)
    else:
        scores = np.abs(values).max(axis=1) if values.shape[1] else np.zeros(values.shape[0])

    return HcScoreTable(
        snp_ids=list(beta_hat.row_ids),
        hc=scores,
        rank=rank_scores(scores, beta_hat.row_ids),
        threshold_grid_size=0,
        method=method,
    )
