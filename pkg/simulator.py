"""
Synthetic expression data over real or synthetic genotypes

Y = X B + U + e with a few active SNPs, each affecting m genes with effect
beta, hidden confounders U whose columns follow N(0, hidden_scale * H H^T)
for a standard normal n x k matrix H, and iid N(0, noise_sd^2) noise.

Random draws happen in a fixed order from one default_rng(seed):
active SNPs, then the gene set of each active SNP (in draw order), then H,
then a q x k block of standard normals for the U columns, then e.
"""

import logging

import numpy as np

from models import CoefficientMatrix, ExpressionMatrix, GenotypeMatrix, GroundTruth

logger = logging.getLogger(__name__)

MAX_GENOTYPE_REDRAWS = 100


def _labels(prefix, count):
    width = len(str(count))
    return [f"{prefix}{i + 1:0{width}d}" for i in range(count)]


def sample_mvn_column(H, scale, rng, size=None):
    """
    Draw from N(0, scale * H H^T) as sqrt(scale) * H g with g ~ N(0, I_k)

    Exact for rank-deficient H H^T; no factorization needed.

    Args:
        H: n x k factor
        scale: non-negative covariance multiplier
        rng: numpy Generator
        size: number of columns to draw; None for a single n-vector

    Returns:
        n-vector, or size x n array of independent draws
    """
    if scale < 0:
        raise ValueError(f"scale must be non-negative, got {scale}")
    H = np.asarray(H, dtype=float)
    k = H.shape[1]
    if size is None:
        g = rng.standard_normal(k)
        return np.sqrt(scale) * (H @ g)
    g = rng.standard_normal((size, k))
    return np.sqrt(scale) * (g @ H.T)


def synthetic_genotypes(n, p, seed=0, maf_low=0.05, maf_high=0.5):
    """
    Binomial(2, maf) dosages with per-SNP minor allele frequency

    Columns that come out constant are redrawn from the same frequency.
    """
    if n < 3 or p < 1:
        raise ValueError(f"Need n >= 3 and p >= 1, got n={n}, p={p}")
    if not 0.0 < maf_low <= maf_high <= 0.5:
        raise ValueError("Minor allele frequencies must satisfy 0 < low <= high <= 0.5")

    rng = np.random.default_rng(seed)
    maf = rng.uniform(maf_low, maf_high, size=p)
    values = rng.binomial(2, maf, size=(n, p)).astype(float)

    for _ in range(MAX_GENOTYPE_REDRAWS):
        constant = np.flatnonzero(np.ptp(values, axis=0) == 0)
        if constant.size == 0:
            break
        values[:, constant] = rng.binomial(2, maf[constant], size=(n, constant.size))
    else:
        raise ValueError("Could not draw non-constant genotypes; raise maf_low or n")

    logger.info(f"Generated synthetic genotypes for {n} sample(s) and {p} SNP(s)")
    return GenotypeMatrix(values, _labels('snp', p), _labels('s', n))


def simulate(X, q, config, probe_ids=None):
    """
    Simulate expression for the samples of X

    Args:
        X: GenotypeMatrix
        q: number of genes
        config: SimConfig
        probe_ids: optional gene names (default g1..gq)

    Returns:
        (ExpressionMatrix, GroundTruth, U as an n x q array)
    """
    n, p = X.values.shape
    m = config.genes_per_snp
    if q < m:
        raise ValueError(f"q = {q} is smaller than genes_per_snp = {m}")
    if p < config.n_active_snps:
        raise ValueError(f"p = {p} is smaller than n_active_snps = {config.n_active_snps}")
    probe_ids = list(probe_ids) if probe_ids is not None else _labels('g', q)
    if len(probe_ids) != q:
        raise ValueError(f"{len(probe_ids)} probe id(s) for q = {q}")

    rng = np.random.default_rng(config.seed)

    active = rng.choice(p, size=config.n_active_snps, replace=False)
    gene_sets = [np.sort(rng.choice(q, size=m, replace=False)) for _ in active]

    B = np.zeros((p, q))
    influenced = {}
    for snp_index, genes in zip(active, gene_sets):
        B[snp_index, genes] = config.beta
        influenced[X.snp_ids[snp_index]] = [probe_ids[j] for j in genes]

    H = rng.standard_normal((n, config.k_hidden))
    U = sample_mvn_column(H, config.hidden_scale, rng, size=q).T
    noise = rng.normal(0.0, config.noise_sd, size=(n, q))

    Y = X.values @ B + U + noise

    active_ids = [X.snp_ids[i] for i in np.sort(active)]
    truth = GroundTruth(
        B_true=CoefficientMatrix(B, X.snp_ids, probe_ids),
        active_snp_ids=active_ids,
        influenced_genes={snp: influenced[snp] for snp in active_ids},
    )
    logger.info(f"Simulated {n}x{q} expression with {len(active_ids)} active SNP(s), "
                f"{int(np.count_nonzero(B))} planted effect(s)")
    return ExpressionMatrix(Y, probe_ids, X.sample_ids), truth, U
