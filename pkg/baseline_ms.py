"""
Per-gene marginal screening baseline

Every gene keeps its n_keep SNPs with the largest |beta_hat|; the SNPs entering
the joint fit are the union over genes. A comparison baseline for timing and
precision, not a full reimplementation of a per-gene screening pipeline.
"""

import logging

import numpy as np
import pandas as pd

from matrix_io import write_tsv
from models import MsScreenResult

logger = logging.getLogger(__name__)


def ms_screen(beta_hat, n_keep):
    """
    Union of per-gene top-n_keep SNPs by |beta_hat|

    Ties within a gene go to the smaller snp_id.

    Args:
        beta_hat: CoefficientMatrix (SNPs in rows)
        n_keep: SNPs kept per gene

    Returns:
        MsScreenResult with kept_snp_ids sorted by id
    """
    if n_keep < 1:
        raise ValueError(f"n_keep must be at least 1, got {n_keep}")
    magnitude = np.abs(np.asarray(beta_hat.values, dtype=float))
    ids = np.asarray(beta_hat.row_ids, dtype=str)

    per_gene_top = {}
    kept = set()
    for j, probe in enumerate(beta_hat.col_ids):
        order = np.lexsort((ids, -magnitude[:, j]))[:n_keep]
        top = [str(ids[i]) for i in order]
        per_gene_top[probe] = top
        kept.update(top)

    result = MsScreenResult(kept_snp_ids=sorted(kept), per_gene_top=per_gene_top)
    logger.info(f"Per-gene screen kept {len(result.kept_snp_ids)} SNP(s) "
                f"({n_keep} per gene over {len(per_gene_top)} gene(s))")
    return result


def save_kept_set(result, path):
    write_tsv(pd.DataFrame({'snp_id': result.kept_snp_ids}), path)
