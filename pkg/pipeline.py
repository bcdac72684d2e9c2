"""
Stage orchestration: marginal screen -> ranking -> joint fit

run_hc_lors() ranks SNPs by Higher Criticism and keeps the top n;
run_ms_lors() keeps the union of per-gene top SNPs instead. Both reuse a
marginal fit when one is passed in and time every stage.
"""

import logging
import time
from contextlib import contextmanager

from baseline_ms import ms_screen
from hc_rank import hc_rank_all, screen_top_n, standardize
from lors import association_list, default_cv_config, lors_cv, lors_fit
from marginal import fit_all_snps
from models import CvConfig, PipelineResult

logger = logging.getLogger(__name__)


class StageTimer:
    """Wall-clock seconds per named stage"""

    def __init__(self):
        self.timings = {}

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start


def screen_stage(Y, X, config, progress=False):
    """Confounder-corrected marginal fits for every SNP"""
    return fit_all_snps(
        Y, X,
        lam=config.screen_lambda,
        tol=config.screen_tol,
        max_iter=config.screen_max_iter,
        k_cap=config.k_cap,
        threads=config.threads,
        progress=progress,
    )


def joint_stage(Y, X_r, config):
    """
    Tune (rho, lambda) by CV unless both are fixed, then fit on all samples

    A fixed value pins its grid to that single value.

    Returns:
        (LorsFit, cv_table or None)
    """
    cv_table = None
    rho, lam = config.rho, config.lam
    if rho is None or lam is None:
        cv_config = default_cv_config(Y, X_r, n_points=config.cv_points,
                                      holdout_fraction=config.holdout_fraction,
                                      repeats=config.cv_repeats, seed=config.seed)
        if rho is not None or lam is not None:
            cv_config = CvConfig(
                rho_grid=[rho] if rho is not None else cv_config.rho_grid,
                lambda_grid=[lam] if lam is not None else cv_config.lambda_grid,
                holdout_fraction=cv_config.holdout_fraction,
                repeats=cv_config.repeats,
                seed=cv_config.seed,
            )
        rho, lam, cv_table = lors_cv(Y, X_r, cv_config, tol=config.fit_tol,
                                     max_iter=config.fit_max_iter, threads=config.threads)
    fit = lors_fit(Y, X_r, rho, lam, tol=config.fit_tol, max_iter=config.fit_max_iter)
    return fit, cv_table


def run_hc_lors(Y, X, config, marginal=None, progress=False):
    """
    HC-ranked screening followed by the joint fit

    Args:
        Y: ExpressionMatrix
        X: GenotypeMatrix
        config: PipelineConfig (n_keep defaults to the sample size)
        marginal: reuse an existing MarginalFit

    Returns:
        PipelineResult
    """
    timer = StageTimer()
    n_keep = config.n_keep or X.n_samples

    logger.info("Step 1: marginal screening...")
    with timer.stage('screen'):
        if marginal is None:
            marginal = screen_stage(Y, X, config, progress=progress)

    logger.info("Step 2: ranking SNPs by HC...")
    with timer.stage('rank'):
        zscores = standardize(marginal.beta_hat, Y, X, center_x=config.center_x)
        scores = hc_rank_all(zscores, grid=config.hc_grid, threads=config.threads)
        screened = screen_top_n(scores, X, n_keep)

    logger.info(f"Step 3: joint fit on {len(screened.kept_snp_ids)} SNP(s)...")
    with timer.stage('joint_fit'):
        fit, cv_table = joint_stage(Y, screened.X_reduced, config)

    associations = association_list(fit, config.top_k)
    logger.info(f"HC-LORS finished with {len(associations)} association(s)")
    return PipelineResult(
        method='hc',
        marginal=marginal,
        kept_snp_ids=screened.kept_snp_ids,
        fit=fit,
        cv_table=cv_table,
        associations=associations,
        timings=timer.timings,
        zscores=zscores,
        scores=scores,
    )


def run_ms_lors(Y, X, config, marginal=None, progress=False):
    """Per-gene top-n union screening followed by the same joint fit"""
    timer = StageTimer()
    n_keep = config.n_keep or X.n_samples

    logger.info("Step 1: marginal screening...")
    with timer.stage('screen'):
        if marginal is None:
            marginal = screen_stage(Y, X, config, progress=progress)

    logger.info("Step 2: per-gene selection...")
    with timer.stage('rank'):
        selected = ms_screen(marginal.beta_hat, n_keep)
        X_r = X.subset(selected.kept_snp_ids)

    logger.info(f"Step 3: joint fit on {len(selected.kept_snp_ids)} SNP(s)...")
    with timer.stage('joint_fit'):
        fit, cv_table = joint_stage(Y, X_r, config)

    associations = association_list(fit, config.top_k)
    logger.info(f"MS-LORS finished with {len(associations)} association(s)")
    return PipelineResult(
        method='ms',
        marginal=marginal,
        kept_snp_ids=selected.kept_snp_ids,
        fit=fit,
        cv_table=cv_table,
        associations=associations,
        timings=timer.timings,
    )


PIPELINES = {
    'hc': run_hc_lors,
    'ms': run_ms_lors,
}
