#!/usr/bin/env python3
"""
Command-line front end

    hc-eqtl [--config FILE] [--threads N] [--verbose] [--db PATH] COMMAND ...

Commands: simulate, screen, rank, fit, evaluate, classify, pipeline,
experiment, history. Every stage output directory receives a manifest.json
with inputs (path + sha256), configuration, seed, per-stage timings and the
tool version; every run is also recorded in the run history database.
"""

import hashlib
import json
import logging
import sqlite3
import sys
from dataclasses import replace
from functools import reduce
from pathlib import Path

import click
import pandas as pd

from baseline_ms import save_kept_set
from config import TOOL_VERSION, Settings, build_default_map, normalize_key
from database import Database
from errors import ConfigError, EqtlError
from evaluation import (association_precision_curve, calls_frame, classify_calls, detect_hotspots,
                        hotspot_threshold, load_known_pairs, overlap_frame, overlap_with_known,
                        precision_frame, ranking_pr_curve, save_pr_curve, summarize_classifications)
from experiments import SCENARIOS, run_experiment, save_experiment, scenario_config
from hc_rank import GRID_MODES, baseline_rank, hc_rank_all, standardize
from lors import association_list, save_cv_table, save_fit
from marginal import fit_all_snps
from matrix_io import (load_annotations, load_associations, load_key_values, load_matrix, read_tsv,
                       save_associations, save_key_values, save_matrix, write_tsv)
from models import ExpressionMatrix, MsScreenResult, PipelineConfig, RunManifest
from pipeline import PIPELINES, StageTimer, joint_stage
from simulator import simulate as simulate_expression, synthetic_genotypes

logger = logging.getLogger(__name__)

COMMANDS = ('simulate', 'screen', 'rank', 'fit', 'evaluate', 'classify', 'pipeline', 'experiment', 'history')
RANK_METHODS = ('hc', 'extremeval', 'rowmeans')

existing_file = click.Path(exists=True, dir_okay=False)


# ========== MANIFESTS AND HISTORY ==========

def file_digest(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def describe_inputs(**paths):
    """{name: {path, sha256}} for every given input file"""
    inputs = {}
    for name, value in paths.items():
        if not value:
            continue
        values = value if isinstance(value, (list, tuple)) else [value]
        for i, path in enumerate(values):
            key = name if len(values) == 1 else f"{name}_{i + 1}"
            inputs[key] = {'path': str(path), 'sha256': file_digest(path)}
    return inputs


def write_manifest(out_dir, manifest):
    path = Path(out_dir) / 'manifest.json'
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        logger.warning(f"Overwriting existing manifest {path}")
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(manifest.to_dict(), handle, indent=2, sort_keys=True, default=str)
        handle.write('\n')
    return path


def record_run(obj, subcommand, out_path=None, seed=None, config=None, status='ok',
               error=None, timings=None):
    """Add a row to the run history; failures here never affect the run"""
    if not obj or not obj.get('db_path'):
        return None
    try:
        return Database(obj['db_path']).save_run(
            subcommand, out_path=out_path, seed=seed, threads=obj.get('threads'),
            config=config, status=status, error=error, tool_version=TOOL_VERSION,
            timings=timings)
    except sqlite3.Error as e:
        logger.warning(f"Could not record run in {obj['db_path']}: {e}")
        return None


def finish(ctx, out_dir, inputs, timings):
    """Write the manifest for this command and record the run"""
    config = {k: v for k, v in ctx.params.items()}
    seed = ctx.params.get('seed')
    manifest = RunManifest(
        subcommand=ctx.info_name,
        inputs=inputs,
        config=config,
        seed=seed,
        timings={k: round(v, 6) for k, v in timings.items()},
        tool_version=TOOL_VERSION,
        threads=ctx.obj['threads'],
    )
    path = write_manifest(out_dir, manifest)
    record_run(ctx.obj, ctx.info_name, out_path=out_dir, seed=seed, config=config, timings=timings)
    logger.info(f"{ctx.info_name} finished; manifest at {path}")


# ========== GROUP ==========

def translate_defaults(command, values):
    """Config keys in flag spelling map to click parameter names"""
    names = {}
    for param in command.params:
        names[normalize_key(param.name)] = param.name
        for opt in param.opts:
            names[normalize_key(opt)] = param.name
    return {names.get(key, key): value for key, value in values.items()}


class RecordingGroup(click.Group):
    """Records failed subcommands in the run history before re-raising"""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (EqtlError, ValueError, OSError) as e:
            if ctx.invoked_subcommand and ctx.invoked_subcommand != 'history':
                record_run(ctx.obj, ctx.invoked_subcommand, status='failed', error=str(e))
            raise


@click.group(cls=RecordingGroup)
@click.option('--config', 'config_path', type=existing_file,
              help='Key-value config file; [command] sections apply to one command')
@click.option('--threads', type=click.IntRange(min=1), default=None,
              help='Worker threads (default: HC_EQTL_THREADS or all CPUs)')
@click.option('--verbose', '-v', is_flag=True, help='Debug logging')
@click.option('--db', 'db_path', default=None, help='Run history database; empty string disables it')
@click.version_option(TOOL_VERSION, prog_name='hc-eqtl')
@click.pass_context
def cli(ctx, config_path, threads, verbose, db_path):
    """HC-ranked screening and sparse + low-rank joint modeling for eQTL mapping"""
    settings = Settings()
    level = logging.DEBUG if verbose else getattr(logging, settings.log_level, logging.INFO)
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    global_values = {}
    if config_path:
        default_map, global_values = build_default_map(config_path, COMMANDS)
        ctx.default_map = {name: translate_defaults(ctx.command.commands[name], values)
                           for name, values in default_map.items()}

    if threads is None and 'threads' in global_values:
        try:
            threads = int(global_values['threads'])
        except ValueError:
            raise ConfigError(f"threads must be an integer, got {global_values['threads']!r}")
        if threads < 1:
            raise ConfigError(f"threads must be at least 1, got {threads}")
    if threads is None:
        threads = settings.threads
    if db_path is None:
        db_path = global_values.get('db', settings.db_path)

    ctx.obj = {'settings': settings, 'threads': threads, 'db_path': db_path}
    logger.debug(f"Using {threads} thread(s); run history: {db_path or 'disabled'}")


def load_pair(genotypes, expression):
    X = load_matrix(genotypes, 'genotype')
    Y = load_matrix(expression, 'expression')
    Y.check_samples(X)
    return X, Y


def read_kept_snps(scores=None, snps=None, n_keep=None):
    """SNP ids from a ranking TSV (top n_keep by rank) or a kept-set TSV"""
    if snps:
        return [str(s) for s in read_tsv(snps, dtype={'snp_id': str})['snp_id']]
    frame = read_tsv(scores, dtype={'snp_id': str}).sort_values('rank', kind='stable')
    ids = [str(s) for s in frame['snp_id']]
    return ids[:n_keep] if n_keep else ids


def merged_annotations(paths):
    return reduce(lambda merged, table: merged.merge(table), (load_annotations(p) for p in paths))


# ========== SIMULATE ==========

@cli.command()
@click.option('--genotypes', type=existing_file, help='Genotype TSV; synthetic genotypes when omitted')
@click.option('--n', 'n_samples', type=click.IntRange(min=3), default=120, show_default=True,
              help='Samples for synthetic genotypes')
@click.option('--p', 'n_snps', type=click.IntRange(min=1), default=3000, show_default=True,
              help='SNPs for synthetic genotypes')
@click.option('--q', 'n_genes', type=click.IntRange(min=1), default=100, show_default=True, help='Genes')
@click.option('--scenario', type=click.Choice([*SCENARIOS, 'custom']), default='strong-sparse',
              show_default=True)
@click.option('--n-active', type=click.IntRange(min=1), default=20, show_default=True)
@click.option('--genes-per-snp', type=click.IntRange(min=1), default=None, help='Overrides the scenario')
@click.option('--beta', type=float, default=None, help='Effect size; overrides the scenario')
@click.option('--k-hidden', type=click.IntRange(min=1), default=10, show_default=True)
@click.option('--hidden-scale', type=click.FloatRange(min=0), default=0.1, show_default=True)
@click.option('--noise-sd', type=click.FloatRange(min=0), default=1.0, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--out', 'out_dir', default='sim_out', show_default=True, help='Output directory')
@click.pass_context
def simulate(ctx, genotypes, n_samples, n_snps, n_genes, scenario, n_active, genes_per_snp, beta,
             k_hidden, hidden_scale, noise_sd, seed, out_dir):
    """Simulate expression with planted effects and hidden confounders"""
    timer = StageTimer()
    out = Path(out_dir)
    config = scenario_config(scenario, seed=seed, n_active_snps=n_active, genes_per_snp=genes_per_snp,
                             beta=beta, k_hidden=k_hidden, hidden_scale=hidden_scale, noise_sd=noise_sd)

    with timer.stage('simulate'):
        if genotypes:
            X = load_matrix(genotypes, 'genotype')
        else:
            X = synthetic_genotypes(n_samples, n_snps, seed=seed)
            save_matrix(X, out / 'genotypes.tsv')
        Y, truth, U = simulate_expression(X, n_genes, config)

    save_matrix(Y, out / 'expression.tsv')
    save_matrix(truth.B_true, out / 'B_true.tsv')
    save_matrix(ExpressionMatrix(U, Y.probe_ids, Y.sample_ids), out / 'hidden.tsv')
    write_tsv(truth.to_frame(), out / 'truth.tsv')

    finish(ctx, out, describe_inputs(genotypes=genotypes), timer.timings)


# ========== SCREEN ==========

@cli.command()
@click.option('--genotypes', type=existing_file, required=True)
@click.option('--expression', type=existing_file, required=True)
@click.option('--lambda', 'screen_lambda', type=click.FloatRange(min=0), default=None,
              help='Nuclear-norm weight (default: keeps at most --k-cap factors)')
@click.option('--k-cap', type=click.IntRange(min=1), default=20, show_default=True)
@click.option('--tol', type=float, default=1e-6, show_default=True)
@click.option('--max-iter', type=click.IntRange(min=1), default=100, show_default=True)
@click.option('--no-center-x', is_flag=True, help='Use raw x^T x when standardizing')
@click.option('--progress', is_flag=True, help='Show a progress bar')
@click.option('--out', 'out_dir', default='screen_out', show_default=True)
@click.pass_context
def screen(ctx, genotypes, expression, screen_lambda, k_cap, tol, max_iter, no_center_x, progress,
           out_dir):
    """Confounder-corrected marginal estimates and their Z-scores"""
    timer = StageTimer()
    out = Path(out_dir)
    X, Y = load_pair(genotypes, expression)

    with timer.stage('screen'):
        marginal = fit_all_snps(Y, X, lam=screen_lambda, tol=tol, max_iter=max_iter, k_cap=k_cap,
                                threads=ctx.obj['threads'], progress=progress)
    with timer.stage('standardize'):
        zscores = standardize(marginal.beta_hat, Y, X, center_x=not no_center_x)

    save_matrix(marginal.beta_hat, out / 'beta_hat.tsv')
    save_matrix(zscores.as_coefficients(), out / 'zscores.tsv')
    write_tsv(marginal.summary_frame(), out / 'screen_summary.tsv')
    save_key_values({'lambda': marginal.lam, 'zero_variance_pairs': int(zscores.zero_variance.sum())},
                    out / 'screen_meta.txt')

    finish(ctx, out, describe_inputs(genotypes=genotypes, expression=expression), timer.timings)


# ========== RANK ==========

@cli.command()
@click.option('--beta-hat', type=existing_file, required=True)
@click.option('--method', type=click.Choice(RANK_METHODS), default='hc', show_default=True)
@click.option('--zscores', type=existing_file, help='Z-scores from screen (hc only)')
@click.option('--genotypes', type=existing_file, help='With --expression, recompute Z-scores')
@click.option('--expression', type=existing_file)
@click.option('--hc-grid', type=click.Choice(GRID_MODES), default='unrestricted', show_default=True)
@click.option('--no-center-x', is_flag=True)
@click.option('--abs-rowmeans', is_flag=True, help='rowmeans over |beta_hat|')
@click.option('--n-keep', type=click.IntRange(min=1), default=None,
              help='Also write the top n SNPs to kept_snps.tsv')
@click.option('--out', 'out_path', default='scores.tsv', show_default=True, help='Score table TSV')
@click.pass_context
def rank(ctx, beta_hat, method, zscores, genotypes, expression, hc_grid, no_center_x, abs_rowmeans,
         n_keep, out_path):
    """Rank SNPs by HC, EXTREMEVAL or ROWMEANS"""
    timer = StageTimer()
    out_path = Path(out_path)
    B = load_matrix(beta_hat, 'coefficient')

    with timer.stage('rank'):
        if method == 'hc':
            sibling = Path(beta_hat).parent / 'zscores.tsv'
            if zscores:
                Z = load_matrix(zscores, 'coefficient')
            elif genotypes and expression:
                X, Y = load_pair(genotypes, expression)
                Z = standardize(B, Y, X, center_x=not no_center_x)
            elif sibling.exists():
                logger.info(f"Using Z-scores from {sibling}")
                meta = sibling.parent / 'screen_meta.txt'
                if meta.exists():
                    screen_meta = load_key_values(meta)
                    logger.info(f"Screen lambda {screen_meta.get('lambda')}, "
                                f"{screen_meta.get('zero_variance_pairs')} zero-variance pair(s)")
                Z = load_matrix(sibling, 'coefficient')
                zscores = str(sibling)
            else:
                raise click.UsageError("rank --method hc needs --zscores, or --genotypes with --expression")
            if Z.row_ids != B.row_ids:
                raise click.UsageError("Z-score and beta-hat SNP ids differ")
            table = hc_rank_all(Z, grid=hc_grid, threads=ctx.obj['threads'])
        else:
            table = baseline_rank(B, method, absolute=abs_rowmeans)

    write_tsv(table.to_frame(), out_path)
    if n_keep:
        save_kept_set(MsScreenResult(table.rank_order()[:n_keep], {}), out_path.parent / 'kept_snps.tsv')

    inputs = describe_inputs(beta_hat=beta_hat, zscores=zscores, genotypes=genotypes, expression=expression)
    finish(ctx, out_path.parent, inputs, timer.timings)


# ========== FIT ==========

def cv_options(command):
    options = [
        click.option('--rho', type=click.FloatRange(min=0), default=None, help='l1 weight (default: CV)'),
        click.option('--lambda', 'lam', type=click.FloatRange(min=0), default=None,
                     help='Nuclear-norm weight (default: CV)'),
        click.option('--cv-points', type=click.IntRange(min=1), default=8, show_default=True),
        click.option('--cv-repeats', type=click.IntRange(min=1), default=5, show_default=True),
        click.option('--holdout', type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.25,
                     show_default=True),
        click.option('--seed', type=int, default=0, show_default=True),
        click.option('--top-k', type=click.IntRange(min=1), default=1000, show_default=True),
    ]
    for option in reversed(options):
        command = option(command)
    return command


@cli.command()
@click.option('--genotypes', type=existing_file, required=True)
@click.option('--expression', type=existing_file, required=True)
@click.option('--scores', type=existing_file, help='Score table from rank')
@click.option('--snps', type=existing_file, help='Kept-set TSV (snp_id column)')
@click.option('--n-keep', type=click.IntRange(min=1), default=None,
              help='Top SNPs taken from --scores (default: sample size)')
@cv_options
@click.option('--tol', type=float, default=1e-6, show_default=True)
@click.option('--max-iter', type=click.IntRange(min=1), default=500, show_default=True)
@click.option('--out', 'out_dir', default='fit_out', show_default=True)
@click.pass_context
def fit(ctx, genotypes, expression, scores, snps, n_keep, rho, lam, cv_points, cv_repeats, holdout,
        seed, top_k, tol, max_iter, out_dir):
    """Sparse + low-rank joint fit on the screened SNPs"""
    if not scores and not snps:
        raise click.UsageError("fit needs --scores or --snps")
    timer = StageTimer()
    out = Path(out_dir)
    X, Y = load_pair(genotypes, expression)
    kept = read_kept_snps(scores, snps, n_keep or X.n_samples)

    config = PipelineConfig(rho=rho, lam=lam, cv_points=cv_points, cv_repeats=cv_repeats,
                            holdout_fraction=holdout, seed=seed, fit_tol=tol, fit_max_iter=max_iter,
                            top_k=top_k, threads=ctx.obj['threads'])
    with timer.stage('joint_fit'):
        joint, cv_table = joint_stage(Y, X.subset(kept), config)

    save_fit(joint, out / 'B.tsv', out / 'fit_meta.txt')
    if cv_table is not None:
        save_cv_table(cv_table, out / 'cv_table.tsv')
    save_associations(association_list(joint, top_k), out / 'associations.tsv')

    inputs = describe_inputs(genotypes=genotypes, expression=expression, scores=scores, snps=snps)
    finish(ctx, out, inputs, timer.timings)


# ========== EVALUATE ==========

def write_evaluation(out, associations, truth_pairs, top_k, rank_order=None, known=None):
    """precision@k, optional ranking PR curve and known-pair overlap"""
    K = min(top_k, len(associations))
    precisions = association_precision_curve(associations, truth_pairs, K)
    write_tsv(precision_frame(precisions), out / 'precision_at_k.tsv')
    if K:
        logger.info(f"precision@{K} = {precisions[-1]:.3f}")

    if rank_order is not None:
        active = sorted({snp for snp, _ in truth_pairs})
        save_pr_curve(ranking_pr_curve(rank_order, active), out / 'pr_curve.tsv')

    if known:
        count, fractions = overlap_with_known(associations, known)
        write_tsv(overlap_frame(fractions), out / 'overlap.tsv')
        logger.info(f"{count} of {len(associations)} call(s) found among known pairs")


@cli.command()
@click.option('--associations', type=existing_file, required=True)
@click.option('--truth', type=existing_file, required=True, help='True (snp_id, probe_id) pairs')
@click.option('--scores', type=existing_file, help='Score table for the ranking PR curve')
@click.option('--known', type=existing_file, help='Known pairs for the overlap curve')
@click.option('--top-k', type=click.IntRange(min=1), default=1000, show_default=True)
@click.option('--out', 'out_dir', default='evaluate_out', show_default=True)
@click.pass_context
def evaluate(ctx, associations, truth, scores, known, top_k, out_dir):
    """Precision curves against a known truth"""
    timer = StageTimer()
    out = Path(out_dir)
    with timer.stage('evaluate'):
        calls = load_associations(associations)
        truth_pairs = load_known_pairs(truth)
        rank_order = read_kept_snps(scores) if scores else None
        write_evaluation(out, calls, truth_pairs, top_k, rank_order, load_known_pairs(known) if known else None)

    inputs = describe_inputs(associations=associations, truth=truth, scores=scores, known=known)
    finish(ctx, out, inputs, timer.timings)


# ========== CLASSIFY ==========

def write_classification(out, associations, annotations, q_total=None, fraction=0.0021, known=None):
    calls = classify_calls(associations, annotations)
    write_tsv(calls_frame(calls), out / 'calls.tsv')

    summary = summarize_classifications(calls)
    write_tsv(pd.DataFrame(list(summary.items()), columns=['classification', 'count']),
              out / 'class_summary.tsv')
    logger.info("Classes: " + ", ".join(f"{k} {v}" for k, v in summary.items()))

    if q_total:
        hotspots = detect_hotspots(calls, q_total, fraction)
        frame = pd.DataFrame([(snp, len(genes), ','.join(genes)) for snp, genes in hotspots],
                             columns=['snp_id', 'n_genes', 'probe_ids'])
        write_tsv(frame, out / 'hotspots.tsv')
        logger.info(f"Hotspot threshold {hotspot_threshold(q_total, fraction)} gene(s)")

    if known:
        _, fractions = overlap_with_known(calls, known)
        write_tsv(overlap_frame(fractions), out / 'overlap.tsv')


@cli.command()
@click.option('--calls', type=existing_file, required=True, help='Association list TSV')
@click.option('--annotations', type=existing_file, multiple=True, required=True,
              help='SNP / probe position file(s)')
@click.option('--q-total', type=click.IntRange(min=1), default=None, help='Genes tested, enables hotspots')
@click.option('--hotspot-fraction', type=click.FloatRange(0, 1, min_open=True, max_open=True),
              default=0.0021, show_default=True)
@click.option('--known', type=existing_file, help='Known pairs for the overlap curve')
@click.option('--out', 'out_dir', default='classify_out', show_default=True)
@click.pass_context
def classify(ctx, calls, annotations, q_total, hotspot_fraction, known, out_dir):
    """cis / semi_cis / trans classes, hotspots and known-pair overlap"""
    timer = StageTimer()
    out = Path(out_dir)
    with timer.stage('classify'):
        write_classification(out, load_associations(calls), merged_annotations(annotations),
                             q_total, hotspot_fraction, load_known_pairs(known) if known else None)

    inputs = describe_inputs(calls=calls, annotations=annotations, known=known)
    finish(ctx, out, inputs, timer.timings)


# ========== PIPELINE ==========

@cli.command()
@click.option('--genotypes', type=existing_file, required=True)
@click.option('--expression', type=existing_file, required=True)
@click.option('--method', type=click.Choice(sorted(PIPELINES)), default='hc', show_default=True,
              help='hc: HC-ranked top n; ms: per-gene top-n union')
@click.option('--n-keep', type=click.IntRange(min=1), default=None, help='Default: sample size')
@click.option('--screen-lambda', type=click.FloatRange(min=0), default=None)
@click.option('--k-cap', type=click.IntRange(min=1), default=20, show_default=True)
@click.option('--hc-grid', type=click.Choice(GRID_MODES), default='unrestricted', show_default=True)
@click.option('--no-center-x', is_flag=True)
@cv_options
@click.option('--truth', type=existing_file, help='True pairs; enables evaluation')
@click.option('--annotations', type=existing_file, multiple=True, help='Enables classification')
@click.option('--known', type=existing_file, help='Known pairs for the overlap curve')
@click.option('--q-total', type=click.IntRange(min=1), default=None, help='Genes tested for hotspots')
@click.option('--time-single-thread', is_flag=True, help='Also time the joint fit on one thread')
@click.option('--progress', is_flag=True)
@click.option('--out', 'out_dir', default='pipeline_out', show_default=True)
@click.pass_context
def pipeline(ctx, genotypes, expression, method, n_keep, screen_lambda, k_cap, hc_grid, no_center_x,
             rho, lam, cv_points, cv_repeats, holdout, seed, top_k, truth, annotations, known, q_total,
             time_single_thread, progress, out_dir):
    """screen -> rank -> fit -> evaluate in one run"""
    out = Path(out_dir)
    X, Y = load_pair(genotypes, expression)
    config = PipelineConfig(n_keep=n_keep, screen_lambda=screen_lambda, k_cap=k_cap, hc_grid=hc_grid,
                            center_x=not no_center_x, rho=rho, lam=lam, cv_points=cv_points,
                            cv_repeats=cv_repeats, holdout_fraction=holdout, seed=seed, top_k=top_k,
                            threads=ctx.obj['threads'])

    result = PIPELINES[method](Y, X, config, progress=progress)
    timings = dict(result.timings)

    if time_single_thread:
        timer = StageTimer()
        with timer.stage('joint_fit_single_thread'):
            joint_stage(Y, X.subset(result.kept_snp_ids), replace(config, threads=1))
        timings.update(timer.timings)

    save_matrix(result.marginal.beta_hat, out / 'beta_hat.tsv')
    if result.zscores is not None:
        save_matrix(result.zscores.as_coefficients(), out / 'zscores.tsv')
    if result.scores is not None:
        write_tsv(result.scores.to_frame(), out / 'scores.tsv')
    save_kept_set(MsScreenResult(result.kept_snp_ids, {}), out / 'kept_snps.tsv')
    save_fit(result.fit, out / 'B.tsv', out / 'fit_meta.txt')
    if result.cv_table is not None:
        save_cv_table(result.cv_table, out / 'cv_table.tsv')
    save_associations(result.associations, out / 'associations.tsv')

    timer = StageTimer()
    known_pairs = load_known_pairs(known) if known else None
    if truth:
        with timer.stage('evaluate'):
            rank_order = result.scores.rank_order() if result.scores is not None else None
            write_evaluation(out, result.associations, load_known_pairs(truth), top_k, rank_order, known_pairs)
    if annotations:
        with timer.stage('classify'):
            write_classification(out, result.associations, merged_annotations(annotations), q_total,
                                 known=known_pairs)
    timings.update(timer.timings)

    inputs = describe_inputs(genotypes=genotypes, expression=expression, truth=truth,
                             annotations=annotations, known=known)
    finish(ctx, out, inputs, timings)


# ========== EXPERIMENT ==========

@cli.command()
@click.option('--scenario', type=click.Choice([*SCENARIOS, 'custom']), default='strong-sparse',
              show_default=True)
@click.option('--genotypes', type=existing_file, help='Fixed genotypes instead of synthetic ones')
@click.option('--n', 'n_samples', type=click.IntRange(min=3), default=120, show_default=True)
@click.option('--p', 'n_snps', type=click.IntRange(min=1), default=3000, show_default=True)
@click.option('--q', 'n_genes', type=click.IntRange(min=1), default=100, show_default=True)
@click.option('--n-active', type=click.IntRange(min=1), default=10, show_default=True)
@click.option('--genes-per-snp', type=click.IntRange(min=1), default=None)
@click.option('--beta', type=float, default=None)
@click.option('--replicates', type=click.IntRange(min=1), default=20, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--joint', is_flag=True, help='Also compare HC-LORS with the per-gene baseline')
@click.option('--n-keep', type=click.IntRange(min=1), default=None)
@click.option('--top-k', type=click.IntRange(min=1), default=100, show_default=True)
@click.option('--cv-points', type=click.IntRange(min=1), default=4, show_default=True)
@click.option('--cv-repeats', type=click.IntRange(min=1), default=2, show_default=True)
@click.option('--progress', is_flag=True)
@click.option('--out', 'out_dir', default='experiment_out', show_default=True)
@click.pass_context
def experiment(ctx, scenario, genotypes, n_samples, n_snps, n_genes, n_active, genes_per_snp, beta,
               replicates, seed, joint, n_keep, top_k, cv_points, cv_repeats, progress, out_dir):
    """Replicated ranking / pipeline comparison on simulated data"""
    timer = StageTimer()
    X = load_matrix(genotypes, 'genotype') if genotypes else None
    config = PipelineConfig(n_keep=n_keep, cv_points=cv_points, cv_repeats=cv_repeats, top_k=top_k,
                            threads=ctx.obj['threads'])
    overrides = {'n_active_snps': n_active, 'genes_per_snp': genes_per_snp, 'beta': beta}

    with timer.stage('experiment'):
        result = run_experiment(scenario, n=n_samples, p=n_snps, q=n_genes, replicates=replicates,
                                seed=seed, sim_overrides=overrides, genotypes=X, joint=joint,
                                pipeline_config=config, top_k=top_k, progress=progress)
    save_experiment(result, out_dir)

    for name, curve in result.pr_curves.items():
        shown = ", ".join(f"{r:.2f}:{p:.3f}" for r, p in zip(curve.recall_points, curve.precision_means))
        logger.info(f"{name} mean precision by recall: {shown}")

    finish(ctx, Path(out_dir), describe_inputs(genotypes=genotypes), timer.timings)


# ========== HISTORY ==========

@cli.command()
@click.option('--limit', type=click.IntRange(min=1), default=20, show_default=True)
@click.option('--subcommand', type=click.Choice([c for c in COMMANDS if c != 'history']), default=None)
@click.option('--timings', is_flag=True, help='Median stage timings instead of the run list')
@click.pass_context
def history(ctx, limit, subcommand, timings):
    """List recorded runs"""
    db_path = ctx.obj['db_path']
    if not db_path:
        click.echo("Run history is disabled")
        return
    db = Database(db_path)
    if timings:
        frame = db.get_stage_summary(subcommand)
    else:
        frame = pd.DataFrame(db.get_runs(limit, subcommand))
    click.echo("No runs recorded" if frame.empty else frame.to_string(index=False))


# ========== ENTRY POINT ==========

def run(argv=None):
    """Run the CLI; returns 0 on success, 2 on usage errors, 1 on failures"""
    try:
        result = cli.main(args=argv, prog_name='hc-eqtl', standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 2
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except (EqtlError, ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    return result if isinstance(result, int) else 0


if __name__ == '__main__':
    sys.exit(run())
