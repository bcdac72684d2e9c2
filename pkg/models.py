"""
Domain models for the eQTL mapping pipeline
Matrices, fits, score tables and evaluation records
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from errors import DimensionMismatchError, DuplicateIdError


class IdValidator:
    """Identifier list validation"""

    @staticmethod
    def validate(ids):
        """
        Check that identifiers are unique
        Returns: (is_valid, first duplicated id or None)
        """
        counts = Counter(ids)
        for identifier in ids:
            if counts[identifier] > 1:
                return False, identifier
        return True, None


def _check_labelled(values, row_ids, col_ids, row_axis, col_axis):
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DimensionMismatchError(f"Expected a 2-D matrix, got {values.ndim} dimension(s)")
    if values.shape[0] != len(row_ids):
        raise DimensionMismatchError(
            f"{len(row_ids)} {row_axis} ids for {values.shape[0]} matrix rows")
    if values.shape[1] != len(col_ids):
        raise DimensionMismatchError(
            f"{len(col_ids)} {col_axis} ids for {values.shape[1]} matrix columns")
    for ids, axis in ((row_ids, row_axis), (col_ids, col_axis)):
        valid, bad = IdValidator.validate(ids)
        if not valid:
            raise DuplicateIdError(bad, axis=f"{axis} id")
    return values


# ========== INPUT MATRICES ==========

@dataclass
class GenotypeMatrix:
    """n x p SNP dosages, samples in rows"""

    values: np.ndarray
    snp_ids: List[str]
    sample_ids: List[str]

    def __post_init__(self):
        self.snp_ids = [str(s) for s in self.snp_ids]
        self.sample_ids = [str(s) for s in self.sample_ids]
        self.values = _check_labelled(self.values, self.sample_ids, self.snp_ids, 'sample', 'SNP')

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_snps(self):
        return self.values.shape[1]

    def subset(self, snp_ids):
        """Restrict to the given SNPs, in the given order"""
        index = {snp: i for i, snp in enumerate(self.snp_ids)}
        missing = [snp for snp in snp_ids if snp not in index]
        if missing:
            raise KeyError(f"Unknown SNP id(s): {', '.join(missing[:5])}")
        columns = [index[snp] for snp in snp_ids]
        return GenotypeMatrix(self.values[:, columns], list(snp_ids), list(self.sample_ids))

    def to_frame(self):
        return pd.DataFrame(self.values, index=self.sample_ids, columns=self.snp_ids)


@dataclass
class ExpressionMatrix:
    """n x q expression levels, samples in rows"""

    values: np.ndarray
    probe_ids: List[str]
    sample_ids: List[str]

    def __post_init__(self):
        self.probe_ids = [str(s) for s in self.probe_ids]
        self.sample_ids = [str(s) for s in self.sample_ids]
        self.values = _check_labelled(self.values, self.sample_ids, self.probe_ids, 'sample', 'probe')

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_probes(self):
        return self.values.shape[1]

    def check_samples(self, genotypes):
        """Samples must match the genotype matrix in identity and order"""
        if self.sample_ids != genotypes.sample_ids:
            raise DimensionMismatchError(
                "Expression and genotype sample ids differ in identity or order")

    def to_frame(self):
        return pd.DataFrame(self.values, index=self.sample_ids, columns=self.probe_ids)


@dataclass
class CoefficientMatrix:
    """r x q SNP-to-probe effects, SNPs in rows"""

    values: np.ndarray
    row_ids: List[str]
    col_ids: List[str]

    def __post_init__(self):
        self.row_ids = [str(s) for s in self.row_ids]
        self.col_ids = [str(s) for s in self.col_ids]
        self.values = _check_labelled(self.values, self.row_ids, self.col_ids, 'SNP', 'probe')

    def nonzero_pairs(self):
        """Set of (snp_id, probe_id) with a nonzero effect"""
        rows, cols = np.nonzero(self.values)
        return {(self.row_ids[i], self.col_ids[j]) for i, j in zip(rows, cols)}

    def to_frame(self):
        return pd.DataFrame(self.values, index=self.row_ids, columns=self.col_ids)


@dataclass
class AnnotationTable:
    """Chromosome and base-pair positions of SNPs and probe midpoints"""

    snp_positions: Dict[str, Tuple[str, int]] = field(default_factory=dict)
    probe_midpoints: Dict[str, Tuple[str, int]] = field(default_factory=dict)

    def merge(self, other):
        """Combine two tables; entries of `other` must not collide"""
        merged = AnnotationTable(dict(self.snp_positions), dict(self.probe_midpoints))
        for target, source, axis in ((merged.snp_positions, other.snp_positions, 'SNP'),
                                     (merged.probe_midpoints, other.probe_midpoints, 'probe')):
            for key, value in source.items():
                if key in target and target[key] != value:
                    raise DuplicateIdError(key, axis=f"{axis} annotation")
                target[key] = value
        return merged


# ========== KERNEL AND FIT RESULTS ==========

@dataclass
class SvdFactors:
    """Thin SVD W = U diag(d) V^T with singular values in descending order"""

    U: np.ndarray
    d: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return int(self.d.size)

    def reconstruct(self):
        return (self.U * self.d) @ self.V.T


@dataclass
class MarginalFit:
    """Stacked per-SNP marginal estimates with confounder correction"""

    beta_hat: CoefficientMatrix
    mu_hat: np.ndarray
    lam: float
    iterations_per_snp: np.ndarray
    converged: np.ndarray
    degenerate: np.ndarray

    def summary_frame(self):
        return pd.DataFrame({
            'snp_id': self.beta_hat.row_ids,
            'iterations': self.iterations_per_snp,
            'converged': self.converged,
            'degenerate': self.degenerate,
        })


@dataclass
class ZscoreMatrix:
    """Standardized marginal estimates, SNPs in rows"""

    values: np.ndarray
    row_ids: List[str]
    col_ids: List[str]
    zero_variance: np.ndarray

    def as_coefficients(self):
        return CoefficientMatrix(self.values, self.row_ids, self.col_ids)


@dataclass
class HcScoreTable:
    """Per-SNP ranking scores; rank 1 is the largest score"""

    snp_ids: List[str]
    hc: np.ndarray
    rank: np.ndarray
    threshold_grid_size: int
    method: str = 'hc'
    thresholds: Optional[np.ndarray] = None
    grid_sizes: Optional[np.ndarray] = None

    def rank_order(self):
        """SNP ids sorted from rank 1 downwards"""
        order = np.argsort(self.rank, kind='stable')
        return [self.snp_ids[i] for i in order]

    def to_frame(self):
        frame = pd.DataFrame({'snp_id': self.snp_ids, 'hc': self.hc, 'rank': self.rank})
        if self.thresholds is not None:
            frame['threshold'] = self.thresholds
        if self.grid_sizes is not None:
            frame['grid_size'] = self.grid_sizes
        return frame.sort_values('rank', kind='stable').reset_index(drop=True)


@dataclass
class ScreenResult:
    """SNPs kept by top-n screening, in rank order"""

    kept_snp_ids: List[str]
    X_reduced: GenotypeMatrix


@dataclass
class CvConfig:
    """Monte-Carlo cross-validation grid for the joint fit"""

    rho_grid: List[float]
    lambda_grid: List[float]
    holdout_fraction: float = 0.25
    repeats: int = 5
    seed: int = 0

    def __post_init__(self):
        self.rho_grid = [float(v) for v in self.rho_grid]
        self.lambda_grid = [float(v) for v in self.lambda_grid]
        for name, grid in (('rho_grid', self.rho_grid), ('lambda_grid', self.lambda_grid)):
            if not grid:
                raise ValueError(f"{name} must not be empty")
            if any(b < a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} must be sorted ascending")
            if any(v < 0 for v in grid):
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")

    def to_dict(self):
        return {
            'rho_grid': self.rho_grid,
            'lambda_grid': self.lambda_grid,
            'holdout_fraction': self.holdout_fraction,
            'repeats': self.repeats,
            'seed': self.seed,
        }


@dataclass
class LorsFit:
    """Sparse + low-rank joint fit Y = 1 mu + X_r B + L + e"""

    B: np.ndarray
    mu: np.ndarray
    L: np.ndarray
    rho: float
    lam: float
    objective_trace: List[float]
    rank_L: int
    nnz_B: int
    row_ids: List[str]
    col_ids: List[str]
    converged: bool = True
    iterations: int = 0

    @property
    def objective(self):
        return self.objective_trace[-1]

    def coefficients(self):
        return CoefficientMatrix(self.B, self.row_ids, self.col_ids)

    def to_dict(self):
        """Scalar metadata for the sidecar file"""
        return {
            'rho': self.rho,
            'lambda': self.lam,
            'rank_L': self.rank_L,
            'nnz_B': self.nnz_B,
            'iterations': self.iterations,
            'converged': self.converged,
            'objective': self.objective,
            'n_snps': len(self.row_ids),
            'n_probes': len(self.col_ids),
        }


@dataclass(frozen=True)
class Association:
    """One SNP-probe effect from a joint fit"""

    snp_id: str
    probe_id: str
    effect: float


# ========== SIMULATION ==========

@dataclass
class SimConfig:
    """Synthetic expression design: few active SNPs over hidden confounders"""

    n_active_snps: int = 20
    genes_per_snp: int = 10
    beta: float = 2.0
    k_hidden: int = 10
    hidden_scale: float = 0.1
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ('n_active_snps', 'genes_per_snp', 'k_hidden'):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.hidden_scale < 0 or self.noise_sd < 0:
            raise ValueError("hidden_scale and noise_sd must be non-negative")

    def to_dict(self):
        return {
            'n_active_snps': self.n_active_snps,
            'genes_per_snp': self.genes_per_snp,
            'beta': self.beta,
            'k_hidden': self.k_hidden,
            'hidden_scale': self.hidden_scale,
            'noise_sd': self.noise_sd,
            'seed': self.seed,
        }


@dataclass
class GroundTruth:
    """Planted coefficients of a simulated data set"""

    B_true: CoefficientMatrix
    active_snp_ids: List[str]
    influenced_genes: Dict[str, List[str]]

    def to_frame(self):
        rows = [(snp, probe) for snp in self.active_snp_ids for probe in self.influenced_genes[snp]]
        return pd.DataFrame(rows, columns=['snp_id', 'probe_id'])


# ========== EVALUATION ==========

@dataclass
class PrCurve:
    """Precision at fixed recall levels, averaged over replicates"""

    recall_points: List[float]
    precision_means: List[float]
    n_replicates: int = 1

    def to_frame(self):
        return pd.DataFrame({'recall': self.recall_points, 'precision': self.precision_means})


@dataclass
class EqtlCall:
    """An association annotated with SNP-probe distance and cis/trans class"""

    snp_id: str
    probe_id: str
    effect: float
    distance_bp: Optional[int]
    classification: str

    def to_dict(self):
        return {
            'snp_id': self.snp_id,
            'probe_id': self.probe_id,
            'effect': self.effect,
            'distance_bp': self.distance_bp,
            'classification': self.classification,
        }


@dataclass
class MsScreenResult:
    """Union of per-gene top SNPs by |beta_hat|"""

    kept_snp_ids: List[str]
    per_gene_top: Dict[str, List[str]]


@dataclass
class PipelineConfig:
    """Settings shared by the screen, rank and joint-fit stages"""

    n_keep: Optional[int] = None
    screen_lambda: Optional[float] = None
    k_cap: int = 20
    screen_tol: float = 1e-6
    screen_max_iter: int = 100
    hc_grid: str = 'unrestricted'
    center_x: bool = True
    rho: Optional[float] = None
    lam: Optional[float] = None
    cv_points: int = 8
    cv_repeats: int = 5
    holdout_fraction: float = 0.25
    seed: int = 0
    fit_tol: float = 1e-6
    fit_max_iter: int = 500
    top_k: int = 1000
    threads: int = 1

    def __post_init__(self):
        if self.n_keep is not None and self.n_keep < 1:
            raise ValueError(f"n_keep must be at least 1, got {self.n_keep}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be at least 1, got {self.top_k}")
        if self.cv_points < 1:
            raise ValueError(f"cv_points must be at least 1, got {self.cv_points}")
        if self.threads < 1:
            raise ValueError(f"threads must be at least 1, got {self.threads}")

    def to_dict(self):
        return {
            'n_keep': self.n_keep,
            'screen_lambda': self.screen_lambda,
            'k_cap': self.k_cap,
            'screen_tol': self.screen_tol,
            'screen_max_iter': self.screen_max_iter,
            'hc_grid': self.hc_grid,
            'center_x': self.center_x,
            'rho': self.rho,
            'lambda': self.lam,
            'cv_points': self.cv_points,
            'cv_repeats': self.cv_repeats,
            'holdout_fraction': self.holdout_fraction,
            'seed': self.seed,
            'fit_tol': self.fit_tol,
            'fit_max_iter': self.fit_max_iter,
            'top_k': self.top_k,
            'threads': self.threads,
        }


@dataclass
class PipelineResult:
    """Everything one screen -> rank -> joint-fit chain produced"""

    method: str
    marginal: MarginalFit
    kept_snp_ids: List[str]
    fit: LorsFit
    cv_table: Optional[pd.DataFrame]
    associations: List[Association]
    timings: Dict[str, float]
    zscores: Optional[ZscoreMatrix] = None
    scores: Optional[HcScoreTable] = None


@dataclass
class ExperimentResult:
    """Replicate-averaged ranking and pipeline comparisons for one scenario"""

    scenario: str
    sim_config: Dict[str, object]
    replicates: int
    pr_curves: Dict[str, PrCurve] = field(default_factory=dict)
    precision_curves: Dict[str, np.ndarray] = field(default_factory=dict)
    screen_sizes: Dict[str, List[int]] = field(default_factory=dict)
    joint_times: Dict[str, List[float]] = field(default_factory=dict)

    def pr_frame(self):
        frames = [curve.to_frame().assign(method=name) for name, curve in self.pr_curves.items()]
        if not frames:
            return pd.DataFrame(columns=['method', 'recall', 'precision'])
        return pd.concat(frames, ignore_index=True)[['method', 'recall', 'precision']]

    def precision_frame(self):
        rows = [(name, k, float(value))
                for name, curve in self.precision_curves.items()
                for k, value in enumerate(curve, start=1)]
        return pd.DataFrame(rows, columns=['method', 'k', 'precision'])

    def timing_frame(self):
        rows = []
        for name in self.joint_times:
            sizes = self.screen_sizes.get(name, [])
            rows.append({
                'method': name,
                'median_joint_fit_seconds': float(np.median(self.joint_times[name])),
                'mean_screen_size': float(np.mean(sizes)) if sizes else float('nan'),
            })
        return pd.DataFrame(rows, columns=['method', 'median_joint_fit_seconds', 'mean_screen_size'])


@dataclass
class RunManifest:
    """Provenance record written next to every stage output"""

    subcommand: str
    inputs: Dict[str, Dict[str, str]]
    config: Dict[str, object]
    seed: Optional[int]
    timings: Dict[str, float]
    tool_version: str
    threads: int = 1

    def to_dict(self):
        return {
            'subcommand': self.subcommand,
            'inputs': self.inputs,
            'config': self.config,
            'seed': self.seed,
            'timings': self.timings,
            'threads': self.threads,
            'tool_version': self.tool_version,
        }


class SnpFit(NamedTuple):
    """Marginal fit of one SNP against all probes"""

    beta: np.ndarray
    mu: np.ndarray
    L: np.ndarray
    trace: np.ndarray
    iterations: int
    converged: bool
