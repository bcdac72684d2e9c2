"""
Tests for Z-score standardization, HC scoring and the baseline rankings
"""

import numpy as np
import pytest

from hc_rank import (baseline_rank, hc_rank_all, hc_statistic, normal_tail, screen_top_n,
                     standardize)
from marginal import fit_all_snps
from models import CoefficientMatrix, ExpressionMatrix, GenotypeMatrix, SimConfig, ZscoreMatrix
from simulator import simulate, synthetic_genotypes


def brute_force_hc(z, step=1e-3):
    """Maximum over a dense grid plus the observed |z| values"""
    a = np.abs(z)
    q = a.size
    grid = np.union1d(np.arange(0.0, a.max() + step, step), a)
    best = -np.inf
    for t in grid:
        tail = normal_tail(t)
        value = np.sqrt(q) * (np.sum(a >= t) / q - tail) / np.sqrt(tail * (1 - tail))
        best = max(best, value)
    return best


def zscores(rows, ids=None):
    rows = np.asarray(rows, dtype=float)
    ids = ids or [f"rs{i}" for i in range(rows.shape[0])]
    return ZscoreMatrix(rows, ids, [f"p{j}" for j in range(rows.shape[1])],
                        np.zeros(rows.shape, dtype=bool))


# ========== HC STATISTIC ==========

def test_zero_row():
    assert hc_statistic(np.zeros(4)) == pytest.approx(2.0)


def test_sign_and_order_invariance():
    z = np.array([0.3, -1.2, 2.5, 0.0, -0.7, 1.9])
    value = hc_statistic(z)
    assert hc_statistic(-z) == value
    assert hc_statistic(z[::-1]) == pytest.approx(value, abs=1e-12)


def test_single_large_value_dominates_unrestricted():
    value, t_star, _ = hc_statistic([5.0, 0.0, 0.0, 0.0], grid='unrestricted', return_threshold=True)
    assert t_star == 5.0
    assert value == pytest.approx(brute_force_hc(np.array([5.0, 0.0, 0.0, 0.0])), rel=1e-9)


def test_restricted_grid_drops_extreme_thresholds():
    value, t_star, size = hc_statistic([5.0, 0.0, 0.0, 0.0], grid='restricted', return_threshold=True)
    assert (t_star, size) == (0.0, 1)
    assert value == pytest.approx(2.0)


def test_restricted_fallback_threshold():
    value, t_star, _ = hc_statistic([10.0, 10.0], grid='restricted', return_threshold=True)
    assert t_star == pytest.approx(0.0, abs=1e-12)
    assert value == pytest.approx(np.sqrt(2.0))


def test_invalid_rows():
    with pytest.raises(ValueError):
        hc_statistic([1.0])
    with pytest.raises(ValueError):
        hc_statistic([1.0, np.nan])
    with pytest.raises(ValueError):
        hc_statistic([1.0, 2.0], grid='dense')


def test_matches_dense_grid_search():
    rng = np.random.default_rng(0)
    for q in (10, 100):
        for _ in range(25):
            z = rng.standard_normal(q)
            z[:rng.integers(0, 4)] += 3.0
            assert hc_statistic(z, grid='unrestricted') == pytest.approx(brute_force_hc(z), abs=1e-6)


def test_default_grid_keeps_large_thresholds():
    _, t_star, size = hc_statistic([5.0, 0.0, 0.0, 0.0], return_threshold=True)
    assert (t_star, size) == (5.0, 2)


def test_sparse_strong_row_beats_shifted_noise():
    rng = np.random.default_rng(4)
    signal = rng.standard_normal(100)
    signal[:10] = 15.0
    noise = np.abs(rng.standard_normal(100)) + 0.05
    assert hc_statistic(signal) > hc_statistic(noise)
    _, t_star, _ = hc_statistic(signal, return_threshold=True)
    assert t_star == 15.0


def test_adding_a_large_entry_never_lowers_hc():
    rng = np.random.default_rng(5)
    for _ in range(200):
        z = rng.standard_normal(20)
        z[rng.integers(20)] = 0.0
        before = hc_statistic(z)
        z[np.flatnonzero(z == 0.0)[0]] = np.abs(z).max() + rng.uniform(0.1, 3.0)
        assert hc_statistic(z) >= before - 1e-12 * abs(before)


def test_dominance_survives_rescaling():
    rng = np.random.default_rng(6)
    for _ in range(100):
        weak = rng.standard_normal(15)
        strong = np.sign(weak) * (np.abs(weak) + rng.exponential(0.5, 15))
        for c in (1.0, 1.5, 3.0):
            low, high = hc_statistic(c * weak), hc_statistic(c * strong)
            assert high >= low - 1e-9 * abs(low)


# ========== RANKING ==========

def test_strong_row_ranks_first():
    table = hc_rank_all(zscores([[5.0] + [0.0] * 9, [0.0] * 10]), grid='unrestricted')
    assert table.rank.tolist() == [1, 2]
    assert table.hc[0] > table.hc[1]


def test_ties_broken_by_snp_id():
    table = hc_rank_all(zscores([[1.0, 2.0, 0.5], [1.0, 2.0, 0.5]], ids=['rs2', 'rs1']))
    assert table.rank_order() == ['rs1', 'rs2']


def test_rank_is_a_permutation_ordered_by_score():
    rng = np.random.default_rng(1)
    table = hc_rank_all(zscores(rng.standard_normal((40, 15))))
    assert sorted(table.rank.tolist()) == list(range(1, 41))
    ordered = table.hc[np.argsort(table.rank)]
    assert np.all(np.diff(ordered) <= 0)
    assert table.threshold_grid_size == int(table.grid_sizes.max())


def test_thread_count_does_not_change_scores():
    rng = np.random.default_rng(2)
    Z = zscores(rng.standard_normal((30, 12)))
    single, pooled = hc_rank_all(Z), hc_rank_all(Z, threads=4)
    assert np.array_equal(single.hc, pooled.hc)
    assert np.array_equal(single.rank, pooled.rank)


@pytest.mark.parametrize('seed', [0, 1])
def test_active_snps_outscore_noise_in_strong_sparse_data(seed):
    X = synthetic_genotypes(80, 60, seed=seed, maf_low=0.2)
    Y, truth, _ = simulate(X, 40, SimConfig(n_active_snps=5, genes_per_snp=5, beta=2.0, seed=seed))
    marginal = fit_all_snps(Y, X)
    table = hc_rank_all(standardize(marginal.beta_hat, Y, X))
    active = np.isin(table.snp_ids, truth.active_snp_ids)
    assert active.sum() == 5
    assert np.all(table.hc[active] > table.hc[~active].mean())
    assert set(table.rank_order()[:5]) == set(truth.active_snp_ids)


# ========== STANDARDIZATION ==========

def make_inputs(seed=0, n=10, p=4, q=3):
    rng = np.random.default_rng(seed)
    samples = [f"s{i}" for i in range(n)]
    X = GenotypeMatrix(rng.integers(0, 3, size=(n, p)).astype(float), [f"rs{i}" for i in range(p)], samples)
    Y = ExpressionMatrix(rng.standard_normal((n, q)), [f"p{j}" for j in range(q)], samples)
    B = CoefficientMatrix(rng.standard_normal((p, q)), X.snp_ids, Y.probe_ids)
    return X, Y, B


@pytest.mark.parametrize('center_x', [True, False])
def test_standardize_matches_direct_formula(center_x):
    X, Y, B = make_inputs()
    Z = standardize(B, Y, X, center_x=center_x)
    for i in range(X.n_snps):
        x = X.values[:, i]
        xx = x - x.mean() if center_x else x
        for j in range(Y.n_probes):
            residual = Y.values[:, j] - x * B.values[i, j]
            expected = B.values[i, j] / np.sqrt(np.var(residual, ddof=1) / (xx @ xx))
            assert Z.values[i, j] == pytest.approx(expected, rel=1e-12)


def test_zero_effect_gives_zero_score():
    X, Y, B = make_inputs()
    zero = CoefficientMatrix(np.zeros_like(B.values), B.row_ids, B.col_ids)
    assert not np.any(standardize(zero, Y, X).values)


def test_perfect_fit_is_flagged():
    X, Y, B = make_inputs()
    exact = ExpressionMatrix(np.outer(X.values[:, 0], B.values[0]), Y.probe_ids, Y.sample_ids)
    Z = standardize(B, exact, X)
    assert Z.zero_variance[0].all()
    assert not np.any(Z.values[0])


def test_standardize_subsets_genotypes():
    X, Y, B = make_inputs()
    part = CoefficientMatrix(B.values[[2, 0]], ['rs2', 'rs0'], B.col_ids)
    Z = standardize(part, Y, X)
    full = standardize(B, Y, X)
    np.testing.assert_array_equal(Z.values, full.values[[2, 0]])


# ========== SCREENING AND BASELINES ==========

def test_screen_top_n():
    rng = np.random.default_rng(3)
    X, _, _ = make_inputs(p=6)
    table = hc_rank_all(zscores(rng.standard_normal((6, 8)), ids=X.snp_ids))
    full = screen_top_n(table, X, 6)
    assert full.kept_snp_ids == table.rank_order()
    top2 = screen_top_n(table, X, 2)
    assert top2.kept_snp_ids == full.kept_snp_ids[:2]
    np.testing.assert_array_equal(top2.X_reduced.values, X.subset(top2.kept_snp_ids).values)
    assert len(screen_top_n(table, X, 50).kept_snp_ids) == 6
    with pytest.raises(ValueError):
        screen_top_n(table, X, 0)


def test_baselines_disagree_on_spread_versus_peak():
    beta = CoefficientMatrix(np.array([[1.0, 1.0, 1.0, 1.0], [4.0, 0.0, 0.0, 0.0]]), ['a', 'b'], ['p1', 'p2', 'p3', 'p4'])
    assert baseline_rank(beta, 'rowmeans').rank_order() == ['a', 'b']
    assert baseline_rank(beta, 'EXTREMEVAL').rank_order() == ['b', 'a']


def test_rowmeans_sign_handling():
    beta = CoefficientMatrix(np.array([[-2.0, -2.0], [1.0, 1.0]]), ['a', 'b'], ['p1', 'p2'])
    assert baseline_rank(beta, 'rowmeans').rank_order() == ['b', 'a']
    assert baseline_rank(beta, 'rowmeans', absolute=True).rank_order() == ['a', 'b']


def test_baseline_on_zero_matrix_and_bad_method():
    beta = CoefficientMatrix(np.zeros((3, 2)), ['c', 'a', 'b'], ['p1', 'p2'])
    table = baseline_rank(beta, 'extremeval')
    assert not np.any(table.hc)
    assert table.rank_order() == ['a', 'b', 'c']
    with pytest.raises(ValueError):
        baseline_rank(beta, 'median')
