"""
Tests for the synthetic data generator
"""

import numpy as np
import pytest

from models import SimConfig
from simulator import sample_mvn_column, simulate, synthetic_genotypes


def test_strong_sparse_design():
    X = synthetic_genotypes(40, 30, seed=1)
    Y, truth, _ = simulate(X, 60, SimConfig(seed=1))
    B = truth.B_true.values
    assert np.count_nonzero(B) == 200
    assert len(truth.active_snp_ids) == 20
    for snp in truth.active_snp_ids:
        row = B[X.snp_ids.index(snp)]
        assert np.count_nonzero(row) == 10
        assert set(row[row != 0]) == {2.0}
        assert len(truth.influenced_genes[snp]) == 10
    assert Y.values.shape == (40, 60)
    assert Y.sample_ids == X.sample_ids


def test_weak_dense_design():
    X = synthetic_genotypes(30, 25, seed=2)
    _, truth, _ = simulate(X, 50, SimConfig(beta=0.5, genes_per_snp=50, seed=2))
    assert np.count_nonzero(truth.B_true.values) == 1000
    assert truth.active_snp_ids == sorted(truth.active_snp_ids, key=X.snp_ids.index)


def test_no_noise_no_confounders_is_exact():
    X = synthetic_genotypes(20, 25, seed=3)
    Y, truth, U = simulate(X, 15, SimConfig(n_active_snps=3, genes_per_snp=4,
                                            hidden_scale=0.0, noise_sd=0.0, seed=3))
    assert not np.any(U)
    np.testing.assert_array_equal(Y.values, X.values @ truth.B_true.values)


def test_seed_controls_the_draw():
    X = synthetic_genotypes(20, 25, seed=4)
    config = SimConfig(n_active_snps=3, genes_per_snp=4, seed=7)
    first, _, _ = simulate(X, 15, config)
    second, _, _ = simulate(X, 15, config)
    other, _, _ = simulate(X, 15, SimConfig(n_active_snps=3, genes_per_snp=4, seed=8))
    assert np.array_equal(first.values, second.values)
    assert not np.array_equal(first.values, other.values)


def test_active_snps_drawn_before_confounders():
    X = synthetic_genotypes(20, 25, seed=5)
    _, low, _ = simulate(X, 15, SimConfig(n_active_snps=3, genes_per_snp=4, hidden_scale=0.1, seed=9))
    _, high, _ = simulate(X, 15, SimConfig(n_active_snps=3, genes_per_snp=4, hidden_scale=5.0, seed=9))
    assert low.active_snp_ids == high.active_snp_ids
    assert low.influenced_genes == high.influenced_genes


def test_invalid_sizes():
    X = synthetic_genotypes(20, 5, seed=6)
    with pytest.raises(ValueError):
        simulate(X, 5, SimConfig(genes_per_snp=10, n_active_snps=2))
    with pytest.raises(ValueError):
        simulate(X, 50, SimConfig(n_active_snps=6))


def test_residual_has_zero_mean():
    X = synthetic_genotypes(5, 6, seed=7)
    diffs = []
    for seed in range(200):
        Y, truth, _ = simulate(X, 4, SimConfig(n_active_snps=2, genes_per_snp=2, seed=seed))
        diffs.append(Y.values - X.values @ truth.B_true.values)
    # each entry has variance 0.1 * k_hidden + 1 = 2
    assert np.max(np.abs(np.mean(diffs, axis=0))) < 5 * np.sqrt(2.0 / 200)


# ========== CONFOUNDER SAMPLING ==========

def test_zero_scale_gives_zeros():
    rng = np.random.default_rng(0)
    assert not np.any(sample_mvn_column(np.ones((4, 2)), 0.0, rng))
    with pytest.raises(ValueError):
        sample_mvn_column(np.ones((4, 2)), -1.0, rng)


def test_identity_factor_covariance():
    rng = np.random.default_rng(1)
    draws = sample_mvn_column(np.eye(4), 1.0, rng, size=100_000)
    assert draws.shape == (100_000, 4)
    np.testing.assert_allclose(np.cov(draws, rowvar=False), np.eye(4), atol=0.05)


def test_general_factor_covariance():
    rng = np.random.default_rng(2)
    H = rng.standard_normal((3, 5))
    draws = sample_mvn_column(H, 0.1, rng, size=100_000)
    expected = 0.1 * H @ H.T
    np.testing.assert_allclose(np.diag(np.cov(draws, rowvar=False)), np.diag(expected), rtol=0.05)


# ========== GENOTYPES ==========

def test_synthetic_genotypes():
    X = synthetic_genotypes(30, 40, seed=3)
    assert X.values.shape == (30, 40)
    assert set(np.unique(X.values)) <= {0.0, 1.0, 2.0}
    assert np.all(np.ptp(X.values, axis=0) > 0)
    assert X.snp_ids[0] == 'snp01' and X.sample_ids[0] == 's01'
    assert np.array_equal(X.values, synthetic_genotypes(30, 40, seed=3).values)
