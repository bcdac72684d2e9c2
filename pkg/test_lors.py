"""
Tests for the sparse + low-rank joint fit and its cross-validation
"""

import numpy as np
import pytest

from errors import DegenerateDesignError
from lors import (association_list, default_cv_config, lasso_column_update, lasso_solve, lors_cv,
                  lors_fit, lors_objective, null_thresholds, save_fit, solve_lors)
from matrix_io import load_key_values, load_matrix
from models import Association, CvConfig, ExpressionMatrix, GenotypeMatrix, LorsFit


def make_problem(n=30, r=5, q=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, r))
    B = np.zeros((r, q))
    B[0, :2] = 1.5
    Y = X @ B + np.outer(rng.standard_normal(n), rng.standard_normal(q)) + rng.standard_normal((n, q))
    return Y, X


def labelled(Y, X):
    samples = [f"s{i}" for i in range(Y.shape[0])]
    return (ExpressionMatrix(Y, [f"p{j}" for j in range(Y.shape[1])], samples),
            GenotypeMatrix(X, [f"rs{k}" for k in range(X.shape[1])], samples))


# ========== LASSO BLOCK ==========

def test_orthonormal_design_single_cycle_is_exact():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((10, 3)))
    y = rng.standard_normal(10)
    rho = 0.4
    b = lasso_column_update(y, Q, np.zeros(3), rho)
    expected = np.sign(Q.T @ y) * np.maximum(np.abs(Q.T @ y) - rho / 2, 0.0)
    np.testing.assert_allclose(b, expected, atol=1e-12)


def test_zero_penalty_single_column_is_least_squares():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((15, 1))
    y = rng.standard_normal(15)
    b = lasso_column_update(y, x, np.zeros(1), 0.0)
    assert b[0] == pytest.approx(float(x[:, 0] @ y / (x[:, 0] @ x[:, 0])))


def test_lasso_solution_satisfies_optimality_conditions():
    rng = np.random.default_rng(3)
    for _ in range(10):
        base = rng.standard_normal((25, 1))
        X = base + 0.5 * rng.standard_normal((25, 3))
        y = X @ np.array([1.0, 0.0, -0.5]) + rng.standard_normal(25)
        rho = 2.0
        b = lasso_solve(y, X, rho)
        gradient = 2.0 * X.T @ (y - X @ b)
        active = b != 0
        np.testing.assert_allclose(gradient[active], rho * np.sign(b[active]), atol=1e-6)
        assert np.all(np.abs(gradient[~active]) <= rho + 1e-6)


def test_zero_norm_column_keeps_zero_coefficient():
    X = np.column_stack([np.arange(6.0), np.zeros(6)])
    b = lasso_column_update(np.arange(6.0), X, np.array([0.0, 3.0]), 0.1)
    assert b[1] == 0.0


# ========== JOINT FIT ==========

def test_objective_trace_never_increases():
    for seed in range(10):
        Y, X = make_problem(seed=seed)
        state = solve_lors(Y, X, rho=1.0, lam=2.0, tol=1e-9)
        trace = np.asarray(state.trace)
        assert np.all(np.diff(trace) <= 1e-10 * np.abs(trace[:-1]))


def test_rho_above_null_gives_empty_b():
    Y, X = make_problem()
    rho_null, _ = null_thresholds(Y, X)
    fit = lors_fit(*labelled(Y, X), rho=1.01 * rho_null, lam=0.0)
    assert fit.nnz_B == 0
    assert not np.any(fit.L)
    np.testing.assert_allclose(fit.mu, Y.mean(axis=0))


def test_huge_lambda_reduces_to_per_gene_lasso():
    Y, X = make_problem(q=3)
    Yc = Y - Y.mean(axis=0)
    Xc = X - X.mean(axis=0)
    lam = 2.01 * np.linalg.norm(Yc)
    state = solve_lors(Y, X, rho=3.0, lam=lam, tol=1e-14, max_iter=20_000)
    assert not np.any(state.L)
    for j in range(Y.shape[1]):
        np.testing.assert_allclose(state.B[:, j], lasso_solve(Yc[:, j], Xc, 3.0), atol=1e-5)


def test_random_restarts_do_not_find_a_lower_objective():
    Y, X = make_problem()
    rho, lam = 0.1, 0.5
    best = solve_lors(Y, X, rho, lam, tol=1e-12, max_iter=20_000).trace[-1]
    rng = np.random.default_rng(4)
    restarts = []
    for _ in range(50):
        state = solve_lors(Y, X, rho, lam, tol=1e-12, max_iter=20_000,
                           B_init=rng.standard_normal((5, 4)), L_init=rng.standard_normal((30, 4)))
        restarts.append(state.trace[-1])
    assert best <= min(restarts) + 1e-6 * max(1.0, abs(min(restarts)))


def test_reported_objective_matches_recomputation():
    Y, X = make_problem(seed=5)
    fit = lors_fit(*labelled(Y, X), rho=0.5, lam=1.0)
    recomputed = lors_objective(Y, X, fit.B, fit.mu, fit.L, 0.5, 1.0)
    assert fit.objective == pytest.approx(recomputed, rel=1e-9)


def test_gene_permutation_permutes_columns():
    Y, X = make_problem(seed=6)
    order = [2, 0, 3, 1]
    base = solve_lors(Y, X, 0.5, 1.0, tol=1e-12, max_iter=20_000)
    moved = solve_lors(Y[:, order], X, 0.5, 1.0, tol=1e-12, max_iter=20_000)
    np.testing.assert_allclose(moved.B, base.B[:, order], atol=1e-6)


def test_no_penalty_gives_orthogonal_residuals():
    Y, X = make_problem(r=3, seed=7)
    state = solve_lors(Y, X, 0.0, 0.0, tol=0.0, max_iter=2000)
    residual = Y - X @ state.B - state.mu
    assert np.max(np.abs(X.T @ residual)) < 1e-6
    assert np.max(np.abs(residual.sum(axis=0))) < 1e-8


def test_constant_column_rejected():
    Y, X = make_problem()
    X[:, 2] = 1.0
    with pytest.raises(DegenerateDesignError):
        lors_fit(*labelled(Y, X), rho=1.0, lam=1.0)


# ========== CROSS-VALIDATION ==========

def test_default_grids_end_at_null_thresholds():
    Y, X = make_problem()
    config = default_cv_config(Y, X)
    rho_null, lam_null = null_thresholds(Y, X)
    assert len(config.rho_grid) == 8 and len(config.lambda_grid) == 8
    assert config.rho_grid[-1] == pytest.approx(rho_null)
    assert config.lambda_grid[0] == pytest.approx(0.01 * lam_null)
    assert config.rho_grid == sorted(config.rho_grid)


def test_single_point_grid_is_returned():
    Y, X = make_problem()
    config = CvConfig([0.7], [1.3], repeats=2)
    rho, lam, table = lors_cv(*labelled(Y, X), config)
    assert (rho, lam) == (0.7, 1.3)
    assert list(table.columns) == ['rho', 'lambda', 'cv_error', 'cv_sd']
    assert len(table) == 1


def test_ties_go_to_the_largest_penalties():
    Y, X = make_problem(n=20)
    config = CvConfig([1e6, 2e6], [0.0, 1e6], repeats=3, seed=1)
    rho, lam, table = lors_cv(*labelled(Y, X), config)
    assert (rho, lam) == (2e6, 1e6)
    assert len(table) == 4
    assert table['cv_error'].nunique() == 1


def test_threads_do_not_change_selection():
    Y, X = make_problem()
    config = CvConfig([0.5, 5.0], [0.5, 5.0], repeats=3, seed=2)
    single = lors_cv(*labelled(Y, X), config)
    pooled = lors_cv(*labelled(Y, X), config, threads=3)
    assert single[:2] == pooled[:2]
    assert single[2]['cv_error'].tolist() == pooled[2]['cv_error'].tolist()


def test_small_training_split_rejected():
    Y, X = make_problem(n=12)
    with pytest.raises(ValueError):
        lors_cv(*labelled(Y, X), CvConfig([1.0], [1.0]))


def test_constant_training_column_exhausts_redraws():
    Y, X = make_problem()
    X[:, 1] = 2.0
    with pytest.raises(DegenerateDesignError):
        lors_cv(*labelled(Y, X), CvConfig([1.0], [1.0], repeats=1))


def test_pure_noise_mostly_selects_the_largest_rho():
    largest = 0
    for seed in range(8):
        rng = np.random.default_rng(100 + seed)
        Y, X = rng.standard_normal((40, 4)), rng.standard_normal((40, 4))
        config = default_cv_config(Y, X, n_points=4, repeats=3, seed=seed)
        rho, _, _ = lors_cv(*labelled(Y, X), config)
        largest += rho == config.rho_grid[-1]
    assert largest >= 4


def test_planted_signal_selects_rho_below_null():
    for seed in range(3):
        rng = np.random.default_rng(200 + seed)
        X = rng.standard_normal((40, 4))
        B = np.zeros((4, 4))
        B[0, :2] = 3.0
        B[2, 3] = -3.0
        Y = X @ B + rng.standard_normal((40, 4))
        config = default_cv_config(Y, X, n_points=4, repeats=3, seed=seed)
        rho, _, _ = lors_cv(*labelled(Y, X), config)
        assert rho < null_thresholds(Y, X)[0]


# ========== OUTPUT ==========

def make_fit(B, row_ids, col_ids):
    B = np.asarray(B, dtype=float)
    return LorsFit(B=B, mu=np.zeros(B.shape[1]), L=np.zeros((3, B.shape[1])), rho=1.0, lam=1.0,
                   objective_trace=[1.0], rank_L=0, nnz_B=int(np.count_nonzero(B)),
                   row_ids=row_ids, col_ids=col_ids)


def test_associations_sorted_by_magnitude():
    fit = make_fit([[2.0, 0.0], [0.0, -3.0], [0.5, 0.0]], ['rs1', 'rs2', 'rs3'], ['p1', 'p2'])
    assert association_list(fit, 10) == [Association('rs2', 'p2', -3.0),
                                         Association('rs1', 'p1', 2.0),
                                         Association('rs3', 'p1', 0.5)]
    assert len(association_list(fit, 2)) == 2
    with pytest.raises(ValueError):
        association_list(fit, 0)


def test_association_ties_ordered_by_ids():
    fit = make_fit([[1.0, -1.0], [1.0, 0.0]], ['b', 'a'], ['p1', 'p2'])
    pairs = [(a.snp_id, a.probe_id) for a in association_list(fit, 10)]
    assert pairs == [('a', 'p1'), ('b', 'p1'), ('b', 'p2')]


def test_empty_b_gives_no_associations():
    assert association_list(make_fit(np.zeros((2, 2)), ['a', 'b'], ['p1', 'p2']), 5) == []


def test_save_fit(tmp_path):
    Y, X = make_problem()
    fit = lors_fit(*labelled(Y, X), rho=0.5, lam=1.0)
    save_fit(fit, tmp_path / 'B.tsv', tmp_path / 'fit_meta.txt')
    loaded = load_matrix(tmp_path / 'B.tsv', 'coefficient')
    assert loaded.row_ids == fit.row_ids
    np.testing.assert_allclose(loaded.values, fit.B, atol=1e-12)
    meta = load_key_values(tmp_path / 'fit_meta.txt')
    assert float(meta['rho']) == fit.rho
    assert int(meta['nnz_B']) == fit.nnz_B
    assert int(meta['n_snps']) == len(fit.row_ids)
