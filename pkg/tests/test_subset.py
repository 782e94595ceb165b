import math

import numpy as np
import pytest

from oracles import (
    cv_objective_reference,
    enumerate_best_subset,
    enumerate_ss_cv,
)
from softsensor import (
    ConfigError,
    DataError,
    SubsetConfig,
    best_subset,
    criterion_value,
    make_folds,
    ss_cv_design,
    ss_cv_solve,
)
from softsensor.subset import SearchLog


class TestCriterionValue:
    def test_r2adj_hand_value(self):
        assert criterion_value("r2adj", 100, 50.0, 3) == pytest.approx(50.0 / 96.0)

    def test_aicc_hand_value(self):
        expected = 100.0 * math.log(0.5) + 6.0
        assert criterion_value("aicc", 100, 50.0, 3) == pytest.approx(expected)

    def test_bic_hand_value(self):
        expected = 100.0 * math.log(0.5) + 3.0 * math.log(100.0)
        assert criterion_value("bic", 100, 50.0, 3) == pytest.approx(expected)

    def test_zero_rss_sentinel(self):
        assert criterion_value("aicc", 50, 0.0, 2) == float("-inf")
        assert criterion_value("bic", 50, 0.0, 2) == float("-inf")
        assert criterion_value("r2adj", 50, 0.0, 2) == 0.0

    def test_r2adj_degenerate_dof(self):
        with pytest.raises(DataError):
            criterion_value("r2adj", 4, 1.0, 3)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            criterion_value("aic", 10, 1.0, 1)

    def test_rss_ordering_matches_criterion_ordering(self):
        # at fixed cardinality every criterion is increasing in RSS
        rng = np.random.default_rng(0)
        for kind in ("r2adj", "aicc", "bic"):
            values = sorted(rng.uniform(0.1, 40.0, 10))
            crits = [criterion_value(kind, 60, v, 4) for v in values]
            assert crits == sorted(crits)


class TestMakeFolds:
    def test_two_even_folds(self):
        plan = make_folds(10, 2, seed=0)
        assert [len(f) for f in plan.folds] == [5, 5]
        assert len(plan.train_rows(0)) == 5

    def test_three_fold_sizes(self):
        plan = make_folds(10, 3, seed=0)
        assert sorted(len(f) for f in plan.folds) == [3, 3, 4]

    def test_cardinality_condition(self):
        with pytest.raises(DataError, match="identifiability"):
            make_folds(10, 2, seed=0, n_p=6)

    def test_partition_invariants(self):
        for seed in range(5):
            for K in (2, 3, 4, 5):
                plan = make_folds(23, K, seed=seed)
                merged = np.sort(np.concatenate(plan.folds))
                assert merged.tolist() == list(range(23))
                sizes = [len(f) for f in plan.folds]
                assert max(sizes) - min(sizes) <= 1

    def test_deterministic(self):
        a = make_folds(17, 3, seed=9)
        b = make_folds(17, 3, seed=9)
        for fa, fb in zip(a.folds, b.folds):
            assert fa.tolist() == fb.tolist()


def random_instance(rng, n_max=150, p_max=10, sigma_range=(-2, 0.5)):
    n = int(rng.integers(30, n_max + 1))
    p = int(rng.integers(3, p_max + 1))
    X = rng.standard_normal((n, p))
    k_true = int(rng.integers(1, p))
    support = rng.choice(p, size=k_true, replace=False)
    a = np.zeros(p)
    a[support] = rng.normal(0, 2, k_true)
    sigma = 10 ** rng.uniform(*sigma_range)
    y = X @ a + rng.normal(0, sigma, n)
    return X, y


class TestBestSubset:
    def test_noiseless_two_of_three(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((50, 3))
        y = 2.0 * X[:, 0] - X[:, 2]
        for kind in ("r2adj", "aicc", "bic"):
            model = best_subset(X, y, kind)
            assert np.flatnonzero(model.z).tolist() == [0, 2]
            oracle_sup, _ = enumerate_best_subset(X, y, kind)
            assert tuple(np.flatnonzero(model.z)) == oracle_sup

    def test_single_candidate(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((30, 1))
        y = X[:, 0] + 0.1 * rng.standard_normal(30)
        model = best_subset(X, y, "bic")
        assert model.z.tolist() == [True]

    def test_matches_enumeration_on_random_instances(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            X, y = random_instance(rng)
            for kind in ("r2adj", "aicc", "bic"):
                model = best_subset(X, y, kind)
                oracle_sup, oracle_coefs = enumerate_best_subset(X, y, kind)
                assert tuple(np.flatnonzero(model.z)) == oracle_sup
                assert np.allclose(model.a, oracle_coefs, atol=1e-8)

    def test_incumbent_log_non_increasing(self):
        rng = np.random.default_rng(4)
        X, y = random_instance(rng)
        log = SearchLog()
        model = best_subset(X, y, "bic", log=log)
        objs = [obj for _, obj, _ in log.incumbents]
        assert all(b <= a for a, b in zip(objs, objs[1:]))
        n, p = X.shape
        full_rss = float(np.sum((y - X @ np.linalg.lstsq(X, y, rcond=None)[0]) ** 2))
        assert model.info["criterion_value"] <= criterion_value("bic", n, full_rss, p)
        for j in range(p):
            a1, *_ = np.linalg.lstsq(X[:, [j]], y, rcond=None)
            rss1 = float(np.sum((y - X[:, [j]] @ a1) ** 2))
            envelope = criterion_value("bic", n, rss1, 1)
            assert model.info["criterion_value"] <= envelope + 1e-9 * max(1.0, abs(envelope))

    def test_noise_column_never_hurts(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            X, y = random_instance(rng, p_max=7)
            base = best_subset(X, y, "bic").info["criterion_value"]
            X2 = np.column_stack([X, rng.standard_normal(len(y))])
            extended = best_subset(X2, y, "bic").info["criterion_value"]
            assert extended <= base + 1e-6 * max(1.0, abs(base))

    def test_search_log_file(self, tmp_path):
        rng = np.random.default_rng(6)
        X, y = random_instance(rng)
        log = SearchLog()
        best_subset(X, y, "aicc", log=log)
        path = tmp_path / "log.txt"
        log.write(path)
        text = path.read_text()
        assert "nodes_expanded" in text and "incumbents" in text

    def test_duplicate_columns_lex_smallest(self):
        rng = np.random.default_rng(7)
        col = rng.standard_normal(60)
        X = np.column_stack([rng.standard_normal(60), col, col])
        y = 3.0 * col + 0.2 * rng.standard_normal(60)
        model = best_subset(X, y, "bic")
        assert np.flatnonzero(model.z).tolist() == [1]


class TestSsCv:
    def test_noiseless_single_input(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((40, 3))
        y = 2.0 * X[:, 0]
        for K in (2, 3, 4):
            plan = make_folds(40, K, seed=0, n_p=3)
            mask, obj = ss_cv_solve(X, y, plan)
            assert mask.tolist() == [True, False, False]
            assert obj == 0.0

    def test_matches_enumeration_on_random_instances(self):
        rng = np.random.default_rng(9)
        for trial in range(10):
            X, y = random_instance(rng, p_max=8)
            plan = make_folds(len(y), 2, seed=trial, n_p=X.shape[1])
            mask, obj = ss_cv_solve(X, y, plan)
            oracle_sup, oracle_obj = enumerate_ss_cv(X, y, plan)
            assert tuple(np.flatnonzero(mask)) == oracle_sup
            assert obj == pytest.approx(oracle_obj, rel=1e-9, abs=1e-12)

    def test_duplicate_informative_columns_tie(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal(60)
        X = np.column_stack([x, x, rng.standard_normal(60)])
        y = 2.0 * x + 0.3 * rng.standard_normal(60)
        plan = make_folds(60, 2, seed=3, n_p=3)
        mask, _ = ss_cv_solve(X, y, plan)
        assert np.flatnonzero(mask).tolist() == [0]

    def test_objective_definition(self):
        rng = np.random.default_rng(11)
        X, y = random_instance(rng, p_max=5)
        plan = make_folds(len(y), 3, seed=1, n_p=X.shape[1])
        mask, obj = ss_cv_solve(X, y, plan)
        sup = np.flatnonzero(mask).tolist()
        assert obj == pytest.approx(cv_objective_reference(X, y, plan, sup), rel=1e-9)


class TestSsCvDesign:
    def test_lower_median_rule(self):
        # cardinalities {2,3,3,4,5} -> the lower median is 3
        cards = sorted([2, 3, 3, 4, 5])
        assert cards[(len(cards) - 1) // 2] == 3

    def test_unanimous_runs(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((60, 4))
        y = 1.5 * X[:, 1]
        model = ss_cv_design(X, y, K_max=3, repeats=3, seed=0)
        assert np.flatnonzero(model.z).tolist() == [1]
        assert set(model.info["cardinalities"]) == {1}

    def test_noiseless_recovery_monte_carlo(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            X = rng.standard_normal((120, 11))
            a = np.zeros(11)
            a[[0, 3, 6, 9]] = [1.5, -2.0, 1.0, 0.8]
            y = X @ a
            model = ss_cv_design(X, y, K_max=3, repeats=3, seed=seed)
            hits += np.flatnonzero(model.z).tolist() == [0, 3, 6, 9]
        assert hits >= 18

    def test_coefficients_refit_on_all_rows(self):
        rng = np.random.default_rng(13)
        X = rng.standard_normal((80, 5))
        y = X @ [2.0, 0.0, 0.0, -1.0, 0.0] + 0.05 * rng.standard_normal(80)
        model = ss_cv_design(X, y, K_max=3, repeats=4, seed=1)
        sup = np.flatnonzero(model.z)
        refit, *_ = np.linalg.lstsq(X[:, sup], y, rcond=None)
        assert np.allclose(model.a[sup], refit, atol=1e-10)


class TestBigMBound:
    def test_warning_when_box_would_bind(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((40, 2))
        y = X @ [5.0, 0.0] + 0.01 * rng.standard_normal(40)
        with pytest.warns(UserWarning, match="box bound"):
            best_subset(X, y, "bic", SubsetConfig(a_bound=0.1))

    def test_no_warning_with_roomy_bound(self, recwarn):
        rng = np.random.default_rng(15)
        X = rng.standard_normal((40, 2))
        y = X @ [1.0, 0.0] + 0.01 * rng.standard_normal(40)
        best_subset(X, y, "bic")
        assert not [w for w in recwarn if "box bound" in str(w.message)]


class TestHeuristicMode:
    def test_wide_problem_is_flagged(self):
        rng = np.random.default_rng(16)
        p = 20
        X = rng.standard_normal((100, p))
        a = np.zeros(p)
        a[[2, 11]] = [2.0, -1.5]
        y = X @ a  # noiseless so the optimum is unambiguous
        model = best_subset(X, y, "bic", SubsetConfig(exact_limit=16, node_budget=3000))
        assert model.info["exact"] is False
        assert np.flatnonzero(model.z).tolist() == [2, 11]
