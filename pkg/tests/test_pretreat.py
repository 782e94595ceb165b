import math
from itertools import combinations

import numpy as np
import pytest
from scipy.stats import chi2

from softsensor import (
    ConfigError,
    DataError,
    McdConfig,
    covariance,
    default_h,
    elbow_select_k,
    kmeans_detect,
    kmeans_fit,
    mcd_fit,
    t2_detect,
    t2_distances,
)
from softsensor.pretreat import consistency_factor


class TestCovariance:
    def test_two_point_hand_case(self):
        m = covariance(np.array([[1.0], [-1.0]]))
        assert m.mean[0] == 0.0
        assert m.cov[0, 0] == pytest.approx(2.0)

    def test_identical_rows_singular(self):
        m = covariance(np.ones((5, 2)))
        assert m.singular
        assert np.allclose(m.cov, 0.0)

    def test_standardized_unit_diagonal(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((200, 4))
        X = (X - X.mean(0)) / X.std(0, ddof=1)
        m = covariance(X)
        assert np.all(np.abs(np.diag(m.cov) - 1.0) < 1e-10)

    def test_too_few_rows(self):
        with pytest.raises(DataError):
            covariance(np.ones((2, 3)))


class TestT2:
    def test_center_row_zero_distance(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((50, 3))
        model = covariance(X)
        d = t2_distances(np.vstack([X, model.mean]), model)
        assert d[-1] == pytest.approx(0.0, abs=1e-12)

    def test_identity_covariance_squared_norm(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((20000, 2))
        model = covariance(X)
        d = t2_distances(np.array([[3.0, 4.0]]), model)
        assert d[0] == pytest.approx(25.0, rel=0.05)

    def test_distances_nonnegative(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((100, 4))
        d = t2_distances(X, covariance(X))
        assert np.all(d >= 0.0)

    def test_chi2_cutoff_two_dof(self):
        rng = np.random.default_rng(4)
        rep = t2_detect(rng.standard_normal((500, 2)), 0.997)
        assert rep.cutoff == pytest.approx(-2.0 * math.log(0.003), abs=1e-6)
        assert rep.cutoff == pytest.approx(11.6183, abs=1e-3)

    def test_degenerate_confidence(self):
        with pytest.raises(ConfigError, match="confidence"):
            t2_detect(np.random.default_rng(0).standard_normal((30, 2)), 1.0)

    def test_keep_matches_cutoff(self):
        rng = np.random.default_rng(5)
        rep = t2_detect(rng.standard_normal((300, 3)), 0.99)
        assert np.array_equal(rep.keep, rep.distance <= rep.cutoff)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((120, 3))
        perm = rng.permutation(120)
        a = t2_detect(X, 0.98)
        b = t2_detect(X[perm], 0.98)
        assert np.array_equal(a.keep[perm], b.keep)

    def test_singular_covariance_rejected(self):
        col = np.random.default_rng(7).standard_normal(40)
        X = np.column_stack([col, col])
        with pytest.raises(DataError, match="collinear"):
            t2_detect(X, 0.997)


class TestDefaultH:
    def test_paper_midpoint_rule(self):
        assert default_h(100, 10) == 78
        assert default_h(10, 1) == 8

    def test_rejects_n_equal_p(self):
        with pytest.raises(DataError):
            default_h(5, 5)

    def test_within_admissible_interval(self):
        for n, p in [(50, 3), (1000, 30), (11, 2)]:
            h = default_h(n, p)
            assert math.ceil((n + p + 1) / 2) <= h <= n


class TestMcd:
    def test_exhaustive_univariate_case(self):
        # all 5 choose 4 subsets checked by hand: {0,.1,.2,.3} has the
        # smallest variance, so the far point must be flagged
        X = np.array([[0.0], [0.1], [0.2], [0.3], [100.0]])
        variances = {
            sub: np.var([X[i, 0] for i in sub], ddof=1)
            for sub in combinations(range(5), 4)
        }
        assert min(variances, key=variances.get) == (0, 1, 2, 3)
        model, rep = mcd_fit(X, McdConfig(h=4, restarts=20, seed=0))
        assert sorted(rep.diagnostics["subset"]) == [0, 1, 2, 3]
        assert rep.keep.tolist() == [True, True, True, True, False]

    def test_determinant_history_non_increasing(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((200, 4))
        X[:20] += 6.0
        _, rep = mcd_fit(X, McdConfig(restarts=10, seed=1))
        hist = rep.diagnostics["determinant_history"]
        assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))

    def test_h_equal_n_matches_classical(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((60, 3))
        model, rep = mcd_fit(X, McdConfig(h=60, restarts=3, seed=0))
        classical = covariance(X)
        assert np.allclose(model.mean, classical.mean, atol=1e-12)
        assert np.allclose(model.cov, classical.cov, atol=1e-12)
        assert consistency_factor(60, 60, 3) == 1.0

    def test_winning_subset_is_h_closest(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((150, 3))
        X[:15] += 8.0
        model, rep = mcd_fit(X, McdConfig(restarts=10, seed=2))
        h = rep.diagnostics["h"]
        subset = set(rep.diagnostics["subset"].tolist())
        closest = set(np.argsort(rep.distance, kind="stable")[:h].tolist())
        assert subset == closest

    def test_h_bounds_validated(self):
        X = np.random.default_rng(0).standard_normal((20, 2))
        with pytest.raises(ConfigError):
            mcd_fit(X, McdConfig(h=5, restarts=2))

    def test_subset_frequency_recorded(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((80, 2))
        _, rep = mcd_fit(X, McdConfig(restarts=7, seed=3))
        freq = rep.diagnostics["subset_frequency"]
        assert freq.shape == (80,)
        assert np.all((freq >= 0.0) & (freq <= 1.0))

    def test_chi2_cutoff_family(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((300, 3))
        _, rep = mcd_fit(X, McdConfig(restarts=5, seed=4, cutoff_family="chi2"))
        assert rep.cutoff == pytest.approx(math.sqrt(chi2.ppf(0.997, 3)))


class TestKMeans:
    def test_two_cluster_hand_case(self):
        # exhaustive check over all 2-partitions of {0,1,10,11} puts the
        # split at {0,1} | {10,11} with centers 0.5 and 10.5
        X = np.array([[0.0], [1.0], [10.0], [11.0]])
        best = min(
            (sum((X[list(g), 0] - X[list(g), 0].mean()) ** 2)
             + sum((X[[i for i in range(4) if i not in g], 0]
                    - X[[i for i in range(4) if i not in g], 0].mean()) ** 2, ), g)
            for size in (1, 2)
            for g in combinations(range(4), size)
        )
        assert set(best[1]) in ({0, 1}, {2, 3}) or best[1] in ((0,), (3,))
        model = kmeans_fit(X, 2, restarts=8, seed=0)
        assert sorted(model.centers.ravel().tolist()) == [0.5, 10.5]
        assert model.assignment[0] == model.assignment[1]
        assert model.assignment[2] == model.assignment[3]

    def test_k_one_center_is_mean(self):
        rng = np.random.default_rng(13)
        X = rng.standard_normal((40, 2))
        model = kmeans_fit(X, 1, restarts=2, seed=0)
        assert np.allclose(model.centers[0], X.mean(axis=0))
        scatter = ((X - X.mean(axis=0)) ** 2).sum()
        assert model.inertia == pytest.approx(scatter)

    def test_k_equals_n_zero_inertia(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((6, 2))
        model = kmeans_fit(X, 6, restarts=3, seed=0)
        assert model.inertia == pytest.approx(0.0, abs=1e-20)

    def test_k_exceeds_distinct_rows(self):
        X = np.array([[1.0], [1.0], [2.0]])
        with pytest.raises(DataError, match="distinct"):
            kmeans_fit(X, 3, restarts=1, seed=0)

    def test_inertia_history_non_increasing(self):
        rng = np.random.default_rng(15)
        X = rng.standard_normal((100, 3))
        model = kmeans_fit(X, 4, restarts=5, seed=1)
        hist = model.inertia_history
        assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))

    def test_consensus_deterministic(self):
        rng = np.random.default_rng(16)
        X = rng.standard_normal((60, 2))
        a = kmeans_fit(X, 3, restarts=6, seed=5)
        b = kmeans_fit(X, 3, restarts=6, seed=5)
        assert np.array_equal(a.assignment, b.assignment)
        assert a.inertia == b.inertia


class TestElbow:
    def test_three_separated_clusters(self):
        r = np.random.default_rng(0)
        X = np.vstack([
            r.normal([0, 0], 1, (60, 2)),
            r.normal([10, 0], 1, (60, 2)),
            r.normal([5, 8.66], 1, (60, 2)),
        ])
        assert elbow_select_k(X, 8, restarts=8, seed=0) == 3

    def test_monte_carlo_small(self):
        hits = 0
        for seed in range(20):
            r = np.random.default_rng(seed)
            X = np.vstack([
                r.normal([0, 0], 1, (50, 2)),
                r.normal([10, 0], 1, (50, 2)),
                r.normal([5, 8.66], 1, (50, 2)),
            ])
            hits += elbow_select_k(X, 8, restarts=8, seed=seed) == 3
        assert hits >= 19

    def test_single_tight_cluster_weak_elbow(self):
        r = np.random.default_rng(1)
        X = np.full((50, 2), 3.0) + 1e-9 * r.standard_normal((50, 2))
        with pytest.warns(UserWarning, match="weak elbow"):
            assert elbow_select_k(X, 6, restarts=3, seed=0) == 2

    def test_k_max_too_small(self):
        with pytest.raises(ConfigError):
            elbow_select_k(np.zeros((10, 1)), 1)


class TestKMeansDetect:
    def test_counting_rule_on_900_95_5(self):
        # the flagging rule itself: clusters below 2% of n=1000 are outliers
        from softsensor.pretreat import KMeansModel

        assignment = np.repeat([0, 1, 2], [900, 95, 5])
        model = KMeansModel(
            k=3,
            centers=np.array([[0.0], [15.0], [30.0]]),
            assignment=assignment,
            inertia=1.0,
            frequencies=np.ones(1000),
            distances=np.zeros(1000),
        )
        rep = kmeans_detect(model, 0.02)
        assert rep.n_flagged() == 5
        assert (~rep.keep[-5:]).all() and rep.keep[:995].all()

    def test_small_cluster_flagged_end_to_end(self):
        # balanced-enough geometry that restarts agree on the structure
        r = np.random.default_rng(2)
        X = np.vstack([
            r.normal([0.0, 0.0], 0.5, (55, 2)),
            r.normal([12.0, 0.0], 0.5, (45, 2)),
        ])
        model = kmeans_fit(X, 2, restarts=30, seed=0)
        rep = kmeans_detect(model, 0.46)  # 45/100 falls below 46%
        assert rep.n_flagged() == 45
        assert (~rep.keep[-45:]).all()

    def test_consensus_matches_stable_structure(self):
        r = np.random.default_rng(6)
        X = np.vstack([
            r.normal([0.0, 0.0], 0.6, (40, 2)),
            r.normal([10.0, 0.0], 0.6, (40, 2)),
        ])
        model = kmeans_fit(X, 2, restarts=25, seed=1)
        assert np.all(model.frequencies == 1.0)
        first, second = model.assignment[:40], model.assignment[40:]
        assert len(set(first.tolist())) == 1 and len(set(second.tolist())) == 1
        assert first[0] != second[0]

    def test_vacuous_threshold(self):
        r = np.random.default_rng(3)
        X = np.vstack([r.normal(0, 1, (50, 2)), r.normal(10, 1, (50, 2))])
        model = kmeans_fit(X, 2, restarts=5, seed=0)
        rep = kmeans_detect(model, 1.0 / 200.0)
        assert rep.n_flagged() == 0

    def test_single_cluster_nothing_flagged(self):
        r = np.random.default_rng(4)
        model = kmeans_fit(r.standard_normal((30, 2)), 1, restarts=2, seed=0)
        rep = kmeans_detect(model, 0.5)
        assert rep.n_flagged() == 0
        assert math.isnan(rep.cutoff)
