"""Rejection paths promised by the type invariants and preconditions."""

import numpy as np
import pytest

from softsensor import (
    ConfigError,
    DataError,
    LassoConfig,
    McdConfig,
    PlantSpec,
    SubsetConfig,
    benchmark,
    best_subset,
    fit_ols,
    fit_pca_regression,
    fit_pls,
    make_folds,
)
from softsensor.evaluate import BiasPolicy
from softsensor.synth import generate
from tests_support import tiny_dataset


def test_lasso_config_rejects_negative_lambda():
    with pytest.raises(ConfigError):
        LassoConfig(lam=-0.5)


def test_mcd_config_rejects_degenerate_confidence():
    with pytest.raises(ConfigError):
        McdConfig(confidence=1.0)
    with pytest.raises(ConfigError):
        McdConfig(confidence=0.0)
    with pytest.raises(ConfigError):
        McdConfig(cutoff_family="gamma")


def test_subset_config_rejects_bad_bounds():
    with pytest.raises(ConfigError):
        SubsetConfig(a_bound=0.0)
    with pytest.raises(ConfigError):
        SubsetConfig(node_budget=0)


def test_best_subset_rejects_unknown_criterion():
    X = np.random.default_rng(0).standard_normal((20, 3))
    with pytest.raises(ConfigError):
        best_subset(X, X[:, 0], "mallows")


def test_variance_target_bounds():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((30, 3))
    y = rng.standard_normal(30)
    with pytest.raises(ConfigError):
        fit_pca_regression(X, y, variance_target=0.0)
    with pytest.raises(ConfigError):
        fit_pls(X, y, variance_target=1.5)


def test_make_folds_more_folds_than_rows():
    with pytest.raises(DataError):
        make_folds(3, 5, seed=0)


def test_benchmark_needs_methods_and_repeats():
    d = tiny_dataset()
    with pytest.raises(ConfigError):
        benchmark(d, {}, repeats=2)
    with pytest.raises(ConfigError):
        benchmark(d, {"ols": lambda M, y, c, s, seed: fit_ols(M, y, c, s)}, repeats=0)


def test_bias_policy_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        BiasPolicy(theta=0.0)
    with pytest.raises(ConfigError):
        BiasPolicy(theta=1.0, sigma_train=-1.0)


def test_plant_spec_block_rho_bounds():
    with pytest.raises(ConfigError):
        PlantSpec(
            n_p=3, true_support=(0,), true_coefficients=(1.0,),
            blocks=(((0, 1), 1.5),),
        )


def test_generate_rejects_bad_intervals():
    spec = PlantSpec(
        n_p=3, true_support=(0,), true_coefficients=(1.0,), shutdowns=((0, 5),),
    )
    with pytest.raises(ConfigError):
        generate(spec, 100)
