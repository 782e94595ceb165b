"""Sensor scoring: accuracy, complexity and bias-correction effort.

The bias-correction walk runs as a shadow of the raw sensor: a running
bias follows each triggered update, but the reported RMSE always uses the
raw predictions, so the two measures stay independent.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset, apply_scaler, fit_scaler, split
from .errors import ConfigError, DataError
from .regress import SensorModel, predict, prune_impacts

METRICS = ("rmse", "n_inputs", "bc_percent")


@dataclass(frozen=True)
class BiasPolicy:
    """Trigger rule for bias updates: |error| > theta * sigma_train + atol.

    ``sigma_train`` is the standard deviation of the training residuals in
    engineering units. ``atol`` is a small absolute floor that keeps an
    exactly-fitting sensor from correcting on rounding noise.
    """

    theta: float = 1.0
    sigma_train: float = 0.0
    atol: float = 0.0

    def __post_init__(self):
        if self.theta <= 0:
            raise ConfigError("bias policy: theta must be positive")
        if self.sigma_train < 0:
            raise ConfigError("bias policy: sigma_train must be nonnegative")

    @staticmethod
    def from_training(model: SensorModel, M_train_eng, y_train_eng, theta: float = 1.0):
        pred, _ = predict(model, M_train_eng)
        resid = np.asarray(y_train_eng, dtype=float) - pred
        scale = float(np.max(np.abs(y_train_eng), initial=1.0))
        return BiasPolicy(
            theta=theta,
            sigma_train=float(resid.std()),
            atol=1e-9 * scale,
        )


@dataclass(frozen=True)
class EvalReport:
    rmse: float                  # normalized output space
    n_inputs: int
    bc_percent: float
    trace_index: np.ndarray
    trace_measured: np.ndarray   # engineering units
    trace_raw: np.ndarray
    trace_corrected: np.ndarray
    trace_flag: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.bc_percent <= 100.0 or self.rmse < 0:
            raise DataError("evaluation metrics out of range")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("index,measured,raw_prediction,corrected_prediction,corrected\n")
            for i in range(len(self.trace_index)):
                fh.write(
                    f"{self.trace_index[i]:.10g},{self.trace_measured[i]:.10g},"
                    f"{self.trace_raw[i]:.10g},{self.trace_corrected[i]:.10g},"
                    f"{int(self.trace_flag[i])}\n"
                )


def rmse(predictions, measurements) -> float:
    predictions = np.asarray(predictions, dtype=float)
    measurements = np.asarray(measurements, dtype=float)
    if predictions.shape != measurements.shape or predictions.size == 0:
        raise DataError("rmse needs equally sized, nonempty vectors")
    err = predictions - measurements
    return float(np.sqrt(np.mean(err * err)))


def simulate_bias_correction(
    model: SensorModel, M_test_eng, y_test_eng, index, policy: BiasPolicy
) -> EvalReport:
    """Walk the test lab samples in time order, shadowing a bias update.

    A correction fires when the measurement deviates from the shadow
    prediction by more than the policy threshold; the running bias then
    jumps to the latest raw residual. RMSE uses raw predictions only.
    """
    M_test_eng = np.asarray(M_test_eng, dtype=float)
    y_test_eng = np.asarray(y_test_eng, dtype=float)
    index = np.asarray(index, dtype=float)
    if np.any(np.diff(index) < 0):
        raise DataError("test rows must be in time order")
    if policy.sigma_train == 0.0:
        warnings.warn(
            "bias simulation with zero training residual scale: "
            "every deviating sample triggers a correction"
        )
    raw_eng, raw_norm = predict(model, M_test_eng)
    n = len(y_test_eng)
    corrected = np.empty(n)
    flags = np.zeros(n, dtype=bool)
    bias = 0.0
    threshold = policy.theta * policy.sigma_train + policy.atol
    for i in range(n):
        shadow = raw_eng[i] + bias
        corrected[i] = shadow
        if abs(y_test_eng[i] - shadow) > threshold:
            bias = y_test_eng[i] - raw_eng[i]
            flags[i] = True

    y_norm = model.scaler.transform_output(y_test_eng)
    return EvalReport(
        rmse=rmse(raw_norm, y_norm),
        n_inputs=model.n_active,
        bc_percent=100.0 * flags.sum() / n,
        trace_index=index,
        trace_measured=y_test_eng,
        trace_raw=raw_eng,
        trace_corrected=corrected,
        trace_flag=flags,
    )


def complexity(model: SensorModel) -> int:
    """Number of inputs feeding the sensor (latent count reported separately)."""
    return model.n_active


def box_stats(values) -> dict:
    """Quartile box, 1.5 IQR whiskers and individual outliers."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {k: float("nan") for k in
                ("mean", "median", "q1", "q3", "whisker_lo", "whisker_hi")} | {"outliers": []}
    q1, med, q3 = np.percentile(v, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "mean": float(v.mean()),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_lo": float(inside.min()),
        "whisker_hi": float(inside.max()),
        "outliers": sorted(float(x) for x in v[(v < lo_fence) | (v > hi_fence)]),
    }


@dataclass(frozen=True)
class BenchmarkSummary:
    methods: tuple
    repeats: int
    values: dict            # method -> metric -> per-repeat array (NaN = failed)
    stats: dict             # method -> metric -> box_stats dict
    latent: dict = field(default_factory=dict)  # method -> mean latent count

    def write_repeat_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("repeat,method," + ",".join(METRICS) + "\n")
            for r in range(self.repeats):
                for m in self.methods:
                    cells = ",".join(f"{self.values[m][k][r]:.10g}" for k in METRICS)
                    fh.write(f"{r + 1},{m},{cells}\n")

    def write_stats_csv(self, path) -> None:
        keys = ("mean", "median", "q1", "q3", "whisker_lo", "whisker_hi")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("method,metric," + ",".join(keys) + ",outliers\n")
            for m in self.methods:
                for k in METRICS:
                    st = self.stats[m][k]
                    cells = ",".join(f"{st[key]:.10g}" for key in keys)
                    outl = ";".join(f"{x:.10g}" for x in st["outliers"])
                    fh.write(f"{m},{k},{cells},{outl}\n")


def evaluate_split(
    d: Dataset, plan, fitters: dict, scaler_kind: str = "standardize",
    fit_scaler_on: str = "train", theta: float = 1.0, prune_threshold: float = 0.001,
    seed: int = 0,
):
    """Fit, prune and score every method on one train/test split.

    Returns (models, reports) keyed by method name. A failing method is
    recorded as None and does not abort the rest.
    """
    if fit_scaler_on not in ("train", "all"):
        raise ConfigError(f"fit_scaler_on must be 'train' or 'all', got {fit_scaler_on!r}")
    scaler_rows = plan.train if fit_scaler_on == "train" else d.lab_rows
    scaler = fit_scaler(d, scaler_rows, scaler_kind)
    dn = apply_scaler(d, scaler)
    Mtr, ytr = dn.M[plan.train], dn.y[plan.train]
    models, reports = {}, {}
    for name, fitter in fitters.items():
        try:
            model = fitter(Mtr, ytr, d.columns, scaler, seed)
            model = prune_impacts(model, Mtr, ytr, threshold=prune_threshold)
            policy = BiasPolicy.from_training(
                model, d.M[plan.train], d.y[plan.train], theta=theta
            )
            report = simulate_bias_correction(
                model, d.M[plan.test], d.y[plan.test], d.index[plan.test], policy
            )
        except Exception as exc:  # noqa: BLE001 - a failed method must not kill the run
            warnings.warn(f"method {name!r} failed: {exc}")
            models[name], reports[name] = None, None
            continue
        models[name], reports[name] = model, report
    return models, reports


def benchmark(
    d: Dataset, fitters: dict, split_kind: str = "random", fraction: float = 0.5,
    repeats: int = 50, seed: int = 0, scaler_kind: str = "standardize",
    fit_scaler_on: str = "train", theta: float = 1.0, prune_threshold: float = 0.001,
    threads: int = 1,
) -> BenchmarkSummary:
    """Repeated split/fit/score over all methods with box-plot statistics."""
    if not fitters:
        raise ConfigError("benchmark needs at least one method")
    if repeats < 1:
        raise ConfigError("benchmark needs repeats >= 1")
    names = tuple(fitters)

    def one(r: int):
        rng = np.random.default_rng([seed, r])
        split_seed = int(rng.integers(0, 2**31 - 1))
        plan = split(d, split_kind, fraction, seed=split_seed)
        models, reports = evaluate_split(
            d, plan, fitters, scaler_kind=scaler_kind, fit_scaler_on=fit_scaler_on,
            theta=theta, prune_threshold=prune_threshold, seed=split_seed,
        )
        row = {}
        for name in names:
            rep, model = reports[name], models[name]
            if rep is None:
                row[name] = (np.nan, np.nan, np.nan, np.nan)
            else:
                row[name] = (rep.rmse, rep.n_inputs, rep.bc_percent,
                             model.n_components if model else 0)
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(repeats)))
    else:
        rows = [one(r) for r in range(repeats)]

    values = {m: {k: np.empty(repeats) for k in METRICS} for m in names}
    latent = {m: np.empty(repeats) for m in names}
    for r, row in enumerate(rows):
        for m in names:
            values[m]["rmse"][r] = row[m][0]
            values[m]["n_inputs"][r] = row[m][1]
            values[m]["bc_percent"][r] = row[m][2]
            latent[m][r] = row[m][3]
    stats = {m: {k: box_stats(values[m][k]) for k in METRICS} for m in names}
    mean_latent = {
        m: (float(np.nanmean(latent[m])) if np.any(np.isfinite(latent[m])) else 0.0)
        for m in names
    }
    return BenchmarkSummary(
        methods=names, repeats=repeats, values=values, stats=stats, latent=mean_latent
    )
