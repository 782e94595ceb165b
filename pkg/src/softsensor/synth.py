"""Synthetic plant data with known ground truth.

Emulates the phenomenology of refinery historian data at desk scale:
a correlated Gaussian core of online measurements, a sparse linear
relation to a lab-sampled output, mean-shift gross errors on random rows,
sustained level shifts over shutdown intervals, and piecewise output
regime changes. Every generated artifact is reproducible from the spec
and row count alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset
from .errors import ConfigError

MIN_ROWS = 10


@dataclass(frozen=True)
class RegimeShift:
    """Output-side perturbation active on 1-based rows [start, end]."""

    start: int
    end: int
    bias_delta: float = 0.0
    coef_delta: dict = field(default_factory=dict)  # column index -> added coefficient


@dataclass(frozen=True)
class PlantSpec:
    n_p: int
    true_support: tuple
    true_coefficients: tuple
    noise_sd: float = 0.1
    blocks: tuple = ()                 # ((col indices), rho) pairs
    contamination: float = 0.0
    outlier_magnitude: float = 8.0     # per-coordinate shift in column sigmas
    shutdowns: tuple = ()              # (start, end) 1-based inclusive
    shutdown_shift: float = 6.0        # sustained level shift in column sigmas
    regimes: tuple = ()                # RegimeShift entries
    lab_stride: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_p < 1:
            raise ConfigError("plant needs at least one input")
        if len(self.true_support) != len(self.true_coefficients) or not self.true_support:
            raise ConfigError("true support and coefficients must align and be nonempty")
        if any(not 0 <= j < self.n_p for j in self.true_support):
            raise ConfigError("true support indices must lie in [0, n_p)")
        if not 0.0 <= self.contamination < 0.5:
            raise ConfigError("contamination fraction must lie in [0, 0.5)")
        if self.lab_stride < 1:
            raise ConfigError("lab stride must be >= 1")
        if self.noise_sd < 0:
            raise ConfigError("noise standard deviation must be nonnegative")
        for cols, rho in self.blocks:
            if not -0.99 <= rho <= 0.99:
                raise ConfigError("block correlation must lie in [-0.99, 0.99]")
            if any(not 0 <= j < self.n_p for j in cols):
                raise ConfigError("block column indices must lie in [0, n_p)")


def _input_covariance(spec: PlantSpec) -> np.ndarray:
    S = np.eye(spec.n_p)
    for cols, rho in spec.blocks:
        for i in cols:
            for j in cols:
                if i != j:
                    S[i, j] = rho
    return S


def generate(spec: PlantSpec, n: int):
    """Draw a dataset of ``n`` rows plus its ground-truth masks.

    Returns (Dataset, truth) where truth carries the planted outlier and
    shutdown row masks, the true support mask and the full coefficient
    vector. The output is computed from the clean inputs, so corrupted
    rows are genuinely off-relation.
    """
    if n < MIN_ROWS:
        raise ConfigError(f"plant generation needs n >= {MIN_ROWS}")
    rng = np.random.default_rng(spec.seed)
    S = _input_covariance(spec)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise ConfigError("block structure yields an invalid covariance") from None
    X_clean = rng.standard_normal((n, spec.n_p)) @ L.T

    a_true = np.zeros(spec.n_p)
    for j, coef in zip(spec.true_support, spec.true_coefficients):
        a_true[j] = coef
    y_true = X_clean @ a_true
    for reg in spec.regimes:
        if not 1 <= reg.start <= reg.end <= n:
            raise ConfigError(f"regime interval [{reg.start},{reg.end}] outside [1,{n}]")
        rows = slice(reg.start - 1, reg.end)
        y_true[rows] += reg.bias_delta
        for j, delta in reg.coef_delta.items():
            y_true[rows] += delta * X_clean[rows, j]
    if spec.noise_sd > 0:
        y_true = y_true + spec.noise_sd * rng.standard_normal(n)

    shutdown_mask = np.zeros(n, dtype=bool)
    X = X_clean.copy()
    col_sd = np.sqrt(np.diag(S))
    for start, end in spec.shutdowns:
        if not 1 <= start <= end <= n:
            raise ConfigError(f"shutdown interval [{start},{end}] outside [1,{n}]")
        shutdown_mask[start - 1 : end] = True
    if shutdown_mask.any():
        signs = rng.choice([-1.0, 1.0], size=spec.n_p)
        X[shutdown_mask] += spec.shutdown_shift * col_sd * signs

    outlier_mask = np.zeros(n, dtype=bool)
    n_out = int(round(spec.contamination * n))
    candidates = np.flatnonzero(~shutdown_mask)
    if n_out > 0 and candidates.size:
        n_out = min(n_out, candidates.size)
        chosen = rng.choice(candidates, size=n_out, replace=False)
        outlier_mask[chosen] = True
        signs = rng.choice([-1.0, 1.0], size=(n_out, spec.n_p))
        X[chosen] += spec.outlier_magnitude * col_sd * signs

    y = np.full(n, np.nan)
    mask = np.zeros(n, dtype=bool)
    lab_rows = np.arange(0, n, spec.lab_stride)
    y[lab_rows] = y_true[lab_rows]
    mask[lab_rows] = True

    d = Dataset(
        columns=tuple(f"x{j + 1}" for j in range(spec.n_p)),
        M=X,
        y=y,
        y_mask=mask,
        index=np.arange(1, n + 1, dtype=float),
        orig_rows=np.arange(1, n + 1),
    )
    support_mask = np.zeros(spec.n_p, dtype=bool)
    support_mask[list(spec.true_support)] = True
    truth = {
        "outlier_rows": outlier_mask,
        "shutdown_rows": shutdown_mask,
        "true_support": support_mask,
        "coefficients": a_true,
        "lab_rows": lab_rows,
    }
    return d, truth


def write_truth_csv(truth: dict, path) -> None:
    """Row-wise truth masks next to the generated dataset."""
    outl, shut = truth["outlier_rows"], truth["shutdown_rows"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row,outlier,shutdown\n")
        for i in range(len(outl)):
            fh.write(f"{i + 1},{int(outl[i])},{int(shut[i])}\n")
        support = ";".join(str(j + 1) for j in np.flatnonzero(truth["true_support"]))
        coefs = ";".join(f"{c:.10g}" for c in truth["coefficients"])
        fh.write(f"# true_support,{support}\n")
        fh.write(f"# coefficients,{coefs}\n")


def write_dataset_csv(d: Dataset, path, output_column: str = "y") -> None:
    """Emit the CSV schema the loader consumes (empty cell = no lab sample)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(d.columns) + f",{output_column}\n")
        for i in range(d.n):
            cells = ",".join(f"{v:.10g}" for v in d.M[i])
            out = f"{d.y[i]:.10g}" if d.y_mask[i] else ""
            fh.write(f"{cells},{out}\n")
