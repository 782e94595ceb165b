"""Dataset ingestion, preprocessing and train/test splitting.

A Dataset couples a dense matrix of online measurements (inputs, one row
per sample) with a sparsely observed output: lab analyses exist only on
some rows, marked by a validity mask. All downstream design methods
operate on scaled copies produced by a Scaler fit on a chosen row set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError

SCALER_KINDS = ("center", "range", "standardize")


@dataclass(frozen=True)
class Dataset:
    """Input matrix with named columns plus a sparsely observed output.

    ``y`` is NaN wherever ``y_mask`` is False.  ``index`` holds monotone
    sample keys (timestamps or 1-based positions); ``orig_rows`` retains
    the original 1-based row numbers across exclusions.
    """

    columns: tuple[str, ...]
    M: np.ndarray
    y: np.ndarray
    y_mask: np.ndarray
    index: np.ndarray
    orig_rows: np.ndarray

    def __post_init__(self):
        n, n_p = self.M.shape
        if n < 1 or n_p < 1:
            raise DataError("dataset must have at least one row and one column")
        if len(self.y) != n or len(self.y_mask) != n:
            raise DataError("output vector and validity mask must match the row count")
        if len(self.columns) != n_p:
            raise DataError("column name count must match the matrix width")
        if len(set(self.columns)) != n_p or any(not c for c in self.columns):
            raise DataError("column names must be unique and nonempty")

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def n_p(self) -> int:
        return self.M.shape[1]

    @property
    def lab_rows(self) -> np.ndarray:
        """Positions (0-based) of rows carrying a valid lab output."""
        return np.flatnonzero(self.y_mask)

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise DataError(f"unknown column {name!r}") from None


@dataclass(frozen=True)
class Scaler:
    """Columnwise affine map to normalized coordinates and its inverse.

    kinds: ``center`` subtracts per-column means; ``range`` maps the
    fitted rows' [min, max] onto [-1, 1]; ``standardize`` yields zero
    mean and unit sample variance on the fitted rows.
    """

    kind: str
    columns: tuple[str, ...]
    x_center: np.ndarray
    x_scale: np.ndarray
    y_center: float
    y_scale: float

    def __post_init__(self):
        if self.kind not in SCALER_KINDS:
            raise ConfigError(f"unknown scaler kind {self.kind!r}")
        if np.any(self.x_scale <= 0) or self.y_scale <= 0:
            raise DataError("scaler scale factors must be strictly positive")

    def transform_inputs(self, M: np.ndarray) -> np.ndarray:
        if M.shape[1] != len(self.columns):
            raise DataError(
                f"scaler fit on {len(self.columns)} columns, got {M.shape[1]}"
            )
        return (M - self.x_center) / self.x_scale

    def invert_inputs(self, M_n: np.ndarray) -> np.ndarray:
        if M_n.shape[1] != len(self.columns):
            raise DataError(
                f"scaler fit on {len(self.columns)} columns, got {M_n.shape[1]}"
            )
        return M_n * self.x_scale + self.x_center

    def transform_output(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.y_center) / self.y_scale

    def invert_output(self, y_n) -> np.ndarray:
        return np.asarray(y_n, dtype=float) * self.y_scale + self.y_center

    @staticmethod
    def identity(columns) -> "Scaler":
        """No-op scaler, convenient for fitting on already-normalized data."""
        p = len(columns)
        return Scaler("center", tuple(columns), np.zeros(p), np.ones(p), 0.0, 1.0)


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train/test partition of the rows carrying a valid output."""

    train: np.ndarray
    test: np.ndarray
    kind: str
    fraction: float
    seed: int | None = None

    def __post_init__(self):
        if len(np.intersect1d(self.train, self.test)) != 0:
            raise DataError("train and test sets must be disjoint")
        if len(self.train) == 0 or len(self.test) == 0:
            raise DataError("both split sets must be nonempty")


@dataclass(frozen=True)
class RatioFeature:
    name: str
    numerator: str
    denominator: str


@dataclass(frozen=True)
class PctFeature:
    """Pressure-compensated temperature derived from a T and a p column.

    PCT = 1 / (r_over_hv * ln(P / p_ref) + 1 / T), with T on an absolute
    scale and r_over_hv the gas-constant-to-vaporization-heat ratio [1/K].
    """

    name: str
    temperature: str
    pressure: str
    r_over_hv: float
    p_ref: float


@dataclass(frozen=True)
class FeatureSpec:
    features: tuple = field(default_factory=tuple)


def load_csv(path, output_column: str | None, time_column: str | None = None) -> Dataset:
    """Read a comma-separated file with one header row into a Dataset.

    Empty cells are permitted only in the output column and mark rows
    without a lab sample. Any other empty or non-numeric cell is an error.
    With ``output_column=None`` every column is an input and the validity
    mask is all-false (pure online data, e.g. for prediction).
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            rows = [r for r in reader if r]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column in header")
    if output_column is not None and output_column not in header:
        raise DataError(f"{path}: missing output column {output_column!r}")
    if time_column is not None and time_column not in header:
        raise DataError(f"{path}: missing time column {time_column!r}")
    if not rows:
        raise DataError(f"{path}: zero data rows")

    out_j = header.index(output_column) if output_column is not None else None
    time_j = header.index(time_column) if time_column is not None else None
    input_js = [j for j in range(len(header)) if j not in (out_j, time_j)]
    if not input_js:
        raise DataError(f"{path}: no input columns")

    n = len(rows)
    M = np.empty((n, len(input_js)))
    y = np.full(n, np.nan)
    mask = np.zeros(n, dtype=bool)
    index = np.arange(1, n + 1, dtype=float)

    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 1} has {len(row)} cells, expected {len(header)}")
        for k, j in enumerate(input_js):
            cell = row[j].strip()
            if not cell:
                raise DataError(f"{path}: empty input cell at row {i + 1}, column {header[j]!r}")
            try:
                M[i, k] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at row {i + 1}, column {header[j]!r}"
                ) from None
        out_cell = row[out_j].strip() if out_j is not None else ""
        if out_cell:
            try:
                y[i] = float(out_cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell {out_cell!r} in output column, row {i + 1}"
                ) from None
            mask[i] = True
        if time_j is not None:
            try:
                index[i] = float(row[time_j].strip())
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell in time column, row {i + 1}"
                ) from None

    if time_j is not None and np.any(np.diff(index) < 0):
        raise DataError(f"{path}: time column must be monotone nondecreasing")

    return Dataset(
        columns=tuple(header[j] for j in input_js),
        M=M,
        y=y,
        y_mask=mask,
        index=index,
        orig_rows=np.arange(1, n + 1),
    )


def derive_features(d: Dataset, spec: FeatureSpec) -> Dataset:
    """Append derived columns; existing columns are left untouched."""
    if not spec.features:
        return d
    new_cols = []
    new_names = []
    for feat in spec.features:
        if feat.name in d.columns or feat.name in new_names:
            raise DataError(f"derived column {feat.name!r} clashes with an existing name")
        if isinstance(feat, RatioFeature):
            num = d.M[:, d.column_index(feat.numerator)]
            den = d.M[:, d.column_index(feat.denominator)]
            zero = np.flatnonzero(den == 0.0)
            if zero.size:
                raise DataError(
                    f"ratio {feat.name!r}: zero denominator at row {zero[0] + 1}"
                )
            new_cols.append(num / den)
        elif isinstance(feat, PctFeature):
            T = d.M[:, d.column_index(feat.temperature)]
            P = d.M[:, d.column_index(feat.pressure)]
            if feat.p_ref <= 0:
                raise ConfigError(f"pct {feat.name!r}: reference pressure must be positive")
            if feat.r_over_hv < 0:
                raise ConfigError(f"pct {feat.name!r}: R/H_v ratio must be nonnegative")
            bad = np.flatnonzero((T <= 0) | (P <= 0))
            if bad.size:
                raise DataError(
                    f"pct {feat.name!r}: nonpositive temperature or pressure at row {bad[0] + 1}"
                )
            denom = feat.r_over_hv * np.log(P / feat.p_ref) + 1.0 / T
            bad = np.flatnonzero(denom <= 0)
            if bad.size:
                raise DataError(
                    f"pct {feat.name!r}: nonpositive compensation denominator at row {bad[0] + 1}"
                )
            new_cols.append(1.0 / denom)
        else:
            raise ConfigError(f"unknown feature kind {type(feat).__name__}")
        new_names.append(feat.name)

    return replace(
        d,
        columns=d.columns + tuple(new_names),
        M=np.column_stack([d.M] + new_cols),
    )


def fit_scaler(d: Dataset, rows, kind: str) -> Scaler:
    """Fit a scaler of the given kind on the selected rows.

    Output statistics come from the selected rows that carry a valid lab
    sample; if there are none the output map is the identity.
    """
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise DataError("cannot fit a scaler on an empty row set")
    if kind not in SCALER_KINDS:
        raise ConfigError(f"unknown scaler kind {kind!r}")
    X = d.M[rows]
    yrows = rows[d.y_mask[rows]]
    yv = d.y[yrows]

    if kind == "center":
        x_center = X.mean(axis=0)
        x_scale = np.ones(d.n_p)
        y_center = float(yv.mean()) if yv.size else 0.0
        y_scale = 1.0
    elif kind == "range":
        lo, hi = X.min(axis=0), X.max(axis=0)
        flat = np.flatnonzero(hi <= lo)
        if flat.size:
            raise DataError(f"constant column {d.columns[flat[0]]!r} under range scaling")
        x_center = (lo + hi) / 2.0
        x_scale = (hi - lo) / 2.0
        if yv.size and yv.max() > yv.min():
            y_center = float(yv.min() + yv.max()) / 2.0
            y_scale = float(yv.max() - yv.min()) / 2.0
        else:
            y_center, y_scale = 0.0, 1.0
    else:
        x_center = X.mean(axis=0)
        x_scale = X.std(axis=0, ddof=1)
        flat = np.flatnonzero(x_scale == 0)
        if flat.size:
            raise DataError(
                f"constant column {d.columns[flat[0]]!r} under standardize scaling"
            )
        if yv.size >= 2 and yv.std(ddof=1) > 0:
            y_center = float(yv.mean())
            y_scale = float(yv.std(ddof=1))
        else:
            y_center, y_scale = 0.0, 1.0

    return Scaler(kind, d.columns, x_center, x_scale, y_center, y_scale)


def apply_scaler(d: Dataset, s: Scaler) -> Dataset:
    """Return a normalized copy of the dataset (inputs and output)."""
    if d.columns != s.columns:
        raise DataError("dataset columns do not match the scaler")
    return replace(d, M=s.transform_inputs(d.M), y=s.transform_output(d.y))


def invert_scaler(values, s: Scaler, what: str = "output"):
    """Map normalized values back to engineering units."""
    if what == "output":
        return s.invert_output(values)
    if what == "inputs":
        return s.invert_inputs(np.asarray(values, dtype=float))
    raise ConfigError(f"unknown inversion target {what!r}")


def split(d: Dataset, kind: str, fraction: float, seed: int | None = None) -> SplitPlan:
    """Partition the valid-output rows into training and testing sets.

    Chronological: the first ceil(fraction * n_lab) lab rows in time order
    train. Random: a seed-deterministic shuffle, same training size.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"training fraction must lie in (0,1), got {fraction}")
    lab = d.lab_rows
    if lab.size < 2:
        raise DataError("need at least 2 rows with a valid lab output to split")
    n_train = math.ceil(fraction * lab.size)
    if n_train >= lab.size:
        raise ConfigError(
            f"degenerate fraction {fraction}: all {lab.size} lab rows would train"
        )
    if kind == "chronological":
        order = lab[np.argsort(d.index[lab], kind="stable")]
    elif kind == "random":
        if seed is None:
            raise ConfigError("random split requires a seed")
        order = lab[np.random.default_rng(seed).permutation(lab.size)]
    else:
        raise ConfigError(f"unknown split kind {kind!r}")
    return SplitPlan(
        train=np.sort(order[:n_train]),
        test=np.sort(order[n_train:]),
        kind=kind,
        fraction=fraction,
        seed=seed,
    )


def exclude_ranges(d: Dataset, ranges) -> Dataset:
    """Drop rows inside any 1-based inclusive [start, end] interval.

    Used ahead of outlier detection to remove shutdown periods spotted in
    time-series plots. Original row numbers survive in ``orig_rows``.
    """
    if not ranges:
        return d
    drop = np.zeros(d.n, dtype=bool)
    for start, end in ranges:
        if not (1 <= start <= end <= d.n):
            raise DataError(f"exclusion interval [{start},{end}] outside [1,{d.n}]")
        drop[start - 1 : end] = True
    keep = ~drop
    if not keep.any():
        raise DataError("empty dataset after exclusion")
    return replace(
        d,
        M=d.M[keep],
        y=d.y[keep],
        y_mask=d.y_mask[keep],
        index=d.index[keep],
        orig_rows=d.orig_rows[keep],
    )
