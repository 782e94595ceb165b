"""Multivariate outlier detection on normalized process data.

Three detectors with a common report format:

* squared Mahalanobis distance about the classical mean/covariance with a
  chi-square cutoff,
* minimum covariance determinant: concentration steps from random
  h-subsets, restarted, keeping the subset with the smallest covariance
  determinant; distances from the winning estimate, cutoff from an
  F-approximation of their distribution (chi-square fallback),
* k-means clustering with restart consensus; rows in small clusters are
  flagged.

Detectors expect data already centered/scaled (see dataio.fit_scaler).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import chi2
from scipy.stats import f as f_dist

from .errors import ConfigError, DataError

_LOGDET_SLACK = 1e-9  # relative slack when asserting C-step monotonicity


@dataclass(frozen=True)
class CovarianceModel:
    mean: np.ndarray
    cov: np.ndarray
    count: int
    singular: bool = False


@dataclass(frozen=True)
class OutlierReport:
    """Per-row outlier decision of one detector.

    ``distance`` is the squared Mahalanobis distance for the t2 method and
    the (unsquared) Mahalanobis distance for mcd; for kmeans it is the
    squared distance to the consensus cluster center and ``cutoff`` is NaN.
    """

    method: str
    distance: np.ndarray
    cutoff: float
    keep: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.distance) != len(self.keep):
            raise DataError("distance vector and keep mask must have equal length")

    def n_flagged(self) -> int:
        return int((~self.keep).sum())

    def write_csv(self, path, index=None) -> None:
        """One row per sample: index, distance, kept flag."""
        idx = np.arange(1, len(self.keep) + 1) if index is None else np.asarray(index)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("index,distance,kept\n")
            for i in range(len(self.keep)):
                fh.write(f"{idx[i]:.10g},{self.distance[i]:.10g},{int(self.keep[i])}\n")


@dataclass(frozen=True)
class McdConfig:
    h: int | None = None
    restarts: int = 100
    max_csteps: int = 100
    confidence: float = 0.997
    cutoff_family: str = "f_approx"  # or "chi2"
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise ConfigError("mcd: restarts must be >= 1")
        if self.max_csteps < 1:
            raise ConfigError("mcd: max_csteps must be >= 1")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("mcd: degenerate confidence")
        if self.cutoff_family not in ("f_approx", "chi2"):
            raise ConfigError(f"mcd: unknown cutoff family {self.cutoff_family!r}")


@dataclass(frozen=True)
class KMeansModel:
    k: int
    centers: np.ndarray
    assignment: np.ndarray          # consensus labels, 0-based
    inertia: float                  # best restart
    frequencies: np.ndarray         # fraction of restarts agreeing with the consensus
    distances: np.ndarray           # squared distance to the consensus center, per row
    inertia_history: tuple = ()     # per-iteration inertia of the best restart


def covariance(M: np.ndarray, rows=None) -> CovarianceModel:
    """Classical mean and sample covariance (ddof 1) over the given rows."""
    M = np.asarray(M, dtype=float)
    rows = np.arange(M.shape[0]) if rows is None else np.asarray(rows, dtype=int)
    n_p = M.shape[1]
    if rows.size < n_p + 1:
        raise DataError(f"covariance needs at least {n_p + 1} rows, got {rows.size}")
    X = M[rows]
    mu = X.mean(axis=0)
    Xc = X - mu
    S = Xc.T @ Xc / (rows.size - 1)
    eigvals = np.linalg.eigvalsh(S)
    singular = bool(eigvals[0] < max(1e-12 * max(eigvals[-1], 0.0), 1e-300))
    return CovarianceModel(mean=mu, cov=S, count=int(rows.size), singular=singular)


def t2_distances(M: np.ndarray, model: CovarianceModel) -> np.ndarray:
    """Squared Mahalanobis distance of every row about (mean, cov)."""
    M = np.asarray(M, dtype=float)
    cond = np.linalg.cond(model.cov)
    if not np.isfinite(cond) or cond > 1e12:
        raise DataError(
            "covariance matrix is singular or near-singular; remove collinear columns"
        )
    diff = M - model.mean
    sol = np.linalg.solve(model.cov, diff.T)
    return np.einsum("ij,ji->i", diff, sol)


def t2_detect(M: np.ndarray, confidence: float = 0.997) -> OutlierReport:
    """Flag rows whose squared distance exceeds the chi-square quantile."""
    if not 0.0 < confidence < 1.0:
        raise ConfigError("degenerate confidence")
    M = np.asarray(M, dtype=float)
    model = covariance(M)
    d = t2_distances(M, model)
    cutoff = float(chi2.ppf(confidence, M.shape[1]))
    return OutlierReport(
        method="t2",
        distance=d,
        cutoff=cutoff,
        keep=d <= cutoff,
        diagnostics={"confidence": confidence, "df": M.shape[1]},
    )


def default_h(n: int, n_p: int) -> int:
    """Midpoint of the admissible h-interval, ties rounded up."""
    if n <= n_p:
        raise DataError(f"need n > n_p for the h-interval, got n={n}, n_p={n_p}")
    lower = (n + n_p + 2) // 2          # ceil((n + n_p + 1) / 2)
    return (lower + n + 1) // 2         # round-half-up midpoint


def consistency_factor(h: int, n: int, n_p: int) -> float:
    """Scale making the h-subset covariance consistent at the normal model."""
    a = h / n
    if a >= 1.0:
        return 1.0
    qa = chi2.ppf(a, n_p)
    return a / chi2.cdf(qa, n_p + 2)


def _wishart_df(n: int, n_p: int, h: int) -> float:
    """Effective Wishart degrees of freedom of the scaled MCD covariance.

    Asymptotic value from the influence function of the MCD scatter, with
    the usual simulation-based small-sample adjustment. Degenerates to n
    as h -> n (classical covariance).
    """
    p = n_p
    a = h / n
    qa = chi2.ppf(a, p)
    ca = a / chi2.cdf(qa, p + 2)
    c2 = -chi2.cdf(qa, p + 2) / 2.0
    c3 = -chi2.cdf(qa, p + 4) / 2.0
    c4 = 3.0 * c3
    b1 = ca * (c3 - c4) / a
    b2 = 0.5 + ca / a * (c3 - qa / p * (c2 + a / 2.0))
    v1 = a * b1**2 * ((1.0 - a) * (ca * qa / p - 1.0) ** 2 - 1.0) - 2.0 * c3 * ca**2 * (
        3.0 * (b1 - p * b2) ** 2 + (p + 2.0) * b2 * (2.0 * b1 - p * b2)
    )
    v2 = n * (b1 * (b1 - p * b2) * a) ** 2 * ca**2
    m_asy = 2.0 / (ca**2 * v1 / v2)
    m = m_asy * math.exp(0.725 - 0.00663 * p - 0.0780 * math.log(n))
    return max(m, p + 2.0)


def mcd_cutoff(n: int, n_p: int, h: int, confidence: float, family: str) -> float:
    """Cutoff for squared distances from the consistency-scaled estimate."""
    if family == "chi2" or h >= n:
        return float(chi2.ppf(confidence, n_p))
    m = _wishart_df(n, n_p, h)
    scale = n_p * m / (m - n_p + 1.0)
    return float(scale * f_dist.ppf(confidence, n_p, m - n_p + 1.0))


def _csteps(M, subset, h, max_csteps):
    """Concentrate one random start; returns (subset, logdet, mu, S, history).

    Raises DataError when the subset covariance degenerates, and asserts
    the guaranteed non-increase of the determinant along the way.
    """
    logdet_prev = None
    history = []
    state = None
    for _ in range(max_csteps):
        X = M[subset]
        mu = X.mean(axis=0)
        Xc = X - mu
        S = Xc.T @ Xc / (h - 1)
        sign, logdet = np.linalg.slogdet(S)
        if sign <= 0 or not np.isfinite(logdet):
            raise DataError("singular subset covariance")
        history.append(logdet)
        state = (subset, logdet, mu, S)
        if logdet_prev is not None:
            slack = _LOGDET_SLACK * max(1.0, abs(logdet_prev))
            if logdet > logdet_prev + slack:
                raise AssertionError("C-step determinant increased")
            if logdet >= logdet_prev - slack:
                break
        logdet_prev = logdet
        diff = M - mu
        sol = np.linalg.solve(S, diff.T)
        d2 = np.einsum("ij,ji->i", diff, sol)
        new_subset = np.argpartition(d2, h - 1)[:h]
        new_subset.sort()
        if np.array_equal(new_subset, subset):
            break
        subset = new_subset
    else:
        warnings.warn("mcd: C-steps hit the iteration cap before converging")
    return (*state, history)


def mcd_fit(M: np.ndarray, cfg: McdConfig = McdConfig()):
    """Robust location/scatter by minimum covariance determinant.

    Each restart draws a random h-subset and runs concentration steps to a
    fixed point; the restart with the smallest determinant wins. The
    winning covariance is rescaled by the normal-model consistency factor
    before distances and the cutoff are computed.

    Returns (CovarianceModel, OutlierReport).
    """
    M = np.asarray(M, dtype=float)
    n, n_p = M.shape
    if n <= n_p:
        raise DataError(f"mcd needs n > n_p, got n={n}, n_p={n_p}")
    h = default_h(n, n_p) if cfg.h is None else int(cfg.h)
    h_min = (n + n_p + 2) // 2
    if not h_min <= h <= n:
        raise ConfigError(f"mcd: h must lie in [{h_min},{n}], got {h}")

    best = None  # (logdet, restart_idx, subset, mu, S, history)
    membership = np.zeros(n)
    degenerate = 0
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        start = np.sort(rng.choice(n, size=h, replace=False))
        try:
            subset, logdet, mu, S, history = _csteps(M, start, h, cfg.max_csteps)
        except DataError:
            degenerate += 1
            continue
        membership[subset] += 1.0
        if best is None or logdet < best[0] - 1e-12:
            best = (logdet, r, subset, mu, S, history)
    if best is None:
        raise DataError(f"mcd: all {cfg.restarts} restarts degenerated")

    logdet, r_best, subset, mu, S, history = best
    factor = consistency_factor(h, n, n_p)
    S_scaled = S * factor
    diff = M - mu
    sol = np.linalg.solve(S_scaled, diff.T)
    d2 = np.einsum("ij,ji->i", diff, sol)
    # winning subset must be exactly the h smallest distances at the final estimate
    order = np.argsort(d2, kind="stable")
    if not set(subset) == set(order[:h].tolist()):
        inside_max = d2[subset].max()
        outside = np.setdiff1d(np.arange(n), subset)
        if outside.size and d2[outside].min() < inside_max - 1e-9 * max(1.0, inside_max):
            raise AssertionError("mcd: winning subset is not the h closest rows")

    cut2 = mcd_cutoff(n, n_p, h, cfg.confidence, cfg.cutoff_family)
    d = np.sqrt(np.maximum(d2, 0.0))
    cutoff = math.sqrt(cut2)
    model = CovarianceModel(mean=mu, cov=S_scaled, count=h, singular=False)
    report = OutlierReport(
        method="mcd",
        distance=d,
        cutoff=cutoff,
        keep=d <= cutoff,
        diagnostics={
            "h": h,
            "restarts": cfg.restarts,
            "degenerate_restarts": degenerate,
            "best_restart": r_best,
            "best_logdet": logdet,
            "determinant_history": tuple(history),
            "subset_frequency": membership / max(cfg.restarts - degenerate, 1),
            "consistency_factor": factor,
            "cutoff_family": cfg.cutoff_family,
            "confidence": cfg.confidence,
            "subset": np.sort(subset),
        },
    )
    return model, report


def _lloyd(M, k, rng, max_iters=300):
    """One k-means run from a random init over distinct rows."""
    n = M.shape[0]
    uniq = np.unique(M, axis=0)
    if k > uniq.shape[0]:
        raise DataError(f"kmeans: k={k} exceeds the {uniq.shape[0]} distinct rows")
    centers = uniq[rng.choice(uniq.shape[0], size=k, replace=False)].copy()
    prev_inertia = np.inf
    history = []
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iters):
        d2 = ((M[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(n), labels].sum())
        if inertia > prev_inertia + 1e-9 * max(1.0, prev_inertia):
            raise AssertionError("kmeans: inertia increased during Lloyd iteration")
        history.append(inertia)
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = M[members].mean(axis=0)
            else:
                # repair: move the empty center onto the worst-fit point
                centers[j] = M[np.argmax(d2[np.arange(n), labels])]
        if prev_inertia - inertia <= 1e-12 * max(1.0, prev_inertia):
            break
        prev_inertia = inertia
    d2 = ((M[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    history.append(inertia)
    return centers, labels, inertia, history


def kmeans_fit(M: np.ndarray, k: int, restarts: int = 100, seed: int = 0) -> KMeansModel:
    """Restarted k-means with modal-label consensus.

    Every restart is aligned to the best-inertia restart by matching
    nearest centers, then each row takes the label it received most often.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if not 1 <= k <= n:
        raise ConfigError(f"kmeans: k must lie in [1,{n}], got {k}")
    if restarts < 1:
        raise ConfigError("kmeans: restarts must be >= 1")

    runs = []
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        runs.append(_lloyd(M, k, rng))
    best_idx = min(range(restarts), key=lambda r: (runs[r][2], r))
    best_centers, _, best_inertia, best_history = runs[best_idx]

    votes = np.zeros((n, k), dtype=int)
    for centers, labels, _, _ in runs:
        # match this run's centers onto the best run's centers
        cost = ((centers[:, None, :] - best_centers[None, :, :]) ** 2).sum(axis=2)
        row_ind, col_ind = linear_sum_assignment(cost)
        relabel = np.empty(k, dtype=int)
        relabel[row_ind] = col_ind
        aligned = relabel[labels]
        votes[np.arange(n), aligned] += 1
    consensus = np.argmax(votes, axis=1)  # ties resolve to the smaller label
    freq = votes[np.arange(n), consensus] / restarts
    dist2 = ((M - best_centers[consensus]) ** 2).sum(axis=1)

    return KMeansModel(
        k=k,
        centers=best_centers,
        assignment=consensus,
        inertia=best_inertia,
        frequencies=freq,
        distances=dist2,
        inertia_history=tuple(best_history),
    )


def elbow_select_k(M: np.ndarray, k_max: int, restarts: int = 10, seed: int = 0) -> int:
    """Pick k at the point of the inertia curve farthest below its chord.

    Near-flat curves have no usable elbow; the smallest admissible k=2 is
    returned with a warning in that case.
    """
    if k_max < 2:
        raise ConfigError("elbow selection needs k_max >= 2")
    inertias = [kmeans_fit(M, k, restarts=restarts, seed=seed).inertia for k in range(1, k_max + 1)]
    i1, ik = inertias[0], inertias[-1]
    span = i1 - ik
    if span <= 1e-12 * max(1.0, abs(i1)):
        warnings.warn("elbow: inertia curve is near-flat, weak elbow at k=2")
        return 2
    ks = np.arange(1, k_max + 1, dtype=float)
    chord = i1 + (ik - i1) * (ks - 1.0) / (k_max - 1.0)
    residual = chord - np.asarray(inertias)  # positive below the chord
    interior = residual[1:-1]
    if interior.size == 0 or interior.max() <= 0:
        warnings.warn("elbow: no interior point below the chord, weak elbow at k=2")
        return 2
    return int(np.argmax(interior)) + 2


def kmeans_detect(model: KMeansModel, min_cluster_fraction: float) -> OutlierReport:
    """Flag rows whose consensus cluster holds fewer than a fraction of rows."""
    if not 0.0 < min_cluster_fraction < 1.0:
        raise ConfigError("min_cluster_fraction must lie in (0,1)")
    n = len(model.assignment)
    sizes = np.bincount(model.assignment, minlength=model.k)
    small = sizes < min_cluster_fraction * n
    keep = ~small[model.assignment]
    return OutlierReport(
        method="kmeans",
        distance=model.distances,
        cutoff=float("nan"),
        keep=keep,
        diagnostics={
            "k": model.k,
            "cluster_sizes": sizes,
            "min_cluster_fraction": min_cluster_fraction,
            "consensus_frequency": model.frequencies,
        },
    )
