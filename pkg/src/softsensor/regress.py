"""Sensor design methods on normalized training data.

All fitters take a normalized input block M_N (rows = training samples)
and the matching normalized output y_N, and return a SensorModel holding
normalized-space coefficients. Engineering-unit coefficients and bias are
recovered through the attached scaler, so a sensor can be reported and
deployed in original units.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import Scaler
from .errors import ConfigError, ConvergenceError, DataError
from .numkernel import eigh, solve_ls


@dataclass(frozen=True)
class LatentModel:
    """Loadings and score-space weights of a PCA or PLS fit."""

    kind: str
    loadings: np.ndarray      # n_p x n_components
    weights: np.ndarray       # n_components
    explained: np.ndarray     # input-variance fraction per retained component

    def __post_init__(self):
        e = self.explained
        if np.any(e < -1e-12) or np.any(e > 1.0 + 1e-12):
            raise DataError("explained fractions must lie in [0,1]")
        if e.sum() > 1.0 + 1e-10:
            raise DataError("explained fractions must sum to at most 1")


@dataclass(frozen=True)
class SensorModel:
    """Linear inferential sensor: output = inputs . a + a0 (normalized space)."""

    method: str
    columns: tuple[str, ...]
    z: np.ndarray             # support mask
    a: np.ndarray             # normalized coefficients, zero off support
    a0: float                 # normalized bias
    scaler: Scaler
    n_components: int = 0     # latent-component count for pca/pls, else 0
    latent: LatentModel | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.z) != len(self.a) or len(self.a) != len(self.columns):
            raise DataError("support, coefficients and column names must align")
        if np.any((~np.asarray(self.z, dtype=bool)) & (np.asarray(self.a) != 0.0)):
            raise DataError("coefficients must vanish off the support")
        if not (np.all(np.isfinite(self.a)) and np.isfinite(self.a0)):
            raise DataError("non-finite model parameters")

    @property
    def n_active(self) -> int:
        return int(np.asarray(self.z, dtype=bool).sum())

    @property
    def selected_names(self) -> tuple[str, ...]:
        zb = np.asarray(self.z, dtype=bool)
        return tuple(c for c, on in zip(self.columns, zb) if on)

    def engineering_coefficients(self):
        """(coefficients, bias) expressed in engineering units."""
        s = self.scaler
        a_eng = s.y_scale * self.a / s.x_scale
        a0_eng = s.y_center + s.y_scale * self.a0 - float(a_eng @ s.x_center)
        return a_eng, a0_eng


def _as_model(
    method, a, columns, scaler, a0=0.0, n_components=0, latent=None, info=None, z=None
):
    a = np.asarray(a, dtype=float)
    if z is None:
        z = np.abs(a) > 0.0
    p = len(a)
    if columns is None:
        columns = tuple(f"x{j + 1}" for j in range(p))
    if scaler is None:
        scaler = Scaler.identity(columns)
    return SensorModel(
        method=method,
        columns=tuple(columns),
        z=z,
        a=a,
        a0=float(a0),
        scaler=scaler,
        n_components=n_components,
        latent=latent,
        info=info or {},
    )


def fit_ols(M_n: np.ndarray, y_n: np.ndarray, columns=None, scaler=None) -> SensorModel:
    """Plain least squares on all columns; minimum-norm under rank deficiency."""
    M_n = np.asarray(M_n, dtype=float)
    y_n = np.asarray(y_n, dtype=float)
    if M_n.shape[0] < 1:
        raise DataError("fit_ols needs at least one training row")
    a = solve_ls(M_n, y_n)
    return _as_model("ols", a, columns, scaler)


def fit_fixed(M_n, y_n, support, columns=None, scaler=None) -> SensorModel:
    """Least squares restricted to a fixed support (reference structures)."""
    M_n = np.asarray(M_n, dtype=float)
    y_n = np.asarray(y_n, dtype=float)
    support = np.asarray(support, dtype=bool)
    if support.shape != (M_n.shape[1],):
        raise DataError(
            f"support mask length {support.size} does not match {M_n.shape[1]} columns"
        )
    if not support.any():
        raise DataError("fixed-structure fit needs a nonempty support")
    a = np.zeros(M_n.shape[1])
    a[support] = solve_ls(M_n[:, support], y_n)
    return _as_model("fixed", a, columns, scaler, z=support.copy())


def fit_pca_regression(
    M_n, y_n, variance_target: float = 0.98, columns=None, scaler=None
):
    """Regression on the leading principal components of the input block.

    Components are added until their cumulative share of the input
    variance reaches the target; the score-space fit is folded back to a
    dense full-length coefficient vector.
    """
    M_n = np.asarray(M_n, dtype=float)
    y_n = np.asarray(y_n, dtype=float)
    n, p = M_n.shape
    if not 0.0 < variance_target <= 1.0:
        raise ConfigError("variance target must lie in (0,1]")
    if n <= p:
        warnings.warn(f"pca: only {n} training rows for {p} inputs")
    mu = M_n.mean(axis=0)
    ybar = float(y_n.mean())
    Xc = M_n - mu
    S = Xc.T @ Xc / max(n - 1, 1)
    if np.any(np.diag(S) == 0.0):
        j = int(np.flatnonzero(np.diag(S) == 0.0)[0])
        raise DataError(f"pca: zero-variance column {j + 1}")
    eig = eigh(S)
    vals = np.clip(eig.values, 0.0, None)
    total = vals.sum()
    if total <= 0.0:
        raise DataError("pca: input block has zero total variance")
    fractions = vals / total
    cum = np.cumsum(fractions)
    n_comp = int(np.searchsorted(cum, variance_target - 1e-12) + 1)
    n_comp = min(n_comp, p)

    V = eig.vectors[:, :n_comp]
    scores = Xc @ V
    w = solve_ls(scores, y_n - ybar)
    a = V @ w
    a0 = ybar - float(mu @ a)
    latent = LatentModel("pca", loadings=V, weights=w, explained=fractions[:n_comp])
    model = _as_model(
        "pca", a, columns, scaler, a0=a0, n_components=n_comp, latent=latent,
        info={"variance_target": variance_target, "cumulative_explained": float(cum[n_comp - 1])},
    )
    return model, latent


def fit_pls(M_n, y_n, variance_target: float = 0.98, columns=None, scaler=None):
    """PLS by cross-covariance deflation (SIMPLS-style), univariate output.

    Each direction is the dominant singular direction of the deflated
    input-output cross-covariance; the component count follows the same
    cumulative input-variance rule as the principal-component fit.
    """
    M_n = np.asarray(M_n, dtype=float)
    y_n = np.asarray(y_n, dtype=float)
    n, p = M_n.shape
    if not 0.0 < variance_target <= 1.0:
        raise ConfigError("variance target must lie in (0,1]")
    if n <= p:
        warnings.warn(f"pls: only {n} training rows for {p} inputs")
    mu = M_n.mean(axis=0)
    ybar = float(y_n.mean())
    Xc = M_n - mu
    yc = y_n - ybar
    total_ss = float((Xc * Xc).sum())
    if total_ss <= 0.0:
        raise DataError("pls: input block has zero total variance")

    s = Xc.T @ yc  # cross-covariance direction (scaling is irrelevant)
    s0_norm = np.linalg.norm(s)
    directions, score_list, explained = [], [], []
    V_basis = np.zeros((p, 0))
    cum = 0.0
    for _ in range(p):
        if np.linalg.norm(s) <= 1e-14 * max(s0_norm, 1e-300):
            break
        r = s / np.linalg.norm(s)
        t = Xc @ r
        tt = float(t @ t)
        if tt <= 1e-300:
            break
        p_load = Xc.T @ t / tt
        explained.append(tt * float(p_load @ p_load) / total_ss)
        directions.append(r)
        score_list.append(t)
        # iterated Gram-Schmidt keeps the deflation basis orthonormal to
        # machine precision, which is what keeps the scores orthogonal and
        # the per-component variance shares additive
        v = p_load
        for _ in range(2):
            v = v - V_basis @ (V_basis.T @ v)
        v_norm = np.linalg.norm(v)
        if v_norm <= 1e-12 * max(np.linalg.norm(p_load), 1e-300):
            cum += explained[-1]
            break
        v = v / v_norm
        V_basis = np.column_stack([V_basis, v])
        for _ in range(2):
            s = s - V_basis @ (V_basis.T @ s)
        cum += explained[-1]
        if cum >= variance_target - 1e-12:
            break
    if not directions:
        # output carries no covariance with any input: bias-only sensor
        warnings.warn("pls: zero cross-covariance, returning bias-only model")
        a = np.zeros(p)
        latent = LatentModel("pls", np.zeros((p, 0)), np.zeros(0), np.zeros(0))
        return _as_model("pls", a, columns, scaler, a0=ybar, latent=latent), latent
    if cum < variance_target - 1e-12:
        warnings.warn(
            f"pls: cross-covariance exhausted at {cum:.4f} cumulative input variance"
        )

    R = np.column_stack(directions)
    scores = np.column_stack(score_list)
    w = solve_ls(scores, yc)
    a = R @ w
    a0 = ybar - float(mu @ a)
    latent = LatentModel("pls", loadings=R, weights=w, explained=np.asarray(explained))
    model = _as_model(
        "pls", a, columns, scaler, a0=a0, n_components=R.shape[1], latent=latent,
        info={"variance_target": variance_target, "cumulative_explained": cum},
    )
    return model, latent


@dataclass(frozen=True)
class LassoConfig:
    lam: float
    tol: float = 1e-8
    max_sweeps: int = 10_000

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lasso: lambda must be nonnegative")
        if self.max_sweeps < 1:
            raise ConfigError("lasso: max_sweeps must be >= 1")


def _soft_threshold(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def _lasso_cd(G, g0, lam, tol, max_sweeps, a=None):
    """Cyclic coordinate descent on the Gram system; exact scalar updates."""
    p = len(g0)
    a = np.zeros(p) if a is None else a.copy()
    diag = np.diag(G).copy()
    for sweep in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            if diag[j] <= 0.0:
                continue
            rho = g0[j] - G[j] @ a + diag[j] * a[j]
            new = _soft_threshold(rho, lam) / diag[j]
            if new != a[j]:
                delta = max(delta, abs(new - a[j]))
                a[j] = new
        if delta <= tol * max(1.0, np.max(np.abs(a))):
            return a, sweep + 1
    return a, -max_sweeps


def lasso_kkt_gap(M_n, y_n, a, lam) -> float:
    """Worst violation of the stationarity conditions at a candidate solution."""
    grad = M_n.T @ (M_n @ a - y_n)
    gap = 0.0
    for j in range(len(a)):
        if a[j] == 0.0:
            gap = max(gap, abs(grad[j]) - lam)
        else:
            gap = max(gap, abs(grad[j] + lam * np.sign(a[j])))
    return gap


def fit_lasso(M_n, y_n, cfg: LassoConfig, columns=None, scaler=None) -> SensorModel:
    """l1-penalized least squares: 0.5 * ||y - M a||^2 + lam * ||a||_1."""
    M_n = np.asarray(M_n, dtype=float)
    y_n = np.asarray(y_n, dtype=float)
    G = M_n.T @ M_n
    g0 = M_n.T @ y_n
    a, sweeps = _lasso_cd(G, g0, cfg.lam, cfg.tol, cfg.max_sweeps)
    if sweeps < 0:
        raise ConvergenceError(
            f"lasso did not converge within {cfg.max_sweeps} sweeps at lambda={cfg.lam:g}"
        )
    a[np.abs(a) == 0.0] = 0.0
    gap = lasso_kkt_gap(M_n, y_n, a, cfg.lam)
    return _as_model(
        "lasso", a, columns, scaler,
        info={"lambda": cfg.lam, "sweeps": sweeps, "kkt_gap": gap},
    )


def tune_lambda(
    M_n, y_n, criteria=("r2adj", "aicc", "bic"), cv_repeats: int = 20, seed: int = 0,
    grid_points: int = 50, grid_decades: float = 4.0,
):
    """Two-stage penalty selection.

    Stage 1 fits the whole training block along a descending log-spaced
    grid below ||M'y||_inf and keeps, per requested criterion, the grid
    value minimizing it. Stage 2 scores the candidates by mean validation
    error over repeated random half splits and returns the winner.
    """
    from .subset import criterion_value  # local import avoids a module cycle

    criteria = tuple(criteria)
    if not criteria:
        raise ConfigError("tune_lambda needs at least one criterion")
    M_n = np.asarray(M_n, dtype=float)
    y_n = np.asarray(y_n, dtype=float)
    n = M_n.shape[0]
    lam_max = float(np.max(np.abs(M_n.T @ y_n)))
    if lam_max <= 0.0:
        warnings.warn("tune_lambda: output is orthogonal to every input")
        return 0.0, {"grid": [], "candidates": {}, "cv_errors": {}}
    grid = lam_max * np.logspace(0.0, -grid_decades, grid_points)

    G = M_n.T @ M_n
    g0 = M_n.T @ y_n
    yty = float(y_n @ y_n)
    best = {kind: (np.inf, None) for kind in criteria}
    a = None
    for lam in grid:  # descending, warm-started path
        a, sweeps = _lasso_cd(G, g0, lam, 1e-8, 10_000, a)
        if sweeps < 0:
            raise ConvergenceError(f"lasso path stalled at lambda={lam:g}")
        rss = max(yty - 2.0 * float(g0 @ a) + float(a @ G @ a), 0.0)
        c = int(np.count_nonzero(a))
        for kind in criteria:
            val = criterion_value(kind, n, rss, c)
            if val < best[kind][0]:
                best[kind] = (val, lam)

    candidates = sorted({lam for _, lam in best.values() if lam is not None}, reverse=True)
    cv_err = {lam: 0.0 for lam in candidates}
    n_half = -(-n // 2)
    for rep in range(cv_repeats):
        rng = np.random.default_rng([seed, rep])
        perm = rng.permutation(n)
        tr, va = perm[:n_half], perm[n_half:]
        Gt, gt = M_n[tr].T @ M_n[tr], M_n[tr].T @ y_n[tr]
        for lam in candidates:
            av, sweeps = _lasso_cd(Gt, gt, lam, 1e-8, 10_000)
            resid = y_n[va] - M_n[va] @ av
            cv_err[lam] += float(resid @ resid)
    lam_star = min(candidates, key=lambda lam: (cv_err[lam], -lam))
    return lam_star, {
        "grid": grid.tolist(),
        "candidates": {k: best[k][1] for k in criteria},
        "cv_errors": {lam: cv_err[lam] / cv_repeats for lam in candidates},
    }


def predict(model: SensorModel, M_eng: np.ndarray):
    """Predictions for engineering-unit input rows.

    Returns (engineering, normalized) prediction vectors.
    """
    M_eng = np.asarray(M_eng, dtype=float)
    if M_eng.ndim == 1:
        M_eng = M_eng[None, :]
    if M_eng.shape[1] != len(model.columns):
        raise DataError(
            f"model expects {len(model.columns)} columns, got {M_eng.shape[1]}"
        )
    if not np.all(np.isfinite(M_eng)):
        raise DataError("predict: non-finite input")
    M_n = model.scaler.transform_inputs(M_eng)
    y_norm = M_n @ model.a + model.a0
    return model.scaler.invert_output(y_norm), y_norm


def predict_normalized(model: SensorModel, M_n: np.ndarray) -> np.ndarray:
    """Predictions for rows already in normalized coordinates."""
    M_n = np.asarray(M_n, dtype=float)
    if M_n.ndim == 1:
        M_n = M_n[None, :]
    if M_n.shape[1] != len(model.columns):
        raise DataError(
            f"model expects {len(model.columns)} columns, got {M_n.shape[1]}"
        )
    return M_n @ model.a + model.a0


def prune_impacts(model: SensorModel, M_n, y_n, threshold: float = 0.001) -> SensorModel:
    """Drop inputs whose worst-case contribution is negligible, then refit.

    Input j is dropped when |a_j| * max|M_N[:,j]| falls below the threshold
    times max|y_N|. Repeats until stable, so a second application is a
    no-op. Models that lose every input collapse to bias-only with a
    warning.
    """
    M_n = np.asarray(M_n, dtype=float)
    y_n = np.asarray(y_n, dtype=float)
    if threshold <= 0:
        raise ConfigError("prune threshold must be positive")
    col_max = np.max(np.abs(M_n), axis=0)
    y_max = float(np.max(np.abs(y_n)))
    current = model
    while True:
        zb = np.asarray(current.z, dtype=bool)
        impacts = np.abs(current.a) * col_max
        drop = zb & (impacts < threshold * y_max)
        if not drop.any():
            return current
        keep = zb & ~drop
        if not keep.any():
            warnings.warn(f"{model.method}: all inputs pruned, returning bias-only model")
            return replace(
                current, z=np.zeros_like(zb), a=np.zeros_like(current.a),
                info={**current.info, "pruned_to_bias": True},
            )
        refit = fit_fixed(M_n, y_n, keep, columns=current.columns, scaler=current.scaler)
        current = replace(
            current, z=refit.z, a=refit.a, a0=refit.a0,
            latent=None, info={**current.info, "pruned": True},
        )
