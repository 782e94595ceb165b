"""Best-subset sensor structures by branch and bound.

Two search problems share one engine:

* criterion-driven selection: for every cardinality c the training RSS is
  minimized over supports of size c, exploiting that the overfitting
  criteria are increasing in RSS at fixed c; the cardinality then falls
  out of a one-dimensional criterion scan,
* cross-validation-driven selection: the summed validation error over K
  folds is minimized directly over supports, with the per-fold training
  fits nested inside the objective.

Both searches branch on include/exclude decisions per column. The lower
bound of a node is the unrestricted least-squares error over the still
admissible columns, which never overestimates any descendant because the
error is non-increasing in the support. Search is exact (depth-first with
pruning) up to ``exact_limit`` columns; wider problems switch to
best-first order under a node budget, seeded by forward stepwise, and
results are flagged as heuristic once the budget runs out.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .regress import SensorModel, _as_model, fit_fixed

CRITERIA = ("r2adj", "aicc", "bic")


def criterion_value(kind: str, n: int, rss: float, c: int) -> float:
    """Overfitting criterion for a fit with residual sum ``rss`` and ``c`` inputs.

    r2adj: RSS / (n - c - 1); aicc: n log(RSS/n) + 2c; bic: n log(RSS/n)
    + log(n) c, all with natural logarithms. A zero RSS yields -inf for
    the logarithmic criteria: an exact interpolation beats any competitor.
    """
    kind = kind.lower()
    if kind not in CRITERIA:
        raise ConfigError(f"unknown criterion {kind!r}")
    if rss < 0 or c < 0 or n < 1:
        raise DataError("criterion needs rss >= 0, c >= 0, n >= 1")
    if kind == "r2adj":
        if n - c - 1 < 1:
            raise DataError(f"r2adj needs n - c - 1 >= 1, got n={n}, c={c}")
        return rss / (n - c - 1)
    if rss == 0.0:
        return float("-inf")
    base = n * math.log(rss / n)
    return base + (2.0 * c if kind == "aicc" else math.log(n) * c)


@dataclass(frozen=True)
class SubsetConfig:
    a_bound: float | None = None   # coefficient box; default 10 * max |OLS coef|
    exact_limit: int = 16
    node_budget: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if self.a_bound is not None and self.a_bound <= 0:
            raise ConfigError("coefficient bound must be positive")
        if self.exact_limit < 1 or self.node_budget < 1:
            raise ConfigError("search limits must be >= 1")


@dataclass(frozen=True)
class FoldPlan:
    """Partition of training-row positions into K validation folds."""

    K: int
    rows: np.ndarray
    folds: tuple

    def __post_init__(self):
        if self.K < 2 or len(self.folds) != self.K:
            raise DataError("fold plan needs K >= 2 folds")
        union = np.concatenate(self.folds)
        if len(np.unique(union)) != len(union) or not np.array_equal(
            np.sort(union), np.sort(self.rows)
        ):
            raise DataError("folds must be disjoint and cover the training rows")
        sizes = [len(f) for f in self.folds]
        if max(sizes) - min(sizes) > 1:
            raise DataError("fold sizes may differ by at most one")

    def train_rows(self, k: int) -> np.ndarray:
        return np.setdiff1d(self.rows, self.folds[k])


def make_folds(rows, K: int, seed: int = 0, n_p: int | None = None) -> FoldPlan:
    """Seed-deterministic balanced fold plan over the given row positions."""
    if isinstance(rows, (int, np.integer)):
        rows = np.arange(int(rows))
    rows = np.asarray(rows, dtype=int)
    if K < 2:
        raise ConfigError("cross-validation needs K >= 2")
    if K > rows.size:
        raise DataError(f"cannot split {rows.size} rows into {K} folds")
    if n_p is not None and rows.size - math.ceil(rows.size / K) < n_p:
        raise DataError(
            f"per-fold training size {rows.size - math.ceil(rows.size / K)} "
            f"is below the {n_p} inputs needed for identifiability"
        )
    perm = np.random.default_rng(seed).permutation(rows)
    base, extra = divmod(rows.size, K)
    folds, at = [], 0
    for k in range(K):
        size = base + (1 if k < extra else 0)
        folds.append(np.sort(perm[at : at + size]))
        at += size
    return FoldPlan(K=K, rows=np.sort(rows), folds=tuple(folds))


@dataclass
class SearchLog:
    nodes: int = 0
    incumbents: list = field(default_factory=list)  # (node, objective, support)
    pruned: int = 0
    exact: bool = True

    def as_text(self) -> str:
        lines = [
            f"nodes_expanded {self.nodes}",
            f"nodes_pruned {self.pruned}",
            f"proven_optimal {int(self.exact)}",
            "incumbents (node objective support):",
        ]
        for node, obj, sup in self.incumbents:
            names = ",".join(str(j + 1) for j in sup) or "-"
            lines.append(f"  {node} {obj:.12g} {names}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.as_text())


_ZERO_SNAP = 1e-11  # residuals this small relative to ||y||^2 count as interpolation
_TIE_TOL = 1e-12    # objectives this close relative to ||y||^2 count as tied


class _RssProblem:
    """Gram-cached evaluation of restricted least squares.

    Residual sums below the cancellation level of the Gram arithmetic are
    snapped to exactly zero so that noiseless interpolation ties resolve
    deterministically instead of on rounding noise.
    """

    def __init__(self, M, y):
        self.G = M.T @ M
        self.g = M.T @ y
        self.yty = float(y @ y)
        self.p = M.shape[1]
        self.snap = _ZERO_SNAP * max(self.yty, 1e-300)

    def coefs(self, support):
        if len(support) == 0:
            return np.zeros(0)
        s = np.asarray(support, dtype=int)
        Gs = self.G[np.ix_(s, s)]
        gs = self.g[s]
        try:
            return np.linalg.solve(Gs, gs)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(Gs, gs, rcond=None)[0]

    def rss(self, support):
        if len(support) == 0:
            return self.yty, np.zeros(0)
        a = self.coefs(support)
        s = np.asarray(support, dtype=int)
        rss = self.yty - float(self.g[s] @ a)
        return (0.0 if rss <= self.snap else rss), a


class _CvProblem:
    """Gram-cached evaluation of the fold-wise validation objective."""

    def __init__(self, M, y, plan: FoldPlan):
        self.p = M.shape[1]
        self.K = plan.K
        self.Gt, self.gt, self.Gv, self.gv, self.ytyv = [], [], [], [], []
        for k in range(plan.K):
            tr = plan.train_rows(k)
            va = plan.folds[k]
            Xt, yt = M[tr], y[tr]
            Xv, yv = M[va], y[va]
            self.Gt.append(Xt.T @ Xt)
            self.gt.append(Xt.T @ yt)
            self.Gv.append(Xv.T @ Xv)
            self.gv.append(Xv.T @ yv)
            self.ytyv.append(float(yv @ yv))
        self.total_yv = float(sum(self.ytyv))
        self.snap = _ZERO_SNAP * max(self.total_yv, 1e-300)

    @staticmethod
    def _solve(G, g):
        try:
            return np.linalg.solve(G, g)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(G, g, rcond=None)[0]

    def objective(self, support):
        if len(support) == 0:
            return self.total_yv
        s = np.asarray(support, dtype=int)
        total = 0.0
        for k in range(self.K):
            a = self._solve(self.Gt[k][np.ix_(s, s)], self.gt[k][s])
            total += (
                self.ytyv[k]
                - 2.0 * float(self.gv[k][s] @ a)
                + float(a @ self.Gv[k][np.ix_(s, s)] @ a)
            )
        return 0.0 if total <= self.snap else total

    def bound(self, admissible):
        """Free fit of each validation fold on the admissible columns.

        Any descendant's fold coefficients live inside these columns, so
        the unconstrained validation fit can only be better: a valid
        lower bound on the cross-validation objective.
        """
        if len(admissible) == 0:
            return self.total_yv
        s = np.asarray(admissible, dtype=int)
        total = 0.0
        for k in range(self.K):
            a = self._solve(self.Gv[k][np.ix_(s, s)], self.gv[k][s])
            total += self.ytyv[k] - float(self.gv[k][s] @ a)
        return 0.0 if total <= self.snap else total


def _tie_better(support_a, support_b):
    """Tie order on equal objectives: fewer inputs first, then lexicographic."""
    return (len(support_a), tuple(support_a)) < (len(support_b), tuple(support_b))


class _Frontier:
    """Node pool: LIFO for exact depth-first search, or a lazy best-first
    heap keyed by the parent's relaxation bound for budgeted search."""

    def __init__(self, best_first: bool):
        self.best_first = best_first
        self.items = []
        self._count = 0

    def push(self, priority: float, node) -> None:
        if self.best_first:
            heapq.heappush(self.items, (priority, self._count, node))
            self._count += 1
        else:
            self.items.append(node)

    def pop(self):
        if self.best_first:
            return heapq.heappop(self.items)[2]
        return self.items.pop()

    def __bool__(self):
        return bool(self.items)


def best_subset(
    M_n, y_n, kind: str, cfg: SubsetConfig = SubsetConfig(), columns=None, scaler=None,
    log: SearchLog | None = None,
) -> SensorModel:
    """Globally best support under an overfitting criterion.

    The search keeps, per cardinality, the smallest training RSS found so
    far; a node dies only when its relaxation cannot improve any
    cardinality it still reaches. The criterion scan over cardinalities
    then picks the winner, and unrestricted least squares on that support
    gives the coefficients. Ties fall to the lexicographically smallest
    support.
    """
    M_n = np.asarray(M_n, dtype=float)
    y_n = np.asarray(y_n, dtype=float)
    n, p = M_n.shape
    if p < 1 or n < 2:
        raise DataError("best_subset needs n_p >= 1 and at least 2 training rows")
    kind = kind.lower()
    if kind not in CRITERIA:
        raise ConfigError(f"unknown criterion {kind!r}")
    prob = _RssProblem(M_n, y_n)
    log = log if log is not None else SearchLog()

    c_max = min(p, n - 2)
    if c_max < 1:
        raise DataError("too few training rows for any single-input fit")

    best_rss = {0: prob.yty}
    best_sup = {0: ()}
    tie_tol = _TIE_TOL * max(prob.yty, 1e-300)

    def offer(support, rss):
        c = len(support)
        if c > c_max:
            return
        if c not in best_rss or rss < best_rss[c] - tie_tol or (
            rss <= best_rss[c] + tie_tol and tuple(support) < tuple(best_sup[c])
        ):
            best_rss[c] = min(rss, best_rss.get(c, rss))
            best_sup[c] = tuple(support)

    # forward-stepwise warm start: one incumbent per cardinality
    current: list[int] = []
    remaining = list(range(p))
    for _ in range(c_max):
        best_j, best_val = None, np.inf
        for j in remaining:
            rss, _ = prob.rss(current + [j])
            if rss < best_val:
                best_val, best_j = rss, j
        current.append(best_j)
        current.sort()
        remaining.remove(best_j)
        offer(tuple(current), best_val)

    exact = p <= cfg.exact_limit
    log.exact = exact

    # include/exclude search over (included, undecided) nodes: depth-first
    # when exact, best-first on the parent relaxation under a budget beyond
    frontier = _Frontier(best_first=not exact)
    frontier.push(0.0, ((), tuple(range(p))))
    while frontier:
        if log.nodes >= cfg.node_budget and not exact:
            warnings.warn("best_subset: node budget exhausted, result is heuristic")
            log.exact = False
            break
        included, undecided = frontier.pop()
        log.nodes += 1
        admissible = tuple(sorted(included + undecided))
        relax_rss, relax_a = prob.rss(admissible)
        offer(admissible, relax_rss)
        if not undecided:
            continue
        # The admissible set itself was just offered; every other descendant
        # has cardinality below |admissible| and RSS >= the relaxation, so
        # the node dies when no such cardinality can be improved or tied
        # (ties stay alive for the lexicographic rule).
        lo, hi = len(included), min(len(admissible) - 1, c_max)
        improvable = any(
            c not in best_rss or relax_rss <= best_rss[c] + tie_tol
            for c in range(lo, hi + 1)
        )
        if not improvable:
            log.pruned += 1
            continue
        # branch on the undecided column with the largest relaxed coefficient
        coef = {j: abs(relax_a[admissible.index(j)]) for j in undecided}
        j_star = max(undecided, key=lambda j: (coef[j], -j))
        rest = tuple(j for j in undecided if j != j_star)
        frontier.push(relax_rss, (included, rest))                       # exclude
        frontier.push(relax_rss, (tuple(sorted(included + (j_star,))), rest))  # include

    # criterion scan over cardinalities, smallest c wins ties
    best_val, best_c = np.inf, None
    for c in sorted(best_rss):
        if kind == "r2adj" and n - c - 1 < 1:
            continue
        val = criterion_value(kind, n, best_rss[c], c)
        if val < best_val:
            best_val, best_c = val, c
            log.incumbents.append((log.nodes, val, best_sup[c]))
    support = best_sup[best_c]

    a = np.zeros(p)
    if support:
        a[list(support)] = prob.coefs(support)
    a_bound = cfg.a_bound
    if a_bound is None:
        full_a = prob.coefs(tuple(range(p)))
        a_bound = 10.0 * max(float(np.max(np.abs(full_a))), 0.1) if p else 1.0
    if support and np.max(np.abs(a[list(support)])) > a_bound:
        warnings.warn(
            f"best_subset: a coefficient exceeds the box bound {a_bound:g}; "
            "the box would bind in the constrained formulation"
        )
    z = np.zeros(p, dtype=bool)
    z[list(support)] = True
    return _as_model(
        "ss", a, columns, scaler, z=z,
        info={
            "criterion": kind,
            "criterion_value": best_val,
            "rss": best_rss[best_c],
            "cardinality": best_c,
            "nodes": log.nodes,
            "exact": log.exact,
            "a_bound": a_bound,
        },
    )


def ss_cv_solve(M_n, y_n, plan: FoldPlan, cfg: SubsetConfig = SubsetConfig(),
                log: SearchLog | None = None):
    """Support minimizing the summed validation error across folds.

    Returns (support mask, validation objective). Each candidate support
    is scored by refitting every fold's training part restricted to it
    and accumulating the squared error on the held-out fold.
    """
    M_n = np.asarray(M_n, dtype=float)
    y_n = np.asarray(y_n, dtype=float)
    n, p = M_n.shape
    if plan.rows.max(initial=-1) >= n:
        raise DataError("fold plan indexes beyond the data block")
    prob = _CvProblem(M_n, y_n, plan)
    log = log if log is not None else SearchLog()

    best_obj = prob.objective(())
    best_sup = ()
    tie_tol = _TIE_TOL * max(prob.total_yv, 1e-300)

    def offer(support):
        nonlocal best_obj, best_sup
        obj = prob.objective(support)
        if obj < best_obj - tie_tol or (
            obj <= best_obj + tie_tol and _tie_better(support, best_sup)
        ):
            best_obj, best_sup = min(obj, best_obj), tuple(support)
            log.incumbents.append((log.nodes, obj, tuple(support)))
        return obj

    # greedy warm start on the validation objective; its inclusion order is
    # reused as the branching order so that excluding an informative column
    # raises the bound as early as possible
    greedy_order: list[int] = []
    current: list[int] = []
    remaining = list(range(p))
    improving = True
    while remaining:
        scored = [(prob.objective(sorted(current + [j])), j) for j in remaining]
        obj_j, j = min(scored)
        greedy_order.append(j)
        remaining.remove(j)
        if improving and obj_j < best_obj:
            current = sorted(current + [j])
            offer(tuple(current))
        else:
            improving = False

    exact = p <= cfg.exact_limit
    log.exact = exact

    frontier = _Frontier(best_first=not exact)
    frontier.push(0.0, ((), tuple(greedy_order)))
    while frontier:
        if log.nodes >= cfg.node_budget and not exact:
            warnings.warn("ss_cv_solve: node budget exhausted, result is heuristic")
            log.exact = False
            break
        included, undecided = frontier.pop()
        log.nodes += 1
        admissible = tuple(sorted(included + undecided))
        offer(admissible)
        if not undecided:
            continue
        bound = prob.bound(admissible)
        if bound > best_obj + tie_tol:
            log.pruned += 1
            continue
        j_star = undecided[0]
        rest = undecided[1:]
        frontier.push(bound, (included, rest))
        frontier.push(bound, (tuple(sorted(included + (j_star,))), rest))

    mask = np.zeros(p, dtype=bool)
    mask[list(best_sup)] = True
    return mask, best_obj


def ss_cv_design(
    M_n, y_n, K_max: int = 6, repeats: int = 10, seed: int = 0,
    cfg: SubsetConfig = SubsetConfig(), columns=None, scaler=None,
) -> SensorModel:
    """Aggregate repeated cross-validation searches into one sensor.

    Every fold count K in 2..K_max is run with ``repeats`` random fold
    plans. The final input count is the lower median of the returned
    support sizes; the final structure takes that many inputs ranked by
    selection frequency (ties to the smaller column index) and is refit
    on the whole training block.
    """
    M_n = np.asarray(M_n, dtype=float)
    y_n = np.asarray(y_n, dtype=float)
    n, p = M_n.shape
    if K_max < 2:
        raise ConfigError("ss_cv_design needs K_max >= 2")
    if repeats < 1:
        raise ConfigError("ss_cv_design needs repeats >= 1")

    cards, freq, runs = [], np.zeros(p, dtype=int), 0
    for K in range(2, K_max + 1):
        if n - math.ceil(n / K) < p or K > n:
            warnings.warn(f"ss_cv_design: skipping infeasible K={K}")
            continue
        for rep in range(repeats):
            plan = make_folds(n, K, seed=_derive_seed(seed, K, rep), n_p=p)
            mask, _ = ss_cv_solve(M_n, y_n, plan, cfg)
            cards.append(int(mask.sum()))
            freq += mask.astype(int)
            runs += 1
    if runs == 0:
        raise DataError("ss_cv_design: no feasible fold count")

    cards.sort()
    n_star = cards[(len(cards) - 1) // 2]  # lower median
    order = sorted(range(p), key=lambda j: (-freq[j], j))
    support = np.zeros(p, dtype=bool)
    support[sorted(order[:n_star])] = True

    if n_star == 0:
        warnings.warn("ss_cv_design: median support is empty, bias-only sensor")
        model = _as_model("ss_cv", np.zeros(p), columns, scaler, z=support)
    else:
        fixed = fit_fixed(M_n, y_n, support, columns=columns, scaler=scaler)
        model = _as_model(
            "ss_cv", fixed.a, columns, scaler, z=support,
        )
    model.info.update(
        {"runs": runs, "cardinalities": tuple(cards), "frequency": freq.tolist(),
         "n_star": n_star}
    )
    return model


def _derive_seed(seed: int, *parts: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(x) for x in parts))
