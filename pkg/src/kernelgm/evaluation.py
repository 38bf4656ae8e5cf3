"""Support-recovery metrics and empirical scaling checks.

Two kinds of instruments live here.  The metric functions grade an
estimated parameter matrix against a known truth (precision / recall /
F-score over off-diagonal supports, top-k link metrics against node
categories, nonzero-frequency maps over replications).  The rate checks
run seeded Monte Carlo experiments that measure how a statistic decays
with the sample size: the sup-norm of the likelihood gradient at the
true parameters, and the estimation error of the penalized MLEs under a
lambda_n proportional to sqrt(ln p / n) rule.  Both are expected to
shrink like n^(-1/2); the checks report a fitted log-log slope with a
bootstrap interval and leave judgment to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .density import (
    ModelSpec,
    ParamMatrix,
    joint_pair_expectations,
    trapezoid_grid,
)
from .errors import InvalidInputError
from .estimators import SolveConfig, fit_joint_mle_exact, fit_nodewise_mle_exact
from .kernels import Dataset, average_gram, eval_kernel, kernel_cross_matrix, unit_feature_lift
from .sampling import GibbsConfig, gibbs_generate_batch

# Exact zeros are clipped here before logs; anything at the floor is a
# measurement of "zero at numerical resolution", not a real magnitude.
STAT_FLOOR = 1e-15


@dataclass(frozen=True)
class SupportMetrics:
    """Edge-recovery scores over unordered off-diagonal pairs."""

    precision: float
    recall: float
    fscore: float
    threshold: float
    tp: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be >= 0")
        for name in ("precision", "recall", "fscore"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {v}")
        p_chk = self.tp / (self.tp + self.fp) if self.tp + self.fp > 0 else 0.0
        r_chk = self.tp / (self.tp + self.fn) if self.tp + self.fn > 0 else 0.0
        f_chk = _fscore(p_chk, r_chk)
        if (
            abs(p_chk - self.precision) > 1e-12
            or abs(r_chk - self.recall) > 1e-12
            or abs(f_chk - self.fscore) > 1e-12
        ):
            raise InvalidInputError("metrics inconsistent with tp/fp/fn counts")


@dataclass(frozen=True)
class FrequencyMap:
    """Per-edge counts of nonzero identifications across replications."""

    matrix: np.ndarray
    n_replications: int

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError(f"matrix must be square, got shape {m.shape}")
        if not np.issubdtype(m.dtype, np.integer):
            raise InvalidInputError("matrix must hold integers")
        if not np.array_equal(m, m.T):
            raise InvalidInputError("matrix must be symmetric")
        if np.any(np.diagonal(m) != 0):
            raise InvalidInputError("diagonal counts must be zero")
        if m.min() < 0 or m.max() > self.n_replications:
            raise InvalidInputError("counts must lie in [0, n_replications]")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class RateCheckResult:
    """Medians of a positive statistic over a sample-size grid.

    statistics holds the raw per-replication values, shape
    (replications, len(sample_sizes)); fitted_slope is the least-squares
    slope of log median versus log n and slope_ci its bootstrap interval.
    """

    sample_sizes: np.ndarray
    statistic_medians: np.ndarray
    fitted_slope: float
    slope_ci: tuple[float, float]
    statistics: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        sizes = np.asarray(self.sample_sizes, dtype=int)
        med = np.asarray(self.statistic_medians, dtype=float)
        stats = np.asarray(self.statistics, dtype=float)
        if sizes.ndim != 1 or np.any(np.diff(sizes) <= 0):
            raise InvalidInputError("sample_sizes must be strictly increasing")
        if med.shape != sizes.shape or np.any(med <= 0):
            raise InvalidInputError("statistic_medians must be positive, one per size")
        if stats.ndim != 2 or stats.shape[1] != sizes.size:
            raise InvalidInputError("statistics must be (replications, len(sample_sizes))")
        if self.slope_ci[0] > self.slope_ci[1]:
            raise InvalidInputError("slope_ci must be ordered")
        object.__setattr__(self, "sample_sizes", sizes)
        object.__setattr__(self, "statistic_medians", med)
        object.__setattr__(self, "statistics", stats)


def _fscore(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _metrics_from_counts(tp: int, fp: int, fn: int, threshold: float) -> SupportMetrics:
    # empty denominators score 0: the standard convention for the 0/0 case
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return SupportMetrics(
        precision=precision,
        recall=recall,
        fscore=_fscore(precision, recall),
        threshold=threshold,
        tp=tp,
        fp=fp,
        fn=fn,
    )


def support_metrics(
    estimate: ParamMatrix, truth: ParamMatrix, threshold: float = 1e-3
) -> SupportMetrics:
    """Precision / recall / F of the off-diagonal support at a magnitude cutoff."""
    if estimate.p != truth.p:
        raise InvalidInputError(f"estimate has p = {estimate.p}, truth has p = {truth.p}")
    iu = np.triu_indices(estimate.p, k=1)
    est = np.abs(estimate.theta[iu]) > threshold
    tru = np.abs(truth.theta[iu]) > threshold
    tp = int(np.sum(est & tru))
    fp = int(np.sum(est & ~tru))
    fn = int(np.sum(~est & tru))
    return _metrics_from_counts(tp, fp, fn, threshold)


def topk_link_metrics(estimate: ParamMatrix, categories, k: int) -> SupportMetrics:
    """Grade the k largest-magnitude links against per-node category labels.

    A predicted link counts as correct iff it joins two nodes with equal
    labels; recall divides by the number of all same-category pairs.
    Pairs are ranked by |entry| descending with ties broken by (s, t)
    index order, so the ranking is deterministic.  The threshold field
    records the magnitude of the last selected pair.
    """
    p = estimate.p
    labels = np.asarray(categories)
    if labels.shape != (p,):
        raise InvalidInputError(f"need one category per node, got shape {labels.shape}")
    iu = np.triu_indices(p, k=1)
    n_pairs = iu[0].size
    if not 1 <= k <= n_pairs:
        raise InvalidInputError(f"k must lie in [1, {n_pairs}], got {k}")
    mags = np.abs(estimate.theta[iu])
    order = np.argsort(-mags, kind="stable")  # stable sort keeps index order on ties
    top = order[:k]
    same = labels[iu[0]] == labels[iu[1]]
    tp = int(np.sum(same[top]))
    fp = k - tp
    fn = int(np.sum(same)) - tp
    return _metrics_from_counts(tp, fp, fn, float(mags[top[-1]]))


def frequency_map(estimates, threshold: float = 1e-3) -> FrequencyMap:
    """Count, per edge, how many estimates exceed the magnitude cutoff."""
    mats = list(estimates)
    if not mats:
        raise InvalidInputError("need at least one estimate")
    p = mats[0].p
    counts = np.zeros((p, p), dtype=int)
    for est in mats:
        if est.p != p:
            raise InvalidInputError("all estimates must share p")
        counts += est.support(threshold).astype(int)
    np.fill_diagonal(counts, 0)
    return FrequencyMap(matrix=counts, n_replications=len(mats))


def least_squares_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Slope of the ordinary least-squares line through (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise InvalidInputError("need matching 1-d arrays with >= 2 points")
    return float(np.polyfit(x, y, 1)[0])


def _bootstrap_slope_ci(
    stats: np.ndarray, log_n: np.ndarray, n_boot: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Percentile interval for the slope, resampling replications."""
    r = stats.shape[0]
    idx = rng.integers(0, r, size=(n_boot, r))
    med = np.median(stats[idx], axis=1)  # (n_boot, K)
    logy = np.log(np.maximum(med, STAT_FLOOR))
    xc = log_n - log_n.mean()
    slopes = (logy - logy.mean(axis=1, keepdims=True)) @ xc / float(xc @ xc)
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    return float(lo), float(hi)


def _rate_result(sizes, stats: np.ndarray, meta: dict, n_boot: int, rng) -> RateCheckResult:
    sizes = np.asarray(sizes, dtype=int)
    stats = np.maximum(np.asarray(stats, dtype=float), STAT_FLOOR)
    med = np.median(stats, axis=0)
    log_n = np.log(sizes.astype(float))
    slope = least_squares_slope(log_n, np.log(med))
    ci = _bootstrap_slope_ci(stats, log_n, n_boot, rng)
    return RateCheckResult(
        sample_sizes=sizes,
        statistic_medians=med,
        fitted_slope=slope,
        slope_ci=ci,
        statistics=stats,
        meta=meta,
    )


def _lift_grid(grid: np.ndarray, d: int) -> np.ndarray:
    return grid[:, None] if d == 1 else unit_feature_lift(grid, dim=d)


def conditional_sup_gradient(model: ModelSpec, data: Dataset, n_grid: int = 201) -> float:
    """max over nodes of the sup-norm conditional likelihood gradient.

    Equals max_s ||conditional_gradient(model, data, s)||_inf but shares
    the kernel tables phi(x_t, grid) across all node conditionals, which
    matters when this runs hundreds of times inside a rate check.
    """
    th = model.theta.theta
    p = model.p
    vals = data.values
    n = data.n
    grid, w = trapezoid_grid(model.domain, n_grid)
    gv = _lift_grid(grid, model.lift_dim)
    selfphi = np.asarray(eval_kernel(model.kernel, gv, gv))
    fpot = -model.base_coeff * selfphi
    base = np.log(w)
    flat = vals.reshape(n * p, model.lift_dim)
    K = kernel_cross_matrix(model.kernel, flat, gv).reshape(n, p, grid.size)
    K = np.ascontiguousarray(K.transpose(1, 0, 2))  # (p, n, G)
    K2 = K.reshape(p, n * grid.size)
    emp = average_gram(model.kernel, data).matrix
    worst = 0.0
    for s in range(p):
        nb = np.flatnonzero((th[s] != 0.0) & (np.arange(p) != s))
        E = th[s, s] * fpot + base
        if nb.size:
            E = E + np.tensordot(th[s, nb], K[nb], axes=1)
        else:
            E = np.broadcast_to(E, (n, grid.size))
        lse = logsumexp(E, axis=1, keepdims=True)
        probs = np.exp(E - lse)
        g = K2 @ probs.ravel() / n - emp[s]
        g[s] = -model.base_coeff * (float((probs @ selfphi).mean()) - emp[s, s])
        worst = max(worst, float(np.abs(g).max()))
    return worst


def joint_sup_gradient(model: ModelSpec, data: Dataset, expect: np.ndarray) -> float:
    """Sup-norm of the exact joint likelihood gradient at the model's theta.

    expect is the pair-expectation matrix from joint_pair_expectations,
    passed in because it is data independent and worth computing once.
    """
    emp = average_gram(model.kernel, data).matrix
    g = -emp + expect
    diag = -model.base_coeff * (np.diag(expect) - np.diag(emp))
    np.fill_diagonal(g, diag)
    return float(np.abs(g).max())


def _rate_check_gibbs(gibbs: GibbsConfig | None) -> GibbsConfig:
    return gibbs or GibbsConfig(n_grid=201, burn_in=300, thin=5)


def gradient_concentration_check(
    model: ModelSpec,
    sample_sizes=(125, 250, 500, 1000, 2000),
    replications: int = 50,
    seed=0,
    quad_grid: int = 201,
    gibbs: GibbsConfig | None = None,
    n_boot: int = 200,
) -> RateCheckResult:
    """Measure how the gradient sup-norm at the true theta decays with n.

    For p <= 4 the statistic is the exact joint gradient; beyond that it
    is the worst node-conditional gradient, which needs only univariate
    quadrature.  Data come from seeded Gibbs batches, one batch per
    sample size.  The expected log-log slope is -1/2.
    """
    sizes = np.asarray(sample_sizes, dtype=int)
    if replications < 2:
        raise InvalidInputError("need >= 2 replications")
    cfg = _rate_check_gibbs(gibbs)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(sizes.size + 1)
    joint = model.p <= 4
    expect = joint_pair_expectations(model, quad_grid)[1] if joint else None
    stats = np.empty((replications, sizes.size))
    for k, n in enumerate(sizes):
        datasets = gibbs_generate_batch(model, int(n), replications, cfg, children[k])
        for r, data in enumerate(datasets):
            if joint:
                stats[r, k] = joint_sup_gradient(model, data, expect)
            else:
                stats[r, k] = conditional_sup_gradient(model, data, quad_grid)
    meta = {
        "statistic": "joint_sup_gradient" if joint else "conditional_sup_gradient",
        "replications": replications,
        "quad_grid": quad_grid,
    }
    return _rate_result(sizes, stats, meta, n_boot, np.random.default_rng(children[-1]))


def error_scaling_check(
    model: ModelSpec,
    estimator: str = "nodewise_mle",
    sample_sizes=(250, 500, 1000, 2000, 4000),
    replications: int = 9,
    lam_scale: float = 1.0,
    seed=0,
    config: SolveConfig | None = None,
    quad_grid: int = 201,
    gibbs: GibbsConfig | None = None,
    n_boot: int = 200,
) -> RateCheckResult:
    """Measure how penalized-MLE estimation error decays with n.

    The penalty follows lam_n = lam_scale * sqrt(ln p / n).  For the
    node-wise estimator the statistic is the worst per-node Euclidean
    error of the edge-weight vector (the 2,inf aggregation); for the
    joint estimator (p <= 4) it is the off-diagonal Frobenius error.
    The expected log-log slope is -1/2.
    """
    if estimator not in ("nodewise_mle", "joint_mle"):
        raise InvalidInputError(f"unknown estimator {estimator!r}")
    if estimator == "joint_mle" and model.p > 4:
        raise InvalidInputError("joint_mle error scaling needs p <= 4")
    sizes = np.asarray(sample_sizes, dtype=int)
    if replications < 2:
        raise InvalidInputError("need >= 2 replications")
    cfg = _rate_check_gibbs(gibbs)
    scfg = config or SolveConfig(grad_tol=1e-5, max_iter=500, accelerate=True)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(sizes.size + 1)
    p = model.p
    th_true = model.theta.theta
    off_mask = ~np.eye(p, dtype=bool)
    stats = np.empty((replications, sizes.size))
    n_unconverged = 0
    for k, n in enumerate(sizes):
        lam = lam_scale * np.sqrt(np.log(p) / float(n))
        datasets = gibbs_generate_batch(model, int(n), replications, cfg, children[k])
        for r, data in enumerate(datasets):
            if estimator == "joint_mle":
                fr = fit_joint_mle_exact(
                    model.kernel, data, lam, scfg, domain=model.domain,
                    base_coeff=model.base_coeff, n_grid=quad_grid,
                )
                n_unconverged += not fr.converged
                diff = fr.theta.theta - th_true
                stats[r, k] = float(np.linalg.norm(diff[off_mask]))
            else:
                worst = 0.0
                for s in range(p):
                    fr = fit_nodewise_mle_exact(
                        model.kernel, data, s, lam, scfg, domain=model.domain,
                        base_coeff=model.base_coeff, n_grid=quad_grid,
                    )
                    n_unconverged += not fr.converged
                    others = [t for t in range(p) if t != s]
                    worst = max(worst, float(np.linalg.norm(fr.solution - th_true[s, others])))
                stats[r, k] = worst
    meta = {
        "estimator": estimator,
        "lam_scale": lam_scale,
        "replications": replications,
        "quad_grid": quad_grid,
        "grad_tol": scfg.grad_tol,
        "n_unconverged": n_unconverged,
    }
    return _rate_result(sizes, stats, meta, n_boot, np.random.default_rng(children[-1]))
