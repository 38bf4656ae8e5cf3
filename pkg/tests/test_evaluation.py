import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelgm import InvalidInputError, KernelSpec, ModelSpec, ParamMatrix
from kernelgm.density import conditional_gradient, joint_gradient_exact, joint_pair_expectations, trapezoid_grid
from kernelgm.estimators import SolveConfig
from kernelgm.evaluation import (
    FrequencyMap,
    RateCheckResult,
    SupportMetrics,
    conditional_sup_gradient,
    error_scaling_check,
    frequency_map,
    gradient_concentration_check,
    joint_sup_gradient,
    least_squares_slope,
    support_metrics,
    topk_link_metrics,
)
from kernelgm.sampling import GibbsConfig, gibbs_generate, make_chain

HEAT = KernelSpec("heat", sigma=1.0)


def mat_from_edges(p, edges, weight=1.0):
    th = np.eye(p)
    for s, t in edges:
        th[s, t] = th[t, s] = weight
    return ParamMatrix(th)


def test_support_metrics_exact_match():
    truth = mat_from_edges(6, [(0, 1), (2, 3), (4, 5)])
    m = support_metrics(truth, truth)
    assert m.precision == m.recall == m.fscore == 1.0
    assert (m.tp, m.fp, m.fn) == (3, 0, 0)


def test_support_metrics_empty_estimate():
    truth = mat_from_edges(5, [(0, 1), (1, 2)])
    empty = ParamMatrix(np.eye(5))
    m = support_metrics(empty, truth)
    assert m.precision == 0.0 and m.recall == 0.0 and m.fscore == 0.0
    assert (m.tp, m.fp, m.fn) == (0, 0, 2)


def test_support_metrics_partial_recovery():
    # truth has 10 edges; estimate recovers 8 plus 2 false ones
    truth_edges = [(0, k) for k in range(1, 11)]
    truth = mat_from_edges(12, truth_edges)
    est_edges = truth_edges[:8] + [(1, 2), (3, 4)]
    est = mat_from_edges(12, est_edges)
    m = support_metrics(est, truth)
    assert m.precision == pytest.approx(0.8)
    assert m.recall == pytest.approx(0.8)
    assert m.fscore == pytest.approx(0.8)


def test_support_metrics_threshold_and_errors():
    truth = mat_from_edges(4, [(0, 1)])
    est = mat_from_edges(4, [(0, 1)], weight=5e-4)
    assert support_metrics(est, truth).tp == 0  # below the 1e-3 cutoff
    assert support_metrics(est, truth, threshold=1e-4).tp == 1
    with pytest.raises(InvalidInputError):
        support_metrics(truth, mat_from_edges(5, []))


@given(st.integers(0, 40), st.integers(0, 40), st.integers(0, 40))
def test_fscore_bounds(tp, fp, fn):
    m = SupportMetrics(
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
        fscore=(2 * tp / (2 * tp + fp + fn)) if tp else 0.0,
        threshold=1e-3,
        tp=tp,
        fp=fp,
        fn=fn,
    )
    assert m.fscore <= min(2 * m.precision, 2 * m.recall) + 1e-12
    if tp + fp + fn > 0:
        assert (m.fscore == 0.0) == (tp == 0)


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1))
def test_support_metrics_transpose_invariant(seed):
    rng = np.random.default_rng(seed)
    p = 7
    a = rng.normal(size=(p, p)) * (rng.random((p, p)) < 0.4)
    b = rng.normal(size=(p, p)) * (rng.random((p, p)) < 0.4)
    est = ParamMatrix(0.5 * (a + a.T))
    tru = ParamMatrix(0.5 * (b + b.T))
    m1 = support_metrics(est, tru)
    m2 = support_metrics(ParamMatrix(est.theta.T), ParamMatrix(tru.theta.T))
    assert m1 == m2


def test_topk_single_category_perfect_precision():
    est = ParamMatrix(np.eye(5) + 0.1)
    for k in (1, 4, 10):
        m = topk_link_metrics(est, ["x"] * 5, k)
        assert m.precision == 1.0


def test_topk_full_k_gives_full_recall():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    est = ParamMatrix(0.5 * (a + a.T))
    labels = ["a", "a", "b", "b", "c", "c"]
    m = topk_link_metrics(est, labels, k=15)
    assert m.recall == 1.0


def test_topk_four_node_example():
    th = np.eye(4)
    th[0, 1] = th[1, 0] = 0.9
    th[2, 3] = th[3, 2] = 0.8
    th[0, 2] = th[2, 0] = 0.1
    m = topk_link_metrics(ParamMatrix(th), ["A", "A", "B", "B"], k=2)
    assert m.precision == 1.0 and m.recall == 1.0


def test_topk_tie_break_is_index_order():
    # all magnitudes equal: top-1 must be the (0, 1) pair
    est = ParamMatrix(np.eye(4) + 0.5 - 0.5 * np.eye(4))
    m = topk_link_metrics(est, ["A", "A", "B", "B"], k=1)
    assert m.tp == 1  # (0, 1) is same-category
    m2 = topk_link_metrics(est, ["A", "B", "A", "B"], k=1)
    assert m2.tp == 0
    with pytest.raises(InvalidInputError):
        topk_link_metrics(est, ["A", "A", "B", "B"], k=7)


def test_frequency_map_counting():
    zero = [ParamMatrix(np.eye(4))] * 3
    fm = frequency_map(zero)
    assert fm.matrix.sum() == 0 and fm.n_replications == 3

    one = mat_from_edges(4, [(0, 1)])
    fm = frequency_map([one] * 10)
    assert fm.matrix[0, 1] == 10 and fm.matrix[1, 0] == 10
    assert set(np.unique(fm.matrix)) <= {0, 10}

    mixed = [one] * 3 + [ParamMatrix(np.eye(4))] * 7
    fm = frequency_map(mixed)
    assert fm.matrix[0, 1] == 3
    with pytest.raises(InvalidInputError):
        frequency_map([])


def test_frequency_map_validation():
    with pytest.raises(InvalidInputError):
        FrequencyMap(matrix=np.ones((3, 3), dtype=int), n_replications=5)  # diag nonzero
    bad = np.zeros((3, 3), dtype=int)
    bad[0, 1] = 7
    bad[1, 0] = 7
    with pytest.raises(InvalidInputError):
        FrequencyMap(matrix=bad, n_replications=5)  # count above R


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.integers(3, 12))
def test_slope_matches_closed_form(seed, k):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.normal(size=k))
    if np.ptp(x) < 1e-9:
        x = x + np.arange(k)
    y = rng.normal(size=k)
    slope = least_squares_slope(x, y)
    xc = x - x.mean()
    ref = float(xc @ (y - y.mean()) / (xc @ xc))
    assert abs(slope - ref) <= 1e-10


def test_rate_result_validation():
    good = dict(
        sample_sizes=np.array([10, 20]),
        statistic_medians=np.array([1.0, 0.7]),
        fitted_slope=-0.5,
        slope_ci=(-0.6, -0.4),
        statistics=np.ones((3, 2)),
    )
    RateCheckResult(**good)
    with pytest.raises(InvalidInputError):
        RateCheckResult(**{**good, "sample_sizes": np.array([20, 10])})
    with pytest.raises(InvalidInputError):
        RateCheckResult(**{**good, "statistic_medians": np.array([1.0, 0.0])})
    with pytest.raises(InvalidInputError):
        RateCheckResult(**{**good, "slope_ci": (-0.4, -0.6)})


def test_conditional_sup_gradient_matches_per_node():
    rng = np.random.default_rng(5)
    p = 5
    a = rng.normal(size=(p, p)) * (rng.random((p, p)) < 0.5)
    th = 0.5 * (a + a.T)
    np.fill_diagonal(th, 1.0)
    model = ModelSpec(HEAT, ParamMatrix(th), domain=(-4.0, 4.0), base_coeff=0.5)
    data = gibbs_generate(model, 30, GibbsConfig(n_grid=201, burn_in=20, thin=1), seed=3)
    fast = conditional_sup_gradient(model, data, n_grid=201)
    slow = max(
        float(np.abs(conditional_gradient(model, data, s, n_grid=201)).max()) for s in range(p)
    )
    assert fast == pytest.approx(slow, abs=1e-10)


def test_joint_sup_gradient_matches_exact():
    model = ModelSpec(HEAT, make_chain(3).theta, domain=(-4.0, 4.0), base_coeff=0.5)
    data = gibbs_generate(model, 25, GibbsConfig(n_grid=201, burn_in=20, thin=1), seed=8)
    expect = joint_pair_expectations(model, 121)[1]
    fast = joint_sup_gradient(model, data, expect)
    slow = float(np.abs(joint_gradient_exact(model, data, n_grid=121)).max())
    assert fast == pytest.approx(slow, abs=1e-12)


def test_concentration_statistic_at_independence():
    # theta = 0 and c = 0: the gradient reduces to the deviation of the
    # empirical kernel means from their uniform-law quadrature values
    model = ModelSpec(HEAT, ParamMatrix(np.zeros((2, 2))), domain=(-2.0, 2.0), base_coeff=0.0)
    rng = np.random.default_rng(17)
    from kernelgm.kernels import Dataset

    data = Dataset(rng.uniform(-2, 2, size=(60, 2)))
    grid, w = trapezoid_grid((-2.0, 2.0), 201)
    K = np.exp(-((grid[:, None] - grid[None, :]) ** 2))
    quad_mean = float(w @ K @ w) / float(w.sum()) ** 2
    x = data.scalars()
    emp = np.exp(-((x[:, 0] - x[:, 1]) ** 2)).mean()
    expect = joint_pair_expectations(model, 201)[1]
    stat = joint_sup_gradient(model, data, expect)
    assert expect[0, 1] == pytest.approx(quad_mean, abs=1e-12)
    assert stat == pytest.approx(abs(emp - quad_mean), abs=1e-12)


def test_gradient_concentration_check_smoke():
    model = ModelSpec(HEAT, make_chain(2).theta, domain=(-4.0, 4.0), base_coeff=0.5)
    gibbs = GibbsConfig(n_grid=201, burn_in=40, thin=2)
    res = gradient_concentration_check(
        model, sample_sizes=(40, 80, 160), replications=6, seed=11, quad_grid=61, gibbs=gibbs
    )
    assert res.meta["statistic"] == "joint_sup_gradient"
    assert res.statistics.shape == (6, 3)
    assert np.all(res.statistic_medians > 0)
    assert np.isfinite(res.fitted_slope)
    again = gradient_concentration_check(
        model, sample_sizes=(40, 80, 160), replications=6, seed=11, quad_grid=61, gibbs=gibbs
    )
    np.testing.assert_array_equal(res.statistics, again.statistics)
    assert res.fitted_slope == again.fitted_slope and res.slope_ci == again.slope_ci


def test_gradient_concentration_conditional_route():
    model = ModelSpec(HEAT, make_chain(6).theta, domain=(-4.0, 4.0), base_coeff=0.5)
    gibbs = GibbsConfig(n_grid=201, burn_in=30, thin=1)
    res = gradient_concentration_check(
        model, sample_sizes=(30, 60), replications=3, seed=2, quad_grid=121, gibbs=gibbs
    )
    assert res.meta["statistic"] == "conditional_sup_gradient"
    assert np.all(res.statistics > 0)


def test_error_scaling_zero_edge_truth_hits_floor():
    model = ModelSpec(HEAT, ParamMatrix(np.eye(4)), domain=(-4.0, 4.0), base_coeff=0.5)
    gibbs = GibbsConfig(n_grid=201, burn_in=30, thin=1)
    cfg = SolveConfig(grad_tol=1e-5, max_iter=200, accelerate=True)
    res = error_scaling_check(
        model,
        estimator="nodewise_mle",
        sample_sizes=(60, 120),
        replications=2,
        lam_scale=5.0,
        seed=4,
        config=cfg,
        quad_grid=61,
        gibbs=gibbs,
    )
    # a big penalty keeps every fit at zero, the truth: error at the floor
    assert np.all(res.statistic_medians <= 10 * cfg.grad_tol)
    assert res.meta["n_unconverged"] == 0


def test_error_scaling_validation():
    model = ModelSpec(HEAT, make_chain(6).theta, base_coeff=0.5)
    with pytest.raises(InvalidInputError):
        error_scaling_check(model, estimator="ridge")
    with pytest.raises(InvalidInputError):
        error_scaling_check(model, estimator="joint_mle")  # p = 6 too large


def test_bootstrap_ci_brackets_slope_on_synthetic_decay():
    # synthetic statistics with a known -1/2 law and mild noise
    rng = np.random.default_rng(123)
    sizes = np.array([100, 200, 400, 800])
    stats = np.exp(rng.normal(0, 0.05, size=(40, 4))) * sizes[None, :] ** -0.5
    from kernelgm.evaluation import _rate_result

    res = _rate_result(sizes, stats, {}, 200, rng)
    assert res.fitted_slope == pytest.approx(-0.5, abs=0.1)
    lo, hi = res.slope_ci
    assert lo <= res.fitted_slope <= hi
    assert hi - lo < 0.3
