import itertools

import numpy as np
import pytest

from kernelgm import (
    Dataset,
    GramAverage,
    InvalidInputError,
    KernelSpec,
    ModelSpec,
    ParamMatrix,
    average_gram,
    conditional_gradient,
    joint_gradient_exact,
    trapezoid_grid,
)
from kernelgm.estimators import (
    FitResult,
    SolveConfig,
    fit_joint_logdet,
    fit_joint_mle_exact,
    fit_nodewise_lasso,
    fit_nodewise_mle_exact,
    l1_kkt_residual,
    lambda_path,
    nodewise_matrix,
    relaxed_nll,
    soft_threshold,
    symmetrize_min_magnitude,
)

HEAT = KernelSpec("heat", sigma=1.0)


def random_gram(p, n, seed, spread=3.0):
    rng = np.random.default_rng(seed)
    data = Dataset(rng.uniform(-spread, spread, size=(n, p)))
    return average_gram(HEAT, data)


def assert_contract(fr: FitResult):
    # the two published solver guarantees: a non-increasing objective
    # trace and a stationarity residual below tolerance on convergence
    diffs = np.diff(fr.objective_trace)
    assert np.all(diffs <= 1e-10), f"trace increased by {diffs.max():.3e}"
    assert fr.converged


def lasso_enumerate(sub, col, lam):
    """Global minimizer of (1/4) w'Sub w - col'w + lam |w|_1 by trying
    every sign pattern and keeping the one whose KKT system verifies."""
    k = col.size
    for signs in itertools.product([-1, 0, 1], repeat=k):
        s = np.array(signs, dtype=float)
        act = np.flatnonzero(s != 0)
        w = np.zeros(k)
        if act.size:
            try:
                wa = np.linalg.solve(0.5 * sub[np.ix_(act, act)], col[act] - lam * s[act])
            except np.linalg.LinAlgError:
                continue
            if np.any(np.sign(wa) != s[act]):
                continue
            w[act] = wa
        g = 0.5 * (sub @ w) - col
        zero = np.flatnonzero(s == 0)
        if np.any(np.abs(g[zero]) > lam + 1e-11):
            continue
        return w
    return None


def test_nodewise_lasso_matches_enumeration():
    cfg = SolveConfig(grad_tol=1e-10, max_iter=20000)
    for seed in range(8):
        gram = random_gram(4, 25, seed)
        lam = 0.05 + 0.02 * seed
        fr = fit_nodewise_lasso(gram, node=0, lam=lam, config=cfg)
        assert_contract(fr)
        sub = gram.matrix[1:, 1:]
        col = gram.matrix[1:, 0]
        oracle = lasso_enumerate(sub, col, lam)
        assert oracle is not None
        np.testing.assert_allclose(fr.solution, oracle, atol=1e-8)


def test_nodewise_lasso_zero_above_lambda_max():
    gram = random_gram(5, 40, seed=3)
    lam_max = lambda_path(gram.matrix, n_points=1)[0]
    fr = fit_nodewise_lasso(gram, node=2, lam=lam_max * 1.01)
    assert fr.converged and fr.n_iter == 0
    np.testing.assert_array_equal(fr.solution, 0.0)


def test_nodewise_lasso_kkt_recomputed():
    gram = random_gram(6, 30, seed=9)
    fr = fit_nodewise_lasso(gram, node=1, lam=0.03, config=SolveConfig(grad_tol=1e-8))
    assert_contract(fr)
    others = [t for t in range(6) if t != 1]
    g = 0.5 * gram.matrix[np.ix_(others, others)] @ fr.solution - gram.matrix[others, 1]
    res = l1_kkt_residual(g, fr.solution, 0.03, np.ones(5, dtype=bool))
    assert res <= 1e-8


def test_logdet_identity_gram_closed_form():
    # Phi = I: off-diagonals stay zero, diagonal solves -(m/2)/x + 1 = 0
    for m in (1.0, 2.0, 5.0):
        gram = GramAverage(np.eye(4), n_used=10)
        fr = fit_joint_logdet(gram, lam=0.1, m=m, config=SolveConfig(grad_tol=1e-10))
        assert_contract(fr)
        np.testing.assert_allclose(fr.solution, (m / 2.0) * np.eye(4), atol=1e-9)


def test_logdet_m_scaling_identity():
    # minimizers for different m differ by the factor m (support fixed)
    gram = random_gram(6, 60, seed=1)
    cfg = SolveConfig(grad_tol=1e-9, max_iter=5000)
    lam = 0.02
    f1 = fit_joint_logdet(gram, lam=lam, m=1.0, config=cfg)
    f5 = fit_joint_logdet(gram, lam=lam, m=5.0, config=cfg)
    assert_contract(f1)
    assert_contract(f5)
    np.testing.assert_allclose(f5.solution, 5.0 * f1.solution, atol=5e-7)


def test_logdet_rescaled_covariance_kkt():
    # Theta-hat solves the covariance-form program with covariance
    # (2/m) Phi and penalty (2/m) lam: check that stationarity directly
    gram = random_gram(5, 50, seed=4)
    m, lam = 5.0, 0.03
    fr = fit_joint_logdet(gram, lam=lam, m=m, config=SolveConfig(grad_tol=1e-9))
    assert_contract(fr)
    theta = fr.solution
    g = -np.linalg.inv(theta) + (2.0 / m) * gram.matrix
    mask = ~np.eye(5, dtype=bool)
    res = l1_kkt_residual(g, theta, (2.0 / m) * lam, mask)
    assert res <= (2.0 / m) * 1e-9 + 1e-12


def test_logdet_pd_floor_and_trace():
    gram = random_gram(8, 15, seed=7)
    fr = fit_joint_logdet(gram, lam=0.01, m=1.0, config=SolveConfig(grad_tol=1e-7))
    assert_contract(fr)
    assert np.linalg.eigvalsh(fr.solution)[0] >= 1e-6
    # independently recomputed KKT for the native objective
    g = -(1.0 / 2.0) * np.linalg.inv(fr.solution) + gram.matrix
    res = l1_kkt_residual(g, fr.solution, 0.01, ~np.eye(8, dtype=bool))
    assert res <= 1e-7 + 1e-12


def test_logdet_accelerated_matches_plain():
    gram = random_gram(7, 40, seed=12)
    cfg_a = SolveConfig(grad_tol=1e-9, accelerate=True, max_iter=5000)
    cfg_p = SolveConfig(grad_tol=1e-9, max_iter=5000)
    fa = fit_joint_logdet(gram, lam=0.02, m=2.0, config=cfg_a)
    fp = fit_joint_logdet(gram, lam=0.02, m=2.0, config=cfg_p)
    assert_contract(fa)
    assert_contract(fp)
    np.testing.assert_allclose(fa.solution, fp.solution, atol=1e-6)


def test_joint_mle_grid_replica_has_zero_gradient():
    # duplicate interior grid points so the empirical mean over the
    # dataset equals the trapezoid mean exactly; at theta = 0 with no
    # node potential the model is uniform and the gradient vanishes
    G = 11
    grid, w = trapezoid_grid((-2.0, 2.0), G)
    reps = np.where((np.arange(G) == 0) | (np.arange(G) == G - 1), 1, 2)
    xs = []
    for i in range(G):
        for j in range(G):
            xs.extend([[grid[i], grid[j]]] * (reps[i] * reps[j]))
    data = Dataset(np.array(xs))
    model = ModelSpec(HEAT, ParamMatrix(np.eye(2)), domain=(-2.0, 2.0), base_coeff=0.0)
    g = joint_gradient_exact(model, data, n_grid=G)
    np.testing.assert_allclose(g, 0.0, atol=1e-12)
    fr = fit_joint_mle_exact(
        HEAT, data, lam=0.05, domain=(-2.0, 2.0), base_coeff=0.0, n_grid=G
    )
    assert fr.converged and fr.n_iter == 0
    np.testing.assert_array_equal(fr.solution, 0.0)


def test_joint_mle_kkt_on_sampled_data():
    rng = np.random.default_rng(21)
    data = Dataset(rng.uniform(-3, 3, size=(40, 3)))
    cfg = SolveConfig(grad_tol=1e-7, max_iter=3000)
    fr = fit_joint_mle_exact(
        HEAT, data, lam=0.02, config=cfg, domain=(-3.0, 3.0), base_coeff=1.0, n_grid=61
    )
    assert_contract(fr)
    model = ModelSpec(HEAT, fr.theta, domain=(-3.0, 3.0), base_coeff=1.0)
    iu = np.triu_indices(3, k=1)
    g = joint_gradient_exact(model, data, n_grid=61)[iu]
    res = l1_kkt_residual(g, fr.solution, 0.02, np.ones(3, dtype=bool))
    assert res <= 1e-7 + 1e-12


def test_nodewise_mle_kkt_on_sampled_data():
    rng = np.random.default_rng(8)
    p = 5
    data = Dataset(rng.uniform(-3, 3, size=(30, p)))
    cfg = SolveConfig(grad_tol=1e-7, max_iter=3000)
    fr = fit_nodewise_mle_exact(
        HEAT, data, node=2, lam=0.02, config=cfg, domain=(-3.0, 3.0), base_coeff=1.0, n_grid=201
    )
    assert_contract(fr)
    th = np.eye(p)
    others = [t for t in range(p) if t != 2]
    th[2, others] = fr.solution
    th[others, 2] = fr.solution
    model = ModelSpec(HEAT, ParamMatrix(th), domain=(-3.0, 3.0), base_coeff=1.0)
    g = conditional_gradient(model, data, 2, n_grid=201)[others]
    res = l1_kkt_residual(g, fr.solution, 0.02, np.ones(p - 1, dtype=bool))
    assert res <= 1e-7 + 1e-12


def test_nodewise_mle_lifted_kernel_kkt():
    # polynomial kernel with unit-norm feature lift: the cached kernel
    # tables must agree with the density-layer gradient
    spec = KernelSpec("polynomial", beta=1.0, alpha=2)
    rng = np.random.default_rng(3)
    raw = rng.uniform(-3, 3, size=(25, 4))
    model_dummy = ModelSpec(spec, ParamMatrix(np.eye(4)), domain=(-3.0, 3.0), lift_dim=3)
    data = Dataset(model_dummy.state_variates(raw))
    cfg = SolveConfig(grad_tol=1e-7, max_iter=3000)
    fr = fit_nodewise_mle_exact(
        spec, data, node=1, lam=0.05, config=cfg, domain=(-3.0, 3.0), base_coeff=1.0, n_grid=201
    )
    assert_contract(fr)
    th = np.eye(4)
    others = [t for t in range(4) if t != 1]
    th[1, others] = fr.solution
    th[others, 1] = fr.solution
    model = ModelSpec(spec, ParamMatrix(th), domain=(-3.0, 3.0), base_coeff=1.0, lift_dim=3)
    g = conditional_gradient(model, data, 1, n_grid=201)[others]
    res = l1_kkt_residual(g, fr.solution, 0.05, np.ones(3, dtype=bool))
    assert res <= 1e-7 + 1e-10


def test_symmetrize_min_magnitude():
    rows = np.array(
        [
            [1.0, 0.5, -0.2],
            [0.1, 1.0, 0.3],
            [0.8, -0.3, 1.0],
        ]
    )
    out = symmetrize_min_magnitude(rows).theta
    assert out[0, 1] == 0.1 and out[1, 0] == 0.1  # smaller magnitude wins
    assert out[0, 2] == -0.2 and out[2, 0] == -0.2
    # |0.3| ties |-0.3|: the (s < t) entry is kept
    assert out[1, 2] == 0.3 and out[2, 1] == 0.3
    np.testing.assert_array_equal(np.diag(out), 1.0)


def test_nodewise_matrix_combines_fits():
    gram = random_gram(5, 40, seed=6)
    combo, fits = nodewise_matrix(gram, lam=0.02, config=SolveConfig(grad_tol=1e-8))
    assert len(fits) == 5
    assert all(f.converged for f in fits)
    np.testing.assert_array_equal(np.diag(combo.theta), 1.0)


def test_lambda_path_properties():
    mat = np.array([[1.0, 0.4, -0.6], [0.4, 1.0, 0.2], [-0.6, 0.2, 1.0]])
    path = lambda_path(mat, n_points=20, min_ratio=0.01)
    assert path.size == 20
    assert path[0] == pytest.approx(0.6)
    assert path[-1] == pytest.approx(0.006)
    assert np.all(np.diff(path) < 0)


def test_l1_kkt_residual_cases():
    pen = np.array([True, True, False])
    g = np.array([0.5, -0.4, 0.7])
    x = np.array([0.0, 0.2, 1.0])
    # zero coord: (0.5 - 0.4)+ = 0.1; active: |-0.4 + 0.4| = 0;
    # unpenalized: |0.7|
    assert l1_kkt_residual(g, x, 0.4, pen) == pytest.approx(0.7)
    assert l1_kkt_residual(g[:2], x[:2], 0.4, pen[:2]) == pytest.approx(0.1)


def test_relaxed_nll():
    gram = GramAverage(np.eye(3), n_used=5)
    assert relaxed_nll(np.eye(3), gram, m=2.0) == pytest.approx(3.0)
    assert relaxed_nll(-np.eye(3), gram, m=2.0) == np.inf
    assert relaxed_nll(ParamMatrix(2 * np.eye(3)), gram, m=2.0) == pytest.approx(
        6.0 - np.log(8.0)
    )


def test_soft_threshold():
    np.testing.assert_allclose(
        soft_threshold(np.array([-1.0, 0.2, 0.7]), 0.5), [-0.5, 0.0, 0.2]
    )


def test_solve_config_validation():
    with pytest.raises(InvalidInputError):
        SolveConfig(max_iter=0)
    with pytest.raises(InvalidInputError):
        SolveConfig(grad_tol=0.0)
    with pytest.raises(InvalidInputError):
        SolveConfig(step_shrink=1.0)
    with pytest.raises(InvalidInputError):
        fit_joint_logdet(GramAverage(np.eye(2), n_used=1), lam=-0.1)
