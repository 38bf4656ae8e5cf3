import numpy as np
import pytest
from scipy import integrate

from kernelgm import (
    Dataset,
    GridPmf,
    InvalidInputError,
    KernelSpec,
    ModelSpec,
    ParamMatrix,
    UnsupportedOperationError,
    conditional_gradient,
    conditional_log_partition,
    conditional_nll,
    conditional_pmf,
    joint_gradient_exact,
    joint_log_partition_exact,
    joint_nll,
    joint_pair_expectations,
    trapezoid_grid,
    unnormalized_log_joint,
)

HEAT = KernelSpec("heat", sigma=1.0)


def chain_theta(p, coupling=1.0, diag=1.0):
    th = np.eye(p) * diag
    for s in range(p - 1):
        th[s, s + 1] = th[s + 1, s] = coupling
    return ParamMatrix(th)


def test_chain_energy_known_value():
    # three nodes, edges (0,1) and (1,2), heat kernel, c = 1/2:
    # node terms are -1/2 each, pair terms exp(-1) each at x = (0, 1, 0)
    model = ModelSpec(HEAT, chain_theta(3), base_coeff=0.5)
    val = unnormalized_log_joint(model, np.array([0.0, 1.0, 0.0]))
    assert val == pytest.approx(-1.5 + 2 * np.exp(-1.0), abs=1e-12)


def test_energy_batching_consistent():
    model = ModelSpec(HEAT, chain_theta(3, coupling=-0.7), base_coeff=0.5)
    rng = np.random.default_rng(0)
    xs = rng.uniform(-2, 2, size=(5, 3))
    batch = unnormalized_log_joint(model, xs)
    singles = [unnormalized_log_joint(model, x) for x in xs]
    np.testing.assert_allclose(batch, singles, atol=1e-13)


def test_joint_log_partition_against_adaptive_quadrature():
    theta = ParamMatrix(np.array([[1.0, 0.8], [0.8, 1.0]]))
    model = ModelSpec(HEAT, theta, domain=(-3.0, 3.0), base_coeff=0.5)

    def dens(x, y):
        return np.exp(unnormalized_log_joint(model, np.array([x, y])))

    oracle, err = integrate.dblquad(dens, -3, 3, -3, 3, epsabs=1e-10)
    got = joint_log_partition_exact(model, n_grid=801)
    assert got == pytest.approx(np.log(oracle), abs=1e-6)


def test_joint_log_partition_gaussian_closed_form():
    # linear kernel, c = 1/2: energy = -(x1^2 + x2^2)/2 + rho x1 x2, a
    # Gaussian with precision [[1, -rho], [-rho, 1]]; the wide domain makes
    # truncation negligible
    rho = 0.3
    theta = ParamMatrix(np.array([[1.0, rho], [rho, 1.0]]))
    model = ModelSpec(KernelSpec("linear"), theta, domain=(-10.0, 10.0), base_coeff=0.5)
    expect = np.log(2 * np.pi) - 0.5 * np.log(1 - rho**2)
    got = joint_log_partition_exact(model, n_grid=1201)
    assert got == pytest.approx(expect, abs=1e-7)


def test_independent_heat_model_is_uniform():
    # heat kernel has phi(x, x) = 1, so with no edges the density is flat
    theta = ParamMatrix(np.eye(2))
    model = ModelSpec(HEAT, theta, domain=(-10.0, 10.0), base_coeff=0.5)
    log_a, expect = joint_pair_expectations(model, n_grid=401)
    assert log_a == pytest.approx(-1.0 + np.log(400.0), abs=1e-12)

    grid = np.linspace(-10, 10, 2001)
    w = np.full(grid.size, grid[1] - grid[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    w /= 20.0
    vals = np.exp(-((grid[:, None] - grid[None, :]) ** 2))
    oracle = float(w @ vals @ w)
    assert expect[0, 1] == pytest.approx(oracle, rel=1e-4)
    assert expect[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_joint_expectations_linear_independent():
    # independent truncated standard normals: E[X1 X2] = 0, E[X^2] ~ 1
    theta = ParamMatrix(np.eye(2))
    model = ModelSpec(KernelSpec("linear"), theta, domain=(-8.0, 8.0), base_coeff=0.5)
    _, expect = joint_pair_expectations(model, n_grid=801)
    assert expect[0, 1] == pytest.approx(0.0, abs=1e-10)
    assert expect[0, 0] == pytest.approx(1.0, abs=1e-5)


def test_conditional_log_partition_against_quad():
    model = ModelSpec(HEAT, chain_theta(3, coupling=0.9), domain=(-4.0, 4.0), base_coeff=0.5)
    conf = np.array([[0.3, -1.2, 2.0]])

    def integrand(u):
        # node 1 given nodes 0 and 2
        en = -0.5 + 0.9 * np.exp(-((u - 0.3) ** 2)) + 0.9 * np.exp(-((u - 2.0) ** 2))
        return np.exp(en)

    oracle, _ = integrate.quad(integrand, -4, 4, epsabs=1e-12)
    got = conditional_log_partition(model, 1, conf, n_grid=2001)
    assert got.shape == (1,)
    assert got[0] == pytest.approx(np.log(oracle), abs=1e-8)


def test_conditional_pmf_is_normalized_density():
    model = ModelSpec(HEAT, chain_theta(4, coupling=-0.6), base_coeff=0.5)
    conf = np.array([0.0, 0.5, -0.5, 1.0])
    pmf = conditional_pmf(model, 2, conf, n_grid=501)
    assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(pmf.probs >= 0)
    # mass ratio between two interior grid points equals the density ratio
    i, j = 120, 380
    en = lambda u: -0.5 - 0.6 * np.exp(-((u - 0.5) ** 2)) - 0.6 * np.exp(-((u - 1.0) ** 2))
    lhs = np.log(pmf.probs[i]) - np.log(pmf.probs[j])
    rhs = en(pmf.grid[i]) - en(pmf.grid[j])
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_joint_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    th = np.eye(3)
    th[0, 1] = th[1, 0] = 0.6
    th[1, 2] = th[2, 1] = -0.4
    model = ModelSpec(HEAT, ParamMatrix(th), domain=(-5.0, 5.0), base_coeff=0.5)
    data = Dataset(rng.uniform(-3, 3, size=(12, 3)))
    n_grid = 201
    grad = joint_gradient_exact(model, data, n_grid=n_grid)
    eps = 1e-5
    for s, t in [(0, 1), (0, 2), (1, 2)]:
        thp = th.copy()
        thp[s, t] += eps
        thp[t, s] += eps
        thm = th.copy()
        thm[s, t] -= eps
        thm[t, s] -= eps
        up = joint_nll(ModelSpec(HEAT, ParamMatrix(thp), domain=(-5.0, 5.0)), data, n_grid)
        lo = joint_nll(ModelSpec(HEAT, ParamMatrix(thm), domain=(-5.0, 5.0)), data, n_grid)
        fd = (up - lo) / (2 * eps)
        assert grad[s, t] == pytest.approx(fd, abs=5e-9)


def test_joint_gradient_diagonal_matches_finite_differences():
    # linear kernel so the node potential actually varies
    rng = np.random.default_rng(4)
    th = np.eye(2)
    th[0, 1] = th[1, 0] = 0.3
    model = ModelSpec(KernelSpec("linear"), ParamMatrix(th), domain=(-6.0, 6.0), base_coeff=0.5)
    data = Dataset(rng.normal(size=(9, 2)))
    n_grid = 401
    grad = joint_gradient_exact(model, data, n_grid=n_grid)
    eps = 1e-5
    thp = th.copy()
    thp[0, 0] += eps
    thm = th.copy()
    thm[0, 0] -= eps
    up = joint_nll(ModelSpec(KernelSpec("linear"), ParamMatrix(thp), domain=(-6.0, 6.0)), data, n_grid)
    lo = joint_nll(ModelSpec(KernelSpec("linear"), ParamMatrix(thm), domain=(-6.0, 6.0)), data, n_grid)
    assert grad[0, 0] == pytest.approx((up - lo) / (2 * eps), abs=5e-9)


def test_conditional_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    p = 6
    th = np.eye(p)
    for s in range(p - 1):
        th[s, s + 1] = th[s + 1, s] = rng.uniform(-0.8, 0.8)
    model = ModelSpec(HEAT, ParamMatrix(th), domain=(-5.0, 5.0), base_coeff=0.5)
    data = Dataset(rng.uniform(-3, 3, size=(8, p)))
    node = 2
    n_grid = 301
    grad = conditional_gradient(model, data, node, n_grid=n_grid)
    eps = 1e-5
    for t in range(p):
        thp = th.copy()
        thm = th.copy()
        if t == node:
            thp[node, node] += eps
            thm[node, node] -= eps
        else:
            thp[node, t] += eps
            thp[t, node] += eps
            thm[node, t] -= eps
            thm[t, node] -= eps
        up = conditional_nll(
            ModelSpec(HEAT, ParamMatrix(thp), domain=(-5.0, 5.0)), data, node, n_grid
        )
        lo = conditional_nll(
            ModelSpec(HEAT, ParamMatrix(thm), domain=(-5.0, 5.0)), data, node, n_grid
        )
        assert grad[t] == pytest.approx((up - lo) / (2 * eps), abs=5e-9)


def test_lifted_model_energy():
    spec = KernelSpec("polynomial", beta=0.5, alpha=2)
    th = np.eye(2)
    th[0, 1] = th[1, 0] = 1.0
    model = ModelSpec(spec, ParamMatrix(th), base_coeff=0.5, lift_dim=3)
    u = np.array([0.4, -1.1])
    v = model.state_variates(u)  # (2, 3) unit vectors
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)
    got = unnormalized_log_joint(model, v)
    expect = (
        -0.5 * ((0.5 + 1.0) ** 2) * 2  # phi(x, x) = (beta + 1)^alpha on unit vectors
        + (0.5 + float(v[0] @ v[1])) ** 2
    )
    assert got == pytest.approx(expect, abs=1e-12)


def test_dimension_guard():
    th = np.eye(5)
    model = ModelSpec(HEAT, ParamMatrix(th))
    with pytest.raises(UnsupportedOperationError):
        joint_log_partition_exact(model, n_grid=11)


def test_param_matrix_validation():
    with pytest.raises(InvalidInputError):
        ParamMatrix(np.array([[0.0, 1.0], [0.5, 0.0]]))
    with pytest.raises(InvalidInputError):
        ParamMatrix(np.zeros((2, 3)))
    with pytest.raises(InvalidInputError):
        ParamMatrix(np.array([[np.inf, 0.0], [0.0, 0.0]]))
    pm = ParamMatrix(np.array([[1.0, 0.5], [0.5, 2.0]]))
    assert pm.p == 2
    assert pm.offdiag_l1() == pytest.approx(1.0)
    assert pm.support().sum() == 2
    assert pm.with_diagonal(1.0).theta[1, 1] == 1.0


def test_grid_pmf_validation():
    g = np.linspace(-1, 1, 5)
    with pytest.raises(InvalidInputError):
        GridPmf(grid=g, probs=np.array([0.5, 0.5, 0.0, 0.0, 0.1]), log_norm=0.0)
    with pytest.raises(InvalidInputError):
        GridPmf(grid=g[::-1], probs=np.full(5, 0.2), log_norm=0.0)
    ok = GridPmf(grid=g, probs=np.full(5, 0.2), log_norm=0.0)
    assert ok.probs.sum() == pytest.approx(1.0)


def test_trapezoid_grid_weights():
    g, w = trapezoid_grid((-1.0, 1.0), 5)
    np.testing.assert_allclose(w, [0.25, 0.5, 0.5, 0.5, 0.25])
    assert w.sum() == pytest.approx(2.0)
    with pytest.raises(InvalidInputError):
        trapezoid_grid((-1.0, 1.0), 1)


def test_data_model_mismatch():
    model = ModelSpec(HEAT, chain_theta(3))
    with pytest.raises(InvalidInputError):
        joint_nll(model, Dataset(np.zeros((4, 2))), n_grid=11)
    with pytest.raises(InvalidInputError):
        joint_nll(model, Dataset(np.zeros((4, 3, 2))), n_grid=11)
