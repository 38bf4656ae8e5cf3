"""Model parameterization, energies, and quadrature-based densities.

A model on p nodes couples node variates through a symmetric parameter
matrix theta and a kernel phi.  The joint density over configurations
(x_1, ..., x_p) on a bounded scalar state space is

    P(x) = exp( sum_s theta_ss * f(x_s)
              + sum_{s<t} theta_st * phi(x_s, x_t) - A(theta) )

with node potential f(x) = -c * phi(x, x) (c = ``base_coeff``) and A the
log partition function.  Each unordered pair contributes once.  States
are scalars; a model may lift states to unit-norm feature vectors before
kernel evaluation (``lift_dim`` > 1), which is how vector variates enter.

Normalization is by trapezoid quadrature: exact tensor grids for the
joint quantities (guarded to p <= 4) and univariate grids for the
node-conditional quantities, which scale to any p.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError, UnsupportedOperationError
from .kernels import Dataset, KernelSpec, eval_kernel, kernel_cross_matrix, unit_feature_lift

SYMMETRY_TOL = 1e-10
JOINT_DIM_GUARD = 4

# Chunk budget (floats) for tensor-grid sweeps; keeps peak memory flat.
_CHUNK_BUDGET = 2**24


@dataclass(frozen=True)
class ParamMatrix:
    """Symmetric p x p parameter matrix; diagonal holds node coefficients."""

    theta: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.theta, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidInputError(f"theta must be square, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise InvalidInputError("theta needs at least two nodes")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("theta must be finite")
        asym = float(np.max(np.abs(arr - arr.T)))
        if asym > SYMMETRY_TOL:
            raise InvalidInputError(f"theta asymmetric: max |A - A^T| = {asym:.3e}")
        object.__setattr__(self, "theta", 0.5 * (arr + arr.T))

    @property
    def p(self) -> int:
        return self.theta.shape[0]

    def support(self, threshold: float = 1e-3) -> np.ndarray:
        """Boolean off-diagonal support at |theta_st| > threshold."""
        mask = np.abs(self.theta) > threshold
        np.fill_diagonal(mask, False)
        return mask

    def offdiag_l1(self) -> float:
        off = self.theta.copy()
        np.fill_diagonal(off, 0.0)
        return float(np.abs(off).sum())

    def with_diagonal(self, value: float) -> "ParamMatrix":
        out = self.theta.copy()
        np.fill_diagonal(out, value)
        return ParamMatrix(out)


@dataclass(frozen=True)
class ModelSpec:
    """Kernel, parameters, state domain, and node-potential coefficient."""

    kernel: KernelSpec
    theta: ParamMatrix
    domain: tuple[float, float] = (-10.0, 10.0)
    base_coeff: float = 0.5
    lift_dim: int = 1

    def __post_init__(self) -> None:
        lo, hi = self.domain
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise InvalidInputError(f"domain must be a finite interval, got {self.domain}")
        if self.lift_dim < 1:
            raise InvalidInputError(f"lift_dim must be >= 1, got {self.lift_dim}")
        if self.base_coeff < 0:
            raise InvalidInputError(f"base_coeff must be >= 0, got {self.base_coeff}")

    @property
    def p(self) -> int:
        return self.theta.p

    def state_variates(self, u: np.ndarray) -> np.ndarray:
        """Map scalar states (...,) to variates (..., d)."""
        arr = np.asarray(u, dtype=float)
        if self.lift_dim == 1:
            return arr[..., None]
        return unit_feature_lift(arr, dim=self.lift_dim)


@dataclass(frozen=True)
class GridPmf:
    """Discretized univariate density: grid points and normalized cell masses."""

    grid: np.ndarray
    probs: np.ndarray
    log_norm: float

    def __post_init__(self) -> None:
        g = np.asarray(self.grid, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if g.ndim != 1 or g.shape != p.shape or g.size < 2:
            raise InvalidInputError("grid and probs must be matching 1-d arrays, size >= 2")
        if np.any(np.diff(g) <= 0):
            raise InvalidInputError("grid must be strictly increasing")
        if np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-8):
            raise InvalidInputError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "probs", p / p.sum())


def trapezoid_grid(domain: tuple[float, float], n_grid: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform grid on the domain with trapezoid quadrature weights."""
    if n_grid < 2:
        raise InvalidInputError(f"n_grid must be >= 2, got {n_grid}")
    lo, hi = domain
    grid = np.linspace(lo, hi, n_grid)
    w = np.full(n_grid, (hi - lo) / (n_grid - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return grid, w


def node_potential(model: ModelSpec, variates: np.ndarray) -> np.ndarray:
    """f(x) = -c * phi(x, x) evaluated on variates with last axis = features."""
    return -model.base_coeff * np.asarray(eval_kernel(model.kernel, variates, variates))


def unnormalized_log_joint(model: ModelSpec, x) -> np.ndarray | float:
    """Energy of configurations given as variates.

    x is (p,), (p, d), or batched with one leading axis: (m, p) / (m, p, d).
    Scalar inputs are treated as d = 1 variates (valid when lift_dim == 1;
    callers with lifted models must pass the lifted vectors).
    """
    v = np.asarray(x, dtype=float)
    single = False
    if v.ndim == 1:  # (p,)
        v = v[None, :, None]
        single = True
    elif v.ndim == 2:
        if model.lift_dim > 1 and v.shape[1] == model.lift_dim and v.shape[0] == model.p:
            v = v[None, :, :]  # (p, d)
            single = True
        else:
            v = v[:, :, None]  # (m, p) scalars
    elif v.ndim != 3:
        raise InvalidInputError(f"cannot interpret configuration of shape {np.shape(x)}")
    if v.shape[1] != model.p:
        raise InvalidInputError(f"expected {model.p} nodes, got {v.shape[1]}")

    th = model.theta.theta
    diag_phi = np.asarray(eval_kernel(model.kernel, v, v))  # (m, p)
    node = -model.base_coeff * (diag_phi @ np.diagonal(th))
    # pair energies once per unordered pair: half the full off-diagonal sum
    gram = _batch_gram(model.kernel, v)  # (m, p, p)
    off = th.copy()
    np.fill_diagonal(off, 0.0)
    pair = 0.5 * np.einsum("mst,st->m", gram, off)
    out = node + pair
    return float(out[0]) if single else out


def _batch_gram(spec: KernelSpec, vals: np.ndarray) -> np.ndarray:
    """Per-sample Gram matrices for (m, p, d) variates -> (m, p, p)."""
    dots = np.einsum("isa,ita->ist", vals, vals)
    if spec.family == "linear":
        return dots
    if spec.family == "heat":
        sq = np.einsum("isa,isa->is", vals, vals)
        d2 = sq[:, :, None] + sq[:, None, :] - 2.0 * dots
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-d2 / spec.sigma**2)
    return (spec.beta + dots) ** spec.alpha


def _axis_shape(p: int, axis: int, size: int) -> tuple[int, ...]:
    shape = [1] * p
    shape[axis] = size
    return tuple(shape)


def _joint_grid_pieces(model: ModelSpec, n_grid: int):
    grid, w = trapezoid_grid(model.domain, n_grid)
    gv = model.state_variates(grid)  # (G, d)
    K = kernel_cross_matrix(model.kernel, gv, gv)  # (G, G)
    f = -model.base_coeff * np.diag(K)  # f(grid)
    logw = np.log(w)
    return grid, gv, K, f, logw


def _joint_sweep(model: ModelSpec, n_grid: int, want_expectations: bool):
    """Chunked tensor-grid sweep over all p-dim configurations.

    First pass accumulates the log partition; optional second pass
    accumulates E[phi(X_s, X_t)] for every pair (diagonal included).
    The chunk runs along axis 0 so memory stays near _CHUNK_BUDGET floats.
    """
    p = model.p
    if p > JOINT_DIM_GUARD:
        raise UnsupportedOperationError(
            f"exact joint quadrature supports p <= {JOINT_DIM_GUARD}, got p = {p}"
        )
    _, _, K, f, logw = _joint_grid_pieces(model, n_grid)
    th = model.theta.theta
    G = n_grid
    chunk = max(1, min(G, int(_CHUNK_BUDGET // max(1, G ** (p - 1)))))

    def energy_block(i0: int, i1: int) -> np.ndarray:
        # log density + log weights for grid slabs [i0:i1] along axis 0
        E = np.zeros((i1 - i0,) + (G,) * (p - 1))
        for s in range(p):
            vec = th[s, s] * f + logw
            vs = vec[i0:i1] if s == 0 else vec
            E = E + vs.reshape(_axis_shape(p, s, vs.size))
        for s in range(p):
            for t in range(s + 1, p):
                if th[s, t] == 0.0:
                    continue
                blk = th[s, t] * (K[i0:i1] if s == 0 else K)
                shp = list(_axis_shape(p, s, blk.shape[0]))
                shp[t] = G
                E = E + blk.reshape(shp)
        return E

    pieces = []
    for i0 in range(0, G, chunk):
        i1 = min(G, i0 + chunk)
        pieces.append(logsumexp(energy_block(i0, i1)))
    log_a = float(logsumexp(pieces))
    if not want_expectations:
        return log_a, None

    moments = np.zeros((p, p))
    for i0 in range(0, G, chunk):
        i1 = min(G, i0 + chunk)
        prob = np.exp(energy_block(i0, i1) - log_a)
        for s in range(p):
            for t in range(s, p):
                blk = K[i0:i1] if s == 0 else K
                if t == s:
                    vec = np.diag(K) if s > 0 else np.diag(K)[i0:i1]
                    shp = _axis_shape(p, s, vec.size)
                    moments[s, s] += float(np.sum(prob * vec.reshape(shp)))
                else:
                    shp = list(_axis_shape(p, s, blk.shape[0]))
                    shp[t] = G
                    moments[s, t] += float(np.sum(prob * blk.reshape(shp)))
    moments = np.triu(moments) + np.triu(moments, 1).T
    return log_a, moments


def joint_log_partition_exact(model: ModelSpec, n_grid: int = 201) -> float:
    """log A(theta) by tensor-grid trapezoid quadrature (p <= 4)."""
    log_a, _ = _joint_sweep(model, n_grid, want_expectations=False)
    return log_a


def joint_pair_expectations(model: ModelSpec, n_grid: int = 201) -> tuple[float, np.ndarray]:
    """Log partition and the matrix E_theta[phi(X_s, X_t)] (p <= 4).

    Diagonal entries are E[phi(X_s, X_s)], from which node-potential
    expectations follow as -base_coeff times them.
    """
    log_a, moments = _joint_sweep(model, n_grid, want_expectations=True)
    return log_a, moments


def joint_nll(model: ModelSpec, data: Dataset, n_grid: int = 201) -> float:
    """Average negative log likelihood under exact normalization (p <= 4)."""
    _check_data(model, data)
    energies = unnormalized_log_joint(model, data.values)
    return float(-np.mean(energies) + joint_log_partition_exact(model, n_grid))


def joint_gradient_exact(model: ModelSpec, data: Dataset, n_grid: int = 201) -> np.ndarray:
    """Gradient of joint_nll in the symmetric parameterization (p <= 4).

    Entry (s, t), s != t, is the derivative for the unordered pair
    parameter theta_st (mirrored); entry (s, s) is the derivative for the
    node coefficient theta_ss.
    """
    _check_data(model, data)
    _, expect = joint_pair_expectations(model, n_grid)
    emp = _batch_gram(model.kernel, data.values).mean(axis=0)
    grad = -emp + expect
    # node terms enter through f = -c * phi(x, x)
    diag = -model.base_coeff * (np.diag(expect) - np.diag(emp))
    out = grad.copy()
    np.fill_diagonal(out, diag)
    return out


def _check_data(model: ModelSpec, data: Dataset) -> None:
    if data.p != model.p:
        raise InvalidInputError(f"data has p = {data.p}, model has p = {model.p}")
    if data.feature_dim != model.lift_dim:
        raise InvalidInputError(
            f"data feature_dim = {data.feature_dim} but model lift_dim = {model.lift_dim}"
        )


def _conditional_energies(
    model: ModelSpec,
    node: int,
    others: np.ndarray,
    grid_variates: np.ndarray,
    node_pot: np.ndarray,
) -> np.ndarray:
    """Energies of node states on the grid given neighbor variates.

    others: (m, p, d) current variates (the node's own column is ignored).
    Returns (m, G).
    """
    th = model.theta.theta
    m = others.shape[0]
    G = grid_variates.shape[0]
    E = np.broadcast_to(th[node, node] * node_pot, (m, G)).copy()
    nb = [t for t in range(model.p) if t != node and th[node, t] != 0.0]
    if nb:
        flat = others[:, nb, :].reshape(m * len(nb), -1)
        Kn = kernel_cross_matrix(model.kernel, flat, grid_variates).reshape(m, len(nb), G)
        E += np.einsum("t,mtg->mg", th[node, nb], Kn)
    return E


def conditional_log_partition(
    model: ModelSpec, node: int, others: np.ndarray, n_grid: int = 401
) -> np.ndarray:
    """Univariate log normalizers of node's conditional, batched over rows.

    others is (m, p, d) or (m, p); returns (m,).  Scales to any p.
    """
    others = _as_batch(model, others)
    _, gv, K, f, logw = _joint_grid_pieces(model, n_grid)
    E = _conditional_energies(model, node, others, gv, f)
    return logsumexp(E + logw[None, :], axis=1)


def conditional_pmf(model: ModelSpec, node: int, others: np.ndarray, n_grid: int = 401) -> GridPmf:
    """Discretized conditional of one node given a single configuration."""
    others = _as_batch(model, others)
    if others.shape[0] != 1:
        raise InvalidInputError("conditional_pmf takes a single configuration")
    grid, gv, _, f, logw = _joint_grid_pieces(model, n_grid)
    E = _conditional_energies(model, node, others, gv, f)[0]
    logmass = E + logw
    d = logsumexp(logmass)
    probs = np.exp(logmass - d)
    return GridPmf(grid=grid, probs=probs, log_norm=float(d))


def conditional_nll(model: ModelSpec, data: Dataset, node: int, n_grid: int = 401) -> float:
    """Average negative conditional log likelihood of one node."""
    _check_data(model, data)
    th = model.theta.theta
    vals = data.values
    _, gv, _, f, logw = _joint_grid_pieces(model, n_grid)
    D = conditional_log_partition(model, node, vals, n_grid)
    own = vals[:, node, :]
    en = th[node, node] * (-model.base_coeff) * np.asarray(
        eval_kernel(model.kernel, own, own)
    )
    for t in range(model.p):
        if t == node or th[node, t] == 0.0:
            continue
        en = en + th[node, t] * np.asarray(eval_kernel(model.kernel, own, vals[:, t, :]))
    return float(np.mean(-en + D))


def conditional_gradient(
    model: ModelSpec, data: Dataset, node: int, n_grid: int = 401, chunk: int = 256
) -> np.ndarray:
    """Gradient of conditional_nll for one node's parameter row.

    Returns a length-p vector: entry t != node is the derivative for
    theta_{node,t}; entry node is the derivative for theta_{node,node}.
    Uses univariate quadrature only, so it scales to any p.
    """
    _check_data(model, data)
    vals = data.values
    n = data.n
    _, gv, _, f, logw = _joint_grid_pieces(model, n_grid)
    grad = np.zeros(model.p)
    for i0 in range(0, n, chunk):
        i1 = min(n, i0 + chunk)
        blk = vals[i0:i1]
        m = i1 - i0
        E = _conditional_energies(model, node, blk, gv, f)
        logmass = E + logw[None, :]
        prob = np.exp(logmass - logsumexp(logmass, axis=1, keepdims=True))  # (m, G)
        own = blk[:, node, :]
        # node-coefficient term: -f(x_s) + E[f(X_s) | rest]
        emp_f = -model.base_coeff * np.asarray(eval_kernel(model.kernel, own, own))
        exp_f = prob @ f
        grad[node] += float(np.sum(-emp_f + exp_f))
        other_idx = [t for t in range(model.p) if t != node]
        flat = blk[:, other_idx, :].reshape(m * len(other_idx), -1)
        Kall = kernel_cross_matrix(model.kernel, flat, gv).reshape(m, len(other_idx), gv.shape[0])
        exp_pair = np.einsum("mg,mtg->mt", prob, Kall)
        emp_pair = _pair_stats(model.kernel, own, blk[:, other_idx, :])
        grad[other_idx] += np.sum(-emp_pair + exp_pair, axis=0)
    return grad / n


def _pair_stats(spec: KernelSpec, own: np.ndarray, others: np.ndarray) -> np.ndarray:
    """phi(own_i, others_i_t) for (m, d) own against (m, k, d) others -> (m, k)."""
    return np.asarray(eval_kernel(spec, own[:, None, :], others))


def _as_batch(model: ModelSpec, x: np.ndarray) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim == 1:
        v = v[None, :, None]
    elif v.ndim == 2:
        if model.lift_dim > 1 and v.shape == (model.p, model.lift_dim):
            v = v[None, :, :]
        else:
            v = v[:, :, None]
    if v.ndim != 3 or v.shape[1] != model.p or v.shape[2] != model.lift_dim:
        raise InvalidInputError(
            f"cannot interpret configurations of shape {np.shape(x)} for p = {model.p}, "
            f"d = {model.lift_dim}"
        )
    return v
