"""Synthetic truth models and single-site Gibbs data generation.

Sampling discretizes each node-conditional on a fixed grid, draws a grid
cell by inverse CDF, then jitters uniformly within the cell, so samples
live on the continuous domain rather than the grid.  One chain per
dataset: ``burn_in`` sweeps are discarded, then every ``thin``-th sweep
is kept.  All randomness flows through one numpy Generator, so a seed
pins the dataset exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .density import ModelSpec, ParamMatrix, trapezoid_grid
from .errors import InvalidInputError
from .kernels import Dataset, eval_kernel, kernel_cross_matrix

MIN_SAMPLER_GRID = 201


@dataclass(frozen=True)
class GibbsConfig:
    """Sampler controls: grid resolution, warm-up, thinning, scan order."""

    n_grid: int = 401
    burn_in: int = 500
    thin: int = 10
    scan: str = "ordered"

    def __post_init__(self) -> None:
        if self.n_grid < MIN_SAMPLER_GRID:
            raise InvalidInputError(
                f"sampler grid must have >= {MIN_SAMPLER_GRID} points, got {self.n_grid}"
            )
        if self.burn_in < 0:
            raise InvalidInputError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.thin < 1:
            raise InvalidInputError(f"thin must be >= 1, got {self.thin}")
        if self.scan not in ("ordered", "random"):
            raise InvalidInputError(f"scan must be 'ordered' or 'random', got {self.scan!r}")


@dataclass(frozen=True)
class TruthModel:
    """A named ground-truth parameter matrix used to generate data."""

    name: str
    theta: ParamMatrix

    @property
    def p(self) -> int:
        return self.theta.p


def make_model1(p: int) -> TruthModel:
    """Ten disjoint fully connected groups of near-equal size, weight 1.

    Group sizes are floor(p / 10), with the remainder spread one node at
    a time over the first groups.  Needs p >= 10.
    """
    if p < 10:
        raise InvalidInputError(f"group model needs p >= 10, got {p}")
    base, extra = divmod(p, 10)
    th = np.eye(p)
    start = 0
    for g in range(10):
        size = base + (1 if g < extra else 0)
        idx = np.arange(start, start + size)
        th[np.ix_(idx, idx)] = 1.0
        start += size
    np.fill_diagonal(th, 1.0)
    return TruthModel(name="group", theta=ParamMatrix(th))


def make_model2(p: int, edge_prob: float, seed) -> TruthModel:
    """Erdos-Renyi support: each unordered pair is an edge iid with edge_prob."""
    if not 0.0 <= edge_prob <= 1.0:
        raise InvalidInputError(f"edge_prob must be in [0, 1], got {edge_prob}")
    rng = np.random.default_rng(seed)
    th = np.eye(p)
    iu = np.triu_indices(p, k=1)
    mask = rng.random(iu[0].size) < edge_prob
    th[iu[0][mask], iu[1][mask]] = 1.0
    th[iu[1][mask], iu[0][mask]] = 1.0
    return TruthModel(name="random", theta=ParamMatrix(th))


def make_chain(p: int, coupling: float = 1.0) -> TruthModel:
    """Path graph 0-1-...-(p-1) with a common edge weight."""
    th = np.eye(p)
    for s in range(p - 1):
        th[s, s + 1] = th[s + 1, s] = coupling
    return TruthModel(name="chain", theta=ParamMatrix(th))


def _cell_bounds(grid: np.ndarray, domain: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    h = grid[1] - grid[0]
    lo = np.maximum(grid - 0.5 * h, domain[0])
    hi = np.minimum(grid + 0.5 * h, domain[1])
    return lo, hi


def sample_conditional(
    model: ModelSpec, node: int, state: np.ndarray, rng: np.random.Generator, n_grid: int = 401
) -> float:
    """Draw one node's state given the rest of a scalar state vector."""
    states = np.asarray(state, dtype=float)
    if states.shape != (model.p,):
        raise InvalidInputError(f"state must be shape ({model.p},), got {states.shape}")
    variates = model.state_variates(states)
    grid, w = trapezoid_grid(model.domain, n_grid)
    gv = model.state_variates(grid)
    node_pot = -model.base_coeff * _self_phi(model, gv)
    th = model.theta.theta
    energy = th[node, node] * node_pot
    for t in range(model.p):
        if t == node or th[node, t] == 0.0:
            continue
        energy = energy + th[node, t] * kernel_cross_matrix(
            model.kernel, variates[t][None, :], gv
        )[0]
    logmass = energy + np.log(w)
    probs = np.exp(logmass - logsumexp(logmass))
    lo, hi = _cell_bounds(grid, model.domain)
    return _draw_from_cells(probs, lo, hi, rng)


def _self_phi(model: ModelSpec, gv: np.ndarray) -> np.ndarray:
    return np.asarray(eval_kernel(model.kernel, gv, gv))


def _draw_from_cells(probs, lo, hi, rng) -> float:
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    idx = min(idx, probs.size - 1)
    return float(lo[idx] + rng.random() * (hi[idx] - lo[idx]))


def gibbs_generate_batch(
    model: ModelSpec, n: int, n_chains: int, config: GibbsConfig, seed
) -> list[Dataset]:
    """Generate n_chains independent datasets of n samples each.

    Every chain follows the same single-site scheme as gibbs_generate,
    but the grid work at each site is vectorized across chains, which is
    what makes replicated experiments affordable on one core.  Chains
    are statistically independent: each conditional draw consumes its
    own uniforms from the shared generator.  The batch seed pins the
    whole collection; individual chains are not stream-compatible with
    single-chain seeds.
    """
    if n < 1:
        raise InvalidInputError(f"need n >= 1 samples, got {n}")
    if n_chains < 1:
        raise InvalidInputError(f"need n_chains >= 1, got {n_chains}")
    rng = np.random.default_rng(seed)
    p = model.p
    th = model.theta.theta
    grid, w = trapezoid_grid(model.domain, config.n_grid)
    logw = np.log(w)
    G = grid.size
    gv = model.state_variates(grid)
    node_pot = -model.base_coeff * _self_phi(model, gv)
    cell_lo, cell_hi = _cell_bounds(grid, model.domain)
    neighbors = [np.flatnonzero((th[s] != 0.0) & (np.arange(p) != s)) for s in range(p)]
    R = n_chains

    states = rng.uniform(model.domain[0], model.domain[1], size=(R, p))

    def sweep() -> None:
        order = rng.permutation(p) if config.scan == "random" else range(p)
        for s in order:
            nb = neighbors[s]
            energy = np.tile(th[s, s] * node_pot, (R, 1))
            if nb.size:
                flat = model.state_variates(states[:, nb].ravel())  # (R*k, d)
                K = kernel_cross_matrix(model.kernel, flat, gv).reshape(R, nb.size, G)
                energy += np.einsum("t,rtg->rg", th[s, nb], K)
            logmass = energy + logw
            probs = np.exp(logmass - logsumexp(logmass, axis=1, keepdims=True))
            cdf = np.cumsum(probs, axis=1)
            target = rng.random(R) * cdf[:, -1]
            idx = np.sum(cdf <= target[:, None], axis=1)
            np.clip(idx, 0, G - 1, out=idx)
            states[:, s] = cell_lo[idx] + rng.random(R) * (cell_hi[idx] - cell_lo[idx])

    for _ in range(config.burn_in):
        sweep()
    out = np.empty((R, n, p))
    for i in range(n):
        for _ in range(config.thin):
            sweep()
        out[:, i] = states
    return [Dataset(model.state_variates(out[r])) for r in range(R)]


def gibbs_generate(model: ModelSpec, n: int, config: GibbsConfig, seed) -> Dataset:
    """Generate n samples from the model by single-site Gibbs sweeps.

    seed may be an int, a SeedSequence, or a Generator.  Samples are the
    state variates: (n, p) scalars become (n, p, 1) in the Dataset; lifted
    models store the lifted vectors.
    """
    if n < 1:
        raise InvalidInputError(f"need n >= 1 samples, got {n}")
    rng = np.random.default_rng(seed)
    p = model.p
    th = model.theta.theta
    grid, w = trapezoid_grid(model.domain, config.n_grid)
    logw = np.log(w)
    gv = model.state_variates(grid)
    node_pot = -model.base_coeff * _self_phi(model, gv)
    cell_lo, cell_hi = _cell_bounds(grid, model.domain)
    neighbors = [np.flatnonzero((th[s] != 0.0) & (np.arange(p) != s)) for s in range(p)]

    states = rng.uniform(model.domain[0], model.domain[1], size=p)
    variates = model.state_variates(states)  # (p, d)

    def sweep() -> None:
        order = rng.permutation(p) if config.scan == "random" else range(p)
        for s in order:
            nb = neighbors[s]
            energy = th[s, s] * node_pot
            if nb.size:
                K = kernel_cross_matrix(model.kernel, variates[nb], gv)  # (k, G)
                energy = energy + th[s, nb] @ K
            logmass = energy + logw
            probs = np.exp(logmass - logsumexp(logmass))
            u = _draw_from_cells(probs, cell_lo, cell_hi, rng)
            states[s] = u
            variates[s] = model.state_variates(np.array(u))

    for _ in range(config.burn_in):
        sweep()
    out = np.empty((n, p, model.lift_dim))
    for i in range(n):
        for _ in range(config.thin):
            sweep()
        out[i] = variates
    return Dataset(out)
