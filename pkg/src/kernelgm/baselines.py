"""Reference baselines: Gaussian graphical lasso and its rank-based variant.

The graphical lasso here is a block coordinate-descent solver in the
covariance parameterization (column-by-column lasso subproblems on the
working inverse W).  It is deliberately a separate code path from the
proximal log-det solver so the two can cross-check each other; the only
shared piece is the stationarity residual used to declare convergence.

The rank-based pipeline replaces the sample covariance with the sine
transform of pairwise Kendall tau, projected to the nearest correlation
matrix when sampling noise makes it indefinite, and then reuses the same
graphical lasso.
"""

from __future__ import annotations

import numpy as np

from .density import ParamMatrix
from .errors import InvalidInputError
from .estimators import l1_kkt_residual, soft_threshold
from .kernels import Dataset

# column block size for the O(n^2) sign matrices in Kendall tau
_TAU_BUDGET_FLOATS = 2**27


def flatten_features(data: Dataset) -> Dataset:
    """Unstack feature dimensions into extra samples: (n, p, d) -> (n*d, p).

    Sample i's d feature layers become d consecutive scalar samples, so
    rank and covariance baselines can consume vector-variate data.
    """
    vals = data.values
    n, p, d = vals.shape
    if d == 1:
        return Dataset(vals[:, :, 0])
    return Dataset(vals.transpose(0, 2, 1).reshape(n * d, p))


def sample_covariance(data: Dataset) -> np.ndarray:
    """Centered covariance with 1/n normalization (scalar data only)."""
    x = data.scalars()
    xc = x - x.mean(axis=0, keepdims=True)
    return (xc.T @ xc) / x.shape[0]


def kendall_tau_matrix(data: Dataset) -> np.ndarray:
    """All-pairs Kendall tau with ties contributing zero.

    tau_st = 2 / (n (n-1)) * sum_{i<j} sign(x_s^i - x_s^j) sign(x_t^i - x_t^j).
    Sign matrices are built per column block in float32 (sums stay exact
    integers well past these sizes) and combined with one matmul.
    """
    x = data.scalars()
    n, p = x.shape
    if n < 2:
        raise InvalidInputError("kendall tau needs at least two samples")
    denom = float(n * (n - 1))
    block = max(1, int(_TAU_BUDGET_FLOATS // (2 * n * n)))

    def sign_block(cols: np.ndarray) -> np.ndarray:
        arr = x[:, cols].T  # (b, n)
        d = np.sign(arr[:, :, None] - arr[:, None, :]).astype(np.float32)
        return d.reshape(cols.size, n * n)

    out = np.empty((p, p))
    col_blocks = [np.arange(i, min(i + block, p)) for i in range(0, p, block)]
    cached = [sign_block(cb) for cb in col_blocks] if len(col_blocks) == 1 else None
    for bi, cb in enumerate(col_blocks):
        left = cached[bi] if cached else sign_block(cb)
        for bj, cbj in enumerate(col_blocks):
            if bj < bi:
                continue
            right = left if bj == bi else (cached[bj] if cached else sign_block(cbj))
            prod = (left @ right.T).astype(float) / denom
            out[np.ix_(cb, cbj)] = prod
            if bj != bi:
                out[np.ix_(cbj, cb)] = prod.T
    return out


def nearest_correlation(
    a: np.ndarray, eig_floor: float = 1e-4, max_iter: int = 100, tol: float = 1e-10
) -> np.ndarray:
    """Alternating projections onto the PSD cone and the unit-diagonal set.

    Dykstra-corrected; eigenvalues are floored at eig_floor inside the
    cone projection.  A final floor-and-rescale guarantees exact unit
    diagonal and a strictly positive spectrum even at the iteration cap.
    """
    y = 0.5 * (np.asarray(a, dtype=float) + np.asarray(a, dtype=float).T)
    ds = np.zeros_like(y)

    def proj_psd(mat: np.ndarray) -> np.ndarray:
        vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
        return (vecs * np.maximum(vals, eig_floor)) @ vecs.T

    for _ in range(max_iter):
        r = y - ds
        xk = proj_psd(r)
        ds = xk - r
        y_next = xk.copy()
        np.fill_diagonal(y_next, 1.0)
        if np.max(np.abs(y_next - y)) <= tol:
            y = y_next
            break
        y = y_next
    x = proj_psd(y)
    d = np.sqrt(np.diagonal(x))
    x = x / np.outer(d, d)
    return 0.5 * (x + x.T)


def skeptic_correlation(tau: np.ndarray, eig_floor: float = 1e-4) -> np.ndarray:
    """Correlation estimate sin(pi/2 * tau) off the diagonal, 1 on it.

    If sampling noise leaves the transform with an eigenvalue below
    eig_floor, the matrix is replaced by its nearest correlation matrix.
    """
    t = np.asarray(tau, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise InvalidInputError(f"tau must be square, got shape {t.shape}")
    s = np.sin(0.5 * np.pi * t)
    np.fill_diagonal(s, 1.0)
    s = 0.5 * (s + s.T)
    if np.linalg.eigvalsh(s)[0] < eig_floor:
        s = nearest_correlation(s, eig_floor=eig_floor)
    return s


def _lasso_cd(a, b, lam, beta, tol, max_sweeps=500):
    """Coordinate descent for (1/2) b'Ab - b.b + lam|b|_1, warm-started."""
    ab = a @ beta
    for _ in range(max_sweeps):
        biggest = 0.0
        for k in range(b.size):
            old = beta[k]
            akk = max(a[k, k], 1e-12)
            r = b[k] - (ab[k] - akk * old)
            new = soft_threshold(np.array(r), lam).item() / akk
            if new != old:
                beta[k] = new
                ab += a[:, k] * (new - old)
                biggest = max(biggest, abs(new - old))
        if biggest <= tol:
            break
    return beta


def glasso_kkt_residual(theta: np.ndarray, cov: np.ndarray, lam: float) -> float:
    """Stationarity residual of -logdet(T) + Tr(T S) + lam ||offdiag||_1."""
    g = -np.linalg.inv(theta) + cov
    mask = ~np.eye(theta.shape[0], dtype=bool)
    return l1_kkt_residual(0.5 * (g + g.T), theta, lam, mask)


def fit_glasso(
    cov: np.ndarray,
    lam: float,
    grad_tol: float = 1e-8,
    max_cycles: int = 200,
    warm: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[ParamMatrix, dict]:
    """Graphical lasso by block coordinate descent on the inverse.

    Minimizes -logdet(Theta) + Tr(Theta S) + lam ||offdiag(Theta)||_1.
    Each cycle solves one lasso per column against the working inverse W
    (diagonal pinned to diag(S)); cycles repeat until the reconstructed
    precision matrix passes an independently recomputed stationarity
    check at grad_tol.

    Returns the precision estimate and an info dict; info["warm"] holds
    (W, B) for warm-starting the next penalty on a path.
    """
    s = np.asarray(cov, dtype=float)
    p = s.shape[0]
    if s.ndim != 2 or s.shape[1] != p:
        raise InvalidInputError(f"covariance must be square, got {s.shape}")
    if np.max(np.abs(s - s.T)) > 1e-10:
        raise InvalidInputError("covariance must be symmetric")
    if np.any(np.diagonal(s) <= 0):
        raise InvalidInputError("covariance diagonal must be positive")
    if lam < 0:
        raise InvalidInputError(f"need lam >= 0, got {lam}")

    if warm is not None:
        w = warm[0].copy()
        betas = warm[1].copy()
        np.fill_diagonal(w, np.diagonal(s))
    else:
        w = s.copy()
        betas = np.zeros((p - 1, p))
    inner_tol = max(grad_tol * 1e-2, 1e-14)

    def reconstruct() -> np.ndarray:
        theta = np.empty((p, p))
        for j in range(p):
            others = np.arange(p) != j
            bj = betas[:, j]
            w12 = w[others, j]
            tjj = 1.0 / max(w[j, j] - float(bj @ w12), 1e-12)
            theta[j, j] = tjj
            theta[others, j] = -bj * tjj
        return 0.5 * (theta + theta.T)

    converged = False
    res = np.inf
    cycles = 0
    for cycles in range(1, max_cycles + 1):
        for j in range(p):
            others = np.arange(p) != j
            a = w[np.ix_(others, others)]
            b = s[others, j]
            beta = _lasso_cd(a, b, lam, betas[:, j], inner_tol)
            betas[:, j] = beta
            w12 = a @ beta
            w[others, j] = w12
            w[j, others] = w12
        theta = reconstruct()
        res = glasso_kkt_residual(theta, s, lam)
        if res <= grad_tol:
            converged = True
            break
        inner_tol = max(inner_tol * 0.3, 1e-15)
    theta = reconstruct()
    info = {
        "converged": converged,
        "n_cycles": cycles,
        "kkt_residual": float(res),
        "lam": lam,
        "warm": (w, betas),
        "estimator": "glasso_cd",
    }
    return ParamMatrix(theta), info


def fit_ggm(data: Dataset, lam: float, grad_tol: float = 1e-8, **kw) -> tuple[ParamMatrix, dict]:
    """Gaussian baseline: graphical lasso on the flattened sample covariance."""
    cov = sample_covariance(flatten_features(data))
    theta, info = fit_glasso(cov, lam, grad_tol=grad_tol, **kw)
    info = dict(info, estimator="ggm", cov=cov)
    return theta, info


def fit_nonparanormal(
    data: Dataset, lam: float, grad_tol: float = 1e-8, **kw
) -> tuple[ParamMatrix, dict]:
    """Rank baseline: Kendall tau -> sine transform -> graphical lasso."""
    flat = flatten_features(data)
    tau = kendall_tau_matrix(flat)
    corr = skeptic_correlation(tau)
    theta, info = fit_glasso(corr, lam, grad_tol=grad_tol, **kw)
    info = dict(info, estimator="nonparanormal", corr=corr)
    return theta, info
