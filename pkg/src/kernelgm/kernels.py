"""Pairwise sufficient statistics built from Mercer kernels.

The pairwise statistic phi(x, y) attached to every edge of the graphical
model is a positive semi-definite kernel on the variate space.  Three
families are supported:

``linear``
    phi(x, y) = <x, y>.
``heat``
    phi(x, y) = exp(-||x - y||^2 / sigma^2), values in (0, 1].
``polynomial``
    phi(x, y) = (beta + <x, y>)^alpha with integer alpha >= 1.  Meant for
    unit-length feature vectors, where beta > 0 keeps the base positive.

A :class:`Dataset` stores n samples of p nodes, each node carrying a
variate in R^d (d = 1 for scalar data).  :func:`average_gram` reduces a
dataset to the p x p matrix of empirical kernel averages, the only data
summary the relaxed estimators consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

KERNEL_FAMILIES = ("linear", "heat", "polynomial")

# Tolerances for Gram-matrix validation.
SYMMETRY_TOL = 1e-10
PSD_EIG_TOL = -1e-8


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its parameters.

    sigma is the heat bandwidth, (beta, alpha) the polynomial offset and
    degree.  Parameters irrelevant to the chosen family are ignored.
    """

    family: str
    sigma: float = 1.0
    beta: float = 1.0
    alpha: int = 2

    def __post_init__(self) -> None:
        if self.family not in KERNEL_FAMILIES:
            raise InvalidInputError(
                f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}"
            )
        if self.family == "heat" and not self.sigma > 0:
            raise InvalidInputError(f"heat kernel needs sigma > 0, got {self.sigma}")
        if self.family == "polynomial":
            if not self.beta > 0:
                raise InvalidInputError(f"polynomial kernel needs beta > 0, got {self.beta}")
            if int(self.alpha) != self.alpha or self.alpha < 1:
                raise InvalidInputError(
                    f"polynomial kernel needs integer alpha >= 1, got {self.alpha}"
                )

    def describe(self) -> dict:
        """JSON-ready summary of the kernel, used in run metadata."""
        out = {"family": self.family}
        if self.family == "heat":
            out["sigma"] = self.sigma
        elif self.family == "polynomial":
            out["beta"] = self.beta
            out["alpha"] = int(self.alpha)
        return out


def _as_variates(x) -> np.ndarray:
    """Coerce to a float array whose last axis is the feature dimension.

    Scalars and 0-d/1-d arrays of scalar variates gain a trailing axis of
    length 1, so downstream code can always reduce over axis -1.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


def eval_kernel(spec: KernelSpec, x, y) -> np.ndarray | float:
    """Evaluate phi on broadcastable batches of variates.

    x and y are arrays whose last axis is the feature dimension (scalars
    are promoted to d = 1).  Leading axes broadcast; the result drops the
    feature axis.
    """
    xa = _as_variates(x)
    ya = _as_variates(y)
    if xa.shape[-1] != ya.shape[-1]:
        raise InvalidInputError(
            f"feature dimensions disagree: {xa.shape[-1]} vs {ya.shape[-1]}"
        )
    if spec.family == "linear":
        out = np.sum(xa * ya, axis=-1)
    elif spec.family == "heat":
        d2 = np.sum((xa - ya) ** 2, axis=-1)
        out = np.exp(-d2 / spec.sigma**2)
    else:
        out = (spec.beta + np.sum(xa * ya, axis=-1)) ** spec.alpha
    if out.ndim == 0:
        return float(out)
    return out


def kernel_cross_matrix(spec: KernelSpec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """All-pairs kernel matrix K[i, j] = phi(u[i], v[j]).

    u, v are (m, d) and (k, d) stacks of variates (1-d inputs are treated
    as scalar variates).  Shared workhorse for quadrature grids and Gibbs
    updates, so it avoids forming (m, k, d) intermediates for the dot
    based families.
    """
    ua = _as_variates(u)
    va = _as_variates(v)
    if ua.ndim == 1:
        ua = ua[:, None]
    if va.ndim == 1:
        va = va[:, None]
    if ua.shape[-1] != va.shape[-1]:
        raise InvalidInputError(
            f"feature dimensions disagree: {ua.shape[-1]} vs {va.shape[-1]}"
        )
    if spec.family == "heat":
        # squared distances via the expansion ||u||^2 + ||v||^2 - 2<u, v>
        d2 = (
            np.sum(ua**2, axis=1)[:, None]
            + np.sum(va**2, axis=1)[None, :]
            - 2.0 * (ua @ va.T)
        )
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-d2 / spec.sigma**2)
    dots = ua @ va.T
    if spec.family == "linear":
        return dots
    return (spec.beta + dots) ** spec.alpha


@dataclass(frozen=True)
class Dataset:
    """n samples of p node variates, stored as a (n, p, d) float array."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise InvalidInputError(
                f"dataset values must be (n, p) or (n, p, d), got shape {np.shape(self.values)}"
            )
        if arr.shape[0] < 1:
            raise InvalidInputError("dataset needs at least one sample")
        if arr.shape[1] < 2:
            raise InvalidInputError("dataset needs at least two nodes")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("dataset values must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.values.shape[2]

    def scalars(self) -> np.ndarray:
        """The (n, p) view for scalar data; rejects vector variates."""
        if self.feature_dim != 1:
            raise InvalidInputError(
                f"scalar view requested but feature_dim = {self.feature_dim}"
            )
        return self.values[:, :, 0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.values[np.asarray(idx)])


@dataclass(frozen=True)
class GramAverage:
    """Empirical average Phi_n[s, t] = (1/n) sum_i phi(x_s^i, x_t^i).

    Validated symmetric and positive semi-definite up to eigenvalue
    tolerance -1e-8 (each sample's Gram matrix is PSD, so the average is).
    """

    matrix: np.ndarray
    n_used: int
    kernel: KernelSpec | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidInputError(f"gram average must be square, got shape {mat.shape}")
        asym = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
        if asym > SYMMETRY_TOL:
            raise InvalidInputError(f"gram average asymmetric: max |A - A^T| = {asym:.3e}")
        eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        if eigs[0] < PSD_EIG_TOL:
            raise InvalidInputError(
                f"gram average indefinite: min eigenvalue {eigs[0]:.3e} < {PSD_EIG_TOL}"
            )
        if self.n_used < 1:
            raise InvalidInputError("gram average needs n_used >= 1")
        object.__setattr__(self, "matrix", mat)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


def gram_matrix(spec: KernelSpec, sample: np.ndarray) -> np.ndarray:
    """p x p kernel matrix of one sample's node variates ((p, d) or (p,))."""
    arr = _as_variates(sample)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidInputError(f"sample must be (p,) or (p, d), got shape {arr.shape}")
    return kernel_cross_matrix(spec, arr, arr)


def average_gram(spec: KernelSpec, data: Dataset) -> GramAverage:
    """Average of per-sample Gram matrices over the dataset."""
    vals = data.values  # (n, p, d)
    dots = np.einsum("isa,ita->st", vals, vals) / data.n
    if spec.family == "linear":
        mat = dots
    elif spec.family == "heat":
        sq = np.sum(vals**2, axis=2)  # (n, p)
        d2 = sq[:, :, None] + sq[:, None, :] - 2.0 * np.einsum("isa,ita->ist", vals, vals)
        np.maximum(d2, 0.0, out=d2)
        mat = np.exp(-d2 / spec.sigma**2).mean(axis=0)
    else:
        per = (spec.beta + np.einsum("isa,ita->ist", vals, vals)) ** spec.alpha
        mat = per.mean(axis=0)
    mat = 0.5 * (mat + mat.T)
    return GramAverage(matrix=mat, n_used=data.n, kernel=spec)


def unit_feature_lift(u: np.ndarray, dim: int = 5) -> np.ndarray:
    """Deterministic lift of scalars to unit-norm feature vectors in R^dim.

    Each scalar u maps to the monomial vector (1, u, u^2, ..., u^(dim-1))
    scaled to unit Euclidean length.  Used to produce vector variates for
    polynomial-kernel experiments from scalar chain states.
    """
    if dim < 1:
        raise InvalidInputError(f"feature dim must be >= 1, got {dim}")
    arr = np.asarray(u, dtype=float)
    powers = arr[..., None] ** np.arange(dim)
    norms = np.linalg.norm(powers, axis=-1, keepdims=True)
    return powers / norms
