"""Latent-variable estimation per half: 2-means labels or first-PC pseudotime."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import DataMatrix, RngHandle
from .errors import DataError, NumericError

__all__ = [
    "LatentLabels",
    "CovarianceSpec",
    "kmeans2",
    "whiten",
    "first_pc_pseudotime",
    "empirical_covariance",
]

_PC_TOL = 1e-11
_PC_MAX_ITER = 300


@dataclass(frozen=True)
class LatentLabels:
    """Estimated latent variable for one half.

    ``discrete2`` values are in {1, 2} with both present; ``continuous``
    values are centered pseudotime scores.
    """

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("discrete2", "continuous"):
            raise DataError(f"unknown label kind {self.kind!r}")
        values = np.asarray(self.values)
        if self.kind == "discrete2":
            values = values.astype(np.int8)
            present = set(np.unique(values).tolist())
            if not present <= {1, 2}:
                raise DataError("discrete2 labels must be in {1, 2}")
            if present != {1, 2}:
                raise DataError("both clusters must be nonempty")
        else:
            values = values.astype(np.float64)
            if abs(float(values.mean())) > 1e-10:
                raise DataError("continuous pseudotime must be centered")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class CovarianceSpec:
    """Covariance used for whitening: identity, user-supplied, or estimated.

    ``matrix`` holds the resolved p x p matrix for the user_supplied and
    empirical_ridge sources.
    """

    source: str
    matrix: np.ndarray | None = None
    ridge: float = 0.0

    def __post_init__(self):
        if self.source not in ("identity", "user_supplied", "empirical_ridge"):
            raise DataError(f"unknown covariance source {self.source!r}")
        if self.source == "user_supplied":
            if self.matrix is None:
                raise DataError("user_supplied covariance requires a matrix")
            mat = np.asarray(self.matrix, dtype=np.float64)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise DataError("covariance must be square")
            if not np.allclose(mat, mat.T, atol=1e-8, rtol=0):
                raise DataError("covariance must be symmetric within 1e-8")
            object.__setattr__(self, "matrix", mat)
        if self.ridge < 0:
            raise DataError("ridge must be nonnegative")

    @classmethod
    def identity(cls) -> "CovarianceSpec":
        return cls(source="identity")

    @classmethod
    def user(cls, matrix: np.ndarray) -> "CovarianceSpec":
        return cls(source="user_supplied", matrix=matrix)

    @classmethod
    def empirical(cls, ridge: float) -> "CovarianceSpec":
        return cls(source="empirical_ridge", ridge=ridge)


def empirical_covariance(data: DataMatrix | np.ndarray, ridge: float = 0.0) -> CovarianceSpec:
    """Sample covariance (1/(n-1)) X_c^T X_c plus a ridge on the diagonal."""
    values = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    n = values.shape[0]
    if n < 2:
        raise DataError("need at least 2 samples for a covariance estimate")
    if ridge < 0:
        raise DataError("ridge must be nonnegative")
    centered = values - values.mean(axis=0)
    cov = (centered.T @ centered) / (n - 1)
    cov = 0.5 * (cov + cov.T)
    if ridge > 0:
        cov = cov + ridge * np.eye(values.shape[1])
    return CovarianceSpec(source="user_supplied", matrix=cov, ridge=ridge)


def _inv_sqrt(matrix: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(matrix)
    if evals[0] <= 0:
        raise NumericError("covariance is not positive definite after ridge")
    evals = np.maximum(evals, 1e-10)
    return (evecs / np.sqrt(evals)) @ evecs.T


def whiten(data, cov: CovarianceSpec):
    """Map X to X * Sigma^{-1/2} (symmetric inverse square root).

    Accepts a DataMatrix or a plain array and returns the same kind. With the
    identity source this is exactly the identity map.
    """
    if cov.source == "identity":
        return data
    is_dm = isinstance(data, DataMatrix)
    values = data.values if is_dm else np.asarray(data, dtype=np.float64)
    if cov.source == "empirical_ridge":
        cov = empirical_covariance(values, cov.ridge)
    matrix = cov.matrix
    if matrix.shape[0] != values.shape[1]:
        raise DataError(
            f"covariance is {matrix.shape[0]}x{matrix.shape[0]} "
            f"but data has p={values.shape[1]}"
        )
    out = values @ _inv_sqrt(matrix)
    if is_dm:
        return DataMatrix(out, row_labels=data.row_labels)
    return out


def _kmeanspp_inits(X: np.ndarray, gen: np.random.Generator, restarts: int) -> np.ndarray:
    """k-means++ for k=2: uniform first center, D^2-weighted second."""
    n = X.shape[0]
    rownorm = np.einsum("ij,ij->i", X, X)
    inits = np.empty((restarts, 2, X.shape[1]))
    for r in range(restarts):
        i0 = int(gen.integers(n))
        c0 = X[i0]
        d2 = np.maximum(rownorm - 2.0 * (X @ c0) + float(c0 @ c0), 0.0)
        total = float(d2.sum())
        if total <= 0.0:
            raise DataError("degenerate data: all rows identical")
        u = gen.random() * total
        i1 = min(int(np.searchsorted(np.cumsum(d2), u, side="right")), n - 1)
        inits[r, 0] = c0
        inits[r, 1] = X[i1]
    return inits


def kmeans2(
    data: DataMatrix | np.ndarray,
    rng: RngHandle,
    restarts: int = 10,
    max_iter: int = 100,
) -> LatentLabels:
    """Best-of-restarts Lloyd's algorithm with k-means++ initialization, k=2.

    The within-cluster sum of squares is checked to be non-increasing across
    Lloyd iterations; the restart with the lowest final objective wins (ties
    go to the earliest restart).
    """
    X = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise DataError("need at least 2 samples to form 2 clusters")
    if restarts < 1:
        raise DataError("restarts must be >= 1")
    if np.all(X == X[0]):
        raise DataError("degenerate data: all rows identical")

    gen = rng.generator()
    inits = _kmeanspp_inits(X, gen, restarts)
    labels, obj_hist, _ = _kernels.lloyd2_batch(X, inits, max_iter=max_iter)

    finals = np.empty(restarts)
    scale = max(1.0, float(np.nanmax(obj_hist)) if np.isfinite(np.nanmax(obj_hist)) else 1.0)
    for r in range(restarts):
        hist = obj_hist[r][~np.isnan(obj_hist[r])]
        if hist.size == 0:
            raise NumericError("lloyd iteration produced no objective")
        if np.any(np.diff(hist) > 1e-9 * scale):
            raise NumericError("within-cluster sum of squares increased during Lloyd iteration")
        finals[r] = hist[-1]

    best = int(np.argmin(finals))
    return LatentLabels(kind="discrete2", values=labels[best].astype(np.int8) + 1)


def first_pc_pseudotime(data: DataMatrix | np.ndarray) -> LatentLabels:
    """Centered scores of the first principal component, via power iteration.

    Sign convention: the first loading whose magnitude is non-negligible is
    made positive, so repeated runs on the same data give the same ordering.
    """
    X = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    n, p = X.shape
    if n < 2:
        raise DataError("need at least 2 samples for pseudotime")
    Xc = X - X.mean(axis=0)
    if not np.any(Xc):
        raise DataError("zero-variance data")

    v = np.ones(p) / np.sqrt(p)
    lam_old = 0.0
    for _ in range(_PC_MAX_ITER):
        w = Xc.T @ (Xc @ v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            # start vector is orthogonal to the range; perturb deterministically
            v = np.zeros(p)
            v[int(np.argmax(Xc.var(axis=0)))] = 1.0
            continue
        v = w / norm
        if abs(norm - lam_old) <= _PC_TOL * norm:
            break
        lam_old = norm

    big = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
    if v[big[0]] < 0:
        v = -v
    return LatentLabels(kind="continuous", values=Xc @ v)
