"""Pure-numpy implementations of the hot kernels.

These are the reference semantics; the compiled twins in ``_ckernels.pyx``
must follow the same control flow (assignment rule, empty-cluster fix,
convergence test) so that both backends produce the same labels on generic
data.
"""

from __future__ import annotations

import numpy as np

__all__ = ["lloyd2_batch", "poisson_quantile_matrix"]

# Left tail mass below lam - 10*sqrt(lam) is < 8e-24, far under double
# resolution of any u in (0, 1), so the summation may start there.
_POIS_DIRECT_LAM = 500.0


def lloyd2_batch(
    X: np.ndarray, inits: np.ndarray, max_iter: int = 100
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run k=2 Lloyd iterations to convergence for a batch of initializations.

    Parameters
    ----------
    X : (n, p) float64
    inits : (R, 2, p) float64
        Initial centroid pairs, one per restart.
    max_iter : int
        Cap on assignment passes per restart.

    Returns
    -------
    labels : (R, n) uint8
    obj_hist : (R, max_iter) float64
        Within-cluster sum of squares after each centroid update, nan-padded.
    n_assign : (R,) int64
        Number of assignment passes performed (the last one detects
        convergence and records no objective).

    A restart converges when an assignment pass reproduces the previous
    labels. If a cluster comes out empty, the sample farthest from the
    non-empty centroid is moved over (first such row on ties).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    inits = np.asarray(inits, dtype=np.float64)
    n, p = X.shape
    R = inits.shape[0]

    rownorm = np.einsum("ij,ij->i", X, X)
    sumsq = float(rownorm.sum())
    colsum = X.sum(axis=0)

    C = inits.copy()
    labels = np.zeros((R, n), dtype=np.uint8)
    obj_hist = np.full((R, max_iter), np.nan)
    n_assign = np.zeros(R, dtype=np.int64)
    n_updates = np.zeros(R, dtype=np.int64)
    active = np.ones(R, dtype=bool)
    started = np.zeros(R, dtype=bool)

    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        W = C[idx, 1, :] - C[idx, 0, :]
        thr = 0.5 * (
            np.einsum("rj,rj->r", C[idx, 1, :], C[idx, 1, :])
            - np.einsum("rj,rj->r", C[idx, 0, :], C[idx, 0, :])
        )
        proj = X @ W.T
        lab = proj > thr[None, :]
        n_assign[idx] += 1

        for pos, r in enumerate(idx):
            lr = lab[:, pos]
            n1 = int(lr.sum())
            if n1 == 0 or n1 == n:
                # all rows in one cluster: recompute distances to the full
                # centroid and peel off the farthest row
                k_full = 1 if n1 == n else 0
                ck = C[r, k_full]
                d = rownorm - 2.0 * (X @ ck) + float(ck @ ck)
                far = int(np.argmax(d))
                lr = lr.copy()
                lr[far] = not lr[far]
                lab[:, pos] = lr
                n1 = int(lr.sum())

            if started[r] and np.array_equal(lr.astype(np.uint8), labels[r]):
                active[r] = False
                continue

            labels[r] = lr
            started[r] = True
            S1 = X[lr].sum(axis=0)
            S0 = colsum - S1
            n0 = n - n1
            obj = sumsq - (float(S0 @ S0) / n0 + float(S1 @ S1) / n1)
            obj_hist[r, n_updates[r]] = obj
            n_updates[r] += 1
            C[r, 0] = S0 / n0
            C[r, 1] = S1 / n1

    return labels, obj_hist, n_assign


def poisson_quantile_matrix(u: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Elementwise Poisson quantile: smallest k with CDF(k; lam) >= u.

    Computed by incremental pmf summation. For lam > 500 the summation
    starts at floor(lam - 10*sqrt(lam)) where the neglected left-tail mass
    is below double precision.
    """
    u = np.asarray(u, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if u.shape != lam.shape:
        raise ValueError("u and lam must have the same shape")
    shape = u.shape
    uf = np.minimum(u.ravel(), 1.0 - 1e-16)
    lf = lam.ravel()

    k = np.zeros(uf.size, dtype=np.int64)
    pmf = np.exp(-lf)
    big = lf > _POIS_DIRECT_LAM
    if big.any():
        k0 = np.floor(lf[big] - 10.0 * np.sqrt(lf[big])).astype(np.int64)
        k0 = np.maximum(k0, 0)
        from scipy.special import gammaln

        pmf_big = np.exp(k0 * np.log(lf[big]) - lf[big] - gammaln(k0 + 1.0))
        k[big] = k0
        pmf[big] = pmf_big
    cdf = pmf.copy()

    open_idx = np.flatnonzero(cdf < uf)
    while open_idx.size:
        k[open_idx] += 1
        pmf[open_idx] *= lf[open_idx] / k[open_idx]
        cdf[open_idx] += pmf[open_idx]
        # pmf underflow past the right tail: cdf has saturated, stop there
        stalled = pmf[open_idx] == 0.0
        done = (cdf[open_idx] >= uf[open_idx]) | stalled
        open_idx = open_idx[~done]

    return k.reshape(shape)
