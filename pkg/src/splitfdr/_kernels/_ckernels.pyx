# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the numpy kernels in ``_pykernels``.

Same contracts and control flow; the batched Lloyd pass is fused so the data
matrix is streamed once per iteration for all live restarts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, floor, lgamma, log, sqrt

cnp.import_array()

cdef double _POIS_DIRECT_LAM = 500.0


cdef inline double _dot(const double* a, const double* b, Py_ssize_t p) nogil:
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t j = 0
    cdef Py_ssize_t p4 = p - (p & 3)
    while j < p4:
        s0 += a[j] * b[j]
        s1 += a[j + 1] * b[j + 1]
        s2 += a[j + 2] * b[j + 2]
        s3 += a[j + 3] * b[j + 3]
        j += 4
    while j < p:
        s0 += a[j] * b[j]
        j += 1
    return (s0 + s1) + (s2 + s3)


def lloyd2_batch(object X_in, object inits_in, int max_iter=100):
    """k=2 Lloyd iterations to convergence for a batch of initializations.

    See ``_pykernels.lloyd2_batch`` for the contract.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] X = \
        np.ascontiguousarray(X_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] C = \
        np.array(inits_in, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t R = C.shape[0]

    cdef cnp.ndarray[cnp.float64_t, ndim=1] rownorm = np.einsum("ij,ij->i", X, X)
    cdef double sumsq = float(rownorm.sum())
    cdef cnp.ndarray[cnp.float64_t, ndim=1] colsum = X.sum(axis=0)

    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] labels = \
        np.zeros((R, n), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] newlab = \
        np.zeros((R, n), dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] obj_hist = \
        np.full((R, max_iter), np.nan)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] n_assign = np.zeros(R, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] n_updates = np.zeros(R, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] active = np.ones(R, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] started = np.zeros(R, dtype=np.uint8)

    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] W = np.zeros((R, p))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] thr = np.zeros(R)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] S1 = np.zeros((R, p))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cnt1 = np.zeros(R, dtype=np.int64)

    cdef Py_ssize_t it, i, j, r, far, k_full
    cdef double proj, d, dmax, obj, s0sq, s1sq
    cdef const double* xrow
    cdef double* wrow
    cdef double* s1row
    cdef double* crow
    cdef Py_ssize_t n1, n0
    cdef bint lab, any_active, same

    for it in range(max_iter):
        any_active = False
        for r in range(R):
            if active[r]:
                any_active = True
                for j in range(p):
                    W[r, j] = C[r, 1, j] - C[r, 0, j]
                thr[r] = 0.5 * (_dot(&C[r, 1, 0], &C[r, 1, 0], p)
                                - _dot(&C[r, 0, 0], &C[r, 0, 0], p))
                for j in range(p):
                    S1[r, j] = 0.0
                cnt1[r] = 0
                n_assign[r] += 1
        if not any_active:
            break

        with nogil:
            for i in range(n):
                xrow = &X[i, 0]
                for r in range(R):
                    if not active[r]:
                        continue
                    proj = _dot(xrow, &W[r, 0], p)
                    lab = proj > thr[r]
                    newlab[r, i] = lab
                    if lab:
                        cnt1[r] += 1
                        s1row = &S1[r, 0]
                        for j in range(p):
                            s1row[j] += xrow[j]

        for r in range(R):
            if not active[r]:
                continue
            n1 = cnt1[r]
            if n1 == 0 or n1 == n:
                # all rows in one cluster: move the farthest row over
                k_full = 1 if n1 == n else 0
                crow = &C[r, k_full, 0]
                dmax = -1.0
                far = 0
                for i in range(n):
                    d = rownorm[i] - 2.0 * _dot(&X[i, 0], crow, p) \
                        + _dot(crow, crow, p)
                    if d > dmax:
                        dmax = d
                        far = i
                newlab[r, far] = 1 - newlab[r, far]
                if newlab[r, far]:
                    n1 += 1
                    for j in range(p):
                        S1[r, j] += X[far, j]
                else:
                    n1 -= 1
                    for j in range(p):
                        S1[r, j] -= X[far, j]

            if started[r]:
                same = True
                for i in range(n):
                    if newlab[r, i] != labels[r, i]:
                        same = False
                        break
                if same:
                    active[r] = 0
                    continue

            for i in range(n):
                labels[r, i] = newlab[r, i]
            started[r] = 1
            n0 = n - n1
            s1sq = _dot(&S1[r, 0], &S1[r, 0], p)
            s0sq = 0.0
            for j in range(p):
                d = colsum[j] - S1[r, j]
                s0sq += d * d
                C[r, 0, j] = d / n0
                C[r, 1, j] = S1[r, j] / n1
            obj = sumsq - (s0sq / n0 + s1sq / n1)
            obj_hist[r, n_updates[r]] = obj
            n_updates[r] += 1

    return np.asarray(labels), np.asarray(obj_hist), np.asarray(n_assign)


def poisson_quantile_matrix(object u_in, object lam_in):
    """Elementwise Poisson quantile by incremental pmf summation.

    See ``_pykernels.poisson_quantile_matrix`` for the contract.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = \
        np.ascontiguousarray(np.asarray(u_in, dtype=np.float64).ravel())
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lam = \
        np.ascontiguousarray(np.asarray(lam_in, dtype=np.float64).ravel())
    if u.shape[0] != lam.shape[0]:
        raise ValueError("u and lam must have the same shape")
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(u.shape[0], dtype=np.int64)

    cdef Py_ssize_t t, size = u.shape[0]
    cdef double uu, l, pmf, cdf
    cdef long k
    with nogil:
        for t in range(size):
            uu = u[t]
            if uu > 1.0 - 1e-16:
                uu = 1.0 - 1e-16
            l = lam[t]
            if l > _POIS_DIRECT_LAM:
                k = <long>floor(l - 10.0 * sqrt(l))
                if k < 0:
                    k = 0
                pmf = exp(k * log(l) - l - lgamma(k + 1.0))
            else:
                k = 0
                pmf = exp(-l)
            cdf = pmf
            while cdf < uu:
                k += 1
                pmf *= l / k
                cdf += pmf
                if pmf == 0.0:
                    break
            out[t] = k

    return np.asarray(out).reshape(np.asarray(u_in).shape)
