# cython: language_level=3
"""Compiled unscented Kalman filter loop.

Same algorithm as `_ukf_py.run_filter`, with the per-step linear algebra
unrolled into C loops to avoid Python dispatch overhead on small matrices.
Summation order differs from BLAS, so results match the reference to
rounding accumulation, not bit-for-bit.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

# Shared with the reference kernel so callers need only one except clause.
from beamobs._ukf_py import FilterNumericsError


cdef int _cholesky(double[:, ::1] A, double[:, ::1] L, int n) nogil:
    """Lower Cholesky of A into L; returns 0 on success, -1 on failure."""
    cdef int i, j, k
    cdef double acc
    for i in range(n):
        for j in range(n):
            L[i, j] = 0.0
    for j in range(n):
        acc = A[j, j]
        for k in range(j):
            acc -= L[j, k] * L[j, k]
        if acc <= 0.0:
            return -1
        L[j, j] = acc ** 0.5
        for i in range(j + 1, n):
            acc = A[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            L[i, j] = acc / L[j, j]
    return 0


cdef int _factor_with_jitter(double[:, ::1] P, double[:, ::1] L,
                             double[:, ::1] scratch, int n) nogil:
    """Mirror of the reference jitter policy; returns 0 ok, -1 abort."""
    cdef int i, j
    cdef double trace = 0.0, jitter
    cdef bint all_zero = True
    if _cholesky(P, L, n) == 0:
        return 0
    for i in range(n):
        trace += P[i, i]
        for j in range(n):
            if P[i, j] != 0.0:
                all_zero = False
    if all_zero:
        for i in range(n):
            for j in range(n):
                L[i, j] = 0.0
        return 0
    jitter = 1e-12 * trace / n
    for i in range(n):
        for j in range(n):
            scratch[i, j] = P[i, j]
        scratch[i, i] += jitter
    return _cholesky(scratch, L, n)


cdef void _sigma_points(double[::1] mean, double[:, ::1] L, double gamma,
                        double[:, ::1] points, int n) nogil:
    cdef int i, j
    for j in range(n):
        points[0, j] = mean[j]
    for i in range(n):
        for j in range(n):
            points[1 + i, j] = mean[j] + gamma * L[j, i]
            points[1 + n + i, j] = mean[j] - gamma * L[j, i]


def run_filter(double[:, ::1] M, double[:, ::1] C, double[:, ::1] Q,
               double[:, ::1] R, double[:, ::1] measurements,
               double[::1] mean0, double[:, ::1] P0,
               double alpha, double beta, double kappa_u):
    """Filter a measurement sequence; returns (means, covariances)."""
    cdef int n = mean0.shape[0]
    cdef int p = C.shape[0]
    cdef int ns = 2 * n + 1
    cdef int K = measurements.shape[0]
    cdef double lam = alpha * alpha * (n + kappa_u) - n
    cdef double cfac = n + lam
    if cfac <= 0.0:
        raise ValueError("alpha^2 (n + kappa_u) must be positive")
    cdef double gamma = cfac ** 0.5

    weights_m = np.full(ns, 1.0 / (2.0 * cfac))
    weights_c = weights_m.copy()
    weights_m[0] = lam / cfac
    weights_c[0] = lam / cfac + (1.0 - alpha * alpha + beta)
    cdef double[::1] wm = weights_m
    cdef double[::1] wc = weights_c

    means_out = np.empty((K + 1, n))
    covs_out = np.empty((K + 1, n, n))
    cdef double[:, ::1] means = means_out
    cdef double[:, :, ::1] covs = covs_out

    mean_arr = np.array(mean0, dtype=np.float64)
    P_arr = np.array(P0, dtype=np.float64)
    cdef double[::1] mean = mean_arr
    cdef double[:, ::1] P = P_arr

    L_arr = np.zeros((n, n)); scratch_arr = np.zeros((n, n))
    X_arr = np.zeros((ns, n)); Xp_arr = np.zeros((ns, n))
    mp_arr = np.zeros(n); Pp_arr = np.zeros((n, n)); sym_arr = np.zeros((n, n))
    Y_arr = np.zeros((ns, p)); yp_arr = np.zeros(p)
    S_arr = np.zeros((p, p)); Ls_arr = np.zeros((p, p))
    Pxy_arr = np.zeros((n, p)); gain_arr = np.zeros((n, p))
    tmp_np_arr = np.zeros((n, p)); col_arr = np.zeros(p)
    cdef double[:, ::1] L = L_arr
    cdef double[:, ::1] scratch = scratch_arr
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] Xp = Xp_arr
    cdef double[::1] mp = mp_arr
    cdef double[:, ::1] Pp = Pp_arr
    cdef double[:, ::1] sym = sym_arr
    cdef double[:, ::1] Y = Y_arr
    cdef double[::1] yp = yp_arr
    cdef double[:, ::1] S = S_arr
    cdef double[:, ::1] Ls = Ls_arr
    cdef double[:, ::1] Pxy = Pxy_arr
    cdef double[:, ::1] gain = gain_arr
    cdef double[:, ::1] tmp_np = tmp_np_arr
    cdef double[::1] col = col_arr

    cdef int k, s, i, j, q
    cdef double acc
    cdef int status

    for j in range(n):
        means[0, j] = mean[j]
        for i in range(n):
            covs[0, j, i] = P[j, i]

    for k in range(K):
        with nogil:
            status = _factor_with_jitter(P, L, scratch, n)
        if status != 0:
            raise FilterNumericsError(f"covariance factorization failed at step {k + 1}")
        with nogil:
            _sigma_points(mean, L, gamma, X, n)
            # predict sigma points through the transition matrix
            for s in range(ns):
                for i in range(n):
                    acc = 0.0
                    for j in range(n):
                        acc += M[i, j] * X[s, j]
                    Xp[s, i] = acc
            for i in range(n):
                acc = 0.0
                for s in range(ns):
                    acc += wm[s] * Xp[s, i]
                mp[i] = acc
            for i in range(n):
                for j in range(n):
                    acc = Q[i, j]
                    for s in range(ns):
                        acc += wc[s] * (Xp[s, i] - mp[i]) * (Xp[s, j] - mp[j])
                    Pp[i, j] = acc
            for i in range(n):
                for j in range(n):
                    sym[i, j] = 0.5 * (Pp[i, j] + Pp[j, i])
            for i in range(n):
                for j in range(n):
                    Pp[i, j] = sym[i, j]
            status = _factor_with_jitter(Pp, L, scratch, n)
        if status != 0:
            raise FilterNumericsError(f"predicted covariance factorization failed at step {k + 1}")
        with nogil:
            _sigma_points(mp, L, gamma, X, n)
            for s in range(ns):
                for q in range(p):
                    acc = 0.0
                    for j in range(n):
                        acc += C[q, j] * X[s, j]
                    Y[s, q] = acc
            for q in range(p):
                acc = 0.0
                for s in range(ns):
                    acc += wm[s] * Y[s, q]
                yp[q] = acc
            for i in range(p):
                for j in range(p):
                    acc = R[i, j]
                    for s in range(ns):
                        acc += wc[s] * (Y[s, i] - yp[i]) * (Y[s, j] - yp[j])
                    S[i, j] = acc
            for i in range(p):
                for j in range(i):
                    acc = 0.5 * (S[i, j] + S[j, i])
                    S[i, j] = acc
                    S[j, i] = acc
            for i in range(n):
                for q in range(p):
                    acc = 0.0
                    for s in range(ns):
                        acc += wc[s] * (X[s, i] - mp[i]) * (Y[s, q] - yp[q])
                    Pxy[i, q] = acc
            status = _cholesky(S, Ls, p)
        if status != 0:
            raise FilterNumericsError(f"innovation covariance not positive definite at step {k + 1}")
        with nogil:
            # gain solves S gain^T = Pxy^T column by column
            for i in range(n):
                for q in range(p):
                    acc = Pxy[i, q]
                    for j in range(q):
                        acc -= Ls[q, j] * col[j]
                    col[q] = acc / Ls[q, q]
                for q in range(p - 1, -1, -1):
                    acc = col[q]
                    for j in range(q + 1, p):
                        acc -= Ls[j, q] * gain[i, j]
                    gain[i, q] = acc / Ls[q, q]
            for i in range(n):
                acc = 0.0
                for q in range(p):
                    acc += gain[i, q] * (measurements[k, q] - yp[q])
                mean[i] = mp[i] + acc
            for i in range(n):
                for q in range(p):
                    acc = 0.0
                    for j in range(p):
                        acc += gain[i, j] * S[j, q]
                    tmp_np[i, q] = acc
            for i in range(n):
                for j in range(n):
                    acc = Pp[i, j]
                    for q in range(p):
                        acc -= tmp_np[i, q] * gain[j, q]
                    sym[i, j] = acc
            for i in range(n):
                for j in range(n):
                    P[i, j] = 0.5 * (sym[i, j] + sym[j, i])
            for j in range(n):
                means[k + 1, j] = mean[j]
                for i in range(n):
                    covs[k + 1, j, i] = P[j, i]

    return means_out, covs_out
