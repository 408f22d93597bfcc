# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels (BLAS/LAPACK through scipy's Cython bindings).

Row-major n x n buffers are handed to column-major BLAS as their transposes,
so ``C = A B`` is computed as ``dgemm(B, A)``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, ceil, log2, pow
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy, memset
from scipy.linalg.cython_blas cimport dgemm, dgemv
from scipy.linalg.cython_lapack cimport dgesv

cnp.import_array()

cdef double[7] PADE6 = [1.0, 1.0 / 2.0, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0,
                        1.0 / 15840.0, 1.0 / 665280.0]
cdef double THETA = 0.5


cdef inline void _matmul(int n, double* a, double* b, double* c) noexcept nogil:
    # c = a @ b, all row-major
    cdef char tr = b'N'
    cdef double one = 1.0, zero = 0.0
    dgemm(&tr, &tr, &n, &n, &n, &one, b, &n, a, &n, &zero, c, &n)


cdef inline void _matvec(int n, double* a, double* x, double* y) noexcept nogil:
    # y = a @ x, a row-major
    cdef char tr = b'T'
    cdef double one = 1.0, zero = 0.0
    cdef int inc = 1
    dgemv(&tr, &n, &n, &one, a, &n, x, &inc, &zero, y, &inc)


cdef struct Work:
    int n
    double* a
    double* a2
    double* a4
    double* a6
    double* u
    double* v
    double* tmp
    double* r
    int* ipiv


cdef int _work_alloc(Work* w, int n) noexcept nogil:
    cdef size_t sz = <size_t>n * n * sizeof(double)
    w.n = n
    w.a = <double*>malloc(sz)
    w.a2 = <double*>malloc(sz)
    w.a4 = <double*>malloc(sz)
    w.a6 = <double*>malloc(sz)
    w.u = <double*>malloc(sz)
    w.v = <double*>malloc(sz)
    w.tmp = <double*>malloc(sz)
    w.r = <double*>malloc(sz)
    w.ipiv = <int*>malloc(n * sizeof(int))
    if (w.a == NULL or w.a2 == NULL or w.a4 == NULL or w.a6 == NULL or w.u == NULL
            or w.v == NULL or w.tmp == NULL or w.r == NULL or w.ipiv == NULL):
        return -1
    return 0


cdef void _work_free(Work* w) noexcept nogil:
    free(w.a); free(w.a2); free(w.a4); free(w.a6)
    free(w.u); free(w.v); free(w.tmp); free(w.r); free(w.ipiv)


cdef int _expm(Work* w, double* f, double tau, double* out) noexcept nogil:
    """out = exp(f * tau); returns LAPACK info (0 on success)."""
    cdef int n = w.n, nn = w.n * w.n
    cdef int i, j, s, info = 0
    cdef double norm = 0.0, col, scale
    cdef double* swap
    for j in range(n):
        col = 0.0
        for i in range(n):
            col += fabs(f[i * n + j])
        if col > norm:
            norm = col
    norm *= fabs(tau)
    s = 0
    if norm > THETA:
        s = <int>ceil(log2(norm / THETA))
    scale = tau / pow(2.0, s)
    for i in range(nn):
        w.a[i] = f[i] * scale
    _matmul(n, w.a, w.a, w.a2)
    _matmul(n, w.a2, w.a2, w.a4)
    _matmul(n, w.a4, w.a2, w.a6)
    for i in range(nn):
        w.tmp[i] = PADE6[3] * w.a2[i] + PADE6[5] * w.a4[i]
        w.v[i] = PADE6[2] * w.a2[i] + PADE6[4] * w.a4[i] + PADE6[6] * w.a6[i]
    for i in range(n):
        w.tmp[i * n + i] += PADE6[1]
        w.v[i * n + i] += PADE6[0]
    _matmul(n, w.a, w.tmp, w.u)
    # denominator v - u into tmp, numerator v + u into out
    for i in range(nn):
        w.tmp[i] = w.v[i] - w.u[i]
        out[i] = w.v[i] + w.u[i]
    # the factors commute, so the transposed solve yields the row-major result
    dgesv(&n, &n, w.tmp, &n, w.ipiv, out, &n, &info)
    if info != 0:
        return info
    for i in range(s):
        _matmul(n, out, out, w.r)
        memcpy(out, w.r, nn * sizeof(double))
    return 0


def expm_pade(a):
    """``exp(a)`` for a square float64 array (no scaling by t)."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef int n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError("square matrix required")
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((n, n))
    if n == 0:
        return out
    cdef Work w
    cdef int info
    if _work_alloc(&w, n) != 0:
        _work_free(&w)
        raise MemoryError()
    with nogil:
        info = _expm(&w, &A[0, 0], 1.0, &out[0, 0])
    _work_free(&w)
    if info != 0:
        raise ArithmeticError(f"singular Pade denominator (info={info})")
    return out


def propagate(F, J, x0, jumps, grid, phi_dt, double dt):
    """Exact flow/jump propagation sampled on ``grid``.

    Same contract as ``stochreg._fallback.propagate``.
    """
    cdef cnp.ndarray[double, ndim=2, mode="c"] Fa = np.ascontiguousarray(F, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ja = np.ascontiguousarray(J, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Pa = np.ascontiguousarray(phi_dt, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ga = np.ascontiguousarray(grid, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ja = np.ascontiguousarray(jumps, dtype=np.float64).reshape(-1)
    cdef int d = Fa.shape[0]
    cdef Py_ssize_t m = ga.shape[0]
    cdef Py_ssize_t nj = ja.shape[0]
    if Fa.shape[1] != d or Ja.shape[0] != d or Ja.shape[1] != d or Pa.shape[0] != d or Pa.shape[1] != d:
        raise ValueError("F, J and phi_dt must be square with matching size")
    cdef cnp.ndarray[double, ndim=2, mode="c"] states = np.empty((m, d))
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] counts = np.zeros(m, dtype=np.int64)
    x_arr = np.array(x0, dtype=np.float64).reshape(-1)
    if x_arr.shape[0] != d:
        raise ValueError("x0 has the wrong dimension")
    states[0, :] = x_arr
    if m == 1 or d == 0:
        return states, counts

    cdef Work w
    if _work_alloc(&w, d) != 0:
        _work_free(&w)
        raise MemoryError()
    cdef double* x = <double*>malloc(d * sizeof(double))
    cdef double* y = <double*>malloc(d * sizeof(double))
    cdef double* e = <double*>malloc(<size_t>d * d * sizeof(double))
    cdef double* swap
    cdef Py_ssize_t i, k = 0
    cdef int info = 0
    cdef double t, t1, tau, tol
    tol = 1e-12 * (dt if dt > 1.0 else 1.0)
    memcpy(x, &states[0, 0], d * sizeof(double))
    with nogil:
        while k < nj and ja[k] <= ga[0]:
            k += 1
        for i in range(1, m):
            t = ga[i - 1]
            t1 = ga[i]
            if k < nj and ja[k] <= t1:
                while k < nj and ja[k] <= t1:
                    tau = ja[k] - t
                    if tau > 0.0:
                        info = _expm(&w, &Fa[0, 0], tau, e)
                        if info != 0:
                            break
                        _matvec(d, e, x, y)
                        swap = x; x = y; y = swap
                    _matvec(d, &Ja[0, 0], x, y)
                    swap = x; x = y; y = swap
                    t = ja[k]
                    counts[i] += 1
                    k += 1
                if info != 0:
                    break
                tau = t1 - t
                if tau > 0.0:
                    info = _expm(&w, &Fa[0, 0], tau, e)
                    if info != 0:
                        break
                    _matvec(d, e, x, y)
                    swap = x; x = y; y = swap
            elif fabs((t1 - t) - dt) <= tol:
                _matvec(d, &Pa[0, 0], x, y)
                swap = x; x = y; y = swap
            else:
                info = _expm(&w, &Fa[0, 0], t1 - t, e)
                if info != 0:
                    break
                _matvec(d, e, x, y)
                swap = x; x = y; y = swap
            memcpy(&states[i, 0], x, d * sizeof(double))
    free(x); free(y); free(e)
    _work_free(&w)
    if info != 0:
        raise ArithmeticError(f"singular Pade denominator (info={info})")
    return states, counts
