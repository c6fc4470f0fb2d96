# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend: tight loops over uint64 ring elements."""
import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "cython"

ctypedef unsigned long long u64
ctypedef long long i64


def mul_mod(cnp.ndarray a_arr, cnp.ndarray b_arr):
    """Elementwise product mod 2^64."""
    cdef u64[::1] a = np.ascontiguousarray(a_arr, dtype=np.uint64)
    cdef u64[::1] b = np.ascontiguousarray(b_arr, dtype=np.uint64)
    cdef Py_ssize_t n = a.shape[0]
    out_arr = np.empty(n, dtype=np.uint64)
    cdef u64[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = a[i] * b[i]
    return out_arr


def powers_mod(cnp.ndarray x_arr, int kmax):
    """Stack of elementwise powers x^0 .. x^kmax mod 2^64, shape (kmax+1, n)."""
    cdef u64[::1] x = np.ascontiguousarray(x_arr, dtype=np.uint64)
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty((kmax + 1, n), dtype=np.uint64)
    cdef u64[:, ::1] out = out_arr
    cdef Py_ssize_t i
    cdef int k
    with nogil:
        for i in range(n):
            out[0, i] = 1
        for k in range(1, kmax + 1):
            for i in range(n):
                out[k, i] = out[k - 1, i] * x[i]
    return out_arr


def matmul_mod(cnp.ndarray a_arr, cnp.ndarray b_arr):
    """Matrix product mod 2^64 for 2-D uint64 operands."""
    cdef u64[:, ::1] a = np.ascontiguousarray(a_arr, dtype=np.uint64)
    cdef u64[:, ::1] b = np.ascontiguousarray(b_arr, dtype=np.uint64)
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    if b.shape[0] != k:
        raise ValueError("matmul_mod shape mismatch")
    out_arr = np.zeros((m, n), dtype=np.uint64)
    cdef u64[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, t
    cdef u64 aik
    with nogil:
        for i in range(m):
            for t in range(k):
                aik = a[i, t]
                for j in range(n):
                    out[i, j] += aik * b[t, j]
    return out_arr


def trunc_shift(cnp.ndarray x_arr, int bits, bint mirror):
    """Per-party local truncation; see the numpy backend for the contract."""
    cdef u64[::1] x = np.ascontiguousarray(x_arr, dtype=np.uint64)
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.uint64)
    cdef u64[::1] out = out_arr
    cdef Py_ssize_t i
    cdef i64 v
    with nogil:
        if bits == 0:
            for i in range(n):
                out[i] = x[i]
        elif mirror:
            for i in range(n):
                v = <i64> (0 - x[i])
                out[i] = 0 - (<u64> (v >> bits))
        else:
            for i in range(n):
                v = <i64> x[i]
                out[i] = <u64> (v >> bits)
    return out_arr
