# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled kernels for residuals and Jacobians of sparse polynomial systems."""
import numpy as np

ctypedef long long i64


cdef inline double ipow(double x, i64 e) nogil:
    cdef double r = 1.0
    while e > 0:
        if e & 1:
            r *= x
        x *= x
        e >>= 1
    return r


def prepare(coef, term_row, term_ptr, fac_var, fac_exp, slot_nz):
    return (np.ascontiguousarray(coef, dtype=np.float64),
            np.ascontiguousarray(term_row, dtype=np.int64),
            np.ascontiguousarray(term_ptr, dtype=np.int64),
            np.ascontiguousarray(fac_var, dtype=np.int64),
            np.ascontiguousarray(fac_exp, dtype=np.int64),
            np.ascontiguousarray(slot_nz, dtype=np.int64))


def eval_polys(data, double[::1] x, double[::1] out):
    cdef const double[::1] coef = data[0]
    cdef const i64[::1] row = data[1]
    cdef const i64[::1] ptr = data[2]
    cdef const i64[::1] fvar = data[3]
    cdef const i64[::1] fexp = data[4]
    cdef Py_ssize_t t, f, nt = coef.shape[0]
    cdef double v
    with nogil:
        for t in range(out.shape[0]):
            out[t] = 0.0
        for t in range(nt):
            v = coef[t]
            for f in range(ptr[t], ptr[t + 1]):
                v *= ipow(x[fvar[f]], fexp[f])
            out[row[t]] += v


def jac_values(data, double[::1] x, double[::1] out):
    cdef const double[::1] coef = data[0]
    cdef const i64[::1] ptr = data[2]
    cdef const i64[::1] fvar = data[3]
    cdef const i64[::1] fexp = data[4]
    cdef const i64[::1] slot = data[5]
    cdef Py_ssize_t t, f, g, nt = coef.shape[0]
    cdef double d
    cdef i64 e
    with nogil:
        for t in range(out.shape[0]):
            out[t] = 0.0
        for t in range(nt):
            for f in range(ptr[t], ptr[t + 1]):
                e = fexp[f]
                d = coef[t] * e * ipow(x[fvar[f]], e - 1)
                for g in range(ptr[t], ptr[t + 1]):
                    if g != f:
                        d *= ipow(x[fvar[g]], fexp[g])
                out[slot[f]] += d
