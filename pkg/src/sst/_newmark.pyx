# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Newmark recurrence; mirrors ``_newmark_py.newmark_recurrence``."""
import numpy as np
cimport numpy as cnp


def newmark_recurrence(double[:, ::1] pp, double[:, ::1] q, double c0, double c2, double c3,
                       double dt, double gamma, u0, v0, a0):
    cdef Py_ssize_t steps = pp.shape[0]
    cdef Py_ssize_t n = pp.shape[1]
    cdef Py_ssize_t k, i, j
    cdef double acc, g0 = dt * (1.0 - gamma), g1 = dt * gamma
    u_arr = np.empty((steps, n))
    v_arr = np.empty((steps, n))
    a_arr = np.empty((steps, n))
    cdef double[:, ::1] u = u_arr
    cdef double[:, ::1] v = v_arr
    cdef double[:, ::1] a = a_arr
    cdef double[::1] u0v = np.ascontiguousarray(u0, dtype=np.float64)
    cdef double[::1] v0v = np.ascontiguousarray(v0, dtype=np.float64)
    cdef double[::1] a0v = np.ascontiguousarray(a0, dtype=np.float64)
    for i in range(n):
        u[0, i] = u0v[i]
        v[0, i] = v0v[i]
        a[0, i] = a0v[i]
    with nogil:
        for k in range(steps - 1):
            for i in range(n):
                acc = pp[k + 1, i]
                for j in range(n):
                    acc = acc + q[i, j] * u[k, j]
                for j in range(n):
                    acc = acc + q[i, n + j] * v[k, j]
                for j in range(n):
                    acc = acc + q[i, 2 * n + j] * a[k, j]
                u[k + 1, i] = acc
            for i in range(n):
                a[k + 1, i] = c0 * (u[k + 1, i] - u[k, i]) - c2 * v[k, i] - c3 * a[k, i]
                v[k + 1, i] = v[k, i] + g0 * a[k, i] + g1 * a[k + 1, i]
    return u_arr, v_arr, a_arr
