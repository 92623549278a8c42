# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-slot rate kernel; mirrors _kernels_py.slot_rates exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport log2


def slot_rates(double[:, ::1] gain, cnp.int64_t[:, ::1] owner, double[::1] power,
               double noise, double bandwidth, bint include_interference=True):
    cdef Py_ssize_t beam_count = owner.shape[0]
    cdef Py_ssize_t sub_count = owner.shape[1]
    rates_arr = np.zeros((beam_count, sub_count))
    sinr_arr = np.zeros((beam_count, sub_count))
    cdef double[:, ::1] rates = rates_arr
    cdef double[:, ::1] sinr = sinr_arr
    cdef Py_ssize_t q, k, q2
    cdef cnp.int64_t n, n2
    cdef double per_sub, signal, interference, s

    for q in range(beam_count):
        per_sub = power[q] / sub_count
        for k in range(sub_count):
            n = owner[q, k]
            if n < 0:
                continue
            signal = gain[q, n] * per_sub
            interference = 0.0
            if include_interference:
                for q2 in range(beam_count):
                    if q2 == q:
                        continue
                    n2 = owner[q2, k]
                    if n2 < 0:
                        continue
                    interference += gain[q2, n] * (power[q2] / sub_count)
            s = signal / (interference + noise)
            sinr[q, k] = s
            rates[q, k] = bandwidth * log2(1.0 + s)
    return rates_arr, sinr_arr
