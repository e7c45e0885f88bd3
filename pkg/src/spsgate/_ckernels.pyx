# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: pair correlation and dead-time filtering."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _bin_index(long long d, long long half, long long width) nogil:
    if d >= 0:
        return <Py_ssize_t>((d + half) // width)
    return -<Py_ssize_t>((-d + half) // width)


def correlate_counts(const long long[::1] a, const long long[::1] b,
                     long long window, long long width):
    """Histogram all differences ``b[j] - a[i]`` with ``|b[j] - a[i]| <= window``.

    Bins have ``width`` ticks and are centred on multiples of ``width``;
    the returned array is indexed by ``bin + nbins`` where
    ``nbins = (window + width // 2) // width``.
    """
    cdef long long half = width // 2
    cdef Py_ssize_t nbins = <Py_ssize_t>((window + half) // width)
    counts_arr = np.zeros(2 * nbins + 1, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    cdef Py_ssize_t i, j, start = 0
    cdef long long ai, d
    with nogil:
        for i in range(na):
            ai = a[i]
            while start < nb and b[start] < ai - window:
                start += 1
            j = start
            while j < nb:
                d = b[j] - ai
                if d > window:
                    break
                counts[_bin_index(d, half, width) + nbins] += 1
                j += 1
    return counts_arr


def deadtime_mask(const long long[::1] ticks, long long dead):
    """Non-paralysable dead time: keep a tag only if it is at least ``dead``
    ticks after the previously kept tag."""
    cdef Py_ssize_t n = ticks.shape[0], i
    keep_arr = np.zeros(n, dtype=np.bool_)
    cdef cnp.npy_bool[::1] keep = keep_arr
    cdef long long last
    if n == 0:
        return keep_arr
    keep[0] = 1
    last = ticks[0]
    with nogil:
        for i in range(1, n):
            if ticks[i] - last >= dead:
                keep[i] = 1
                last = ticks[i]
    return keep_arr
