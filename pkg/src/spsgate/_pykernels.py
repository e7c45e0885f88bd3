"""numpy implementations of the compiled kernels, used when the extension is absent."""

import numpy as np


def _bin_index(d, half, width):
    return np.where(d >= 0, (d + half) // width, -((-d + half) // width))


def correlate_counts(a, b, window, width):
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    half = width // 2
    nbins = (window + half) // width
    counts = np.zeros(2 * nbins + 1, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return counts
    lo = np.searchsorted(b, a - window, side="left")
    hi = np.searchsorted(b, a + window, side="right")
    span = hi - lo
    # walk the m-th partner of every start tag at once
    for m in range(int(span.max())):
        sel = np.flatnonzero(span > m)
        d = b[lo[sel] + m] - a[sel]
        counts += np.bincount(_bin_index(d, half, width) + nbins, minlength=counts.size)
    return counts


def deadtime_mask(ticks, dead):
    ticks = np.asarray(ticks, dtype=np.int64)
    keep = np.ones(ticks.size, dtype=bool)
    if ticks.size < 2 or dead <= 0:
        return keep
    if np.all(np.diff(ticks) >= dead):
        return keep
    last = ticks[0]
    for i in range(1, ticks.size):
        t = ticks[i]
        if t - last >= dead:
            last = t
        else:
            keep[i] = False
    return keep
