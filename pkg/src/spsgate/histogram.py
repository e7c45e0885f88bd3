"""Binned coincidence and start-stop histograms."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


def _write_rows(fh, header, rows):
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue() if fh is None else ""


def _window_area(counts, lo_edge, bin_ps, a, b):
    """Counts in ``[a, b]`` with partially covered bins weighted by overlap.

    Bin ``i`` spans ``[lo_edge + i bin, lo_edge + (i + 1) bin]``.
    """
    edges = lo_edge + bin_ps * np.arange(counts.size + 1)
    left = np.clip(edges[:-1], a, b)
    right = np.clip(edges[1:], a, b)
    frac = (right - left) / bin_ps
    return float(np.dot(frac, counts))


@dataclass
class CorrelationHistogram:
    """Coincidence counts versus delay ``tau = t_b - t_a``.

    Bin ``k`` (``counts[k + offset]``) is centred on ``k * bin_ps``.
    """

    bin_ps: float
    counts: np.ndarray
    offset: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")

    @property
    def bin_centers_ps(self) -> np.ndarray:
        return (np.arange(self.counts.size) - self.offset) * self.bin_ps

    @property
    def span_ps(self) -> float:
        return (self.offset + 0.5) * self.bin_ps

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def count_at(self, tau_ps: float) -> int:
        k = int(np.round(tau_ps / self.bin_ps)) + self.offset
        return int(self.counts[k]) if 0 <= k < self.counts.size else 0

    def area(self, center_ps: float, half_width_ps: float) -> float:
        lo_edge = -(self.offset + 0.5) * self.bin_ps
        return _window_area(self.counts, lo_edge, self.bin_ps,
                            center_ps - half_width_ps, center_ps + half_width_ps)

    def mirrored(self) -> "CorrelationHistogram":
        return CorrelationHistogram(self.bin_ps, self.counts[::-1].copy(), self.counts.size - 1 - self.offset,
                                    dict(self.metadata))

    def __add__(self, other: "CorrelationHistogram") -> "CorrelationHistogram":
        if self.bin_ps != other.bin_ps or self.offset != other.offset:
            raise ValueError("histograms have different binning")
        return CorrelationHistogram(self.bin_ps, self.counts + other.counts, self.offset, dict(self.metadata))

    def to_csv(self, fh=None) -> str:
        rows = ((f"{c:.6g}", int(n)) for c, n in zip(self.bin_centers_ps, self.counts))
        return _write_rows(fh, ["bin_center_ps", "counts"], rows)


@dataclass
class LifetimeHistogram:
    """Start-stop delays; bin ``i`` spans ``[t0 + i bin, t0 + (i + 1) bin)``."""

    bin_ps: float
    counts: np.ndarray
    t0_ps: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)

    @property
    def bin_centers_ps(self) -> np.ndarray:
        return self.t0_ps + (np.arange(self.counts.size) + 0.5) * self.bin_ps

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, fh=None) -> str:
        rows = ((f"{c:.6g}", int(n)) for c, n in zip(self.bin_centers_ps, self.counts))
        return _write_rows(fh, ["bin_center_ps", "counts"], rows)
