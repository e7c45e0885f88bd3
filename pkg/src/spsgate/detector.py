"""SPAD detection, 4 ps time tagging, start-stop histograms and pair correlation."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from ._rng import make_rng
from .histogram import CorrelationHistogram, LifetimeHistogram

TICK_PS = 4
MAGIC = b"SPSLTTAG"
VERSION = 1
HEADER = struct.Struct("<8sI")
RECORD = np.dtype([("ticks", "<u8"), ("channel", "u1")])
FWHM_PER_SIGMA = 2.355


class TimeTagFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SpadSpec:
    efficiency: float
    jitter_sigma_ps: float
    dead_time_ps: float = 0.0
    dark_rate_hz: float = 0.0

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise ValueError("efficiency must lie in [0, 1]")
        if not (self.jitter_sigma_ps >= 0 and self.dead_time_ps >= 0 and self.dark_rate_hz >= 0):
            raise ValueError("jitter, dead time and dark rate must be >= 0")

    @classmethod
    def preset(cls, name: str) -> "SpadSpec":
        """``thick`` (12.5 %, 700 ps FWHM) or ``red_enhanced`` (6 %, 100 ps FWHM)."""
        try:
            eff, fwhm = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown SPAD preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(eff, fwhm / FWHM_PER_SIGMA)


PRESETS = {"thick": (0.125, 700.0), "red_enhanced": (0.06, 100.0)}


@dataclass
class TimeTags:
    """Detector clicks as 4 ps ticks, sorted by (ticks, channel)."""

    ticks: np.ndarray
    channel: np.ndarray

    def __post_init__(self):
        self.ticks = np.asarray(self.ticks, dtype=np.uint64)
        self.channel = np.asarray(self.channel, dtype=np.uint8)
        if self.ticks.shape != self.channel.shape:
            raise ValueError("ticks and channel must have equal length")

    def __len__(self):
        return int(self.ticks.size)

    def __eq__(self, other):
        return (isinstance(other, TimeTags) and np.array_equal(self.ticks, other.ticks)
                and np.array_equal(self.channel, other.channel))

    @classmethod
    def merge(cls, *parts: "TimeTags") -> "TimeTags":
        ticks = np.concatenate([p.ticks for p in parts]) if parts else np.empty(0, np.uint64)
        chan = np.concatenate([p.channel for p in parts]) if parts else np.empty(0, np.uint8)
        order = np.lexsort((chan, ticks))
        return cls(ticks[order], chan[order])

    def for_channel(self, channel: int) -> np.ndarray:
        return self.ticks[self.channel == channel].astype(np.int64)

    @property
    def channels(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.channel))

    def to_bytes(self) -> bytes:
        rec = np.empty(len(self), dtype=RECORD)
        rec["ticks"], rec["channel"] = self.ticks, self.channel
        return HEADER.pack(MAGIC, VERSION) + rec.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TimeTags":
        if len(data) == 0:
            raise TimeTagFormatError("empty time-tag file")
        if len(data) < HEADER.size:
            raise TimeTagFormatError(f"truncated header at byte offset {len(data)}")
        magic, version = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise TimeTagFormatError(f"bad magic {magic!r} at byte offset 0")
        if version != VERSION:
            raise TimeTagFormatError(f"unsupported version {version} at byte offset 8")
        body = len(data) - HEADER.size
        n, rest = divmod(body, RECORD.itemsize)
        if rest:
            raise TimeTagFormatError(
                f"truncated record at byte offset {HEADER.size + n * RECORD.itemsize}")
        rec = np.frombuffer(data, dtype=RECORD, offset=HEADER.size, count=n)
        return cls(rec["ticks"].copy(), rec["channel"].copy())

    def write(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path) -> "TimeTags":
        return cls.from_bytes(Path(path).read_bytes())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ticks", "channel"])
            w.writerows(zip(self.ticks.tolist(), self.channel.tolist()))

    @classmethod
    def read_csv(cls, path) -> "TimeTags":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            if next(r, None) != ["ticks", "channel"]:
                raise TimeTagFormatError("CSV header must be 'ticks,channel'")
            rows = [(int(a), int(b)) for a, b in r]
        arr = np.array(rows, dtype=np.int64).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])


def quantize(t_ps) -> np.ndarray:
    """Times to 4 ps ticks, rounding halves up; negative times clip to 0."""
    ticks = np.floor(np.asarray(t_ps, dtype=float) / TICK_PS + 0.5)
    return np.maximum(ticks, 0).astype(np.int64)


def detect(events_ps, spad: SpadSpec, seed: int, channel: int = 0,
           duration_ps: float | None = None) -> TimeTags:
    """Thin, jitter, quantise and dead-time filter one port's photon arrivals."""
    rng = make_rng(seed, "detect", channel)
    t = np.asarray(events_ps, dtype=float)
    t = t[rng.random(t.size) < spad.efficiency]
    if spad.jitter_sigma_ps > 0:
        t = t + rng.normal(0.0, spad.jitter_sigma_ps, t.size)
    if spad.dark_rate_hz > 0 and duration_ps:
        n_dark = rng.poisson(spad.dark_rate_hz * duration_ps * 1e-12)
        t = np.concatenate([t, rng.uniform(0.0, duration_ps, n_dark)])
    ticks = np.sort(quantize(t))
    if spad.dead_time_ps > 0:
        ticks = ticks[kernels.deadtime_mask(ticks, math.ceil(spad.dead_time_ps / TICK_PS))]
    return TimeTags(ticks, np.full(ticks.size, channel, dtype=np.uint8))


def _as_ticks(tags) -> np.ndarray:
    if isinstance(tags, TimeTags):
        return tags.ticks.astype(np.int64)
    return np.ascontiguousarray(tags, dtype=np.int64)


def start_stop_histogram(trigger_times_ps, tags, bin_ps: float, range_ps: float | None = None,
                         offset_ps: float = 0.0) -> LifetimeHistogram:
    """Histogram of (first tag after a trigger) - trigger, one stop per trigger.

    Each trigger opens a window starting ``offset_ps`` before it and closing
    at the next trigger's window; ``range_ps`` defaults to the smallest
    trigger spacing.
    """
    trig = np.asarray(trigger_times_ps, dtype=float) - offset_ps
    stops = _as_ticks(tags).astype(float) * TICK_PS
    if range_ps is None:
        range_ps = float(np.min(np.diff(trig))) if trig.size > 1 else 1e6
    nbins = int(math.ceil(range_ps / bin_ps))
    if trig.size == 0 or stops.size == 0:
        return LifetimeHistogram(bin_ps, np.zeros(nbins, np.int64), -offset_ps)
    j = np.searchsorted(stops, trig, side="left")
    ok = j < stops.size
    nxt = np.r_[trig[1:], np.inf]
    delay = np.full(trig.size, np.nan)
    delay[ok] = stops[j[ok]] - trig[ok]
    ok &= (trig + delay) < nxt
    ok &= delay < range_ps
    idx = (delay[ok] // bin_ps).astype(np.int64)
    counts = np.bincount(idx, minlength=nbins)[:nbins]
    return LifetimeHistogram(bin_ps, counts, -offset_ps)


def _check_bin(bin_ps):
    if bin_ps <= 0 or bin_ps % TICK_PS:
        raise ValueError(f"bin_ps must be a positive multiple of {TICK_PS} ps")
    return int(bin_ps) // TICK_PS


def correlate(tags_a, tags_b, bin_ps: float, window_ps: float) -> CorrelationHistogram:
    """Count every pair with ``|t_b - t_a| <= window_ps`` into bins of ``bin_ps``."""
    width = _check_bin(bin_ps)
    window = int(window_ps // TICK_PS)
    counts = kernels.correlate_counts(_as_ticks(tags_a), _as_ticks(tags_b), window, width)
    return CorrelationHistogram(bin_ps, counts, (counts.size - 1) // 2)


def correlate_blocked(tags_a, tags_b, bin_ps: float, window_ps: float,
                      n_blocks: int) -> CorrelationHistogram:
    """:func:`correlate` computed over contiguous blocks of ``tags_a`` and summed."""
    a, b = _as_ticks(tags_a), _as_ticks(tags_b)
    width = _check_bin(bin_ps)
    window = int(window_ps // TICK_PS)
    total = None
    for part in np.array_split(a, max(1, n_blocks)):
        if part.size:
            lo = np.searchsorted(b, part[0] - window, side="left")
            hi = np.searchsorted(b, part[-1] + window, side="right")
            c = kernels.correlate_counts(part, b[lo:hi], window, width)
        else:
            c = kernels.correlate_counts(part, b[:0], window, width)
        total = c if total is None else total + c
    return CorrelationHistogram(bin_ps, total, (total.size - 1) // 2)
