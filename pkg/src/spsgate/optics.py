"""Beamsplitter routing, the unbalanced Mach-Zehnder used for two-photon
interference, and the gated two-photon overlap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from ._rng import make_rng
from .emitter import Origin, PhotonStream
from .gate import QuadratureError, _quad

PORT_A, PORT_B = 0, 1
SHORT, LONG = 0, 1


@dataclass(frozen=True)
class BeamsplitterSpec:
    r: float = 0.5

    def __post_init__(self):
        if not 0 <= self.r <= 1:
            raise ValueError("reflectance must lie in [0, 1]")

    @property
    def t(self) -> float:
        return 1.0 - self.r


@dataclass(frozen=True)
class HomConfig:
    delta_t_ps: float = 2200.0
    epsilon: float = 0.0
    bs1: BeamsplitterSpec = BeamsplitterSpec()
    bs2: BeamsplitterSpec = BeamsplitterSpec()

    def __post_init__(self):
        if not self.delta_t_ps > 0:
            raise ValueError("delta_t_ps must be positive")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")


@dataclass(frozen=True)
class GatedWavepacket:
    """Emission-time envelope of one photon, optionally multiplied by a gate.

    ``gate_window`` is ``(centre_ps, sigma_ps)`` of a Gaussian intensity
    gate on the same clock as ``start_ps``; ``gate_floor`` is its
    extinction floor.
    """

    start_ps: float
    t1_ps: float
    alpha_per_ps: float = 0.0
    gate_window: tuple[float, float] | None = None
    gate_floor: float = 0.0

    def __post_init__(self):
        if not self.t1_ps > 0:
            raise ValueError("t1_ps must be positive")
        if not self.alpha_per_ps >= 0:
            raise ValueError("alpha_per_ps must be >= 0")

    def shifted(self, dt: float) -> "GatedWavepacket":
        gw = None if self.gate_window is None else (self.gate_window[0] + dt, self.gate_window[1])
        return GatedWavepacket(self.start_ps + dt, self.t1_ps, self.alpha_per_ps, gw, self.gate_floor)

    def envelope(self, t: float) -> float:
        if t < self.start_ps:
            return 0.0
        p = math.exp(-(t - self.start_ps) / self.t1_ps) / self.t1_ps
        if self.gate_window is not None:
            c, s = self.gate_window
            p *= max(math.exp(-(((t - c) / s) ** 2)), self.gate_floor)
        return p

    def support(self) -> tuple[float, float]:
        lo, hi = self.start_ps, self.start_ps + 60.0 * self.t1_ps
        if self.gate_window is not None and self.gate_floor == 0:
            c, s = self.gate_window
            lo, hi = max(lo, c - 9.0 * s), min(hi, c + 9.0 * s)
        return lo, hi

    def breakpoints(self) -> list[float]:
        pts = [self.start_ps]
        if self.gate_window is not None:
            c, s = self.gate_window
            pts += [c - 3 * s, c, c + 3 * s]
            if self.gate_floor > 0:
                w = s * math.sqrt(math.log(1.0 / self.gate_floor))
                pts += [c - w, c + w]
        return pts


def coherence_relation(t1_ps: float, t2star_ps: float) -> float:
    """Coherence time from radiative lifetime and pure-dephasing time."""
    if not (t1_ps > 0 and t2star_ps > 0):
        raise ValueError("t1_ps and t2star_ps must be positive")
    return 1.0 / (1.0 / (2.0 * t1_ps) + 1.0 / t2star_ps)


def overlap_closed_form(t1_ps: float, alpha_per_ps: float) -> float:
    """Ungated overlap ``1 / (1 + 2 alpha T1)``, equal to ``T2 / 2T1``."""
    return 1.0 / (1.0 + 2.0 * alpha_per_ps * t1_ps)


def _segments(lo, hi, points):
    inner = sorted(p for p in set(points) if lo < p < hi)
    edges = [lo] + inner + [hi]
    return list(zip(edges[:-1], edges[1:]))


def _integrate(fun, lo, hi, points, epsrel):
    return sum(_quad(fun, a, b, epsrel) for a, b in _segments(lo, hi, points))


def mean_overlap(w1: GatedWavepacket, w2: GatedWavepacket, epsrel: float = 1e-6) -> float:
    """Mean two-photon overlap of two (gated) wavepackets.

    Each envelope is normalised to unit area; the overlap is the double
    integral of ``q(t) q(t') exp(-(a1 + a2)|t - t'|)`` with
    ``q = sqrt(p1 p2)``.  For aligned identical envelopes ``q`` is the
    envelope itself.  The kink of the kernel on the diagonal is avoided by
    integrating the lower triangle and doubling it.
    """
    z1 = _integrate(w1.envelope, *w1.support(), w1.breakpoints(), 1e-10)
    z2 = _integrate(w2.envelope, *w2.support(), w2.breakpoints(), 1e-10)
    if not (z1 > 1e-300 and z2 > 1e-300):
        raise ValueError("gate lies entirely outside the wavepacket support")

    lo = max(w1.support()[0], w2.support()[0])
    hi = min(w1.support()[1], w2.support()[1])
    if hi <= lo:
        return 0.0
    norm = 1.0 / math.sqrt(z1 * z2)
    rate = w1.alpha_per_ps + w2.alpha_per_ps
    pts = w1.breakpoints() + w2.breakpoints()

    def q(t):
        return math.sqrt(w1.envelope(t) * w2.envelope(t)) * norm

    if rate == 0:
        s = _integrate(q, lo, hi, pts, 1e-10)
        return s * s

    def inner(t):
        qt = q(t)
        if qt == 0.0:
            return 0.0
        # kernel expressed relative to the outer time keeps exponents <= 0
        return qt * _integrate(lambda u: q(u) * math.exp(-rate * (t - u)), lo, t, pts, 1e-9)

    return 2.0 * _integrate(inner, lo, hi, pts, epsrel)


def bunching_probability(v: float, bs: BeamsplitterSpec, epsilon: float = 0.0) -> float:
    """Probability that an interfering pair leaves through one port.

    Chosen so the cross-port coincidence probability becomes
    ``r^2 + t^2 - 2 r t (1 - eps)^2 V``.
    """
    r, t = bs.r, bs.t
    indep = r * r + t * t
    return 0.0 if indep == 0 else 2.0 * r * t * (1.0 - epsilon) ** 2 * v / indep


def _times(photons):
    if isinstance(photons, PhotonStream):
        return photons.emit_time_ps
    return np.asarray(photons, dtype=float)


def hbt_route(photons, bs: BeamsplitterSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a photon stream over two output ports; port a with probability ``r``."""
    t = _times(photons)
    to_a = make_rng(seed, "hbt").random(t.size) < bs.r
    return t[to_a], t[~to_a]


class HomRouting(NamedTuple):
    """Per-photon outcome of the interferometer, ordered by bs2 arrival."""

    time_ps: np.ndarray
    port: np.ndarray
    arm: np.ndarray
    pulse_index: np.ndarray
    origin: np.ndarray
    paired: np.ndarray
    bunched: np.ndarray

    @property
    def port_a(self) -> np.ndarray:
        return self.time_ps[self.port == PORT_A]

    @property
    def port_b(self) -> np.ndarray:
        return self.time_ps[self.port == PORT_B]


def stream_wavepacket(photons: PhotonStream, origin: Origin, start_ps: float = 0.0) -> GatedWavepacket:
    """Pulse-relative envelope of a photon of the given origin in ``photons``."""
    wp = photons.wavepacket(origin)
    gate = photons.gate
    window, floor = None, 0.0
    if gate is not None:
        if gate.profile != "gaussian":
            raise ValueError("gated overlap supports Gaussian gates only")
        window, floor = (start_ps + gate.delay_ps, gate.sigma_ps), gate.floor
    return GatedWavepacket(start_ps, wp.t1_ps, wp.alpha_per_ps, window, floor)


@lru_cache(maxsize=256)
def _cached_overlap(w1: GatedWavepacket, w2: GatedWavepacket) -> float:
    return mean_overlap(w1, w2)


def _rank_within(group: np.ndarray) -> np.ndarray:
    """Position of each element inside its run of equal values (input grouped)."""
    if group.size == 0:
        return group.copy()
    starts = np.flatnonzero(np.r_[True, group[1:] != group[:-1]])
    run_start = np.repeat(starts, np.diff(np.r_[starts, group.size]))
    return np.arange(group.size) - run_start


def hom_route_detailed(photons: PhotonStream, cfg: HomConfig, seed: int,
                       overlap: float | Callable[[GatedWavepacket, GatedWavepacket], float] | None = None,
                       pair_window_ps: float | None = None) -> HomRouting:
    """Route a double-pulse photon stream through the delay interferometer.

    Photons of the first pulse of a pair that take the long arm meet photons
    of the second pulse that take the short arm at the second beamsplitter.
    Such pairs (matched one-to-one inside a period, arrival difference below
    ``pair_window_ps``, default 5 T1) bunch with
    :func:`bunching_probability`; all other photons route independently.
    """
    if photons.pump.pulse_pattern != "pair":
        raise ValueError("hom_route needs a double-pulse photon stream")
    rng = make_rng(seed, "hom")
    n = len(photons)
    bs1, bs2 = cfg.bs1, cfg.bs2
    window = 5.0 * photons.spec.t1_ps if pair_window_ps is None else pair_window_ps

    arm = np.where(rng.random(n) < bs1.r, SHORT, LONG).astype(np.uint8)
    arrival = photons.emit_time_ps + (arm == LONG) * float(cfg.delta_t_ps)
    # independent routing: short arm reflects into a, long arm transmits into a
    p_a = np.where(arm == SHORT, bs2.r, bs2.t)
    port = np.where(rng.random(n) < p_a, PORT_A, PORT_B).astype(np.uint8)

    pidx = photons.pulse_index
    period = pidx // 2
    early = np.flatnonzero((pidx % 2 == 0) & (arm == LONG))
    late = np.flatnonzero((pidx % 2 == 1) & (arm == SHORT))
    # stream is time ordered, so ranks follow arrival order within a period
    early = early[np.argsort(period[early], kind="stable")]
    late = late[np.argsort(period[late], kind="stable")]
    rank_e, rank_l = _rank_within(period[early]), _rank_within(period[late])
    width = int(max(rank_e.max(initial=0), rank_l.max(initial=0))) + 1
    key_e = period[early] * width + rank_e
    key_l = period[late] * width + rank_l
    _, ie, il = np.intersect1d(key_e, key_l, assume_unique=True, return_indices=True)
    x, y = early[ie], late[il]
    close = np.abs(arrival[y] - arrival[x]) < window
    x, y = x[close], y[close]

    pulse_t = photons.pump.pulse_times(pidx)
    offset = np.round(pulse_t[y] - (pulse_t[x] + cfg.delta_t_ps), 3)
    v = np.empty(x.size)
    combos = {}
    for i, key in enumerate(zip(photons.origin[x], photons.origin[y], offset)):
        if key not in combos:
            ox, oy, off = key
            if overlap is None or callable(overlap):
                w1 = stream_wavepacket(photons, Origin(int(ox)))
                w2 = stream_wavepacket(photons, Origin(int(oy)), float(off))
                combos[key] = (overlap or _cached_overlap)(w1, w2)
            else:
                combos[key] = float(overlap)
        v[i] = combos[key]

    bunch = rng.random(x.size) < bunching_probability(1.0, bs2, cfg.epsilon) * v
    both_port = np.where(rng.random(x.size) < 0.5, PORT_A, PORT_B).astype(np.uint8)
    port[x[bunch]] = both_port[bunch]
    port[y[bunch]] = both_port[bunch]

    paired = np.zeros(n, dtype=bool)
    paired[x] = paired[y] = True
    bunched = np.zeros(n, dtype=bool)
    bunched[x[bunch]] = bunched[y[bunch]] = True

    order = np.argsort(arrival, kind="stable")
    return HomRouting(arrival[order], port[order], arm[order], pidx[order],
                      photons.origin[order], paired[order], bunched[order])


def hom_route(photons: PhotonStream, cfg: HomConfig, seed: int, overlap=None) -> tuple[np.ndarray, np.ndarray]:
    routed = hom_route_detailed(photons, cfg, seed, overlap=overlap)
    return routed.port_a, routed.port_b


__all__ = [
    "BeamsplitterSpec", "HomConfig", "GatedWavepacket", "HomRouting", "QuadratureError",
    "coherence_relation", "overlap_closed_form", "mean_overlap", "bunching_probability",
    "hbt_route", "hom_route", "hom_route_detailed", "stream_wavepacket",
]
