"""Pulsed quantum-dot emitter: photon streams with a phenomenological
multi-photon background."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple

import numpy as np

from ._rng import make_rng


class Origin(enum.IntEnum):
    SIGNAL = 0
    BACKGROUND = 1


class Wavepacket(NamedTuple):
    t1_ps: float
    alpha_per_ps: float


@dataclass(frozen=True)
class EmitterSpec:
    """Parametric emitter.

    ``bg_prob_at_sat`` is the per-pulse probability of an extra photon at
    saturation; ``bg_tau_ps`` its delay timescale.  With ``refill_blocking``
    a pulse cannot excite the dot while the previous signal photon is still
    pending, which caps the useful repetition rate.
    """

    t1_ps: float = 625.0
    t2star_ps: float = math.inf
    beta: float = 0.5
    eta: float = 0.25
    purcell_ratio: float = 2.0
    bg_prob_at_sat: float = 0.0
    bg_tau_ps: float = 2000.0
    bg_power_exponent: float = 2.0
    refill_blocking: bool = False

    def __post_init__(self):
        for name in ("t1_ps", "beta", "eta", "purcell_ratio", "bg_prob_at_sat",
                     "bg_tau_ps", "bg_power_exponent"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.t1_ps <= 0:
            raise ValueError("t1_ps must be positive")
        if math.isnan(self.t2star_ps) or self.t2star_ps <= 0:
            raise ValueError("t2star_ps must be positive or inf")
        if not 0 <= self.beta <= 0.5:
            raise ValueError("beta must lie in [0, 0.5] per channel")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if self.purcell_ratio < 1:
            raise ValueError("purcell_ratio must be >= 1")
        if not 0 <= self.bg_prob_at_sat <= 1:
            raise ValueError("bg_prob_at_sat must lie in [0, 1]")
        if self.bg_tau_ps <= 0:
            raise ValueError("bg_tau_ps must be positive")

    @property
    def alpha_per_ps(self) -> float:
        return 0.0 if math.isinf(self.t2star_ps) else 1.0 / self.t2star_ps

    @property
    def t2_ps(self) -> float:
        return 1.0 / (1.0 / (2.0 * self.t1_ps) + self.alpha_per_ps)

    @property
    def xi(self) -> float:
        return collection_efficiency(self.beta, self.eta)


@dataclass(frozen=True)
class PumpConfig:
    rep_rate_hz: float = 80e6
    power_rel: float = 1.0
    pulse_pattern: str = "single"
    dt_ps: float = 0.0
    n_periods: int = 100_000
    seed: int = 0

    def __post_init__(self):
        for name in ("rep_rate_hz", "power_rel", "dt_ps"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.rep_rate_hz <= 0:
            raise ValueError("rep_rate_hz must be positive")
        if self.power_rel < 0:
            raise ValueError("power_rel must be >= 0")
        if self.pulse_pattern not in ("single", "pair"):
            raise ValueError("pulse_pattern must be 'single' or 'pair'")
        if self.pulse_pattern == "pair" and not 0 < self.dt_ps < self.period_ps:
            raise ValueError("pair pattern needs 0 < dt_ps < period")
        if self.n_periods < 0:
            raise ValueError("n_periods must be >= 0")

    @property
    def period_ps(self) -> float:
        return 1e12 / self.rep_rate_hz

    @property
    def pulses_per_period(self) -> int:
        return 2 if self.pulse_pattern == "pair" else 1

    @property
    def n_pulses(self) -> int:
        return self.n_periods * self.pulses_per_period

    @property
    def duration_ps(self) -> float:
        return self.n_periods * self.period_ps

    def pulse_times(self, index=None) -> np.ndarray:
        """Excitation times (ps) of the given pulse indices (all by default)."""
        if index is None:
            index = np.arange(self.n_pulses, dtype=np.int64)
        index = np.asarray(index, dtype=np.int64)
        if self.pulse_pattern == "pair":
            return (index // 2) * self.period_ps + (index % 2) * self.dt_ps
        return index * self.period_ps


@dataclass(frozen=True)
class PhotonRecord:
    emit_time_ps: float
    pulse_index: int
    origin: Origin
    wavepacket: Wavepacket


@dataclass
class PhotonStream:
    """Column-oriented photon records sorted by emission time.

    ``gate`` records the temporal gate a stream has passed through, if any.
    """

    emit_time_ps: np.ndarray
    pulse_index: np.ndarray
    origin: np.ndarray
    spec: EmitterSpec
    pump: PumpConfig
    gate: object = None
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.emit_time_ps.size)

    def __iter__(self) -> Iterator[PhotonRecord]:
        for t, k, o in zip(self.emit_time_ps, self.pulse_index, self.origin):
            yield PhotonRecord(float(t), int(k), Origin(int(o)), self.wavepacket(Origin(int(o))))

    def wavepacket(self, origin: Origin) -> Wavepacket:
        decay = self.spec.t1_ps if origin == Origin.SIGNAL else self.spec.bg_tau_ps
        return Wavepacket(decay, self.spec.alpha_per_ps)

    def pulse_times(self) -> np.ndarray:
        return self.pump.pulse_times(self.pulse_index)

    def select(self, mask) -> "PhotonStream":
        return replace(self, emit_time_ps=self.emit_time_ps[mask],
                       pulse_index=self.pulse_index[mask], origin=self.origin[mask])

    def count(self, origin: Origin | None = None) -> int:
        if origin is None:
            return len(self)
        return int(np.count_nonzero(self.origin == origin))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["emit_time_ps", "pulse_index", "origin"])
            for t, k, o in zip(self.emit_time_ps, self.pulse_index, self.origin):
                w.writerow([repr(float(t)), int(k), Origin(int(o)).name.lower()])


def saturation_model(power_rel: float, bg_prob_at_sat: float = 0.0,
                     exponent: float = 2.0) -> tuple[float, float]:
    """Per-pulse emission and background probabilities at a relative pump power.

    The signal saturates as ``1 - exp(-3 P/Psat)``; the background rises as
    ``(P/Psat)**exponent`` and is clamped at its saturation value.
    """
    if not power_rel >= 0:
        raise ValueError("power_rel must be >= 0")
    p_emit = -math.expm1(-3.0 * power_rel)
    p_bg = bg_prob_at_sat * min(power_rel, 1.0) ** exponent
    return p_emit, p_bg


def collection_efficiency(beta: float, eta: float) -> float:
    if not (0 <= beta <= 0.5 and 0 <= eta <= 1):
        raise ValueError("beta must be in [0, 0.5] and eta in [0, 1]")
    return beta * eta


def pair_g2(p_signal: float, p_background: float) -> float:
    """g2(0) of a pulse that holds two independent Bernoulli photons."""
    mean = p_signal + p_background
    return 0.0 if mean == 0 else 2.0 * p_signal * p_background / mean**2


def background_for_g2(target_g2: float, p_signal: float) -> float:
    """Background probability that, next to a signal probability, yields ``target_g2``.

    Takes the root with background weaker than signal.
    """
    if not 0 <= target_g2 <= 0.5:
        raise ValueError("target_g2 must lie in [0, 0.5]")
    # background fraction x of the mean photon number solves 2 x (1 - x) = g
    x = 0.5 * (1.0 - math.sqrt(1.0 - 2.0 * target_g2))
    return p_signal * x / (1.0 - x)


def tune_background(spec: EmitterSpec, target_g2: float, power_rel: float = 1.0) -> EmitterSpec:
    """Return ``spec`` with ``bg_prob_at_sat`` set so the ungated g2(0) at
    ``power_rel`` equals ``target_g2``."""
    p_emit, _ = saturation_model(power_rel)
    scale = min(power_rel, 1.0) ** spec.bg_power_exponent
    if scale == 0:
        raise ValueError("background cannot be tuned at zero power")
    q = background_for_g2(target_g2, p_emit) / scale
    if q > 1.0:
        raise ValueError(f"g2(0)={target_g2} is out of reach at power {power_rel}: "
                         f"needs a saturated background probability of {q:.3g}")
    return replace(spec, bg_prob_at_sat=q)


def _blocked_pulses(pulse_t: np.ndarray, emit: np.ndarray, emit_t: np.ndarray) -> np.ndarray:
    """Sequentially drop pulses that arrive before the previous signal photon left."""
    keep = emit.copy()
    busy_until = -math.inf
    for k in range(pulse_t.size):
        if not keep[k]:
            continue
        if pulse_t[k] < busy_until:
            keep[k] = False
        else:
            busy_until = emit_t[k]
    return keep


def sample_emission(spec: EmitterSpec, pump: PumpConfig, *,
                    p_emit: float | None = None, p_bg: float | None = None) -> PhotonStream:
    """Draw the photon stream for ``pump.n_periods`` excitation periods.

    ``p_emit``/``p_bg`` override the saturation model.  The stream is a pure
    function of ``(spec, pump)``; ``pump.seed`` fixes every draw.
    """
    model_emit, model_bg = saturation_model(pump.power_rel, spec.bg_prob_at_sat,
                                            spec.bg_power_exponent)
    p_emit = model_emit if p_emit is None else p_emit
    p_bg = model_bg if p_bg is None else p_bg
    if not (0 <= p_emit <= 1 and 0 <= p_bg <= 1):
        raise ValueError("probabilities must lie in [0, 1]")

    rng_sig = make_rng(pump.seed, "emitter.signal")
    rng_bg = make_rng(pump.seed, "emitter.background")
    n = pump.n_pulses
    pulse_t = pump.pulse_times()

    emit = rng_sig.random(n) < p_emit
    sig_t = pulse_t + rng_sig.exponential(spec.t1_ps, n)
    if spec.refill_blocking and n:
        emit = _blocked_pulses(pulse_t, emit, sig_t)
    sig_idx = np.flatnonzero(emit)

    bg_idx = np.flatnonzero(rng_bg.random(n) < p_bg)
    bg_t = pulse_t[bg_idx] + rng_bg.exponential(spec.bg_tau_ps, bg_idx.size)

    times = np.concatenate([sig_t[sig_idx], bg_t])
    index = np.concatenate([sig_idx, bg_idx]).astype(np.int64)
    origin = np.concatenate([np.full(sig_idx.size, Origin.SIGNAL, np.uint8),
                             np.full(bg_idx.size, Origin.BACKGROUND, np.uint8)])
    order = np.argsort(times, kind="stable")
    return PhotonStream(times[order], index[order], origin[order], spec, pump)
