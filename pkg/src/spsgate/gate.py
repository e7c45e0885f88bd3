"""Synchronised electro-optic amplitude gate.

Stochastic per-photon gating of photon streams, and the transmission
theory of an exponential wavepacket through a Gaussian intensity gate.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize, special

from ._rng import make_rng
from .emitter import PhotonStream

SQRT_PI = math.sqrt(math.pi)


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


def db_to_linear(db: float) -> float:
    return 0.0 if math.isinf(db) else 10.0 ** (-db / 10.0)


@dataclass(frozen=True)
class GateSpec:
    """Gate timing and loss.

    ``t_mod_ps`` is the full width at the 1/e intensity point, so the
    Gaussian profile is ``exp(-x**2 / sigma**2)`` with ``sigma = t_mod / 2``.
    ``delay_ps`` is the gate centre relative to its excitation pulse.
    """

    t_mod_ps: float
    delay_ps: float = 0.0
    extinction_db: float = 20.0
    insertion_loss_db: float = 1.9
    profile: str = "gaussian"

    def __post_init__(self):
        if not self.t_mod_ps > 0:
            raise ValueError("t_mod_ps must be positive")
        if not math.isfinite(self.delay_ps):
            raise ValueError("delay_ps must be finite")
        if not self.extinction_db > 0:
            raise ValueError("extinction_db must be positive")
        if not self.insertion_loss_db >= 0:
            raise ValueError("insertion_loss_db must be >= 0")
        if self.profile not in ("gaussian", "rect"):
            raise ValueError("profile must be 'gaussian' or 'rect'")

    @property
    def sigma_ps(self) -> float:
        return self.t_mod_ps / 2.0

    @property
    def floor(self) -> float:
        return db_to_linear(self.extinction_db)

    @property
    def peak(self) -> float:
        return db_to_linear(self.insertion_loss_db)

    def shape(self, x):
        """Open-state profile at offset ``x`` from the gate centre (no floor, no loss)."""
        x = np.asarray(x, dtype=float)
        if self.profile == "rect":
            return (np.abs(x) <= self.sigma_ps).astype(float)
        return np.exp(-((x / self.sigma_ps) ** 2))


def gate_value(gate: GateSpec, t_ps, pulse_time_ps=0.0):
    """Intensity transmission of a single gate opened for the pulse at ``pulse_time_ps``."""
    x = np.asarray(t_ps, dtype=float) - pulse_time_ps - gate.delay_ps
    val = gate.peak * np.maximum(gate.shape(x), gate.floor)
    return float(val) if val.ndim == 0 else val


def gate_train_value(gate: GateSpec, t_ps, gate_centres_ps):
    """Transmission of a periodic gate train at times ``t_ps``.

    ``gate_centres_ps`` must be sorted; the two nearest gates are evaluated.
    """
    t = np.asarray(t_ps, dtype=float)
    centres = np.asarray(gate_centres_ps, dtype=float)
    if centres.size == 0:
        return np.full(t.shape, gate.peak * gate.floor)
    j = np.searchsorted(centres, t)
    left = centres[np.clip(j - 1, 0, centres.size - 1)]
    right = centres[np.clip(j, 0, centres.size - 1)]
    shape = np.maximum(gate.shape(t - left), gate.shape(t - right))
    return gate.peak * np.maximum(shape, gate.floor)


def apply_gate(gate: GateSpec, photons: PhotonStream, seed: int) -> PhotonStream:
    """Pass each photon through the gate train with its local transmission.

    One gate opens per excitation pulse, ``gate.delay_ps`` after it; a photon
    emitted late can therefore pass through the gate of a later pulse.
    """
    rng = make_rng(seed, "gate")
    centres = photons.pump.pulse_times() + gate.delay_ps
    trans = gate_train_value(gate, photons.emit_time_ps, centres)
    keep = rng.random(len(photons)) < trans
    out = photons.select(keep)
    out.gate = gate
    return out


def transmission_closed_form(t1_ps: float, t_mod_ps: float, delay_ps: float) -> float:
    """Fraction of an exponential wavepacket passed by a lossless Gaussian gate.

    Completing the square in the overlap integral gives
    ``(s sqrt(pi) / 2 T1) exp(s^2/4T1^2 - d/T1) erfc(s/2T1 - d/s)`` with
    ``s = t_mod/2``; the scaled ``erfcx`` form is used where it avoids overflow.
    """
    s = 0.5 * t_mod_ps
    if s == 0:
        return 0.0
    pref = s * SQRT_PI / (2.0 * t1_ps)
    x = s / (2.0 * t1_ps) - delay_ps / s
    if x > 0:
        return pref * math.exp(-((delay_ps / s) ** 2)) * special.erfcx(x)
    return pref * math.exp((s / (2.0 * t1_ps)) ** 2 - delay_ps / t1_ps) * special.erfc(x)


def _quad(fun, a, b, epsrel):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(fun, a, b, epsrel=epsrel, epsabs=1e-14, limit=500)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    return val


def _windowed_integral(fun, t_lo, centre, half_width, epsrel):
    """Integrate ``fun`` over ``[t_lo, inf)`` split around a window where it is concentrated."""
    a = max(t_lo, centre - half_width)
    b = max(t_lo, centre + half_width)
    total = 0.0
    if a > t_lo:
        total += _quad(fun, t_lo, a, epsrel)
    if b > a:
        total += _quad(fun, a, b, epsrel)
    total += _quad(fun, b, math.inf, epsrel)
    return total


def analytic_transmission(t1_ps: float, t_mod_ps: float, delay_ps: float,
                          epsrel: float = 1e-8) -> float:
    """Gate transmission of an exponential wavepacket by adaptive quadrature."""
    if not (t1_ps > 0 and t_mod_ps > 0):
        raise ValueError("t1_ps and t_mod_ps must be positive")
    s = 0.5 * t_mod_ps

    def integrand(t):
        return math.exp(-t / t1_ps - ((t - delay_ps) / s) ** 2) / t1_ps

    return _windowed_integral(integrand, 0.0, delay_ps, 10.0 * s, epsrel)


def gate_transmission(decay_ps: float, gate: GateSpec, epsrel: float = 1e-9) -> float:
    """Expected survival probability of an exponential wavepacket (decay
    ``decay_ps``) through one gate, including extinction floor and insertion loss."""
    floor = gate.floor
    d, s = gate.delay_ps, gate.sigma_ps
    if gate.profile == "rect":
        lo, hi = max(0.0, d - s), max(0.0, d + s)
        inside = math.exp(-lo / decay_ps) - math.exp(-hi / decay_ps)
        return gate.peak * (inside + floor * (1.0 - inside))
    if floor == 0:
        return gate.peak * transmission_closed_form(decay_ps, gate.t_mod_ps, d)
    w = s * math.sqrt(math.log(1.0 / floor))

    def integrand(t):
        return math.exp(-t / decay_ps) / decay_ps * max(math.exp(-(((t - d) / s) ** 2)), floor)

    return gate.peak * _windowed_integral(integrand, 0.0, d, w, epsrel)


def optimal_delay(t1_ps: float, t_mod_ps: float, xatol: float = 0.1) -> tuple[float, float]:
    """Gate delay maximising transmission, and the maximum transmission."""
    if not (t1_ps > 0 and t_mod_ps > 0):
        raise ValueError("t1_ps and t_mod_ps must be positive")
    lo, hi = -2.0 * t_mod_ps, t1_ps + 2.0 * t_mod_ps
    res = optimize.minimize_scalar(lambda d: -transmission_closed_form(t1_ps, t_mod_ps, d),
                                   bounds=(lo, hi), method="bounded",
                                   options={"xatol": xatol})
    d_star, f_max = float(res.x), float(-res.fun)
    h = max(10.0 * xatol, 1e-3 * t_mod_ps)
    neighbours = (transmission_closed_form(t1_ps, t_mod_ps, d_star - h),
                  transmission_closed_form(t1_ps, t_mod_ps, d_star + h))
    if max(neighbours) > f_max * (1 + 1e-9):
        raise RuntimeError("transmission maximum not bracketed")
    return d_star, f_max


class TransmissionPoint(NamedTuple):
    t_mod_ps: float
    f_max: float
    f_max_with_loss: float
    optimal_delay_ps: float


@dataclass(frozen=True)
class TransmissionCurve:
    t1_ps: float
    insertion_loss_db: float
    points: tuple[TransmissionPoint, ...]

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_mod_ps", "f_max", "f_with_loss", "delay_ps"])
        for p in self.points:
            w.writerow([f"{p.t_mod_ps:.6g}", f"{p.f_max:.6g}",
                        f"{p.f_max_with_loss:.6g}", f"{p.optimal_delay_ps:.6g}"])
        return buf.getvalue() if fh is None else ""


def transmission_curve(t1_list: Sequence[float], t_mod_range: Sequence[float],
                       insertion_loss_db: float = 1.9) -> list[TransmissionCurve]:
    t1_list, grid = list(t1_list), [float(x) for x in t_mod_range]
    if not t1_list or not grid:
        raise ValueError("t1_list and t_mod_range must be nonempty")
    loss = db_to_linear(insertion_loss_db)
    curves = []
    for t1 in t1_list:
        pts = []
        for tm in grid:
            d, f = optimal_delay(t1, tm)
            pts.append(TransmissionPoint(tm, f, f * loss, d))
        curves.append(TransmissionCurve(float(t1), insertion_loss_db, tuple(pts)))
    return curves


def with_optimal_delay(gate: GateSpec, t1_ps: float) -> GateSpec:
    return replace(gate, delay_ps=optimal_delay(t1_ps, gate.t_mod_ps)[0])
