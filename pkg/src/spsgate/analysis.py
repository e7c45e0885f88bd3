"""Observables from correlation and lifetime histograms, and the closed-form
relations used to interpret them."""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .histogram import CorrelationHistogram, LifetimeHistogram
from .optics import BeamsplitterSpec


class InsufficientCountsError(ValueError):
    pass


class PeakOverlapWarning(UserWarning):
    pass


def _json_value(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


class _Report:
    def to_dict(self) -> dict:
        return {f.name: _json_value(getattr(self, f.name)) for f in dataclasses.fields(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# --- lifetime -------------------------------------------------------------

class LifetimeFit(NamedTuple):
    t1_ps: float
    sigma_ps: float


def _rise_jitter(hist: LifetimeHistogram) -> float:
    """Jitter estimate from the rising edge: half-max to peak spans ~1.18 sigma."""
    c = hist.counts.astype(float)
    k = int(np.argmax(c))
    below = np.flatnonzero(c[:k] < 0.5 * c[k])
    if below.size == 0:
        return hist.bin_ps
    rise = (k - below[-1]) * hist.bin_ps
    return max(rise / 1.177, hist.bin_ps)


def fit_lifetime(hist: LifetimeHistogram, jitter_ps: float | None = None,
                 min_tail_counts: int = 100) -> LifetimeFit:
    """Single-exponential fit of the decay tail.

    The tail runs from the peak plus twice the timing jitter to the last bin
    holding at least 10 counts; log-counts are fitted with Poisson weights.
    """
    c = hist.counts
    t = hist.bin_centers_ps
    if c.size == 0 or c.max() == 0:
        raise InsufficientCountsError("empty lifetime histogram")
    k = int(np.argmax(c))
    jitter = _rise_jitter(hist) if jitter_ps is None else jitter_ps
    start = t[k] + 2.0 * jitter
    tall = np.flatnonzero(c >= 10)
    end = t[tall[-1]] if tall.size else t[k]
    sel = (t >= start) & (t <= end) & (c > 0)
    if c[sel].sum() < min_tail_counts or np.count_nonzero(sel) < 3:
        raise InsufficientCountsError(f"only {int(c[sel].sum())} counts in the decay tail")
    n = c[sel].astype(float)
    coef, cov = np.polyfit(t[sel], np.log(n), 1, w=np.sqrt(n), cov="unscaled")
    slope = coef[0]
    if slope >= 0:
        raise InsufficientCountsError("tail does not decay")
    return LifetimeFit(-1.0 / slope, math.sqrt(cov[0, 0]) / slope**2)


def trace_width(hist: LifetimeHistogram, level: float = math.exp(-1)) -> float:
    """Full width of a trace at ``level`` times its maximum, by linear interpolation."""
    c = hist.counts.astype(float)
    t = hist.bin_centers_ps
    k = int(np.argmax(c))
    lo, hi = max(k - 3, 0), min(k + 4, c.size)
    peak = c[k]
    if hi - lo >= 5:
        # vertex of a local parabola; the raw maximum is biased up by noise
        a, b, c0 = np.polyfit(t[lo:hi] - t[k], c[lo:hi], 2)
        if a < 0:
            peak = max(min(c0 - b * b / (4 * a), c[k]), 0.5 * c[k])
    thr = level * peak
    left = np.flatnonzero(c[:k] < thr)
    right = np.flatnonzero(c[k:] < thr)
    if left.size == 0 or right.size == 0:
        raise ValueError("trace does not fall below the level on both sides")
    i = left[-1]
    j = k + right[0]
    tl = t[i] + (thr - c[i]) / (c[i + 1] - c[i]) * (t[i + 1] - t[i])
    tr = t[j - 1] + (thr - c[j - 1]) / (c[j] - c[j - 1]) * (t[j] - t[j - 1])
    return float(tr - tl)


# --- g2(0) ---------------------------------------------------------------

@dataclass
class G2Report(_Report):
    g2_zero: float
    sigma: float
    central_area: float
    peak_areas: list


def _overlap_level(hist: CorrelationHistogram, centers, spacing) -> float:
    """Inter-peak minimum relative to the peak maximum."""
    peak = max(hist.count_at(c) for c in centers)
    if peak == 0:
        return 0.0
    mids = [c + spacing / 2 for c in centers[:-1]]
    half = max(spacing / 4, hist.bin_ps)
    minima = []
    for m in mids:
        k = (hist.bin_centers_ps >= m - half) & (hist.bin_centers_ps <= m + half)
        if k.any():
            minima.append(hist.counts[k].min())
    return float(np.mean(minima)) / peak if minima else 0.0


def g2_zero(hist: CorrelationHistogram, rep_period_ps: float, n_side_peaks: int = 6) -> G2Report:
    """Pulsed g2(0): central peak area over the mean side-peak area.

    Every peak is integrated over +-half a period.  The uncertainty scales
    g2(0) by the relative spread (standard deviation over mean) of the side
    peak areas.
    """
    if n_side_peaks < 3:
        raise ValueError("need at least 3 side peaks per side")
    if hist.span_ps < (n_side_peaks + 0.5) * rep_period_ps - hist.bin_ps:
        raise ValueError("histogram window too short for the requested side peaks")
    half = rep_period_ps / 2
    ks = [k for k in range(-n_side_peaks, n_side_peaks + 1) if k]
    side = np.array([hist.area(k * rep_period_ps, half) for k in ks])
    central = hist.area(0.0, half)
    mean = side.mean()
    if mean <= 0:
        raise InsufficientCountsError("no coincidences in the side peaks")
    side_centers = [k * rep_period_ps for k in range(1, n_side_peaks + 1)]
    if _overlap_level(hist, side_centers, rep_period_ps) > 0.2:
        warnings.warn("correlation peaks overlap; areas include neighbouring peaks",
                      PeakOverlapWarning, stacklevel=2)
    g2 = central / mean
    return G2Report(g2, float(g2 * side.std(ddof=1) / mean), central, side.tolist())


def interpeak_ratio(hist: CorrelationHistogram, rep_period_ps: float, n_side_peaks: int = 6,
                    fraction: float = 0.25) -> float:
    """Mean coincidence density midway between side peaks over that at the peak centres.

    Both regions are ``fraction`` of a period wide.  The ratio is blind to the
    overall count rate, so gated and ungated histograms can be compared.
    """
    half = 0.5 * fraction * rep_period_ps
    peaks = sum(hist.area(k * rep_period_ps, half) for k in range(1, n_side_peaks + 1))
    peaks += sum(hist.area(-k * rep_period_ps, half) for k in range(1, n_side_peaks + 1))
    valleys = sum(hist.area((k + 0.5) * rep_period_ps, half) for k in range(1, n_side_peaks))
    valleys += sum(hist.area(-(k + 0.5) * rep_period_ps, half) for k in range(1, n_side_peaks))
    if peaks <= 0:
        raise InsufficientCountsError("no coincidences at the side peaks")
    return (valleys / (2 * (n_side_peaks - 1))) / (peaks / (2 * n_side_peaks))


# --- Hong-Ou-Mandel ------------------------------------------------------

def hom_areas_expected(g_star: float, v: float, r: float = 0.5, t: float = 0.5,
                       epsilon: float = 0.0, scale: float = 1.0) -> tuple[float, ...]:
    """Mean areas of the five central-cluster peaks for an interfering pair source."""
    r3t, rt3 = r**3 * t, r * t**3
    g = 1 + 2 * g_star
    return (scale * r3t,
            scale * (r3t * g + rt3),
            scale * ((r3t + rt3) * g - 2 * (1 - epsilon) ** 2 * r * r * t * t * v),
            scale * (r3t + rt3 * g),
            scale * r3t)


def m_bound(g_star: float) -> float:
    """Peak ratio expected without any two-photon interference (balanced splitters)."""
    return (1 + 2 * g_star) / (2 * (1 + g_star))


def hom_m_expected(g_star: float, v: float, r: float = 0.5, t: float = 0.5,
                   epsilon: float = 0.0) -> float:
    return m_bound(g_star) - (1 - epsilon) ** 2 * r * r * t * t * v / (
        (1 + g_star) * (r**3 * t + r * t**3))


def m_ratio(a2: float, a3: float, a4: float) -> float:
    if a2 + a4 == 0:
        raise ZeroDivisionError("A2 + A4 is zero")
    return a3 / (a2 + a4)


class VInversion(NamedTuple):
    v: float
    m_bound: float


def _v_scale(g_star, r, t, epsilon):
    return (1 + g_star) * (r**3 * t + r * t**3) / ((1 - epsilon) ** 2 * r * r * t * t)


def invert_v(m: float, g_star: float, r: float = 0.5, t: float = 0.5,
             epsilon: float = 0.0) -> VInversion:
    """Two-photon overlap implied by a measured peak ratio ``m``."""
    if abs(r + t - 1) > 1e-12:
        raise ValueError("r + t must equal 1")
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon == 1 or r * t == 0:
        raise ValueError("no interference is possible with this interferometer")
    mb = m_bound(g_star)
    return VInversion((mb - m) * _v_scale(g_star, r, t, epsilon), mb)


def v_uncertainty(m: float, g_star: float, m_sigma: float = 0.0, g_star_sigma: float = 0.0,
                  r: float = 0.5, t: float = 0.5, epsilon: float = 0.0) -> float:
    scale = _v_scale(g_star, r, t, epsilon)
    dv_dm = -scale
    dv_dg = scale / (2 * (1 + g_star) ** 2) + (m_bound(g_star) - m) * scale / (1 + g_star)
    return math.hypot(dv_dm * m_sigma, dv_dg * g_star_sigma)


def _arrival_pattern(cluster: int, bs1: BeamsplitterSpec, bs2: BeamsplitterSpec) -> np.ndarray:
    """Relative areas of the five peaks of an uncorrelated cluster.

    Enumerates photon x (port a) and photon y (port b) over pulses and arms;
    ``cluster`` is the period offset of y relative to x.
    """
    w = np.zeros(5)
    arm_p = {0: bs1.r, 1: bs1.t}
    to_a = {0: bs2.r, 1: bs2.t}
    for px, py, ax, ay in itertools.product((0, 1), repeat=4):
        k = (py - px) + (ay - ax)
        w[k + 2] += arm_p[ax] * arm_p[ay] * to_a[ax] * (1 - to_a[ay])
    return w if cluster > 0 else w[::-1]


def _cluster_areas(hist, center, delta_t):
    return np.array([hist.area(center + k * delta_t, delta_t / 2) for k in range(-2, 3)])


def _fit_spill(hist, delta_t, period, n_side, bs1, bs2):
    """Fit the central amplitudes of a comb of peaks with exponential spill.

    A peak at distance ``d`` from a window contributes ``A exp(-|d|/lam)`` of
    its area to it (1 at ``d = 0``).  Side clusters carry the known
    uncorrelated pattern times one free scale.
    """
    ks = np.arange(-2, 3)
    centers = [ks * delta_t]
    for j in range(1, n_side + 1):
        centers += [j * period + ks * delta_t, -j * period + ks * delta_t]
    windows = np.concatenate(centers)
    raw = np.concatenate([[hist.area(w, delta_t / 2) for w in c] for c in centers])
    src_side = []
    for j in range(1, n_side + 2):
        for sign in (1, -1):
            src_side.append((sign * j * period + ks * delta_t, _arrival_pattern(sign, bs1, bs2)))
    side_pos = np.concatenate([p for p, _ in src_side])
    side_w = np.concatenate([w for _, w in src_side])
    d_c = np.abs(windows[:, None] - (ks * delta_t)[None, :])
    d_s = np.abs(windows[:, None] - side_pos[None, :])

    def kern(d, amp, lam):
        return np.where(d < 0.5 * delta_t, 1.0, amp * np.exp(-d / lam))

    def model(x):
        a, c, amp, lam = x[:5], x[5], x[6], x[7]
        return kern(d_c, amp, lam) @ a + c * (kern(d_s, amp, lam) @ side_w)

    sigma = np.sqrt(np.maximum(raw, 1.0))
    side_raw = raw[5:].reshape(-1, 5)
    x0 = np.r_[raw[:5], side_raw[:, 2].mean() / side_w[2], 0.1, delta_t / 2]
    lo = np.r_[[-np.inf] * 5, 0.0, 0.0, 1.0]
    hi = np.r_[[np.inf] * 5, np.inf, np.inf, float(period)]
    res = optimize.least_squares(lambda x: (model(x) - raw) / sigma, x0, bounds=(lo, hi),
                                 x_scale="jac")
    if not res.success:
        raise RuntimeError(f"peak spill fit failed: {res.message}")
    return res.x[:5]


def _peak_fwhm(hist: CorrelationHistogram, center: float, half_window: float) -> float:
    sel = np.abs(hist.bin_centers_ps - center) <= half_window
    c, t = hist.counts[sel], hist.bin_centers_ps[sel]
    if c.size == 0 or c.max() == 0:
        return 0.0
    above = t[c >= 0.5 * c.max()]
    return float(above[-1] - above[0] + hist.bin_ps)


def hom_peak_areas(hist: CorrelationHistogram, delta_t_ps: float, rep_period_ps: float | None = None,
                   correct_overlap: bool = False, bs1: BeamsplitterSpec = BeamsplitterSpec(),
                   bs2: BeamsplitterSpec = BeamsplitterSpec(), n_side_clusters: int = 2) -> tuple[float, ...]:
    """Areas A1..A5 of the central five-peak cluster, each over +-delta_t/2.

    With ``correct_overlap`` the spill of each peak into the other windows
    is undone: the central cluster and the side clusters at multiples of
    ``rep_period_ps`` are fitted jointly as a comb of peaks whose tails
    decay exponentially.  Side clusters come from different periods, so
    their relative peak areas follow from the beamsplitters alone.
    """
    raw = _cluster_areas(hist, 0.0, delta_t_ps)
    width = max(_peak_fwhm(hist, k * delta_t_ps, delta_t_ps / 2) for k in (-1, 1))
    if delta_t_ps < 3 * width:
        warnings.warn(f"peak width {width:.0f} ps is not resolved by delta_t={delta_t_ps:.0f} ps",
                      PeakOverlapWarning, stacklevel=2)
    if not correct_overlap:
        return tuple(float(a) for a in raw)
    if rep_period_ps is None:
        raise ValueError("overlap correction needs rep_period_ps")
    if hist.span_ps < n_side_clusters * rep_period_ps + 2.5 * delta_t_ps:
        raise ValueError("histogram window does not cover the side clusters")
    true = _fit_spill(hist, delta_t_ps, rep_period_ps, n_side_clusters, bs1, bs2)
    return tuple(float(x) for x in true)


@dataclass
class HomReport(_Report):
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    m: float
    m_sigma: float
    g_star: float
    g_star_sigma: float
    v: float
    v_sigma: float
    m_bound: float
    v_out_of_range: bool
    overlap_corrected: bool


def hom_report(areas, g_star: float, g_star_sigma: float = 0.0, r: float = 0.5, t: float = 0.5,
               epsilon: float = 0.0, overlap_corrected: bool = False) -> HomReport:
    a1, a2, a3, a4, a5 = (float(x) for x in areas)
    m = m_ratio(a2, a3, a4)
    m_sigma = m * math.sqrt(1 / a3 + 1 / (a2 + a4)) if a3 > 0 else 0.0
    v, mb = invert_v(m, g_star, r, t, epsilon)
    vs = v_uncertainty(m, g_star, m_sigma, g_star_sigma, r, t, epsilon)
    return HomReport(a1, a2, a3, a4, a5, m, m_sigma, g_star, g_star_sigma, v, vs, mb,
                     not 0 <= v <= 1, overlap_corrected)


# --- cavity and brightness -----------------------------------------------

@dataclass
class CavityReport(_Report):
    t_dip: float
    k: float
    eta: float
    branch: str


def cavity_transmission(k: float) -> float:
    """On-resonance taper transmission for coupling parameter ``k``."""
    return ((1 - k) / (1 + k)) ** 2


def outcoupling_fraction(k: float) -> float:
    return 0.0 if k == 0 else 1.0 / (1.0 + 1.0 / k)


def cavity_coupling(t_dip: float, branch: str = "undercoupled") -> CavityReport:
    if not 0 <= t_dip <= 1:
        raise ValueError("t_dip must lie in [0, 1]")
    s = math.sqrt(t_dip)
    if branch == "undercoupled":
        k = (1 - s) / (1 + s)
    elif branch == "overcoupled":
        if s == 1:
            raise ValueError("t_dip = 1 has no overcoupled solution")
        k = (1 + s) / (1 - s)
    else:
        raise ValueError("branch must be 'undercoupled' or 'overcoupled'")
    return CavityReport(t_dip, k, outcoupling_fraction(k), branch)


@dataclass
class BrightnessReport(_Report):
    i_sat_cps: float
    rep_rate_hz: float
    zeta: float
    xi: float
    xi_sigma: float


def setup_efficiency(*factors: float) -> float:
    return math.prod(factors)


def brightness(i_sat_cps: float, rep_rate_hz: float, zeta: float,
               i_sat_std: float = 0.0) -> BrightnessReport:
    """Source efficiency from the detected saturation count rate."""
    if not 0 < zeta <= 1:
        raise ValueError("zeta must lie in (0, 1]")
    if rep_rate_hz <= 0:
        raise ValueError("rep_rate_hz must be positive")
    denom = rep_rate_hz * zeta
    return BrightnessReport(i_sat_cps, rep_rate_hz, zeta, i_sat_cps / denom, i_sat_std / denom)
