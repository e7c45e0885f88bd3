import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spsgate.analysis import (InsufficientCountsError, PeakOverlapWarning, brightness, cavity_coupling,
                              cavity_transmission, fit_lifetime, g2_zero, hom_areas_expected, hom_m_expected,
                              hom_peak_areas, hom_report, interpeak_ratio, invert_v, m_bound, m_ratio,
                              outcoupling_fraction, setup_efficiency, trace_width, v_uncertainty)
from spsgate.histogram import CorrelationHistogram, LifetimeHistogram

PERIOD = 12500.0


def comb_histogram(peaks, bin_ps=16, span_ps=40000.0, tau_ps=300.0, shape="laplace"):
    """Expected counts of a comb of peaks, integrated exactly over each bin.

    ``peaks`` is a list of (centre, area); each peak is a two-sided
    exponential of decay ``tau_ps`` or a Gaussian of that sigma.
    """
    n = int(span_ps // bin_ps)
    edges = (np.arange(-n, n + 2) - 0.5) * bin_ps
    cdf = np.zeros_like(edges)
    for c, a in peaks:
        x = edges - c
        if shape == "laplace":
            cdf += a * np.where(x < 0, 0.5 * np.exp(np.minimum(x, 0) / tau_ps),
                                1 - 0.5 * np.exp(-np.maximum(x, 0) / tau_ps))
        else:
            from scipy.special import ndtr
            cdf += a * ndtr(x / tau_ps)
    return CorrelationHistogram(bin_ps, np.round(np.diff(cdf)).astype(np.int64), n)


# --- lifetime ------------------------------------------------------------

def lifetime_histogram(t1, jitter, n, bin_ps=32, seed=0, offset=500.0):
    rng = np.random.default_rng(seed)
    t = rng.exponential(t1, n) + rng.normal(0, jitter, n)
    edges = np.arange(-offset, 15 * t1, bin_ps)
    counts, _ = np.histogram(t, edges)
    return LifetimeHistogram(bin_ps, counts, -offset)


@pytest.mark.parametrize("t1,jitter", [(625.0, 100.0), (770.0, 42.5), (400.0, 20.0)])
def test_fit_lifetime_recovers_t1(t1, jitter):
    fit = fit_lifetime(lifetime_histogram(t1, jitter, 400_000, seed=int(t1)), jitter_ps=jitter)
    assert fit.t1_ps == pytest.approx(t1, rel=0.03)
    assert abs(fit.t1_ps - t1) < 5 * fit.sigma_ps
    assert fit.sigma_ps < 0.01 * t1


def test_fit_lifetime_estimates_jitter_itself():
    fit = fit_lifetime(lifetime_histogram(625.0, 100.0, 400_000, seed=3))
    assert fit.t1_ps == pytest.approx(625.0, rel=0.03)


def test_fit_lifetime_needs_counts():
    with pytest.raises(InsufficientCountsError):
        fit_lifetime(LifetimeHistogram(32, np.zeros(100, dtype=np.int64)))
    with pytest.raises(InsufficientCountsError):
        fit_lifetime(lifetime_histogram(625.0, 50.0, 30, seed=1))


def test_trace_width_gaussian():
    # full width at 1/e of a Gaussian is 2 sqrt(2) sigma
    t = np.arange(-2000, 2000, 8) + 4.0
    counts = np.round(1e6 * np.exp(-0.5 * (t / 150.0) ** 2))
    h = LifetimeHistogram(8, counts, -2000.0)
    assert trace_width(h) == pytest.approx(2 * math.sqrt(2) * 150.0, abs=2.0)
    assert trace_width(h, 0.5) == pytest.approx(2.3548 * 150.0, abs=2.0)


def test_trace_width_requires_both_flanks():
    with pytest.raises(ValueError):
        trace_width(LifetimeHistogram(8, np.arange(100, 0, -1)))


# --- g2 ------------------------------------------------------------------

def g2_peaks(central, side, n=8, period=PERIOD):
    return [(0.0, central)] + [(k * period, side) for k in range(-n, n + 1) if k]


def test_g2_zero_of_synthetic_comb():
    h = comb_histogram(g2_peaks(20_000, 100_000), span_ps=8 * PERIOD)
    rep = g2_zero(h, PERIOD)
    assert rep.g2_zero == pytest.approx(0.2, abs=1e-3)
    assert len(rep.peak_areas) == 12
    assert rep.sigma < 1e-3


def test_g2_zero_sigma_is_relative_spread():
    areas = [90_000, 110_000, 100_000, 95_000, 105_000, 100_000]
    peaks = [(0.0, 50_000)]
    for k, a in enumerate(areas, 1):
        peaks += [(k * PERIOD, a), (-k * PERIOD, a)]
    rep = g2_zero(comb_histogram(peaks, span_ps=8 * PERIOD), PERIOD)
    side = np.array(areas * 2, dtype=float)
    g2 = 50_000 / side.mean()
    assert rep.g2_zero == pytest.approx(g2, rel=1e-3)
    assert rep.sigma == pytest.approx(g2 * side.std(ddof=1) / side.mean(), rel=2e-2)


def test_g2_zero_poisson_noise():
    rng = np.random.default_rng(4)
    base = comb_histogram(g2_peaks(10_000, 50_000), span_ps=8 * PERIOD)
    h = CorrelationHistogram(base.bin_ps, rng.poisson(base.counts), base.offset)
    rep = g2_zero(h, PERIOD)
    assert abs(rep.g2_zero - 0.2) < 4 * 0.2 * math.sqrt(1 / 10_000 + 1 / 600_000)


def test_g2_zero_validation():
    h = comb_histogram(g2_peaks(1, 10), span_ps=8 * PERIOD)
    with pytest.raises(ValueError):
        g2_zero(h, PERIOD, n_side_peaks=2)
    with pytest.raises(ValueError):
        g2_zero(h, PERIOD, n_side_peaks=12)
    empty = CorrelationHistogram(16, np.zeros(h.counts.size, np.int64), h.offset)
    with pytest.raises(InsufficientCountsError):
        g2_zero(empty, PERIOD)


def test_g2_zero_warns_on_overlapping_peaks():
    h = comb_histogram(g2_peaks(0, 100_000, n=20, period=2000.0), span_ps=20_000, tau_ps=700.0)
    with pytest.warns(PeakOverlapWarning):
        g2_zero(h, 2000.0)


def test_g2_zero_flat_is_one():
    h = CorrelationHistogram(16, np.full(2 * 6000 + 1, 50), 6000)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PeakOverlapWarning)
        assert g2_zero(h, 12_000.0).g2_zero == pytest.approx(1.0, rel=1e-3)
    assert interpeak_ratio(h, 12_000.0) == pytest.approx(1.0, rel=1e-3)


def test_interpeak_ratio_of_separated_peaks():
    h = comb_histogram(g2_peaks(0, 100_000, n=10, period=2000.0), span_ps=20_000, tau_ps=60.0,
                       shape="gauss")
    assert interpeak_ratio(h, 2000.0) < 1e-6
    wide = comb_histogram(g2_peaks(0, 100_000, n=10, period=2000.0), span_ps=20_000, tau_ps=700.0)
    assert interpeak_ratio(wide, 2000.0) > 0.3


# --- HOM -----------------------------------------------------------------

def test_m_bound_reference():
    assert m_bound(0.20) == pytest.approx(0.58, abs=0.005)
    assert m_bound(0.0) == 0.5


def test_invert_v_reference_values():
    v, mb = invert_v(0.31, 0.20)
    assert v == pytest.approx(0.65, abs=0.06)
    assert mb == pytest.approx(0.5833, abs=1e-4)
    assert v_uncertainty(0.31, 0.20, 0.0, 0.04) == pytest.approx(0.06, abs=0.01)
    assert invert_v(0.49, 0.29).v == pytest.approx(0.32, abs=0.05)


def test_invert_v_guards():
    with pytest.raises(ValueError):
        invert_v(0.3, 0.2, r=0.6, t=0.5)
    with pytest.raises(ValueError):
        invert_v(0.3, 0.2, epsilon=1.0)
    with pytest.raises(ZeroDivisionError):
        m_ratio(0.0, 2.0, 0.0)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.05, 0.95), st.floats(0, 0.9))
def test_forward_model_round_trip(g, v, r, eps):
    t = 1 - r
    a = hom_areas_expected(g, v, r, t, eps, scale=7.0)
    m = m_ratio(a[1], a[2], a[3])
    assert m == pytest.approx(hom_m_expected(g, v, r, t, eps), rel=1e-9, abs=1e-12)
    assert invert_v(m, g, r, t, eps).v == pytest.approx(v, abs=1e-9)


@given(st.floats(0, 1), st.floats(0, 1))
def test_interference_lowers_m(g, v):
    assert hom_m_expected(g, v) <= m_bound(g) + 1e-15
    assert hom_m_expected(g, 0.0) == pytest.approx(m_bound(g))


def test_v_uncertainty_zero_without_input_errors():
    assert v_uncertainty(0.31, 0.2) == 0.0
    assert v_uncertainty(0.31, 0.2, m_sigma=0.01) == pytest.approx(0.01 * 2.4)


def hom_histogram(g_star, v, tau_ps, scale=400_000.0, dt=2200.0, n_side=4):
    areas = hom_areas_expected(g_star, v, scale=scale)
    ks = range(-2, 3)
    peaks = [(k * dt, a) for k, a in zip(ks, areas)]
    side = np.array([1, 4, 6, 4, 1]) / 16 * scale / 4
    for j in range(1, n_side + 1):
        for sign in (1, -1):
            peaks += [(sign * j * PERIOD + k * dt, w) for k, w in zip(ks, side)]
    return comb_histogram(peaks, span_ps=(n_side + 0.5) * PERIOD, tau_ps=tau_ps), areas


def test_hom_areas_of_separated_peaks():
    h, areas = hom_histogram(0.2, 0.65, tau_ps=100.0)
    raw = hom_peak_areas(h, 2200.0)
    assert np.allclose(raw, areas, rtol=2e-3)
    rep = hom_report(raw, 0.2)
    assert rep.m == pytest.approx(hom_m_expected(0.2, 0.65), abs=1e-3)
    assert rep.v == pytest.approx(0.65, abs=5e-3)


def test_hom_spill_correction_recovers_m():
    h, areas = hom_histogram(0.29, 0.3247, tau_ps=770.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PeakOverlapWarning)
        raw = hom_peak_areas(h, 2200.0)
        fixed = hom_peak_areas(h, 2200.0, PERIOD, correct_overlap=True)
    true_m = hom_m_expected(0.29, 0.3247)
    assert abs(m_ratio(*raw[1:4]) - true_m) > 0.02
    assert m_ratio(*fixed[1:4]) == pytest.approx(true_m, abs=0.005)


def test_hom_overlap_warning_and_window_check():
    h, _ = hom_histogram(0.29, 0.32, tau_ps=770.0, n_side=1)
    with pytest.warns(PeakOverlapWarning):
        hom_peak_areas(h, 2200.0)
    with pytest.raises(ValueError), warnings.catch_warnings():
        warnings.simplefilter("ignore", PeakOverlapWarning)
        hom_peak_areas(h, 2200.0, PERIOD, correct_overlap=True, n_side_clusters=2)


def test_hom_report_json():
    rep = hom_report(hom_areas_expected(0.2, 0.65, scale=1e4), 0.2, 0.04)
    d = json.loads(rep.to_json())
    assert d["v"] == pytest.approx(0.65, abs=1e-6)
    assert d["v_out_of_range"] is False
    assert set(d) >= {"a1", "a5", "m", "m_sigma", "m_bound", "g_star_sigma", "overlap_corrected"}


# --- cavity and brightness -----------------------------------------------

def test_cavity_reference():
    assert outcoupling_fraction(0.33) == pytest.approx(0.25, abs=0.005)
    rep = cavity_coupling(cavity_transmission(0.33))
    assert rep.k == pytest.approx(0.33)
    assert rep.eta == pytest.approx(0.2481, abs=1e-4)


@given(st.floats(0, 50))
def test_cavity_round_trip(k):
    branch = "undercoupled" if k <= 1 else "overcoupled"
    if k == 1 or abs(k - 1) < 1e-6:
        return
    assert cavity_coupling(cavity_transmission(k), branch).k == pytest.approx(k, rel=1e-6, abs=1e-9)


def test_cavity_critical_and_validation():
    assert cavity_transmission(1.0) == 0.0
    assert cavity_coupling(0.0).k == pytest.approx(1.0)
    assert outcoupling_fraction(0.0) == 0.0
    for args in ((1.2,), (0.5, "sideways"), (1.0, "overcoupled")):
        with pytest.raises(ValueError):
            cavity_coupling(*args)


def test_brightness_reference():
    zeta = setup_efficiency(0.5, 0.5, 0.125)
    assert zeta == pytest.approx(0.03125)
    rep = brightness(0.119 * 80e6 * zeta, 80e6, zeta, 0.006 * 80e6 * zeta)
    assert rep.xi == pytest.approx(0.119)
    assert rep.xi_sigma == pytest.approx(0.006)
    with pytest.raises(ValueError):
        brightness(1.0, 80e6, 0.0)
    with pytest.raises(ValueError):
        brightness(1.0, 0.0, 0.5)
