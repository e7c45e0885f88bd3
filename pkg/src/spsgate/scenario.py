"""Scenario files: validated configuration, simulation runs, re-analysis of
recorded time tags and parameter sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import analysis
from ._rng import make_rng
from .detector import FWHM_PER_SIGMA, SpadSpec, TimeTags, correlate, detect, start_stop_histogram
from .emitter import EmitterSpec, Origin, PumpConfig, pair_g2, sample_emission, saturation_model, tune_background
from .gate import GateSpec, apply_gate, gate_transmission, optimal_delay
from .optics import BeamsplitterSpec, HomConfig, hbt_route, hom_route_detailed, mean_overlap, stream_wavepacket

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Invalid scenario; ``errors`` holds ``(field path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BackgroundModel(_Model):
    prob_at_sat: Optional[float] = Field(None, ge=0, le=1)
    tune_g2: Optional[float] = Field(None, ge=0, le=0.5)
    tune_power_rel: float = Field(1.0, gt=0)
    tau_ps: float = Field(2000.0, gt=0)
    power_exponent: float = Field(2.0, ge=0)

    @model_validator(mode="after")
    def _one_source(self):
        if self.prob_at_sat is not None and self.tune_g2 is not None:
            raise ValueError("give either prob_at_sat or tune_g2, not both")
        return self


class EmitterModel(_Model):
    t1_ps: float = Field(625.0, gt=0)
    t2star_ps: Optional[float] = Field(None, gt=0)
    beta: float = Field(0.5, ge=0, le=0.5)
    eta: float = Field(0.25, ge=0, le=1)
    purcell_ratio: float = Field(2.0, ge=1)
    refill_blocking: bool = False
    background: BackgroundModel = BackgroundModel()


class PumpModel(_Model):
    rep_rate_hz: float = Field(80e6, gt=0)
    power_rel: float = Field(1.0, ge=0)
    pulse_pattern: Literal["single", "pair"] = "single"
    dt_ps: float = Field(0.0, ge=0)
    n_periods: int = Field(100_000, ge=1)


class GateModel(_Model):
    t_mod_ps: float = Field(gt=0)
    delay_ps: Union[float, Literal["optimal"]] = "optimal"
    extinction_db: float = Field(20.0, gt=0)
    insertion_loss_db: float = Field(1.9, ge=0)
    profile: Literal["gaussian", "rect"] = "gaussian"


class HbtModel(_Model):
    kind: Literal["hbt"]
    r: float = Field(0.5, ge=0, le=1)


class HomModel(_Model):
    kind: Literal["hom"]
    delta_t_ps: float = Field(2200.0, gt=0)
    epsilon: float = Field(0.0, ge=0, le=1)
    r1: float = Field(0.5, ge=0, le=1)
    r2: float = Field(0.5, ge=0, le=1)
    g_star: Optional[float] = Field(None, ge=0)
    g_star_sigma: float = Field(0.0, ge=0)


class DetectorModel(_Model):
    preset: Optional[Literal["thick", "red_enhanced"]] = None
    efficiency: Optional[float] = Field(None, ge=0, le=1)
    jitter_fwhm_ps: Optional[float] = Field(None, ge=0)
    dead_time_ps: float = Field(0.0, ge=0)
    dark_rate_hz: float = Field(0.0, ge=0)

    def spad(self) -> SpadSpec:
        base = SpadSpec.preset(self.preset) if self.preset else SpadSpec(1.0, 0.0)
        eff = base.efficiency if self.efficiency is None else self.efficiency
        sigma = base.jitter_sigma_ps if self.jitter_fwhm_ps is None else self.jitter_fwhm_ps / FWHM_PER_SIGMA
        return SpadSpec(eff, sigma, self.dead_time_ps, self.dark_rate_hz)


class DetectorPair(_Model):
    a: DetectorModel = DetectorModel(preset="red_enhanced")
    b: DetectorModel = DetectorModel(preset="red_enhanced")


class TcspcModel(_Model):
    bin_ps: int = Field(16, gt=0, multiple_of=4)
    window_ps: Optional[float] = Field(None, gt=0)
    n_side_peaks: int = Field(6, ge=3)
    correct_overlap: bool = True
    lifetime: bool = False
    lifetime_bin_ps: float = Field(8.0, gt=0)


class OutputModel(_Model):
    histogram: str = "histogram.csv"
    report: str = "report.json"
    model: str = "model.json"
    lifetime: str = "lifetime.csv"
    timetags: Optional[str] = None


class Scenario(_Model):
    schema_version: Literal[1] = 1
    seed: int = Field(ge=0)
    emitter: EmitterModel = EmitterModel()
    pump: PumpModel = PumpModel()
    gate: Optional[GateModel] = None
    collection: Union[Literal["auto"], float] = "auto"
    interferometer: Union[HbtModel, HomModel] = Field(HbtModel(kind="hbt"), discriminator="kind")
    detectors: DetectorPair = DetectorPair()
    tcspc: TcspcModel = TcspcModel()
    outputs: OutputModel = OutputModel()

    @model_validator(mode="after")
    def _consistency(self):
        period = 1e12 / self.pump.rep_rate_hz
        if isinstance(self.collection, float) and not 0 <= self.collection <= 1:
            raise ValueError("collection must be 'auto' or lie in [0, 1]")
        if self.pump.pulse_pattern == "pair" and not 0 < self.pump.dt_ps < period:
            raise ValueError("pair pulses need 0 < pump.dt_ps < one period")
        if isinstance(self.interferometer, HomModel):
            if self.pump.pulse_pattern != "pair":
                raise ValueError("hom interferometer needs pump.pulse_pattern = 'pair'")
            if abs(self.pump.dt_ps - self.interferometer.delta_t_ps) > 1e-9:
                raise ValueError("hom needs pump.dt_ps equal to interferometer.delta_t_ps")
        if self.gate is not None and self.gate.delay_ps != "optimal" and abs(self.gate.delay_ps) > period:
            raise ValueError("gate.delay_ps exceeds one excitation period")
        return self


def _loc(err) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def load_scenario(source, overrides: dict | None = None) -> Scenario:
    """Validate a scenario from a path, JSON text or dict.

    ``overrides`` maps dotted field paths to values, e.g. ``{"gate.t_mod_ps": 820}``.
    """
    if isinstance(source, dict):
        data = json.loads(json.dumps(source))
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(source).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError([("<file>", f"invalid JSON: {exc}")]) from None
    for path, value in (overrides or {}).items():
        _set_path(data, path, value)
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError([(_loc(e), e["msg"]) for e in exc.errors()]) from None


def _set_path(data: dict, path: str, value) -> None:
    keys = path.split(".")
    node = data
    for k in keys[:-1]:
        if node.get(k) is None:
            node[k] = {}
        node = node[k]
    if value is None:
        node.pop(keys[-1], None)
    else:
        node[keys[-1]] = value


# --- building domain objects --------------------------------------------

def emitter_spec(sc: Scenario) -> EmitterSpec:
    e, bg = sc.emitter, sc.emitter.background
    spec = EmitterSpec(t1_ps=e.t1_ps, t2star_ps=math.inf if e.t2star_ps is None else e.t2star_ps,
                       beta=e.beta, eta=e.eta, purcell_ratio=e.purcell_ratio,
                       bg_prob_at_sat=bg.prob_at_sat or 0.0, bg_tau_ps=bg.tau_ps,
                       bg_power_exponent=bg.power_exponent, refill_blocking=e.refill_blocking)
    if bg.tune_g2 is not None:
        try:
            spec = tune_background(spec, bg.tune_g2, bg.tune_power_rel)
        except ValueError as exc:
            raise ScenarioError([("emitter.background.tune_g2", str(exc))]) from None
    return spec


def pump_config(sc: Scenario, seed: int | None = None) -> PumpConfig:
    p = sc.pump
    return PumpConfig(p.rep_rate_hz, p.power_rel, p.pulse_pattern, p.dt_ps, p.n_periods,
                      sc.seed if seed is None else seed)


def gate_spec(sc: Scenario) -> GateSpec | None:
    g = sc.gate
    if g is None:
        return None
    delay = optimal_delay(sc.emitter.t1_ps, g.t_mod_ps)[0] if g.delay_ps == "optimal" else g.delay_ps
    return GateSpec(g.t_mod_ps, delay, g.extinction_db, g.insertion_loss_db, g.profile)


def collection(sc: Scenario) -> float:
    if sc.collection == "auto":
        return sc.emitter.beta * sc.emitter.eta
    return float(sc.collection)


# --- analysis of time tags ----------------------------------------------

@dataclass(frozen=True)
class AnalysisParams:
    kind: str = "hbt"
    rep_rate_hz: float = 80e6
    bin_ps: int = 16
    window_ps: float | None = None
    n_side_peaks: int = 6
    pulse_pattern: str = "single"
    dt_ps: float = 0.0
    duration_ps: float | None = None
    delta_t_ps: float = 2200.0
    g_star: float | None = None
    g_star_sigma: float = 0.0
    r1: float = 0.5
    r2: float = 0.5
    epsilon: float = 0.0
    correct_overlap: bool = True
    lifetime: bool = False
    lifetime_bin_ps: float = 8.0

    @property
    def period_ps(self) -> float:
        return 1e12 / self.rep_rate_hz

    @property
    def n_side_clusters(self) -> int:
        return 2

    def correlation_window(self) -> float:
        if self.window_ps is not None:
            return self.window_ps
        if self.kind == "hom":
            return (self.n_side_clusters + 0.5) * self.period_ps + 3 * self.delta_t_ps
        return (self.n_side_peaks + 0.5) * self.period_ps + self.bin_ps

    @classmethod
    def from_scenario(cls, sc: Scenario, g_star=None, g_star_sigma=0.0) -> "AnalysisParams":
        itf = sc.interferometer
        common = dict(rep_rate_hz=sc.pump.rep_rate_hz, bin_ps=sc.tcspc.bin_ps, window_ps=sc.tcspc.window_ps,
                      n_side_peaks=sc.tcspc.n_side_peaks, pulse_pattern=sc.pump.pulse_pattern,
                      dt_ps=sc.pump.dt_ps, duration_ps=sc.pump.n_periods * 1e12 / sc.pump.rep_rate_hz,
                      correct_overlap=sc.tcspc.correct_overlap, lifetime=sc.tcspc.lifetime,
                      lifetime_bin_ps=sc.tcspc.lifetime_bin_ps)
        if isinstance(itf, HomModel):
            return cls(kind="hom", delta_t_ps=itf.delta_t_ps, g_star=g_star, g_star_sigma=g_star_sigma,
                       r1=itf.r1, r2=itf.r2, epsilon=itf.epsilon, **common)
        return cls(kind="hbt", **common)


@dataclass
class AnalysisResult:
    report: dict
    histogram: Any
    lifetime: Any = None


def _trigger_times(params: AnalysisParams, duration_ps: float) -> np.ndarray:
    n = int(math.ceil(duration_ps / params.period_ps))
    pump = PumpConfig(params.rep_rate_hz, 1.0, params.pulse_pattern, params.dt_ps, n)
    return pump.pulse_times()


def analyze_tags(tags: TimeTags, params: AnalysisParams) -> AnalysisResult:
    """Correlate channels 0 and 1 and evaluate the requested observable."""
    a, b = tags.for_channel(0), tags.for_channel(1)
    duration = params.duration_ps
    if duration is None:
        duration = float(tags.ticks.max()) * 4.0 if len(tags) else 0.0
    report: dict = {"kind": params.kind, "counts_a": int(a.size), "counts_b": int(b.size),
                    "duration_ps": float(duration),
                    "count_rate_cps": (a.size + b.size) / (duration * 1e-12) if duration > 0 else 0.0}
    hist = correlate(a, b, params.bin_ps, params.correlation_window())
    caught = []
    with warnings.catch_warnings(record=True) as log:
        warnings.simplefilter("always", analysis.PeakOverlapWarning)
        if params.kind == "hbt":
            g2 = analysis.g2_zero(hist, params.period_ps, params.n_side_peaks)
            report.update(g2.to_dict())
            report["interpeak_ratio"] = analysis.interpeak_ratio(hist, params.period_ps, params.n_side_peaks)
        else:
            if params.g_star is None:
                raise ValueError("hom analysis needs g_star")
            areas = analysis.hom_peak_areas(hist, params.delta_t_ps, params.period_ps,
                                            correct_overlap=params.correct_overlap,
                                            bs1=BeamsplitterSpec(params.r1), bs2=BeamsplitterSpec(params.r2))
            hom = analysis.hom_report(areas, params.g_star, params.g_star_sigma, params.r2, 1 - params.r2,
                                      params.epsilon, params.correct_overlap)
            report.update(hom.to_dict())
        caught = [str(w.message) for w in log if issubclass(w.category, analysis.PeakOverlapWarning)]
    lifetime = None
    if params.lifetime:
        trig = _trigger_times(params, duration)
        span = params.dt_ps if params.pulse_pattern == "pair" else params.period_ps
        pre = min(500.0, 0.1 * span)
        lifetime = start_stop_histogram(trig, a, params.lifetime_bin_ps, range_ps=span, offset_ps=pre)
        try:
            fit = analysis.fit_lifetime(lifetime)
            report["t1_fit_ps"], report["t1_fit_sigma_ps"] = float(fit.t1_ps), float(fit.sigma_ps)
        except analysis.InsufficientCountsError as exc:
            caught.append(f"lifetime fit skipped: {exc}")
        try:
            report["trace_width_ps"] = analysis.trace_width(lifetime)
        except ValueError as exc:
            caught.append(f"trace width skipped: {exc}")
    report["warnings"] = caught
    return AnalysisResult(report, hist, lifetime)


# --- simulation ---------------------------------------------------------

@dataclass
class SimulationResult:
    tags: TimeTags
    analysis: AnalysisResult
    model: dict

    @property
    def report(self) -> dict:
        return self.analysis.report


def _photon_pipeline(sc: Scenario, spec: EmitterSpec, pump: PumpConfig, gate: GateSpec | None):
    photons = sample_emission(spec, pump)
    eff = collection(sc)
    if eff < 1:
        photons = photons.select(make_rng(pump.seed, "collection").random(len(photons)) < eff)
    if gate is not None:
        photons = apply_gate(gate, photons, pump.seed)
    return photons


def _detect_ports(sc: Scenario, port_a, port_b, seed: int, duration: float) -> TimeTags:
    ta = detect(port_a, sc.detectors.a.spad(), seed, channel=0, duration_ps=duration)
    tb = detect(port_b, sc.detectors.b.spad(), seed, channel=1, duration_ps=duration)
    return TimeTags.merge(ta, tb)


def model_summary(sc: Scenario, spec: EmitterSpec, gate: GateSpec | None) -> dict:
    """Configured (not measured) quantities for comparison with a report."""
    p, q = saturation_model(sc.pump.power_rel, spec.bg_prob_at_sat, spec.bg_power_exponent)
    fs = fb = 1.0
    if gate is not None:
        fs, fb = gate_transmission(spec.t1_ps, gate), gate_transmission(spec.bg_tau_ps, gate)
    out = {"p_emit": p, "p_background": q, "bg_prob_at_sat": spec.bg_prob_at_sat,
           "g2_ungated": pair_g2(p, q), "g2_configured": pair_g2(p * fs, q * fb),
           "gate_delay_ps": None if gate is None else gate.delay_ps,
           "transmission_signal": fs, "transmission_background": fb,
           "collection": collection(sc)}
    return out


def _hom_overlap(photons) -> float:
    w = stream_wavepacket(photons, Origin.SIGNAL)
    return mean_overlap(w, w)


def simulate(sc: Scenario, seed: int | None = None, keep_photons: bool = False) -> SimulationResult:
    """Run the full emitter-to-histogram chain for one scenario."""
    seed = sc.seed if seed is None else seed
    spec = emitter_spec(sc)
    pump = pump_config(sc, seed)
    gate = gate_spec(sc)
    photons = _photon_pipeline(sc, spec, pump, gate)
    model = model_summary(sc, spec, gate)
    itf = sc.interferometer
    if isinstance(itf, HbtModel):
        port_a, port_b = hbt_route(photons, BeamsplitterSpec(itf.r), seed)
        params = AnalysisParams.from_scenario(sc)
    else:
        cfg = HomConfig(itf.delta_t_ps, itf.epsilon, BeamsplitterSpec(itf.r1), BeamsplitterSpec(itf.r2))
        routed = hom_route_detailed(photons, cfg, seed)
        port_a, port_b = routed.port_a, routed.port_b
        g_star, g_sigma = itf.g_star, itf.g_star_sigma
        if g_star is None:
            g_star, g_sigma = _companion_g2(sc, seed)
        v_model = _hom_overlap(photons)
        model.update({"v_model": v_model, "g_star": g_star,
                      "m_expected": analysis.hom_m_expected(model["g2_configured"], v_model, itf.r2,
                                                            1 - itf.r2, itf.epsilon)})
        params = AnalysisParams.from_scenario(sc, g_star, g_sigma)
    tags = _detect_ports(sc, port_a, port_b, seed, pump.duration_ps)
    return SimulationResult(tags, analyze_tags(tags, params), model)


def _companion_g2(sc: Scenario, seed: int) -> tuple[float, float]:
    """g2(0) of the same source under single-pulse excitation, used as g_star."""
    companion = sc.model_copy(update={
        "pump": sc.pump.model_copy(update={"pulse_pattern": "single", "dt_ps": 0.0,
                                           "n_periods": 2 * sc.pump.n_periods}),
        "interferometer": HbtModel(kind="hbt", r=0.5),
        "tcspc": sc.tcspc.model_copy(update={"lifetime": False, "window_ps": None}),
    })
    rep = simulate(companion, seed=seed + 1).report
    return rep["g2_zero"], rep["sigma"]


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def run(sc: Scenario, out_dir, seed: int | None = None) -> dict:
    """Simulate and write report, model summary, histograms and optional tags.

    Returns the report dict.  Every byte written is fixed by the scenario
    and seed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = simulate(sc, seed)
    o = sc.outputs
    (out / o.report).write_text(_dump_json(res.report))
    (out / o.model).write_text(_dump_json(res.model))
    with open(out / o.histogram, "w", newline="") as fh:
        res.analysis.histogram.to_csv(fh)
    if res.analysis.lifetime is not None:
        with open(out / o.lifetime, "w", newline="") as fh:
            res.analysis.lifetime.to_csv(fh)
    if o.timetags:
        res.tags.write(out / o.timetags)
    return res.report


def analyze_file(path, params: AnalysisParams) -> AnalysisResult:
    p = Path(path)
    tags = TimeTags.read_csv(p) if p.suffix.lower() == ".csv" else TimeTags.read(p)
    return analyze_tags(tags, params)


# --- sweeps -------------------------------------------------------------

SWEEP_FIELDS = {"power": "pump.power_rel", "t_mod": "gate.t_mod_ps", "rep_rate": "pump.rep_rate_hz"}


def _grid_value(kind, value):
    if kind == "t_mod" and (value is None or (isinstance(value, str) and value.lower() in ("none", "ungated", "inf"))
                            or (isinstance(value, float) and math.isinf(value))):
        return None
    return float(value)


def _sweep_point(args):
    sc_dict, kind, value, seed, compare_ungated = args
    sc = Scenario.model_validate(sc_dict)
    if kind == "t_mod":
        if value is None:
            sc = sc.model_copy(update={"gate": None})
        else:
            gate = sc.gate or GateModel(t_mod_ps=value)
            sc = sc.model_copy(update={"gate": gate.model_copy(update={"t_mod_ps": value})})
    elif kind == "power":
        sc = sc.model_copy(update={"pump": sc.pump.model_copy(update={"power_rel": value})})
    else:
        sc = sc.model_copy(update={"pump": sc.pump.model_copy(update={"rep_rate_hz": value})})
    sc = Scenario.model_validate(sc.model_dump())
    res = simulate(sc, seed)
    rep, model = res.report, res.model
    row = {"value": "ungated" if value is None else value, "seed": seed,
           "g2_zero": rep.get("g2_zero", math.nan), "sigma": rep.get("sigma", math.nan),
           "count_rate_cps": rep["count_rate_cps"],
           "throughput": model["transmission_signal"]}
    if compare_ungated:
        base = simulate(sc.model_copy(update={"gate": None}), seed).report
        row["g2_zero_ungated"] = base["g2_zero"]
        row["sigma_ungated"] = base["sigma"]
        row["ratio"] = base["g2_zero"] / rep["g2_zero"] if rep["g2_zero"] > 0 else math.inf
    return row


def sweep(kind: str, sc: Scenario, grid, workers: int = 1, compare_ungated: bool = False) -> list[dict]:
    """One simulation per grid point with seed ``scenario.seed + index``.

    Rows come back in grid order whatever the number of worker processes.
    """
    if kind not in SWEEP_FIELDS:
        raise ValueError(f"sweep kind must be one of {sorted(SWEEP_FIELDS)}")
    values = [_grid_value(kind, v) for v in grid]
    if not values:
        raise ValueError("sweep grid is empty")
    if kind == "t_mod" and sc.gate is None and any(v is not None for v in values):
        sc = sc.model_copy(update={"gate": GateModel(t_mod_ps=1.0)})
    data = sc.model_dump()
    jobs = [(data, kind, v, sc.seed + i, compare_ungated) for i, v in enumerate(values)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def rows_to_csv(rows: list[dict], fh=None) -> str:
    buf = io.StringIO() if fh is None else fh
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue() if fh is None else ""
