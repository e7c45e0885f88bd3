"""Simulation and analysis of a temporally gated quantum-dot single-photon source."""

from .analysis import (BrightnessReport, CavityReport, G2Report, HomReport, InsufficientCountsError,
                       PeakOverlapWarning, brightness, cavity_coupling, cavity_transmission, fit_lifetime,
                       g2_zero, hom_areas_expected, hom_m_expected, hom_peak_areas, invert_v, m_ratio,
                       trace_width)
from .detector import SpadSpec, TimeTagFormatError, TimeTags, correlate, detect, start_stop_histogram
from .emitter import EmitterSpec, Origin, PhotonStream, PumpConfig, sample_emission, saturation_model
from .gate import GateSpec, QuadratureError, analytic_transmission, apply_gate, optimal_delay, transmission_curve
from .histogram import CorrelationHistogram, LifetimeHistogram
from .kernels import BACKEND
from .optics import BeamsplitterSpec, HomConfig, bunching_probability, hbt_route, hom_route, mean_overlap
from .scenario import Scenario, ScenarioError, load_scenario, run, simulate, sweep

__version__ = "0.1.0"
