"""Uplink channel-access performance toolkit for capture-aware LoRaWAN cells.

Provides an analytic model of the packet error rate under the capture effect,
an independent discrete-event simulator of the same protocol, and a sweep
harness that cross-validates the two.
"""

from .airtime import Airtime, RadioParams, build_airtimes, eu_rate_params, time_on_air
from .config import Scenario, SweepSpec, build_network, load_scenario
from .errors import ConfigError, NumericalError
from .geometry import (
    EU_SENSITIVITY_DBM,
    CaptureRow,
    CaptureTable,
    PropagationModel,
    QuadratureSpec,
    RatePlan,
    RateRing,
    build_capture_table,
    build_rate_plan,
    capture_both,
    capture_gw_pair,
    capture_mote_pair,
    capture_one,
    distance_for_power,
    rate_probabilities,
    received_power,
    ring_radii,
)
from .model import (
    ModelReport,
    NetworkConfig,
    RateReport,
    capacity,
    evaluate,
    evaluate_no_capture,
)
from .oracles import mc_oracle_capture, mc_oracle_recollision
from .simulator import MoteState, SimConfig, SimReport, Simulator, capture_adjudicate, place_motes
from .simulator import run as run_simulation
from .sweep import SweepRow, read_csv, run_model_sweep, run_sim_sweep, validate, write_csv

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
