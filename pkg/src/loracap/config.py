"""Scenario assembly: defaults and the YAML scenario file format.

A scenario file is a nested key-value document; every section is optional and
falls back to the EU defaults (1000 motes, 3 uplink channels, 6 data rates,
51-byte payload).  See ``scenarios/`` for a commented example.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import yaml

from .airtime import build_airtimes, eu_rate_params
from .errors import ConfigError
from .geometry import (
    EU_SENSITIVITY_DBM,
    PropagationModel,
    build_capture_table,
    build_rate_plan,
)
from .model import NetworkConfig, capacity
from .simulator import SimConfig


@dataclass(frozen=True)
class SweepSpec:
    """Network-load grid for a sweep: ``max_fps = None`` means twice capacity."""

    min_fps: float = 1e-3
    max_fps: float | None = None
    points: int = 20
    scale: str = "log"  # "log" | "linear"

    def grid(self, capacity_fps: float) -> list[float]:
        hi = 2.0 * capacity_fps if self.max_fps is None else self.max_fps
        if not 0 <= self.min_fps < hi:
            raise ConfigError("sweep bounds must satisfy 0 <= min < max")
        if self.points < 1:
            raise ConfigError("sweep needs at least one grid point")
        if self.points == 1:
            return [self.min_fps]
        if self.scale == "linear":
            step = (hi - self.min_fps) / (self.points - 1)
            return [self.min_fps + k * step for k in range(self.points)]
        if self.scale == "log":
            if self.min_fps <= 0:
                raise ConfigError("log sweep requires a positive minimum load")
            ratio = (hi / self.min_fps) ** (1.0 / (self.points - 1))
            return [self.min_fps * ratio**k for k in range(self.points)]
        raise ConfigError(f"unknown sweep scale {self.scale!r}")


@dataclass(frozen=True)
class Scenario:
    """Everything one CLI invocation needs: network, run control, sweep."""

    name: str
    network: NetworkConfig  # template; the load is set per sweep point
    propagation: PropagationModel
    sweep: SweepSpec
    seeds: tuple[int, ...] = (1,)
    duration_s: float = 1e4
    warmup_s: float = 500.0
    noise_floor_dbm: float = -117.0
    tolerance_abs: float = 0.03
    output: str | None = None

    def network_at(self, load_fps: float) -> NetworkConfig:
        return replace(self.network, load_fps=load_fps)

    def sim_config(self, load_fps: float, seed: int) -> SimConfig:
        return SimConfig(
            network=self.network_at(load_fps),
            propagation=self.propagation,
            duration_s=self.duration_s,
            warmup_s=self.warmup_s,
            seed=seed,
            noise_floor_dbm=self.noise_floor_dbm,
        )

    def grid(self) -> list[float]:
        return self.sweep.grid(capacity(self.network))


def build_network(
    cr_db: float,
    num_motes: int = 1000,
    num_channels: int = 3,
    load_fps: float = 0.0,
    payload_bytes: int = 51,
    ack_payload_bytes: int = 0,
    retry_limit: int = 7,
    ack_delay_1_s: float = 1.0,
    retry_window_s: float = 2.0,
    propagation: PropagationModel | None = None,
    sensitivities_dbm: tuple[float, ...] = EU_SENSITIVITY_DBM,
    min_distance_m: float = 0.0,
) -> NetworkConfig:
    """Assemble a full network configuration from scalar settings."""
    propagation = propagation or PropagationModel()
    airtimes = build_airtimes(eu_rate_params()[: len(sensitivities_dbm)], payload_bytes, ack_payload_bytes)
    plan = build_rate_plan(
        propagation, airtimes, sensitivities_dbm, min_distance_m=min_distance_m
    )
    table = build_capture_table(plan, propagation, cr_db)
    return NetworkConfig(
        num_motes=num_motes,
        num_channels=num_channels,
        load_fps=load_fps,
        plan=plan,
        capture=table,
        retry_limit=retry_limit,
        ack_delay_1_s=ack_delay_1_s,
        retry_window_s=retry_window_s,
        payload_bytes=payload_bytes,
    )


def _parse_cr(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            return float(value)
        except ValueError as exc:
            raise ConfigError(f"network.cr_db: cannot parse {value!r}") from exc
    return float(value)


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"scenario section {name!r} must be a mapping")
    return value


def load_scenario(path: str) -> Scenario:
    """Parse a YAML scenario file; raises ConfigError with field diagnostics."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario file is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("scenario file must contain a mapping at the top level")

    prop_kw = _section(doc, "propagation")
    try:
        propagation = PropagationModel(**prop_kw)
    except TypeError as exc:
        raise ConfigError(f"propagation: {exc}") from exc

    net = _section(doc, "network")
    rates = _section(doc, "rates")
    if "cr_db" not in net:
        raise ConfigError("network.cr_db is required (number or 'inf')")
    known = {
        "num_motes", "num_channels", "load_fps", "payload_bytes", "ack_payload_bytes",
        "retry_limit", "ack_delay_1_s", "retry_window_s", "cr_db",
    }
    unknown = set(net) - known
    if unknown:
        raise ConfigError(f"unknown network field(s): {', '.join(sorted(unknown))}")
    try:
        network = build_network(
            cr_db=_parse_cr(net["cr_db"]),
            propagation=propagation,
            sensitivities_dbm=tuple(rates.get("sensitivity_dbm", EU_SENSITIVITY_DBM)),
            min_distance_m=float(rates.get("min_distance_m", 0.0)),
            **{k: v for k, v in net.items() if k != "cr_db"},
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"network: {exc}") from exc

    sweep_kw = _section(doc, "sweep")
    try:
        sweep = SweepSpec(**sweep_kw)
    except TypeError as exc:
        raise ConfigError(f"sweep: {exc}") from exc

    sim = _section(doc, "sim")
    seeds = doc.get("seeds", [1])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds must be a non-empty list of integers")
    return Scenario(
        name=str(doc.get("name", "scenario")),
        network=network,
        propagation=propagation,
        sweep=sweep,
        seeds=tuple(int(s) for s in seeds),
        duration_s=float(sim.get("duration_s", 1e4)),
        warmup_s=float(sim.get("warmup_s", 500.0)),
        noise_floor_dbm=float(sim.get("noise_floor_dbm", -117.0)),
        tolerance_abs=float(doc.get("tolerance_abs", 0.03)),
        output=doc.get("output"),
    )
