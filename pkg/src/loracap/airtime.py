"""LoRa time-on-air computation for data frames and acknowledgements.

Durations follow the standard Semtech symbol-count formula: a preamble of
``preamble_symbols + 4.25`` symbols followed by the payload symbol block,
whose length depends on spreading factor, coding rate, header mode, CRC and
the low-data-rate optimisation flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

# MAC header + MIC bytes always present in a LoRaWAN frame, even when the
# application payload is empty (an ACK carries no FRMPayload).
LORAWAN_MAC_OVERHEAD_BYTES = 13


@dataclass(frozen=True)
class RadioParams:
    """PHY parameters that determine the duration of a transmission."""

    spreading_factor: int
    bandwidth_hz: float = 125e3
    coding_rate_denominator: int = 5  # 4/5 -> 5
    preamble_symbols: int = 8
    explicit_header: bool = True
    low_data_rate_optimize: bool = False
    crc_on: bool = True

    def __post_init__(self) -> None:
        if not 7 <= self.spreading_factor <= 12:
            raise ConfigError(f"spreading factor must be in [7, 12], got {self.spreading_factor}")
        if self.bandwidth_hz <= 0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth_hz}")
        if not 5 <= self.coding_rate_denominator <= 8:
            raise ConfigError(
                f"coding rate denominator must be in [5, 8], got {self.coding_rate_denominator}"
            )
        if self.preamble_symbols < 0:
            raise ConfigError("preamble symbol count must be non-negative")


@dataclass(frozen=True)
class Airtime:
    """Durations of a data frame and of an ACK at one data rate."""

    data_frame_s: float
    ack_s: float


def time_on_air(params: RadioParams, payload_bytes: int) -> float:
    """Duration in seconds of a frame with the given PHY payload size."""
    if payload_bytes < 0:
        raise ConfigError(f"payload size must be non-negative, got {payload_bytes}")
    sf = params.spreading_factor
    t_symbol = 2.0**sf / params.bandwidth_hz
    t_preamble = (params.preamble_symbols + 4.25) * t_symbol
    de = 1 if params.low_data_rate_optimize else 0
    ih = 0 if params.explicit_header else 1
    crc = 1 if params.crc_on else 0
    numerator = 8 * payload_bytes - 4 * sf + 28 + 16 * crc - 20 * ih
    symbols = math.ceil(numerator / (4 * (sf - 2 * de)))
    n_payload = 8 + max(symbols, 0) * params.coding_rate_denominator
    return t_preamble + n_payload * t_symbol


def build_airtimes(
    rate_params: list[RadioParams],
    payload_bytes: int,
    ack_payload_bytes: int = 0,
    ack_overhead_bytes: int = LORAWAN_MAC_OVERHEAD_BYTES,
) -> list[Airtime]:
    """Per-rate frame/ACK durations, indexed like ``rate_params`` (rate 0 first).

    The ACK duration uses ``ack_payload_bytes`` of application payload plus the
    mandatory MAC overhead.
    """
    if not rate_params:
        raise ConfigError("rate parameter list must not be empty")
    return [
        Airtime(
            data_frame_s=time_on_air(p, payload_bytes),
            ack_s=time_on_air(p, ack_payload_bytes + ack_overhead_bytes),
        )
        for p in rate_params
    ]


def eu_rate_params() -> list[RadioParams]:
    """Default EU 863-880 MHz rate table: rates 0..5 are SF12..SF7 at 125 kHz."""
    return [
        RadioParams(spreading_factor=sf, low_data_rate_optimize=sf >= 11)
        for sf in range(12, 6, -1)
    ]
