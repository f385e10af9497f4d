"""Monte-Carlo oracles used to validate the closed-form and quadrature results.

These estimators sample the defining random experiments directly and stay
independent of the analytic code paths they check.
"""

from __future__ import annotations

import math

import numpy as np

from .airtime import Airtime
from .model import collision_indicator

CAPTURE_KINDS = ("gw_pair", "both", "one", "mote_pair")


def _ring_uniform(rng: np.random.Generator, mu: float, nu: float, n: int) -> np.ndarray:
    # pdf 2r/(nu^2 - mu^2): the squared radius is uniform on [mu^2, nu^2]
    return np.sqrt(rng.uniform(mu * mu, nu * nu, n))


def mc_oracle_capture(
    mu: float,
    nu: float,
    cr_db: float,
    slope_b: float,
    kind: str,
    samples: int = 10**6,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo estimate and standard error for one capture probability.

    ``kind`` selects the experiment: ``gw_pair`` (tagged frame wins at the
    gateway), ``both`` (neither frame wins), ``one`` (exactly one wins) or
    ``mote_pair`` (ACK wins at the tagged mote).
    """
    if kind not in CAPTURE_KINDS:
        raise ValueError(f"unknown capture kind {kind!r}")
    if samples < 10**4:
        raise ValueError("at least 1e4 samples are required for a usable oracle")
    rng = np.random.default_rng(seed)
    r0 = _ring_uniform(rng, mu, nu, samples)
    r1 = _ring_uniform(rng, mu, nu, samples)
    if math.isinf(cr_db):
        # No frame ever survives an overlap: tagged never wins, both always lose.
        hits = np.zeros(samples) if kind in ("gw_pair", "one", "mote_pair") else np.ones(samples)
    elif kind == "mote_pair":
        c = 10.0 ** (cr_db / slope_b)
        phi = rng.uniform(0.0, 2.0 * np.pi, samples)
        d1 = np.sqrt(r0 * r0 + r1 * r1 - 2.0 * r0 * r1 * np.cos(phi))
        hits = (d1 > r0 * c).astype(float)
    else:
        c = 10.0 ** (cr_db / slope_b)
        tagged_wins = r1 > r0 * c
        other_wins = r0 > r1 * c
        if kind == "gw_pair":
            hits = tagged_wins.astype(float)
        elif kind == "both":
            hits = (~tagged_wins & ~other_wins).astype(float)
        else:  # one
            hits = (tagged_wins ^ other_wins).astype(float)
    estimate = float(hits.mean())
    std_error = float(hits.std(ddof=1) / math.sqrt(samples))
    return estimate, std_error


def mc_oracle_recollision(
    r_i: float,
    num_channels: int,
    airtime: Airtime,
    t1_s: float,
    retry_window_s: float,
    samples: int = 10**6,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo estimate of the retransmission re-collision probability.

    Samples the initial frame offset from the two-sided truncated exponential
    conditioned on a collision, then independent uniform retransmission delays
    for both motes, and evaluates the overlap indicator.  The same-channel
    choice contributes the leading 1/F factor.
    """
    t_data = airtime.data_frame_s
    t_ack = airtime.ack_s
    w = retry_window_s
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, 1.0, samples)
    if r_i > 0:
        scale = 1.0 - math.exp(-r_i * t_data)
        x = -np.log1p(-u * scale) / r_i
    else:
        x = u * t_data  # zero-load limit: offset uniform on the collision window
    x *= rng.choice((-1.0, 1.0), samples)
    y = rng.uniform(0.0, w, samples)
    z = x + rng.uniform(0.0, w, samples)
    hits = np.fromiter(
        (collision_indicator(yi, zi, t_data, t_ack, t1_s) for yi, zi in zip(y, z)),
        dtype=float,
        count=samples,
    )
    hits /= num_channels
    estimate = float(hits.mean())
    std_error = float(hits.std(ddof=1) / math.sqrt(samples))
    return estimate, std_error
