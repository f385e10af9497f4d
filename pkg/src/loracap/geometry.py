"""Okumura-Hata propagation, data-rate ring geometry and capture probabilities.

Motes are uniform on a disk around the gateway.  The network server assigns
data rate ``i`` to a mote whose received power at the gateway falls in the
sensitivity interval ``[w_min_i, w_max_i)``; those power bounds translate to
annuli of distances via the inverse of the path-loss law.  Per ring we compute
the pairwise capture probabilities used by the analytic model:

* ``w_gw_pair``  -- tagged mote's frame decodable at the gateway despite one
  same-ring interferer,
* ``w_both``     -- neither of two overlapping same-ring frames decodable,
* ``w_one``      -- exactly one of the two decodable,
* ``w_mote_pair``-- downlink ACK decodable at the tagged mote despite one
  same-ring uplink interferer.

All four depend only on the radius ratio of the ring and on the co-channel
rejection margin divided by the path-loss slope, so they are invariant under
rescaling all distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .airtime import Airtime
from .errors import ConfigError, NumericalError

# Receiver sensitivity (dBm) at 125 kHz for SF12..SF7, i.e. rates 0..5.
EU_SENSITIVITY_DBM = (-137.0, -134.5, -132.0, -129.0, -126.0, -123.0)


@dataclass(frozen=True)
class PropagationModel:
    """Okumura-Hata path loss: received power = intercept - slope * lg(distance)."""

    tx_power_mote_dbm: float = 14.0
    tx_power_gw_dbm: float = 14.0
    carrier_freq_mhz: float = 868.0
    gw_antenna_height_m: float = 30.0
    mote_antenna_height_m: float = 1.5

    @property
    def slope_b(self) -> float:
        """Path-loss slope in dB per decade of distance."""
        return 44.9 - 6.55 * math.log10(self.gw_antenna_height_m)

    def intercept(self, tx_dbm: float) -> float:
        """Received power at unit distance for the given transmit power."""
        correction = 3.2 * math.log10(11.75 * self.mote_antenna_height_m) ** 2 - 4.97
        return (
            tx_dbm
            - 69.55
            - 26.16 * math.log10(self.carrier_freq_mhz)
            + 13.82 * math.log10(self.gw_antenna_height_m)
            + correction
        )

    @property
    def intercept_a(self) -> float:
        """Intercept for the mote's transmit power."""
        return self.intercept(self.tx_power_mote_dbm)


def received_power(model: PropagationModel, tx_dbm: float, distance_m: float) -> float:
    """Received power in dBm at the given distance; decreasing in distance."""
    if distance_m <= 0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    return model.intercept(tx_dbm) - model.slope_b * math.log10(distance_m)


def distance_for_power(model: PropagationModel, tx_dbm: float, power_dbm: float) -> float:
    """Inverse of :func:`received_power`: distance at which the power is reached."""
    return 10.0 ** ((model.intercept(tx_dbm) - power_dbm) / model.slope_b)


def ring_radii(
    model: PropagationModel,
    thresholds: list[tuple[float, float]],
    min_distance_m: float = 0.0,
) -> list[tuple[float, float]]:
    """Distance interval [mu_i, nu_i) for each sensitivity interval.

    ``thresholds`` lists ``(w_min, w_max)`` per rate, rate 0 (farthest ring)
    first; intervals must be contiguous and increasing in power with the rate
    index.  An unbounded ``w_max`` (``+inf``) maps the inner radius to
    ``min_distance_m``.
    """
    if not thresholds:
        raise ConfigError("threshold list must not be empty")
    for (lo, hi) in thresholds:
        if hi <= lo:
            raise ConfigError(f"threshold interval ({lo}, {hi}) is empty")
    for (_, hi_prev), (lo_next, _) in zip(thresholds, thresholds[1:]):
        if lo_next != hi_prev:
            raise ConfigError("threshold intervals must be contiguous and increasing")
    radii = []
    for lo, hi in thresholds:
        nu = distance_for_power(model, model.tx_power_mote_dbm, lo)
        if math.isinf(hi):
            mu = min_distance_m
        else:
            mu = distance_for_power(model, model.tx_power_mote_dbm, hi)
        radii.append((mu, nu))
    return radii


def rate_probabilities(
    radii: list[tuple[float, float]], cell_radius_m: float
) -> list[float]:
    """Ring area over disk area for each rate, with rings clipped to the cell."""
    if cell_radius_m <= 0:
        raise ConfigError("cell radius must be positive")
    probs = []
    for mu, nu in radii:
        nu = min(nu, cell_radius_m)
        mu = min(mu, cell_radius_m)
        probs.append(max(nu * nu - mu * mu, 0.0) / cell_radius_m**2)
    if sum(probs) <= 0.0:
        raise ConfigError("no data-rate ring intersects the cell disk")
    return probs


@dataclass(frozen=True)
class RateRing:
    """One data rate's derived geometry and timing entry."""

    sensitivity_lo_dbm: float
    sensitivity_hi_dbm: float
    inner_radius_m: float
    outer_radius_m: float
    usage_prob: float
    airtime: Airtime


@dataclass(frozen=True)
class RatePlan:
    """Full per-rate table plus the cell geometry it was derived on."""

    rings: tuple[RateRing, ...]
    cell_radius_m: float

    @property
    def rate_count(self) -> int:
        return len(self.rings)


def build_rate_plan(
    model: PropagationModel,
    airtimes: list[Airtime],
    sensitivities_dbm: tuple[float, ...] = EU_SENSITIVITY_DBM,
    min_distance_m: float = 0.0,
    cell_radius_m: float | None = None,
) -> RatePlan:
    """Assemble ring radii and usage probabilities from sensitivity thresholds.

    ``sensitivities_dbm`` lists the lower power bound per rate, rate 0 first
    and strictly increasing; the nearest ring's upper bound is unbounded.  The
    cell radius defaults to the outer radius of rate 0, so the rings tile the
    disk and the usage probabilities sum to one.
    """
    if len(airtimes) != len(sensitivities_dbm):
        raise ConfigError("one airtime entry per sensitivity threshold is required")
    bounds = list(sensitivities_dbm) + [math.inf]
    thresholds = [(bounds[i], bounds[i + 1]) for i in range(len(sensitivities_dbm))]
    radii = ring_radii(model, thresholds, min_distance_m=min_distance_m)
    if cell_radius_m is None:
        cell_radius_m = radii[0][1]
    probs = rate_probabilities(radii, cell_radius_m)
    rings = tuple(
        RateRing(
            sensitivity_lo_dbm=lo,
            sensitivity_hi_dbm=hi,
            inner_radius_m=mu,
            outer_radius_m=nu,
            usage_prob=p,
            airtime=at,
        )
        for (lo, hi), (mu, nu), p, at in zip(thresholds, radii, probs, airtimes)
    )
    return RatePlan(rings=rings, cell_radius_m=cell_radius_m)


def _check_ring(mu: float, nu: float, cr_db: float) -> None:
    if not 0 <= mu < nu:
        raise ValueError(f"ring radii must satisfy 0 <= mu < nu, got ({mu}, {nu})")
    if cr_db < 0:
        raise ValueError(f"co-channel rejection must be non-negative, got {cr_db}")


def capture_gw_pair(mu: float, nu: float, cr_db: float, slope_b: float) -> float:
    """Probability the tagged mote's frame survives one same-ring interferer.

    Both motes are ring-uniform; the tagged frame wins when the interferer is
    at least ``10^(cr/slope)`` times farther from the gateway.
    """
    _check_ring(mu, nu, cr_db)
    if math.isinf(cr_db):
        return 0.0
    c = 10.0 ** (cr_db / slope_b)
    if nu <= mu * c:
        return 0.0
    num = nu * nu / c - mu * mu * c
    return num * num / (2.0 * (nu * nu - mu * mu) ** 2)


def capture_both(mu: float, nu: float, cr_db: float, slope_b: float) -> float:
    """Probability neither of two overlapping same-ring frames survives."""
    _check_ring(mu, nu, cr_db)
    if math.isinf(cr_db):
        return 1.0
    c = 10.0 ** (cr_db / slope_b)
    if nu <= mu * c:
        return 1.0
    value = (nu**4 * (1.0 - c**-2) + mu**4 * (1.0 - c**2)) / (nu * nu - mu * mu) ** 2
    return min(max(value, 0.0), 1.0)


def capture_one(w_gw_pair: float, w_both: float) -> float:
    """Probability exactly one of the two overlapping frames survives."""
    for value in (w_gw_pair, w_both):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"probability out of range: {value}")
    if w_gw_pair + w_both > 1.0 + 1e-9:
        raise ValueError("pair-capture and both-lost probabilities exceed one")
    return min(max(1.0 - w_gw_pair - w_both, 0.0), 1.0)


@dataclass(frozen=True)
class QuadratureSpec:
    """Refinement policy for the numerical capture integrals."""

    abs_tol: float = 1e-6
    start_nodes: int = 32
    max_nodes: int = 512


def _mote_pair_inner(r0: float, mu: float, nu: float, c: float, nodes: int) -> float:
    # Probability over the interferer's ring-uniform radius r1 and uniform
    # angle that the mote-to-mote distance exceeds r0 * c.  The angular
    # integral is the closed-form arc measure (pi - arccos(bound)) / pi with
    # bound = (r0^2 + r1^2 - r0^2 c^2) / (2 r0 r1); it is 0 below
    # r1 = r0 (c - 1) and 1 above r1 = r0 (c + 1).
    norm = nu * nu - mu * mu
    lo = min(max(r0 * (c - 1.0), mu), nu)
    hi = min(max(r0 * (c + 1.0), mu), nu)
    value = (nu * nu - hi * hi) / norm
    if hi > lo:
        # sin^2 substitution flattens the square-root kinks of arccos at both
        # segment ends, keeping Gauss-Legendre spectrally accurate.
        theta, w = roots_legendre(nodes)
        theta = 0.25 * np.pi * (theta + 1.0)
        w = 0.25 * np.pi * w
        s, co = np.sin(theta), np.cos(theta)
        r1 = lo + (hi - lo) * s * s
        jac = (hi - lo) * 2.0 * s * co
        bound = (r0 * r0 + r1 * r1 - r0 * r0 * c * c) / (2.0 * r0 * r1)
        measure = (np.pi - np.arccos(np.clip(bound, -1.0, 1.0))) / np.pi
        value += float(np.sum(w * jac * 2.0 * r1 / norm * measure))
    return value


def _mote_pair_estimate(mu: float, nu: float, c: float, nodes: int) -> float:
    # Outer integral over the tagged mote's radius, split where the inner
    # integral's breakpoints cross the ring bounds.
    edges = {mu, nu}
    for denom in (c - 1.0, c + 1.0):
        if denom > 0.0:
            for limit in (mu, nu):
                candidate = limit / denom
                if mu < candidate < nu:
                    edges.add(candidate)
    grid = sorted(edges)
    norm = nu * nu - mu * mu
    x_ref, w_ref = roots_legendre(nodes)
    total = 0.0
    for lo, hi in zip(grid, grid[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        for xr, wr in zip(x_ref, w_ref):
            r0 = mid + half * xr
            total += half * wr * 2.0 * r0 / norm * _mote_pair_inner(r0, mu, nu, c, nodes)
    return float(total)


def capture_mote_pair(
    mu: float,
    nu: float,
    cr_db: float,
    slope_b: float,
    quadrature: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Probability the ACK survives one same-ring uplink interferer at the mote.

    The tagged mote receives the gateway's signal over its own distance r0; the
    interferer's signal travels the mote-to-mote distance, whose law involves
    the uniform angle between the two positions.
    """
    _check_ring(mu, nu, cr_db)
    if math.isinf(cr_db):
        return 0.0
    c = 10.0 ** (cr_db / slope_b)
    nodes = quadrature.start_nodes
    previous = _mote_pair_estimate(mu, nu, c, nodes)
    while nodes < quadrature.max_nodes:
        nodes *= 2
        estimate = _mote_pair_estimate(mu, nu, c, nodes)
        if abs(estimate - previous) < quadrature.abs_tol:
            return min(max(estimate, 0.0), 1.0)
        previous = estimate
    raise NumericalError(
        f"ACK capture quadrature did not converge below {quadrature.abs_tol} "
        f"within {quadrature.max_nodes} nodes per axis"
    )


@dataclass(frozen=True)
class CaptureRow:
    """Pairwise capture probabilities for one data-rate ring."""

    w_gw_pair: float
    w_both: float
    w_one: float
    w_mote_pair: float


@dataclass(frozen=True)
class CaptureTable:
    """Per-rate capture probabilities; entries for three or more overlapping
    frames are taken as zero."""

    rows: tuple[CaptureRow, ...]
    co_channel_rejection_db: float = field(default=math.inf)


def build_capture_table(
    plan: RatePlan,
    model: PropagationModel,
    cr_db: float,
    quadrature: QuadratureSpec = QuadratureSpec(),
) -> CaptureTable:
    """Evaluate the four capture probabilities for every ring of the plan."""
    rows = []
    for ring in plan.rings:
        mu, nu = ring.inner_radius_m, ring.outer_radius_m
        w_gw = capture_gw_pair(mu, nu, cr_db, model.slope_b)
        w_both = capture_both(mu, nu, cr_db, model.slope_b)
        rows.append(
            CaptureRow(
                w_gw_pair=w_gw,
                w_both=w_both,
                w_one=capture_one(w_gw, w_both),
                w_mote_pair=capture_mote_pair(mu, nu, cr_db, model.slope_b, quadrature),
            )
        )
    return CaptureTable(rows=tuple(rows), co_channel_rejection_db=cr_db)
