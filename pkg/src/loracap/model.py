"""Analytic model of the acknowledged uplink: per-rate success probabilities
with capture, retransmission accounting, aggregate PER and the capacity bound.

The transmission cycle at rate ``i`` is: data frame of duration ``T_data_i``,
first ACK ``T1`` after the frame end on the same channel at the same rate,
second ACK ``T2 = T1 + 1`` after the frame end on the downlink channel at
rate 0.  A mote that receives neither ACK retries after a uniform random
delay in ``[1, 1 + W]`` seconds, up to the retry limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.special import roots_legendre

from .airtime import Airtime
from .errors import ConfigError, NumericalError
from .geometry import CaptureRow, CaptureTable, RatePlan


@dataclass(frozen=True)
class NetworkConfig:
    """Complete scenario description shared by the model and the simulator."""

    num_motes: int
    num_channels: int
    load_fps: float
    plan: RatePlan
    capture: CaptureTable
    retry_limit: int = 7
    ack_delay_1_s: float = 1.0
    ack_delay_2_s: float | None = None  # defaults to ack_delay_1_s + 1
    retry_window_s: float = 2.0
    payload_bytes: int = 51

    def __post_init__(self) -> None:
        if self.num_motes < 1:
            raise ConfigError("at least one mote is required")
        if self.num_channels < 1:
            raise ConfigError("at least one uplink channel is required")
        if self.load_fps < 0:
            raise ConfigError("network load must be non-negative")
        if self.retry_limit < 0:
            raise ConfigError("retry limit must be non-negative")
        if self.retry_window_s <= 0:
            raise ConfigError("retry window must be positive")
        if self.ack_delay_2_s is None:
            object.__setattr__(self, "ack_delay_2_s", self.ack_delay_1_s + 1.0)

    @property
    def cr_db(self) -> float:
        return self.capture.co_channel_rejection_db


@dataclass(frozen=True)
class RateReport:
    """Per-rate intermediate quantities of the analytic pipeline."""

    rate: int
    usage_prob: float
    channel_load_fps: float
    p_data: float
    p_ack1: float
    p_ack2: float
    p_ack: float
    p_success_first: float
    p_recollide: float
    p_data_retry: float
    p_success_retry: float
    p_gen_quiet: float
    p_first: float


@dataclass(frozen=True)
class ModelReport:
    """Per-rate rows plus the aggregate success probability, PER and capacity."""

    load_fps: float
    rates: tuple[RateReport, ...]
    p_success: float
    per: float
    capacity_fps: float

    @property
    def within_validity(self) -> bool:
        """True when the load is below the capacity bound of the model."""
        return self.load_fps <= self.capacity_fps

    def to_rows(self) -> list[dict]:
        """Flat records: one per rate plus an aggregate row."""
        rows = [vars(r) | {"kind": "rate"} for r in self.rates]
        rows.append(
            {
                "kind": "aggregate",
                "load_fps": self.load_fps,
                "p_success": self.p_success,
                "per": self.per,
                "capacity_fps": self.capacity_fps,
                "within_validity": self.within_validity,
            }
        )
        return rows


def solve_p_data(
    r_i: float, airtime: Airtime, w_gw_pair: float, num_motes: int
) -> float:
    """Probability a data frame is decoded at the gateway.

    The no-interference term is implicit (successful frames generate ACKs that
    can themselves collide with data), so the value is the fixed point of

        P = exp(-(2*T_data + P*T_ack) * r) + 2*r*T_data * exp(-2*r*T_data) * w_gw_pair

    solved by damped iteration.  Capture against two or more simultaneous
    interferers is neglected, which truncates the interferer sum at one.
    """
    if r_i < 0:
        raise ValueError("per-channel load must be non-negative")
    if r_i == 0.0:
        return 1.0
    t_data, t_ack = airtime.data_frame_s, airtime.ack_s
    capture_term = 0.0
    if num_motes > 1:
        capture_term = 2.0 * r_i * t_data * math.exp(-2.0 * r_i * t_data) * w_gw_pair

    def rhs(p: float) -> float:
        return math.exp(-(2.0 * t_data + p * t_ack) * r_i) + capture_term

    p = 1.0
    for _ in range(10_000):
        nxt = 0.5 * p + 0.5 * rhs(p)
        if abs(nxt - rhs(nxt)) < 1e-10:
            return min(max(nxt, 0.0), 1.0)
        p = nxt
    raise NumericalError(
        f"fixed point for data success did not converge, residual {abs(p - rhs(p)):.3e}"
    )


def p_ack1(
    r_i: float, airtime: Airtime, t1_s: float, w_mote_pair: float, num_motes: int
) -> float:
    """Probability the first ACK is received, given the data frame succeeded.

    A data frame starting more than T1 before the ACK would have broken the
    acknowledged frame itself, hence the min(T1, T_data) exposure window; a
    frame starting during the ACK may still lose to it by capture at the mote.
    """
    if r_i < 0:
        raise ValueError("per-channel load must be non-negative")
    t_data, t_ack = airtime.data_frame_s, airtime.ack_s
    value = math.exp(-(min(t1_s, t_data) + t_ack) * r_i)
    if num_motes > 1:
        value += r_i * t_ack * math.exp(-r_i * t_ack) * w_mote_pair
    return min(max(value, 0.0), 1.0)


def p_ack2(
    rate: int,
    load_fps: float,
    num_channels: int,
    plan: RatePlan,
    p_data_all: list[float],
) -> float:
    """Probability the second ACK is not blocked by another second ACK.

    The downlink channel is shared by all rates and channels: the ACK is lost
    when any other successful frame's second ACK starts first and overlaps it.
    """
    t_ack0 = plan.rings[0].airtime.ack_s
    successful = sum(
        ring.usage_prob * p for ring, p in zip(plan.rings, p_data_all)
    )
    own = plan.rings[rate].usage_prob * p_data_all[rate] / num_channels
    return math.exp(-t_ack0 * load_fps * (1.0 - own) * successful)


def p_ack(p1: float, p2: float) -> float:
    """Probability at least one of the two ACKs arrives (independent paths)."""
    for value in (p1, p2):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"probability out of range: {value}")
    return p1 + p2 - p1 * p2


def p_success_first(p_data: float, p_ack_value: float) -> float:
    """Probability the first transmission attempt succeeds end to end."""
    return p_data * p_ack_value


def collision_indicator(
    y: float, z: float, t_data: float, t_ack: float, t1_s: float
) -> int:
    """1 when two retransmitted frames starting at y and z collide again.

    They collide when the frames overlap in time, or when one frame starts
    inside the window of the other frame's first ACK (symmetrically).
    """
    d = z - y
    if -t_data <= d <= t_data:
        return 1
    if t_data + t1_s <= d <= t_data + t1_s + t_ack:
        return 1
    if t_data + t1_s <= -d <= t_data + t1_s + t_ack:
        return 1
    return 0


def _triangular_cdf(t: float, w: float) -> float:
    # CDF of the difference of two independent uniforms on [0, w].
    if t <= -w:
        return 0.0
    if t <= 0.0:
        return (t + w) ** 2 / (2.0 * w * w)
    if t <= w:
        return 1.0 - (w - t) ** 2 / (2.0 * w * w)
    return 1.0


def _recollision_given_offset(
    x: float, t_data: float, t_ack: float, t1_s: float, w: float
) -> float:
    # Probability over the two uniform retry delays that the frames, offset by
    # x initially, collide again.  The start-time difference is x plus a
    # triangular-distributed delay difference; the collision condition is a
    # union of three disjoint intervals in that difference.
    intervals = (
        (-t_data - t1_s - t_ack, -t_data - t1_s),
        (-t_data, t_data),
        (t_data + t1_s, t_data + t1_s + t_ack),
    )
    return sum(
        _triangular_cdf(hi - x, w) - _triangular_cdf(lo - x, w) for lo, hi in intervals
    )


def p_recollide(
    r_i: float,
    num_channels: int,
    airtime: Airtime,
    t1_s: float,
    retry_window_s: float,
) -> float:
    """Conditional probability that a two-mote collision repeats on retry.

    The initial offset between the two frames follows a two-sided truncated
    exponential conditioned on the first collision; both motes redraw their
    channel (same with probability 1/F) and a uniform delay from the retry
    window.  Integration is exact piecewise Gauss-Legendre: the inner delay
    integral is closed-form, and the outer offset integrand is smooth between
    the breakpoints of that closed form.
    """
    if retry_window_s <= 0:
        raise ValueError("retry window must be positive")
    if num_channels < 1:
        raise ValueError("at least one channel is required")
    t_data, t_ack = airtime.data_frame_s, airtime.ack_s
    w = retry_window_s
    # Breakpoints of the piecewise-quadratic inner probability, restricted to
    # the positive half of the symmetric offset range [0, t_data].
    edges = {0.0, t_data}
    for endpoint in (
        -t_data - t1_s - t_ack,
        -t_data - t1_s,
        -t_data,
        t_data,
        t_data + t1_s,
        t_data + t1_s + t_ack,
    ):
        for shift in (-w, 0.0, w):
            candidate = endpoint + shift
            if 0.0 < candidate < t_data:
                edges.add(candidate)
    grid = sorted(edges)

    def density(x: float) -> float:
        return r_i * math.exp(-r_i * x) if r_i > 0 else 1.0

    def integrate(nodes: int) -> float:
        x_ref, w_ref = roots_legendre(nodes)
        total = 0.0
        for lo, hi in zip(grid, grid[1:]):
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            for xr, wr in zip(x_ref, w_ref):
                x = mid + half * xr
                total += (
                    half
                    * wr
                    * density(x)
                    * _recollision_given_offset(x, t_data, t_ack, t1_s, w)
                )
        return total

    numerator = integrate(16)
    refined = integrate(32)
    if abs(refined - numerator) > 1e-9:
        raise NumericalError("re-collision quadrature did not converge")
    denominator = -math.expm1(-r_i * t_data) if r_i > 0 else t_data
    return refined / denominator / num_channels


def p_data_retry(p_data: float, p_recollide_value: float, row: CaptureRow) -> float:
    """Probability a retransmitted data frame is decoded at the gateway.

    Conditioned on the first attempt having failed (so the tagged frame did
    not capture): either the interferer won and the retry faces fresh traffic,
    or both frames were lost and the retry may collide with the other mote's
    retry as well.
    """
    if row.w_gw_pair >= 1.0:
        # Degenerate: capture always succeeds, so retransmissions never occur.
        return p_data
    numerator = row.w_one + row.w_both * (1.0 - p_recollide_value)
    return numerator / (1.0 - row.w_gw_pair) * p_data


def p_gen_quiet(
    load_fps: float,
    num_motes: int,
    airtime: Airtime,
    t2_s: float,
    t_ack0_s: float,
    retry_window_s: float,
) -> float:
    """Probability no new frame arrives at the mote during a retry cycle.

    The cycle spans the frame, both ACK windows and the random retry delay of
    ``1 + U(0, W)`` seconds; a new arrival replaces the pending frame.
    """
    if load_fps <= 0.0:
        return 1.0
    a = load_fps / num_motes
    cycle = airtime.data_frame_s + t2_s + t_ack0_s + 1.0
    w = retry_window_s
    if a * w == 0.0:  # per-mote rate underflowed; the averaged factor tends to 1
        return math.exp(-a * cycle)
    return math.exp(-a * cycle) * -math.expm1(-a * w) / (a * w)


def p_first_attempt(
    p_success_1: float, p_success_retry_value: float, p_gen_quiet_value: float, retry_limit: int
) -> float:
    """Probability a random transmission attempt is a first attempt.

    Equals the reciprocal of the mean number of attempts per frame: a retry
    happens only when the previous attempt failed and no fresh frame replaced
    the pending one, up to the retry limit.
    """
    q = (1.0 - p_success_retry_value) * p_gen_quiet_value
    series = sum(q**r for r in range(retry_limit + 1))
    return 1.0 / (1.0 + (1.0 - p_success_1) * p_gen_quiet_value * series)


def capacity(config: NetworkConfig) -> float:
    """Load bound above which every retry collides with fresh traffic.

    The number of channels divided by the usage-weighted mean retry cycle
    (frame, ACK windows and mean retry delay).
    """
    plan = config.plan
    t_ack0 = plan.rings[0].airtime.ack_s
    mean_cycle = sum(
        ring.usage_prob
        * (
            ring.airtime.data_frame_s
            + config.ack_delay_2_s
            + t_ack0
            + 1.0
            + config.retry_window_s / 2.0
        )
        for ring in plan.rings
    )
    return config.num_channels / mean_cycle


def evaluate(config: NetworkConfig) -> ModelReport:
    """Run the full per-rate pipeline and aggregate PER for one load point."""
    return _evaluate(config, config.capture)


def evaluate_no_capture(config: NetworkConfig) -> ModelReport:
    """Pure-ALOHA-with-ACK reduction: every overlap destroys all frames.

    Equivalent to the full pipeline with the capture sums dropped; serves as
    the no-capture baseline the full model must reproduce at infinite
    co-channel rejection.
    """
    disabled = CaptureTable(
        rows=tuple(
            CaptureRow(w_gw_pair=0.0, w_both=1.0, w_one=0.0, w_mote_pair=0.0)
            for _ in config.plan.rings
        ),
        co_channel_rejection_db=math.inf,
    )
    return _evaluate(config, disabled)


def _evaluate(config: NetworkConfig, capture: CaptureTable) -> ModelReport:
    plan = config.plan
    if len(capture.rows) != plan.rate_count:
        raise ConfigError("capture table and rate plan disagree on the rate count")
    lam = config.load_fps
    t1 = config.ack_delay_1_s
    t2 = config.ack_delay_2_s
    t_ack0 = plan.rings[0].airtime.ack_s
    loads = [lam * ring.usage_prob / config.num_channels for ring in plan.rings]
    p_data_all = [
        solve_p_data(r_i, ring.airtime, row.w_gw_pair, config.num_motes)
        for r_i, ring, row in zip(loads, plan.rings, capture.rows)
    ]

    rows = []
    p_success_total = 0.0
    for i, (ring, cap_row, r_i, p_data) in enumerate(
        zip(plan.rings, capture.rows, loads, p_data_all)
    ):
        try:
            ack1 = p_ack1(r_i, ring.airtime, t1, cap_row.w_mote_pair, config.num_motes)
            ack2 = p_ack2(i, lam, config.num_channels, plan, p_data_all)
            ack_any = p_ack(ack1, ack2)
            success_first = p_success_first(p_data, ack_any)
            recollide = p_recollide(
                r_i, config.num_channels, ring.airtime, t1, config.retry_window_s
            )
            data_retry = p_data_retry(p_data, recollide, cap_row)
            success_retry = p_success_first(data_retry, ack_any)
            gen_quiet = p_gen_quiet(
                lam, config.num_motes, ring.airtime, t2, t_ack0, config.retry_window_s
            )
            first = p_first_attempt(
                success_first, success_retry, gen_quiet, config.retry_limit
            )
        except NumericalError as exc:
            raise NumericalError(f"rate {i}: {exc}") from exc
        rows.append(
            RateReport(
                rate=i,
                usage_prob=ring.usage_prob,
                channel_load_fps=r_i,
                p_data=p_data,
                p_ack1=ack1,
                p_ack2=ack2,
                p_ack=ack_any,
                p_success_first=success_first,
                p_recollide=recollide,
                p_data_retry=data_retry,
                p_success_retry=success_retry,
                p_gen_quiet=gen_quiet,
                p_first=first,
            )
        )
        p_success_total += ring.usage_prob * (
            first * success_first + (1.0 - first) * success_retry
        )

    return ModelReport(
        load_fps=lam,
        rates=tuple(rows),
        p_success=p_success_total,
        per=1.0 - p_success_total,
        capacity_fps=capacity(config),
    )
