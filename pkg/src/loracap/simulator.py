"""Discrete-event simulation of the acknowledged uplink protocol.

Single gateway, ``N`` motes uniform on a disk, Poisson traffic split over
``F`` uplink channels plus one downlink channel.  Every data frame gets two
acknowledgement opportunities (same-channel ACK after ``T1``, downlink ACK at
rate 0 after ``T2``); a mote that hears neither retries after a uniform delay
in ``[1, 1 + W]`` seconds up to the retry limit.  Reception is power-based:
a transmission is decoded when its power exceeds noise plus the summed power
of same-channel same-rate interferers by the co-channel rejection margin in
every overlap segment.

A run is strictly single-threaded and deterministic for a fixed seed; the
event queue is a binary heap keyed by (time, sequence number).
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import PropagationModel
from .model import NetworkConfig

IDLE, TX, WAIT, BACKOFF = range(4)

_EV_GEN, _EV_TX_END, _EV_ACK1_START, _EV_ACK1_END, _EV_ACK2_START, _EV_ACK2_END, _EV_TIMEOUT, _EV_RETX = range(8)

_NUM_BATCHES = 10


@dataclass(frozen=True)
class SimConfig:
    """Run-control parameters wrapping a network scenario."""

    network: NetworkConfig
    propagation: PropagationModel
    duration_s: float
    warmup_s: float = 0.0
    seed: int = 0
    # Thermal floor for a 125 kHz channel with a 6 dB noise figure.  Scenario
    # files meant for comparison against the analytic model (which ignores
    # noise) should override this with a floor far below every sensitivity.
    noise_floor_dbm: float = -117.0

    def __post_init__(self) -> None:
        if not self.duration_s > self.warmup_s >= 0.0:
            raise ConfigError("duration must exceed the warmup period")


@dataclass(frozen=True)
class SimReport:
    """Counters and the attempt-level PER estimate of one run.

    ``per_estimate`` is the fraction of unsuccessful transmission attempts
    (first attempts and retries alike) concluded inside the measurement
    window; attempts abandoned because a fresh frame replaced the pending one
    are excluded.  ``data_lost_at_gw`` counts failed attempts whose frame was
    not decoded at the gateway; ``ack1_lost`` counts failed attempts whose
    frame was decoded but whose first ACK never reached the mote, and
    ``ack2_lost`` those where the second ACK was also missed (every fully
    failed decoded attempt increments both ACK counters).
    """

    frames_generated: int
    frames_delivered: int
    frames_dropped_retry_limit: int
    frames_replaced: int
    frames_in_flight: int
    attempts_total: int
    attempts_successful: int
    data_lost_at_gw: int
    ack1_lost: int
    ack2_lost: int
    per_estimate: float
    ci95_halfwidth: float
    mean_attempts_per_frame: float
    no_attempts: bool


class _Frame:
    __slots__ = ("generated_s", "attempts_used")

    def __init__(self, generated_s: float):
        self.generated_s = generated_s
        self.attempts_used = 0


class Transmission:
    """One on-air signal: uplink data frame or one of the two ACK kinds."""

    __slots__ = ("source", "channel", "rate", "start_s", "end_s", "kind", "power_dbm", "interferers")

    def __init__(self, source, channel, rate, start_s, end_s, kind, power_dbm):
        self.source = source  # mote id, or -1 for the gateway
        self.channel = channel
        self.rate = rate
        self.start_s = start_s
        self.end_s = end_s
        self.kind = kind  # "data" | "ack1" | "ack2"
        self.power_dbm = power_dbm  # received power at the gateway for uplink
        self.interferers: list[Transmission] = []


class _Attempt:
    __slots__ = (
        "mote",
        "tx",
        "token",
        "abandoned",
        "doomed_by_ack",
        "data_decoded",
        "ack1_received",
        "ack2_received",
    )

    def __init__(self, mote, tx, token):
        self.mote = mote
        self.tx = tx
        self.token = token
        self.abandoned = False
        self.doomed_by_ack = False
        self.data_decoded = False
        self.ack1_received = False
        self.ack2_received = False


@dataclass
class MoteState:
    """Position, rate assignment and protocol state of one end device."""

    id: int
    distance_m: float
    angle_rad: float
    rate: int
    power_at_gw_dbm: float
    gw_power_at_mote_dbm: float
    rng: random.Random
    state: int = IDLE
    frame: _Frame | None = None
    pending_new: _Frame | None = None
    attempt: _Attempt | None = None
    token: int = 0
    x: float = field(init=False)
    y: float = field(init=False)

    def __post_init__(self) -> None:
        self.x = self.distance_m * math.cos(self.angle_rad)
        self.y = self.distance_m * math.sin(self.angle_rad)


def capture_adjudicate(
    target_power_dbm: float,
    target_start_s: float,
    target_end_s: float,
    interferers: list[tuple[float, float, float]],
    cr_db: float,
    noise_floor_dbm: float,
) -> bool:
    """Power-based decoding decision over the whole target duration.

    ``interferers`` holds (start, end, power_dbm at the receiver) for signals
    already filtered to the same channel and rate.  The margin condition must
    hold in every overlap segment; the interferer set may change mid-frame.
    Without interferers the signal only has to clear the noise floor.  Ties
    are lost: the margin must be strictly positive (1 nano-dB guard).
    """
    noise_mw = 10.0 ** (noise_floor_dbm / 10.0)
    overlapping = [
        (max(s, target_start_s), min(e, target_end_s), p)
        for s, e, p in interferers
        if e > target_start_s and s < target_end_s
    ]
    if not overlapping:
        return target_power_dbm - noise_floor_dbm > 1e-9
    if math.isinf(cr_db):
        return False
    edges = sorted({t for s, e, _ in overlapping for t in (s, e)})
    target_mw = 10.0 ** (target_power_dbm / 10.0)
    margin = 10.0 ** (cr_db / 10.0)
    for lo, hi in zip(edges, edges[1:]):
        mid = 0.5 * (lo + hi)
        total_mw = noise_mw + sum(
            10.0 ** (p / 10.0) for s, e, p in overlapping if s <= mid < e
        )
        if target_power_dbm - 10.0 * math.log10(margin * total_mw) <= 1e-9:
            return False
    # Segments without any interferer still need to clear the noise floor.
    return target_power_dbm - noise_floor_dbm > 1e-9


def place_motes(
    network: NetworkConfig, propagation: PropagationModel, seed: int
) -> list[MoteState]:
    """Drop motes i.i.d. uniform on the cell disk and assign rates by power.

    A mote whose received power falls below the weakest threshold while still
    inside the cell keeps rate 0; powers above the strongest threshold map to
    the highest rate.
    """
    plan = network.plan
    if plan.cell_radius_m > plan.rings[0].outer_radius_m * (1.0 + 1e-12):
        raise ConfigError("cell radius exceeds the coverage of rate 0")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    mote_seeds = np.random.SeedSequence([seed, 1]).generate_state(network.num_motes, np.uint64)
    radii = plan.cell_radius_m * np.sqrt(rng.uniform(0.0, 1.0, network.num_motes))
    angles = rng.uniform(0.0, 2.0 * np.pi, network.num_motes)
    slope = propagation.slope_b
    intercept_mote = propagation.intercept(propagation.tx_power_mote_dbm)
    intercept_gw = propagation.intercept(propagation.tx_power_gw_dbm)
    motes = []
    for i in range(network.num_motes):
        d = max(float(radii[i]), 1e-9)
        power = intercept_mote - slope * math.log10(d)
        # Contiguous ascending intervals: the first upper bound above the
        # received power picks the rate; below the weakest bound stays rate 0.
        rate = plan.rate_count - 1
        for j, ring in enumerate(plan.rings):
            if power < ring.sensitivity_hi_dbm:
                rate = j
                break
        motes.append(
            MoteState(
                id=i,
                distance_m=d,
                angle_rad=float(angles[i]),
                rate=rate,
                power_at_gw_dbm=power,
                gw_power_at_mote_dbm=intercept_gw - slope * math.log10(d),
                rng=random.Random(int(mote_seeds[i])),
            )
        )
    return motes


class Simulator:
    """One deterministic run of the protocol; see :func:`run`."""

    def __init__(self, config: SimConfig, trace=None):
        self.config = config
        net = config.network
        self.net = net
        self.plan = net.plan
        self.cr_db = net.cr_db
        self.noise_dbm = config.noise_floor_dbm
        self.t1 = net.ack_delay_1_s
        self.t2 = net.ack_delay_2_s
        self.w = net.retry_window_s
        self.rl = net.retry_limit
        self.t_data = [r.airtime.data_frame_s for r in self.plan.rings]
        self.t_ack = [r.airtime.ack_s for r in self.plan.rings]
        self.trace = trace
        self.motes = place_motes(net, config.propagation, config.seed)
        self.heap: list = []
        self.seq = 0
        self.now = 0.0
        # on-air bookkeeping, keyed by (channel, rate)
        self.active_data: dict[tuple[int, int], list[Transmission]] = {}
        self.active_ack1_tx: dict[tuple[int, int], Transmission | None] = {}
        self.active_ack1_rx: dict[tuple[int, int], list] = {}
        self.downlink_busy_until = -math.inf
        # lifetime counters (conservation law)
        self.frames_generated = 0
        self.frames_delivered = 0
        self.frames_dropped = 0
        self.frames_replaced = 0
        # measurement-window counters
        self.attempts_total = 0
        self.attempts_ok = 0
        self.data_lost = 0
        self.ack1_lost = 0
        self.ack2_lost = 0
        self.batch_attempts = [0] * _NUM_BATCHES
        self.batch_failures = [0] * _NUM_BATCHES
        self.frame_attempt_counts: list[int] = []

    # -- event machinery -------------------------------------------------

    def _schedule(self, time_s: float, kind: int, a=None, b=None) -> None:
        if time_s < self.now:
            raise RuntimeError("event scheduled in the past")
        heapq.heappush(self.heap, (time_s, self.seq, kind, a, b))
        self.seq += 1

    def _emit(self, entity: str, event: str, channel: int, rate: int, outcome: str) -> None:
        if self.trace is not None:
            self.trace.write(f"{self.now:.6f},{entity},{event},{channel},{rate},{outcome}\n")

    # -- protocol logic --------------------------------------------------

    def _start_attempt(self, mote: MoteState) -> None:
        frame = mote.frame
        frame.attempts_used += 1
        rate = mote.rate
        channel = mote.rng.randrange(self.net.num_channels)
        tx = Transmission(
            mote.id, channel, rate, self.now, self.now + self.t_data[rate], "data",
            mote.power_at_gw_dbm,
        )
        att = _Attempt(mote, tx, mote.token)
        mote.attempt = att
        mote.state = TX
        key = (channel, rate)
        ack1 = self.active_ack1_tx.get(key)
        if ack1 is not None and ack1.end_s > self.now:
            # The gateway is transmitting on this channel and rate: the frame
            # cannot be received there.
            att.doomed_by_ack = True
        active = self.active_data.setdefault(key, [])
        tx.interferers.extend(t for t in active if t.end_s > self.now)
        for other in active:
            if other.end_s > self.now:
                other.interferers.append(tx)
        active.append(tx)
        for reception in self.active_ack1_rx.get(key, ()):
            reception[1].append(tx)
        self._emit(f"mote{mote.id}", "tx_start", channel, rate, f"attempt{frame.attempts_used}")
        self._schedule(tx.end_s, _EV_TX_END, att)

    def _on_tx_end(self, att: _Attempt) -> None:
        tx = att.tx
        mote = att.mote
        key = (tx.channel, tx.rate)
        self.active_data[key].remove(tx)
        decoded = not att.doomed_by_ack and capture_adjudicate(
            tx.power_dbm,
            tx.start_s,
            tx.end_s,
            [(o.start_s, o.end_s, o.power_dbm) for o in tx.interferers],
            self.cr_db,
            self.noise_dbm,
        )
        att.data_decoded = decoded
        self._emit("gw", "data_rx", tx.channel, tx.rate, "decoded" if decoded else "lost")
        if decoded:
            self._schedule(tx.end_s + self.t1, _EV_ACK1_START, att)
            self._schedule(tx.end_s + self.t2, _EV_ACK2_START, att)
        if mote.attempt is att and not att.abandoned:
            mote.state = WAIT
            deadline = tx.end_s + self.t2 + self.t_ack[0] + 1e-9
            self._schedule(deadline, _EV_TIMEOUT, mote, att.token)

    def _on_ack1_start(self, att: _Attempt) -> None:
        tx = att.tx
        key = (tx.channel, tx.rate)
        receiving = any(t.end_s > self.now for t in self.active_data.get(key, ()))
        busy = self.active_ack1_tx.get(key)
        if receiving or (busy is not None and busy.end_s > self.now):
            self._emit("gw", "ack1_cancel", tx.channel, tx.rate, "busy")
            return
        ack = Transmission(
            -1, tx.channel, tx.rate, self.now, self.now + self.t_ack[tx.rate], "ack1",
            self.config.propagation.tx_power_gw_dbm,
        )
        self.active_ack1_tx[key] = ack
        reception = (att, [])  # interferer list fills as frames start during the ACK
        self.active_ack1_rx.setdefault(key, []).append(reception)
        self._emit("gw", "ack1_start", tx.channel, tx.rate, f"mote{att.mote.id}")
        self._schedule(ack.end_s, _EV_ACK1_END, att, (ack, reception))

    def _on_ack1_end(self, att: _Attempt, payload) -> None:
        ack, reception = payload
        key = (ack.channel, ack.rate)
        if self.active_ack1_tx.get(key) is ack:
            self.active_ack1_tx[key] = None
        self.active_ack1_rx[key].remove(reception)
        mote = att.mote
        if att.abandoned or mote.attempt is not att:
            return
        interferers = [
            (o.start_s, o.end_s, self._power_between(o.source, mote))
            for o in reception[1]
        ]
        decoded = capture_adjudicate(
            mote.gw_power_at_mote_dbm, ack.start_s, ack.end_s, interferers,
            self.cr_db, self.noise_dbm,
        )
        self._emit(f"mote{mote.id}", "ack1_rx", ack.channel, ack.rate, "decoded" if decoded else "lost")
        if decoded:
            att.ack1_received = True
            self._resolve(mote, success=True)

    def _on_ack2_start(self, att: _Attempt) -> None:
        if self.now < self.downlink_busy_until:
            self._emit("gw", "ack2_skip", -1, 0, f"mote{att.mote.id}")
            return
        self.downlink_busy_until = self.now + self.t_ack[0]
        self._emit("gw", "ack2_start", -1, 0, f"mote{att.mote.id}")
        self._schedule(self.downlink_busy_until, _EV_ACK2_END, att)

    def _on_ack2_end(self, att: _Attempt) -> None:
        mote = att.mote
        if att.abandoned or mote.attempt is not att:
            return
        decoded = capture_adjudicate(
            mote.gw_power_at_mote_dbm, self.now - self.t_ack[0], self.now, [],
            self.cr_db, self.noise_dbm,
        )
        self._emit(f"mote{mote.id}", "ack2_rx", -1, 0, "decoded" if decoded else "lost")
        if decoded:
            att.ack2_received = True
            self._resolve(mote, success=True)

    def _on_timeout(self, mote: MoteState, token: int) -> None:
        if token != mote.token or mote.attempt is None:
            return
        self._resolve(mote, success=False)

    def _power_between(self, source_id: int, mote: MoteState) -> float:
        other = self.motes[source_id]
        d = max(math.hypot(other.x - mote.x, other.y - mote.y), 1e-3)
        prop = self.config.propagation
        return prop.intercept_a - prop.slope_b * math.log10(d)

    # -- attempt resolution and traffic ----------------------------------

    def _resolve(self, mote: MoteState, success: bool) -> None:
        att = mote.attempt
        mote.attempt = None
        mote.token += 1
        if not att.abandoned and self.config.warmup_s <= self.now <= self.config.duration_s:
            self._record_attempt(att, success)
        frame = mote.frame
        if success:
            self.frames_delivered += 1
            self.frame_attempt_counts.append(frame.attempts_used)
            mote.frame = None
            self._emit(f"mote{mote.id}", "frame_delivered", -1, mote.rate, f"attempts{frame.attempts_used}")
        elif mote.pending_new is not None:
            self.frames_replaced += 1
            mote.frame = None
        elif frame.attempts_used <= self.rl:
            delay = 1.0 + mote.rng.random() * self.w
            mote.state = BACKOFF
            self._schedule(self.now + delay, _EV_RETX, mote, mote.token)
            return
        else:
            self.frames_dropped += 1
            self.frame_attempt_counts.append(frame.attempts_used)
            mote.frame = None
            self._emit(f"mote{mote.id}", "frame_dropped", -1, mote.rate, f"attempts{frame.attempts_used}")
        if mote.pending_new is not None:
            mote.frame = mote.pending_new
            mote.pending_new = None
            self._start_attempt(mote)
        else:
            mote.state = IDLE

    def _record_attempt(self, att: _Attempt, success: bool) -> None:
        self.attempts_total += 1
        window = self.config.duration_s - self.config.warmup_s
        batch = min(
            int((self.now - self.config.warmup_s) / window * _NUM_BATCHES),
            _NUM_BATCHES - 1,
        )
        self.batch_attempts[batch] += 1
        if success:
            self.attempts_ok += 1
            return
        self.batch_failures[batch] += 1
        if not att.data_decoded:
            self.data_lost += 1
        else:
            self.ack1_lost += 1
            self.ack2_lost += 1

    def _on_generation(self, mote: MoteState) -> None:
        rate = self.net.load_fps / self.net.num_motes
        if rate > 0:
            gap = mote.rng.expovariate(rate)
            if self.now + gap <= self.config.duration_s:
                self._schedule(self.now + gap, _EV_GEN, mote)
        self.frames_generated += 1
        new_frame = _Frame(self.now)
        if mote.state == IDLE:
            mote.frame = new_frame
            self._start_attempt(mote)
        elif mote.state == TX:
            # The in-flight attempt runs to completion and counts; only the
            # frame awaiting retransmission is superseded.
            if mote.pending_new is not None:
                self.frames_replaced += 1
            mote.pending_new = new_frame
        elif mote.state == WAIT:
            if mote.pending_new is not None:
                self.frames_replaced += 1
                mote.pending_new = None
            self.frames_replaced += 1
            mote.attempt.abandoned = True
            mote.attempt = None
            mote.token += 1
            mote.frame = new_frame
            self._start_attempt(mote)
        else:  # BACKOFF
            self.frames_replaced += 1
            mote.token += 1
            mote.frame = new_frame
            self._start_attempt(mote)

    def _on_retransmit(self, mote: MoteState, token: int) -> None:
        if token != mote.token or mote.state != BACKOFF:
            return
        self._start_attempt(mote)

    # -- main loop -------------------------------------------------------

    def run(self) -> SimReport:
        rate = self.net.load_fps / self.net.num_motes
        if rate > 0:
            for mote in self.motes:
                first = mote.rng.expovariate(rate)
                if first <= self.config.duration_s:
                    self._schedule(first, _EV_GEN, mote)
        handlers = {
            _EV_GEN: lambda a, b: self._on_generation(a),
            _EV_TX_END: lambda a, b: self._on_tx_end(a),
            _EV_ACK1_START: lambda a, b: self._on_ack1_start(a),
            _EV_ACK1_END: self._on_ack1_end,
            _EV_ACK2_START: lambda a, b: self._on_ack2_start(a),
            _EV_ACK2_END: lambda a, b: self._on_ack2_end(a),
            _EV_TIMEOUT: self._on_timeout,
            _EV_RETX: self._on_retransmit,
        }
        heap = self.heap
        while heap:
            time_s, _, kind, a, b = heapq.heappop(heap)
            if time_s > self.config.duration_s:
                break
            if time_s < self.now:
                raise RuntimeError("event queue produced non-monotone time")
            self.now = time_s
            handlers[kind](a, b)
        return self._report()

    def _report(self) -> SimReport:
        in_flight = sum(
            (1 if m.frame is not None else 0) + (1 if m.pending_new is not None else 0)
            for m in self.motes
        )
        failures = self.attempts_total - self.attempts_ok
        per = failures / self.attempts_total if self.attempts_total else 0.0
        ci = 0.0
        batch_pers = [
            f / a for f, a in zip(self.batch_failures, self.batch_attempts) if a > 0
        ]
        if len(batch_pers) >= 2:
            mean = sum(batch_pers) / len(batch_pers)
            var = sum((p - mean) ** 2 for p in batch_pers) / (len(batch_pers) - 1)
            ci = 1.96 * math.sqrt(var / len(batch_pers))
        mean_attempts = (
            sum(self.frame_attempt_counts) / len(self.frame_attempt_counts)
            if self.frame_attempt_counts
            else 0.0
        )
        return SimReport(
            frames_generated=self.frames_generated,
            frames_delivered=self.frames_delivered,
            frames_dropped_retry_limit=self.frames_dropped,
            frames_replaced=self.frames_replaced,
            frames_in_flight=in_flight,
            attempts_total=self.attempts_total,
            attempts_successful=self.attempts_ok,
            data_lost_at_gw=self.data_lost,
            ack1_lost=self.ack1_lost,
            ack2_lost=self.ack2_lost,
            per_estimate=per,
            ci95_halfwidth=ci,
            mean_attempts_per_frame=mean_attempts,
            no_attempts=self.attempts_total == 0,
        )


def run(config: SimConfig, trace=None) -> SimReport:
    """Execute one simulation run; deterministic for a fixed seed."""
    return Simulator(config, trace=trace).run()
