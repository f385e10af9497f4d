import io
import math

import pytest
from scipy import stats

from loracap import (
    ConfigError,
    PropagationModel,
    SimConfig,
    Simulator,
    build_network,
    capture_adjudicate,
    evaluate,
    place_motes,
    run_simulation as run,
)
from loracap.simulator import _EV_RETX

EU_PROP = PropagationModel()
NO_NOISE = -500.0


def make_config(load_fps, num_motes=1000, cr_db=math.inf, duration_s=5000.0,
                warmup_s=200.0, seed=1, noise_floor_dbm=NO_NOISE):
    return SimConfig(
        network=build_network(cr_db=cr_db, num_motes=num_motes, load_fps=load_fps),
        propagation=EU_PROP,
        duration_s=duration_s,
        warmup_s=warmup_s,
        seed=seed,
        noise_floor_dbm=noise_floor_dbm,
    )


class TestCaptureAdjudicate:
    def test_clean_signal_above_noise(self):
        assert capture_adjudicate(-100.0, 0.0, 1.0, [], 0.0, -200.0)

    def test_clean_signal_below_noise(self):
        assert not capture_adjudicate(-120.0, 0.0, 1.0, [], 0.0, -117.0)

    def test_interferer_outside_window_ignored(self):
        away = [(2.0, 3.0, -50.0), (-2.0, 0.0, -50.0)]
        assert capture_adjudicate(-100.0, 0.0, 1.0, away, math.inf, -200.0)

    def test_no_capture_any_overlap_kills(self):
        weak = [(0.4, 0.6, -180.0)]
        assert not capture_adjudicate(-100.0, 0.0, 1.0, weak, math.inf, -200.0)

    def test_zero_margin_stronger_wins(self):
        assert capture_adjudicate(-100.0, 0.0, 1.0, [(0.0, 1.0, -103.0)], 0.0, -200.0)
        assert not capture_adjudicate(-103.0, 0.0, 1.0, [(0.0, 1.0, -100.0)], 0.0, -200.0)

    def test_exact_tie_is_lost(self):
        assert not capture_adjudicate(-100.0, 0.0, 1.0, [(0.0, 1.0, -100.0)], 0.0, -200.0)

    def test_interferer_powers_add(self):
        # Two interferers each at half the target power sum to an exact tie.
        half = -100.0 + 10.0 * math.log10(0.5)
        both = [(0.0, 1.0, half), (0.0, 1.0, half)]
        assert not capture_adjudicate(-100.0, 0.0, 1.0, both, 0.0, -200.0)
        assert capture_adjudicate(-100.0, 0.0, 1.0, both[:1], 0.0, -200.0)

    def test_margin_threshold(self):
        assert not capture_adjudicate(-100.0, 0.0, 1.0, [(0.0, 1.0, -105.0)], 6.0, -200.0)
        assert capture_adjudicate(-100.0, 0.0, 1.0, [(0.0, 1.0, -107.0)], 6.0, -200.0)

    def test_margin_must_hold_in_every_segment(self):
        # A strong interferer covering only the first half still kills the
        # frame even though the average interference would be tolerable.
        partial = [(0.0, 0.5, -99.0)]
        assert not capture_adjudicate(-100.0, 0.0, 1.0, partial, 0.0, -200.0)

    def test_noise_contributes_to_interference_sum(self):
        # Interferer exactly 3 dB down passes with negligible noise but fails
        # once the noise floor is comparable to the interference.
        just_weaker = [(0.0, 1.0, -103.0)]
        assert capture_adjudicate(-100.0, 0.0, 1.0, just_weaker, 0.0, -200.0)
        assert not capture_adjudicate(-100.0, 0.0, 1.0, just_weaker, 0.0, -103.0)

    def test_gap_segment_still_needs_noise_clearance(self):
        weak = [(0.0, 0.2, -150.0)]
        assert not capture_adjudicate(-120.0, 0.0, 1.0, weak, 0.0, -117.0)


class TestPlaceMotes:
    def test_deterministic_per_seed(self):
        net = build_network(cr_db=math.inf, num_motes=50)
        a = place_motes(net, EU_PROP, seed=7)
        b = place_motes(net, EU_PROP, seed=7)
        c = place_motes(net, EU_PROP, seed=8)
        assert [(m.distance_m, m.rate) for m in a] == [(m.distance_m, m.rate) for m in b]
        assert [m.distance_m for m in a] != [m.distance_m for m in c]

    def test_positions_inside_cell(self):
        net = build_network(cr_db=math.inf, num_motes=2000)
        motes = place_motes(net, EU_PROP, seed=3)
        radius = net.plan.cell_radius_m
        assert all(0.0 < m.distance_m <= radius for m in motes)

    def test_rate_matches_received_power_band(self):
        net = build_network(cr_db=math.inf, num_motes=2000)
        for m in place_motes(net, EU_PROP, seed=3):
            ring = net.plan.rings[m.rate]
            assert m.power_at_gw_dbm >= ring.sensitivity_lo_dbm - 1e-9
            if m.rate < net.plan.rate_count - 1:
                assert m.power_at_gw_dbm < ring.sensitivity_hi_dbm + 1e-9

    def test_rate_frequencies_match_ring_areas(self):
        n = 200_000
        net = build_network(cr_db=math.inf, num_motes=n)
        motes = place_motes(net, EU_PROP, seed=11)
        counts = [0] * net.plan.rate_count
        for m in motes:
            counts[m.rate] += 1
        for ring, count in zip(net.plan.rings, counts):
            sigma = math.sqrt(n * ring.usage_prob * (1.0 - ring.usage_prob))
            assert abs(count - n * ring.usage_prob) <= 3.5 * sigma


class TestRunMechanics:
    def test_config_validation(self):
        with pytest.raises(ConfigError):
            make_config(0.1, duration_s=100.0, warmup_s=100.0)

    def test_zero_load_produces_nothing(self):
        report = run(make_config(0.0, num_motes=20, duration_s=1000.0))
        assert report.no_attempts
        assert report.frames_generated == 0
        assert report.per_estimate == 0.0

    def test_deterministic_for_fixed_seed(self):
        cfg = make_config(0.2, num_motes=200, duration_s=3000.0, seed=4)
        assert run(cfg) == run(cfg)

    def test_seed_changes_outcome(self):
        a = run(make_config(0.2, num_motes=200, duration_s=3000.0, seed=4))
        b = run(make_config(0.2, num_motes=200, duration_s=3000.0, seed=5))
        assert a != b

    def test_frame_conservation(self):
        for load, seed in ((0.1, 1), (0.4, 2), (0.8, 3)):
            r = run(make_config(load, num_motes=300, duration_s=4000.0, seed=seed))
            assert r.frames_generated == (
                r.frames_delivered
                + r.frames_dropped_retry_limit
                + r.frames_replaced
                + r.frames_in_flight
            )
            assert 0 <= r.attempts_successful <= r.attempts_total
            assert r.attempts_total - r.attempts_successful == (
                r.data_lost_at_gw + r.ack1_lost
            )
            assert r.ack2_lost <= r.ack1_lost

    def test_single_mote_almost_never_fails(self):
        # One mote, no interference, no noise.  The only possible loss is
        # self-inflicted: a replacement frame can start while the gateway is
        # still ACKing the abandoned attempt.  That is rare at low load.
        r = run(make_config(0.02, num_motes=1, duration_s=50_000.0, warmup_s=0.0))
        assert not r.no_attempts
        assert r.per_estimate < 0.005
        assert r.frames_dropped_retry_limit == 0
        assert r.mean_attempts_per_frame < 1.01

    def test_ack_timing_in_trace(self):
        trace = io.StringIO()
        run(make_config(0.02, num_motes=1, duration_s=2000.0, warmup_s=0.0), trace=trace)
        events = [line.split(",") for line in trace.getvalue().splitlines()]
        first = {}
        for t, _, e, _, rate, _ in events:
            first.setdefault(e, (float(t), int(rate)))
            if len(first) >= 3 and "ack1_start" in first:
                break
        net = build_network(cr_db=math.inf, num_motes=1)
        t0, rate = first["tx_start"]
        t_end = t0 + net.plan.rings[rate].airtime.data_frame_s
        assert first["ack1_start"][0] == pytest.approx(t_end + net.ack_delay_1_s)
        rx = [o for t, _, e, _, _, o in events if e == "ack1_rx"]
        assert rx and rx.count("decoded") >= 0.99 * len(rx)

    def test_retry_delay_uniform_on_window(self):
        delays = []

        class Recording(Simulator):
            def _schedule(self, time_s, kind, a=None, b=None):
                if kind == _EV_RETX:
                    delays.append(time_s - self.now)
                super()._schedule(time_s, kind, a, b)

        cfg = make_config(0.6, num_motes=300, cr_db=math.inf, duration_s=4000.0, seed=9)
        Recording(cfg).run()
        assert len(delays) > 200
        window = cfg.network.retry_window_s
        assert min(delays) >= 1.0 and max(delays) <= 1.0 + window
        result = stats.kstest(delays, stats.uniform(loc=1.0, scale=window).cdf)
        assert result.pvalue > 1e-3

    def test_per_matches_model_at_low_load(self):
        lam = 0.05
        cfg = make_config(lam, num_motes=300, duration_s=20_000.0, warmup_s=500.0, seed=2)
        report = run(cfg)
        model = evaluate(cfg.network).per
        assert report.per_estimate == pytest.approx(model, abs=0.015)

    def test_mean_attempts_tracks_first_attempt_share(self):
        lam = 0.1
        cfg = make_config(lam, num_motes=1000, duration_s=20_000.0, warmup_s=500.0, seed=6)
        report = run(cfg)
        rates = evaluate(cfg.network).rates
        expected = sum(r.usage_prob / r.p_first for r in rates)
        assert report.mean_attempts_per_frame == pytest.approx(expected, rel=0.05)

    def test_noise_floor_limits_coverage(self):
        # With the default thermal floor above the weakest sensitivities, far
        # motes cannot be decoded even without interference.
        quiet = run(make_config(0.05, num_motes=400, duration_s=10_000.0, seed=3))
        noisy = run(make_config(0.05, num_motes=400, duration_s=10_000.0, seed=3,
                                noise_floor_dbm=-117.0))
        assert noisy.per_estimate > quiet.per_estimate + 0.05

    def test_module_run_equals_class_run(self):
        cfg = make_config(0.1, num_motes=100, duration_s=2000.0, seed=12)
        assert run(cfg) == Simulator(cfg).run()
