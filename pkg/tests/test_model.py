import math

import pytest
from hypothesis import given, settings, strategies as st

from loracap import (
    NumericalError,
    PropagationModel,
    build_network,
    capacity,
    evaluate,
    evaluate_no_capture,
    mc_oracle_recollision,
)
from loracap.airtime import Airtime
from loracap.geometry import CaptureRow, CaptureTable, RatePlan, RateRing
from loracap.model import (
    collision_indicator,
    p_ack,
    p_ack1,
    p_ack2,
    p_data_retry,
    p_first_attempt,
    p_gen_quiet,
    p_recollide,
    p_success_first,
    solve_p_data,
    _triangular_cdf,
)

EU_PROP = PropagationModel()


def single_rate_network(t_data=6.845, t_ack=0.5, num_channels=1):
    # A toy plan whose only ring covers the whole disk; timing chosen so the
    # capacity arithmetic is readable in the tests below.
    ring = RateRing(
        sensitivity_lo_dbm=-137.0,
        sensitivity_hi_dbm=math.inf,
        inner_radius_m=0.0,
        outer_radius_m=5.0,
        usage_prob=1.0,
        airtime=Airtime(data_frame_s=t_data, ack_s=t_ack),
    )
    plan = RatePlan(rings=(ring,), cell_radius_m=5.0)
    table = CaptureTable(
        rows=(CaptureRow(w_gw_pair=0.0, w_both=1.0, w_one=0.0, w_mote_pair=0.0),),
        co_channel_rejection_db=math.inf,
    )
    return plan, table


class TestDataFixedPoint:
    def test_zero_load_is_certain(self):
        assert solve_p_data(0.0, Airtime(2.0, 1.0), 0.5, 1000) == 1.0

    def test_residual_below_tolerance(self):
        airtime = Airtime(2.4658, 1.1551)
        for r_i in (1e-4, 0.01, 0.05, 0.2):
            for w_gw in (0.0, 0.2, 0.5):
                p = solve_p_data(r_i, airtime, w_gw, 1000)
                rhs = (
                    math.exp(-(2 * airtime.data_frame_s + p * airtime.ack_s) * r_i)
                    + 2 * r_i * airtime.data_frame_s
                    * math.exp(-2 * r_i * airtime.data_frame_s) * w_gw
                )
                assert abs(p - rhs) < 1e-10

    def test_single_mote_has_no_interferers(self):
        # A lone mote can collide with nothing, including its own ACKs.
        airtime = Airtime(2.4658, 1.1551)
        with_capture = solve_p_data(0.05, airtime, 0.5, 1)
        without = solve_p_data(0.05, airtime, 0.0, 1)
        assert with_capture == without

    def test_decreasing_in_load(self):
        airtime = Airtime(2.4658, 1.1551)
        values = [solve_p_data(r, airtime, 0.0, 1000) for r in (0.0, 0.01, 0.05, 0.1, 0.3)]
        assert values == sorted(values, reverse=True)

    def test_rejects_negative_load(self):
        with pytest.raises(ValueError):
            solve_p_data(-0.1, Airtime(2.0, 1.0), 0.0, 1000)


class TestAckProbabilities:
    def test_ack1_zero_load(self):
        assert p_ack1(0.0, Airtime(2.0, 1.0), 1.0, 0.3, 1000) == 1.0

    def test_ack1_exposure_window_capped_by_frame(self):
        # When the frame is shorter than the ACK delay the exposure window
        # uses the frame duration: an older frame would have already ended.
        short = Airtime(0.5, 0.2)
        value = p_ack1(0.1, short, 1.0, 0.0, 1000)
        assert value == pytest.approx(math.exp(-(0.5 + 0.2) * 0.1))

    def test_ack2_decreases_with_load(self):
        net = build_network(cr_db=math.inf, load_fps=0.1)
        p_data_all = [1.0] * net.plan.rate_count
        low = p_ack2(0, 0.1, 3, net.plan, p_data_all)
        high = p_ack2(0, 0.4, 3, net.plan, p_data_all)
        assert 0.0 < high < low <= 1.0

    def test_ack2_excludes_own_frame(self):
        net = build_network(cr_db=math.inf, load_fps=0.3)
        p_data_all = [1.0] * net.plan.rate_count
        t_ack0 = net.plan.rings[0].airtime.ack_s
        own = net.plan.rings[0].usage_prob / 3
        expected = math.exp(-t_ack0 * 0.3 * (1.0 - own) * 1.0)
        assert p_ack2(0, 0.3, 3, net.plan, p_data_all) == pytest.approx(expected)

    def test_inclusion_exclusion(self):
        assert p_ack(0.25, 0.5) == pytest.approx(0.25 + 0.5 - 0.125)
        assert p_ack(1.0, 0.0) == 1.0
        assert p_ack(0.0, 0.0) == 0.0
        with pytest.raises(ValueError):
            p_ack(1.2, 0.5)

    def test_success_first_is_product(self):
        assert p_success_first(0.8, 0.9) == pytest.approx(0.72)


class TestRecollision:
    def test_indicator_symmetry_and_windows(self):
        t_data, t_ack, t1 = 2.0, 1.0, 1.0
        assert collision_indicator(0.0, 1.5, t_data, t_ack, t1) == 1  # overlap
        assert collision_indicator(1.5, 0.0, t_data, t_ack, t1) == 1
        assert collision_indicator(0.0, 3.5, t_data, t_ack, t1) == 1  # inside ACK window
        assert collision_indicator(3.5, 0.0, t_data, t_ack, t1) == 1
        assert collision_indicator(0.0, 2.5, t_data, t_ack, t1) == 0  # gap before ACK
        assert collision_indicator(0.0, 4.5, t_data, t_ack, t1) == 0  # after ACK

    def test_triangular_cdf_shape(self):
        w = 2.0
        assert _triangular_cdf(-w, w) == 0.0
        assert _triangular_cdf(0.0, w) == 0.5
        assert _triangular_cdf(w, w) == 1.0
        grid = [_triangular_cdf(t, w) for t in (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)]
        assert grid == sorted(grid)

    @pytest.mark.parametrize("r_i", (0.01, 0.05))
    @pytest.mark.parametrize("num_channels", (1, 3))
    def test_matches_monte_carlo(self, r_i, num_channels):
        airtime = Airtime(2.4658, 1.1551)
        value = p_recollide(r_i, num_channels, airtime, 1.0, 2.0)
        estimate, sigma = mc_oracle_recollision(
            r_i, num_channels, airtime, 1.0, 2.0, samples=2 * 10**5, seed=5
        )
        assert abs(value - estimate) <= 3.0 * sigma

    def test_zero_load_limit_finite(self):
        value = p_recollide(0.0, 3, Airtime(2.4658, 1.1551), 1.0, 2.0)
        assert 0.0 < value < 1.0

    def test_more_channels_resolve_more_collisions(self):
        airtime = Airtime(2.4658, 1.1551)
        one = p_recollide(0.05, 1, airtime, 1.0, 2.0)
        three = p_recollide(0.05, 3, airtime, 1.0, 2.0)
        assert three == pytest.approx(one / 3.0)

    def test_retry_identity_without_capture(self):
        # With capture disabled the retry success is exactly the first-attempt
        # success thinned by the re-collision probability.
        row = CaptureRow(w_gw_pair=0.0, w_both=1.0, w_one=0.0, w_mote_pair=0.0)
        p_data = 0.8
        pc = 0.3
        assert p_data_retry(p_data, pc, row) == pytest.approx((1.0 - pc) * p_data, abs=1e-12)

    def test_degenerate_always_capture(self):
        row = CaptureRow(w_gw_pair=1.0, w_both=0.0, w_one=0.0, w_mote_pair=1.0)
        assert p_data_retry(0.9, 0.5, row) == 0.9


class TestAttemptAccounting:
    def test_gen_quiet_zero_load(self):
        assert p_gen_quiet(0.0, 1000, Airtime(2.0, 1.0), 2.0, 1.0, 2.0) == 1.0

    def test_gen_quiet_matches_numeric_average(self):
        # Closed form equals the average of exp(-a * (cycle + x)) over the
        # uniform retry delay x in [0, W].
        airtime = Airtime(2.4658, 1.1551)
        lam, n, t2, t_ack0, w = 0.4, 1000, 2.0, 1.1551, 2.0
        a = lam / n
        cycle = airtime.data_frame_s + t2 + t_ack0 + 1.0
        steps = 20000
        numeric = sum(
            math.exp(-a * (cycle + (k + 0.5) * w / steps)) for k in range(steps)
        ) / steps
        assert p_gen_quiet(lam, n, airtime, t2, t_ack0, w) == pytest.approx(
            numeric, rel=1e-7
        )

    def test_first_attempt_closed_form(self):
        # Direct truncated-geometric summation against the closed form
        # 1 / (1 + (1-s1) g (1 - q^(RL+1)) / (1 - q)) with q = (1-sre) g.
        s1, sre, g, rl = 0.8, 0.6, 0.99, 7
        q = (1.0 - sre) * g
        closed = 1.0 / (1.0 + (1.0 - s1) * g * (1.0 - q ** (rl + 1)) / (1.0 - q))
        assert p_first_attempt(s1, sre, g, rl) == pytest.approx(closed, rel=1e-12)

    def test_first_attempt_bounds(self):
        assert p_first_attempt(1.0, 1.0, 1.0, 7) == 1.0
        value = p_first_attempt(0.0, 0.0, 1.0, 7)
        assert value == pytest.approx(1.0 / 9.0)  # every frame burns all 8 attempts


class TestCapacity:
    def test_single_rate_hand_value(self):
        # Cycle = 6.845 + 2 + 0.5 + 1 + 1 = 11.345... choose t_data so the
        # cycle is exactly 10 seconds: t_data = 10 - 2 - 0.5 - 1 - 1 = 5.5.
        plan, table = single_rate_network(t_data=5.5, t_ack=0.5)
        net = _make_net(plan, table, num_channels=1)
        assert capacity(net) == pytest.approx(0.1)

    def test_linear_in_channels(self):
        plan, table = single_rate_network(t_data=5.5, t_ack=0.5)
        one = capacity(_make_net(plan, table, num_channels=1))
        two = capacity(_make_net(plan, table, num_channels=2))
        assert two == pytest.approx(2.0 * one)

    def test_eu_default_value(self):
        net = build_network(cr_db=math.inf, load_fps=0.1)
        cap = capacity(net)
        t_ack0 = net.plan.rings[0].airtime.ack_s
        expected = 3.0 / sum(
            ring.usage_prob
            * (ring.airtime.data_frame_s + 2.0 + t_ack0 + 1.0 + 1.0)
            for ring in net.plan.rings
        )
        assert cap == pytest.approx(expected, rel=1e-12)
        assert cap == pytest.approx(0.478, abs=0.01)


def _make_net(plan, table, num_channels=1, load_fps=0.01, num_motes=1000):
    from loracap.model import NetworkConfig

    return NetworkConfig(
        num_motes=num_motes,
        num_channels=num_channels,
        load_fps=load_fps,
        plan=plan,
        capture=table,
    )


class TestEvaluate:
    def test_zero_load_zero_per(self):
        report = evaluate(build_network(cr_db=math.inf, load_fps=0.0))
        assert report.per == 0.0
        assert report.p_success == pytest.approx(1.0)

    def test_probabilities_in_range(self):
        for lam in (0.01, 0.1, 0.3, 0.6, 1.0):
            for cr in (0.0, 6.0, math.inf):
                report = evaluate(build_network(cr_db=cr, load_fps=lam))
                for row in report.rates:
                    values = (
                        row.p_data, row.p_ack1, row.p_ack2, row.p_ack,
                        row.p_success_first, row.p_recollide, row.p_data_retry,
                        row.p_success_retry, row.p_gen_quiet, row.p_first,
                    )
                    assert all(0.0 <= v <= 1.0 for v in values)
                assert 0.0 <= report.per <= 1.0

    def test_per_monotone_in_load(self):
        for cr in (0.0, math.inf):
            pers = [
                evaluate(build_network(cr_db=cr, load_fps=lam)).per
                for lam in (0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.95)
            ]
            assert all(b >= a - 1e-6 for a, b in zip(pers, pers[1:]))

    def test_capture_never_hurts(self):
        for lam in (0.05, 0.2, 0.4, 0.8):
            with_capture = evaluate(build_network(cr_db=0.0, load_fps=lam)).per
            without = evaluate(build_network(cr_db=math.inf, load_fps=lam)).per
            assert with_capture <= without + 1e-12

    def test_no_capture_reduction_is_exact(self):
        for lam in (0.05, 0.2, 0.45, 0.9):
            net = build_network(cr_db=math.inf, load_fps=lam)
            full = evaluate(net)
            reduced = evaluate_no_capture(net)
            assert full.per == pytest.approx(reduced.per, abs=1e-9)

    def test_validity_flag(self):
        net = build_network(cr_db=math.inf, load_fps=0.1)
        cap = capacity(net)
        assert evaluate(net).within_validity
        beyond = evaluate(build_network(cr_db=math.inf, load_fps=1.5 * cap))
        assert not beyond.within_validity

    def test_report_rows_layout(self):
        report = evaluate(build_network(cr_db=0.0, load_fps=0.2))
        rows = report.to_rows()
        assert len(rows) == 7
        assert all(r["kind"] == "rate" for r in rows[:-1])
        assert rows[-1]["kind"] == "aggregate"
        assert rows[-1]["per"] == report.per

    def test_numerical_error_names_the_rate(self):
        net = build_network(cr_db=math.inf, load_fps=0.3)
        import loracap.model as model_mod

        original = model_mod.p_recollide

        def broken(*args, **kwargs):
            raise NumericalError("synthetic quadrature failure")

        model_mod.p_recollide = broken
        try:
            with pytest.raises(NumericalError, match="rate 0"):
                evaluate(net)
        finally:
            model_mod.p_recollide = original


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.0, 1.0), cr=st.sampled_from((0.0, 3.0, 10.0, math.inf)))
def test_evaluate_total_probability(lam, cr):
    report = evaluate(build_network(cr_db=cr, load_fps=lam))
    assert report.per == pytest.approx(1.0 - report.p_success, abs=1e-12)
    assert 0.0 <= report.per <= 1.0
