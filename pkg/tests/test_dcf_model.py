import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from wipad.dcf_model import (
    ConvergenceError,
    DcfParams,
    backoff_params,
    cw_schedule,
    error_probs,
    solve_fixed_point,
    state_durations,
    state_probs,
    stationary_closed_form,
    stationary_oracle,
    tau_closed_form,
    tau_given,
    throughputs,
)
from wipad.phy_padding import max_pad_frame_length, rate_by_mbps, rate_table

# 1 - (1 - 1e-4)**1712 and **112, evaluated with mpmath at 50 digits
PE_DATA_1E4_214 = 0.15735418754770320868
PE_ACK_1E4 = 0.01113806730025714833


def _reference_tau(p, w0, m):
    """Retry-limited model without freezing (window doubles at every stage)."""
    return 2 * (1 - 2 * p) * (1 - p ** (m + 1)) / (
        w0 * (1 - (2 * p) ** (m + 1)) * (1 - p) + (1 - 2 * p) * (1 - p ** (m + 1))
    )


class TestParams:
    def test_defaults(self, defaults):
        assert (defaults.w0, defaults.m_prime, defaults.m) == (16, 6, 7)
        assert defaults.eifs_us == 10 + 20 + 24 + 28
        assert defaults.payload_bits == 8 * 186

    @pytest.mark.parametrize(
        "kw",
        [
            {"n": 0},
            {"cw_max": 1000},
            {"cw_min": 15, "cw_max": 7},
            {"frame_octets": 28},
            {"sigma_us": 0},
            {"delta_us": -1},
            {"p_b": 1.5},
            {"m": -1},
            {"t_eifs_us": 0},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            DcfParams(**kw)

    def test_explicit_eifs(self):
        assert DcfParams(t_eifs_us=50).eifs_us == 50


@pytest.mark.parametrize(
    "cw_min, cw_max, m, expected",
    [
        (15, 1023, 7, [16, 32, 64, 128, 256, 512, 1024, 1024]),
        (15, 15, 2, [16, 16, 16]),
        (3, 7, 3, [4, 8, 8, 8]),
    ],
)
def test_cw_schedule(cw_min, cw_max, m, expected):
    assert cw_schedule(DcfParams(cw_min=cw_min, cw_max=cw_max, m=m)) == expected


class TestTau:
    def test_error_free_lone_station(self, defaults):
        assert tau_given(0.0, 0.0, defaults) == pytest.approx(2 / 17, rel=1e-15)
        assert stationary_oracle(0.0, 0.0, backoff_params(16, 2, 1)).tau == pytest.approx(2 / 17, abs=1e-12)

    def test_continuous_through_half(self, defaults):
        at_half = tau_given(0.5, 0.0, defaults)
        below = tau_closed_form(0.5 - 1e-6, 0.0, defaults)
        above = tau_closed_form(0.5 + 1e-6, 0.0, defaults)
        assert min(below, above) <= at_half <= max(below, above)
        assert at_half == pytest.approx(below, rel=1e-5)

    def test_closed_form_singular_at_half(self, defaults):
        with pytest.raises(ZeroDivisionError):
            tau_closed_form(0.5, 0.1, defaults)

    def test_limit_pf_to_one(self, defaults):
        w = cw_schedule(defaults)
        limit = (defaults.m + 1) / sum(1 + (wi - 1) / 2 for wi in w)
        assert tau_given(1 - 1e-10, 0.0, defaults) == pytest.approx(limit, rel=1e-8)
        assert limit < 1

    def test_rejects_certain_collision(self, defaults):
        with pytest.raises(ValueError):
            tau_given(0.1, 1.0, defaults)

    @pytest.mark.parametrize("p", [0.0, 0.05, 0.2, 0.3, 0.45, 0.55, 0.8])
    def test_reduces_to_reference_model_without_freezing(self, p):
        # no window cap within the retry limit, so every stage doubles
        params = backoff_params(32, 5, 5)
        expected = 2 / 33 if p == 0 else _reference_tau(p, 32, 5)
        assert tau_given(p, 0.0, params) == pytest.approx(expected, rel=1e-12)

    @settings(max_examples=300)
    @given(
        p_f=st.floats(0, 0.99),
        p_coll=st.floats(0, 0.95),
        w0=st.sampled_from([2, 4, 8, 16, 32, 64]),
        m=st.integers(0, 10),
        m_prime=st.integers(0, 8),
    )
    def test_sum_matches_closed_form(self, p_f, p_coll, w0, m, m_prime):
        assume(abs(p_f - 0.5) > 1e-3)
        params = backoff_params(w0, m, m_prime)
        assert tau_given(p_f, p_coll, params) == pytest.approx(
            tau_closed_form(p_f, p_coll, params), rel=1e-10
        )

    @given(p_f=st.floats(0, 0.98), p_coll=st.floats(0, 0.9), dp=st.floats(0.001, 0.01))
    def test_decreasing_in_failure_and_collision(self, p_f, p_coll, dp):
        params = DcfParams()
        t = tau_given(p_f, p_coll, params)
        assert tau_given(p_f + dp, p_coll, params) < t
        assert tau_given(p_f, p_coll + dp, params) < t


class TestStationaryOracle:
    def test_no_failures_leaves_higher_stages_empty(self):
        orc = stationary_oracle(0.0, 0.0, backoff_params(4, 1, 1))
        assert orc.b(1, 0) == pytest.approx(0.0, abs=1e-14)
        assert orc.stationary.sum() == pytest.approx(1.0, abs=1e-14)

    def test_matches_product_form(self):
        params = backoff_params(4, 2, 1)
        orc = stationary_oracle(0.3, 0.2, params)
        expected = stationary_closed_form(0.3, 0.2, params)
        for state in orc.states:
            assert orc.b(*state) == pytest.approx(expected[state], abs=1e-9)
        assert orc.tau == pytest.approx(tau_given(0.3, 0.2, params), abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(
        p_f=st.floats(0, 0.9),
        p_coll=st.floats(0, 0.8),
        w0=st.sampled_from([2, 4, 8]),
        m=st.integers(0, 3),
        m_prime=st.integers(0, 3),
    )
    def test_chain_properties(self, p_f, p_coll, w0, m, m_prime):
        params = backoff_params(w0, m, m_prime)
        orc = stationary_oracle(p_f, p_coll, params)
        np.testing.assert_allclose(orc.matrix.sum(axis=1), 1.0, atol=1e-12)
        assert orc.stationary.sum() == pytest.approx(1.0, abs=1e-12)
        assert orc.tau == pytest.approx(tau_given(p_f, p_coll, params), abs=1e-9)
        for i in range(m + 1):
            assert orc.b(i, 0) == pytest.approx(p_f**i * orc.b(0, 0), abs=1e-9)


class TestErrorProbs:
    def test_error_free(self):
        assert error_probs(0.0, 1712, 112) == (0.0, 0.0, 0.0)
        assert error_probs(1e-3, 0, 0) == (0.0, 0.0, 0.0)

    def test_against_high_precision(self):
        pe_data, pe_ack, pe = error_probs(1e-4, 1712, 112)
        assert pe_data == pytest.approx(PE_DATA_1E4_214, rel=1e-13)
        assert pe_ack == pytest.approx(PE_ACK_1E4, rel=1e-13)
        assert pe == pytest.approx(1 - (1 - PE_DATA_1E4_214) * (1 - PE_ACK_1E4), rel=1e-13)

    def test_tiny_ber_keeps_precision(self):
        pe_data, _, _ = error_probs(1e-15, 1000, 0)
        assert pe_data == pytest.approx(1e-12, rel=1e-6)

    def test_certain_bit_error(self):
        assert error_probs(1.0, 8, 8) == (1.0, 1.0, 1.0)


class TestFixedPoint:
    def test_single_station(self, defaults):
        fp = solve_fixed_point(defaults)
        assert fp.tau == pytest.approx(2 / 17, rel=1e-15)
        assert fp.p_coll == 0.0 and fp.p_f == 0.0

    def test_single_station_with_errors(self):
        params = DcfParams(p_b=1e-4)
        fp = solve_fixed_point(params)
        assert fp.p_f == fp.p_e and fp.p_coll == 0.0

    @pytest.mark.parametrize("n", [2, 3, 10, 50])
    @pytest.mark.parametrize("ber", [0.0, 1e-5, 1e-4])
    def test_residuals(self, n, ber):
        params = DcfParams(n=n, p_b=ber)
        fp = solve_fixed_point(params)
        assert 0 < fp.tau < 1
        assert fp.residual < 1e-12
        assert abs(tau_given(fp.p_f, fp.p_coll, params) - fp.tau) < 1e-12
        assert fp.p_coll == 1 - (1 - fp.tau) ** (n - 1)
        assert fp.p_f == 1 - (1 - fp.p_coll) * (1 - fp.p_e)

    def test_hopeless_channel(self):
        with pytest.raises(ConvergenceError):
            solve_fixed_point(DcfParams(n=3, p_b=1.0))

    def test_monotone_in_n(self):
        sols = [solve_fixed_point(DcfParams(n=n)) for n in range(1, 21)]
        assert all(a.tau > b.tau for a, b in zip(sols, sols[1:]))
        assert all(a.p_coll < b.p_coll for a, b in zip(sols, sols[1:]))


class TestChannelStates:
    def test_durations(self, defaults, r54):
        st_ = state_durations(defaults, r54)
        assert st_.t_i == 9
        assert st_.t_s == 2 * 20 + 36 + 2 + 10 + 4 + 28 == 120
        assert st_.t_c == st_.t_e_data == 20 + 36 + 1 + 82
        assert st_.t_e_ack == st_.t_s

    def test_collision_shorter_without_delay(self, r54):
        params = DcfParams(delta_us=0, t_eifs_us=40)
        st_ = state_durations(params, r54)
        assert st_.t_c < st_.t_s

    def test_probs_no_transmission(self):
        assert state_probs(0.0, 5, 0.1, 0.1) == (1.0, 0.0, 0.0, 0.0, 0.0)

    def test_probs_single_station(self):
        p_i, p_s, p_c, p_ed, p_ea = state_probs(0.25, 1, 0.0, 0.0)
        assert p_c == 0.0 and p_s == 0.25 and p_i == 0.75

    @given(
        tau=st.floats(0, 1),
        n=st.integers(1, 60),
        pe_data=st.floats(0, 1),
        pe_ack=st.floats(0, 1),
    )
    def test_probs_sum_to_one(self, tau, n, pe_data, pe_ack):
        probs = state_probs(tau, n, pe_data, pe_ack)
        assert all(0 <= p <= 1 for p in probs)
        assert abs(math.fsum(probs) - 1) < 1e-12


class TestThroughputs:
    def test_peak_values(self, defaults, r54):
        sol = throughputs(defaults, r54)
        assert sol.c_data_bits == 210 and sol.c_ack_bits == 82
        assert sol.s_data_mbps == pytest.approx(1.12, rel=1e-12)
        assert sol.s_ack_mbps == pytest.approx(0.44, abs=0.005)
        assert sol.s_data_mbps + sol.s_ack_mbps == pytest.approx(1.5573, abs=1e-4)

    def test_degenerate_single_station(self, r54):
        params = DcfParams()
        sol = throughputs(params, r54)
        tau = sol.tau
        expected = tau * params.payload_bits / ((1 - tau) * params.sigma_us + tau * sol.states.t_s)
        assert sol.s_mbps == pytest.approx(expected, rel=1e-14)

    def test_state_set_invariants(self, r54):
        sol = throughputs(DcfParams(n=4, p_b=1e-5), r54)
        assert abs(sum(sol.states.probs) - 1) < 1e-12
        assert sol.states.t_e_ack == sol.states.t_s

    @pytest.mark.parametrize("n", [1, 2, 5, 10])
    def test_decreasing_in_ber(self, n, r54):
        sols = [throughputs(DcfParams(n=n, p_b=b), r54) for b in (0.0, 1e-6, 1e-5, 1e-4, 1e-3)]
        assert all(a.s_data_mbps > b.s_data_mbps for a, b in zip(sols, sols[1:]))
        assert all(a.s_ack_mbps > b.s_ack_mbps for a, b in zip(sols, sols[1:]))

    @pytest.mark.parametrize("n", [1, 4, 10])
    def test_decreasing_in_frame_length(self, n, r54):
        vals = [throughputs(DcfParams(n=n, frame_octets=max_pad_frame_length(a)), r54).s_data_mbps for a in range(1, 8)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_ack_channel_24_beats_36(self):
        for n in range(1, 11):
            s24 = throughputs(DcfParams(n=n), rate_by_mbps(24)).s_ack_mbps
            s36 = throughputs(DcfParams(n=n), rate_by_mbps(36)).s_ack_mbps
            assert s24 > s36

    def test_every_rate_solves(self):
        for rate in rate_table():
            sol = throughputs(DcfParams(n=3), rate)
            assert sol.s_mbps > 0
