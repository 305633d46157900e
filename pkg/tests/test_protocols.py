import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repeaterlab import markov, protocols
from repeaterlab.protocols import (
    MultiHeraldParams,
    TwoLinkParams,
    build_chain,
    build_multiheralded,
    build_two_link_double_heralded,
    build_two_link_single_heralded,
    cf_equilibrium_multiheralded,
    cf_equilibrium_shs,
    cf_latency_variance_multiheralded,
    cf_latency_variance_shs,
)

probs = st.floats(0.05, 1.0, allow_nan=False)
GRID = [0.1 * i for i in range(1, 10)]


def latency_var_by_solver(chain) -> float:
    hs = markov.hitting_stats(chain.matrix, chain.success_state)
    return hs.for_state(chain.start_state)[1]


class TestParamObjects:
    def test_multiherald_validates(self):
        with pytest.raises(protocols.EmptyRoundsError):
            MultiHeraldParams(())
        with pytest.raises(protocols.ProbabilityRangeError):
            MultiHeraldParams((0.5, 1.2))
        assert MultiHeraldParams((0.5,)).n == 1

    def test_two_link_validates(self):
        with pytest.raises(protocols.HeraldCountError):
            TwoLinkParams((0.5, 0.5, 0.5), (0.5, 0.5, 0.5), 1.0)
        with pytest.raises(protocols.HeraldCountError):
            TwoLinkParams((0.5,), (0.5, 0.5), 1.0)
        with pytest.raises(protocols.ProbabilityRangeError):
            TwoLinkParams((0.5,), (-0.1,), 1.0)

    def test_protocol_names(self):
        assert protocols.protocol_name(MultiHeraldParams((0.5,))) == "multiherald"
        assert protocols.protocol_name(TwoLinkParams((0.5,), (0.5,), 1.0)) == "shs"
        assert protocols.protocol_name(TwoLinkParams((0.5, 0.5), (0.5, 0.5), 1.0)) == "dhs"

    def test_chain_requires_positive_tau(self):
        with pytest.raises(protocols.ProtocolError):
            build_chain(MultiHeraldParams((0.5,)), tau=0.0)


class TestMultiHeraldMatrix:
    def test_single_herald_matrix(self):
        chain = build_multiheralded(MultiHeraldParams((0.3,)))
        np.testing.assert_allclose(chain.matrix.rows, [[0.7, 0.3], [0.7, 0.3]], atol=0)
        assert chain.labels == ("0", "1")
        assert (chain.start_state, chain.success_state) == (0, 1)

    def test_bkp_matrix(self):
        chain = build_multiheralded(MultiHeraldParams((0.5, 0.5)))
        np.testing.assert_allclose(
            chain.matrix.rows,
            [[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]], atol=0)

    def test_failure_resets_to_zero(self):
        chain = build_multiheralded(MultiHeraldParams((0.2, 0.4, 0.8)))
        rows = chain.matrix.rows
        for i, p in enumerate((0.2, 0.4, 0.8)):
            assert rows[i, 0] == 1.0 - p
            assert rows[i, i + 1] == p

    @given(st.lists(probs, min_size=1, max_size=5))
    def test_success_row_restarts_the_cycle(self, plist):
        chain = build_multiheralded(MultiHeraldParams(tuple(plist)))
        np.testing.assert_array_equal(chain.matrix.rows[chain.success_state],
                                      chain.matrix.rows[chain.start_state])


class TestTwoLinkMatrices:
    def test_shs_rows(self):
        pl, pr, ps = 0.6, 0.7, 0.8
        chain = build_two_link_single_heralded(TwoLinkParams((pl,), (pr,), ps))
        ql, qr = 1.0 - pl, 1.0 - pr
        expect = [
            [ql * qr, ql * pr, pl * qr, pl * pr, 0.0],
            [0.0, ql, 0.0, pl, 0.0],
            [0.0, 0.0, qr, pr, 0.0],
            [1.0 - ps, 0.0, 0.0, 0.0, ps],
            [ql * qr, ql * pr, pl * qr, pl * pr, 0.0],
        ]
        np.testing.assert_allclose(chain.matrix.rows, expect, atol=1e-15)
        assert chain.labels == ("00", "01", "10", "11", "S")

    def test_dhs_labels_and_shape(self):
        chain = build_two_link_double_heralded(
            TwoLinkParams((0.5, 0.5), (0.5, 0.5), 1.0))
        assert chain.labels == ("00", "01", "02", "10", "11", "12", "20", "21", "22", "S")
        assert chain.n == 10
        assert chain.success_state == 9

    def test_dhs_row_mixed_stages(self):
        # left waiting on round 1, right waiting on round 2
        pl1, pl2, pr1, pr2, ps = 0.3, 0.6, 0.5, 0.8, 0.9
        chain = build_two_link_double_heralded(
            TwoLinkParams((pl1, pl2), (pr1, pr2), ps))
        rows = chain.matrix.rows
        labels = list(chain.labels)
        row = rows[labels.index("01")]
        assert row[labels.index("12")] == pytest.approx(pl1 * pr2, abs=1e-15)
        assert row[labels.index("10")] == pytest.approx(pl1 * (1 - pr2), abs=1e-15)
        assert row[labels.index("02")] == pytest.approx((1 - pl1) * pr2, abs=1e-15)
        assert row[labels.index("00")] == pytest.approx((1 - pl1) * (1 - pr2), abs=1e-15)

    def test_dhs_ready_link_holds(self):
        pl1, pl2, pr1, pr2, ps = 0.3, 0.6, 0.5, 0.8, 0.9
        chain = build_two_link_double_heralded(
            TwoLinkParams((pl1, pl2), (pr1, pr2), ps))
        rows = chain.matrix.rows
        labels = list(chain.labels)
        row20 = rows[labels.index("20")]
        # left stays ready while right retries round 1
        assert row20[labels.index("21")] == pytest.approx(pr1, abs=1e-15)
        assert row20[labels.index("20")] == pytest.approx(1 - pr1, abs=1e-15)
        row22 = rows[labels.index("22")]
        assert row22[labels.index("S")] == pytest.approx(ps, abs=1e-15)
        assert row22[labels.index("00")] == pytest.approx(1 - ps, abs=1e-15)

    @given(probs, probs, probs)
    def test_shs_success_row_restarts(self, pl, pr, ps):
        chain = build_two_link_single_heralded(TwoLinkParams((pl,), (pr,), ps))
        np.testing.assert_array_equal(chain.matrix.rows[4], chain.matrix.rows[0])

    def test_builders_reject_wrong_arity(self):
        with pytest.raises(protocols.HeraldCountError):
            build_two_link_single_heralded(TwoLinkParams((0.5, 0.5), (0.5, 0.5), 1.0))
        with pytest.raises(protocols.HeraldCountError):
            build_two_link_double_heralded(TwoLinkParams((0.5,), (0.5,), 1.0))


class TestClosedFormEquilibrium:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_multiherald_vs_solver_diagonal(self, n):
        for p in GRID:
            params = MultiHeraldParams((p,) * n)
            chain = build_multiheralded(params)
            pi = markov.equilibrium(chain.matrix)
            assert cf_equilibrium_multiheralded(params) == pytest.approx(
                pi[chain.success_state], abs=1e-12)

    def test_shs_vs_solver(self):
        for pl, pr, ps in itertools.product([0.2, 0.5, 0.9], repeat=3):
            params = TwoLinkParams((pl,), (pr,), ps)
            chain = build_two_link_single_heralded(params)
            pi = markov.equilibrium(chain.matrix)
            assert cf_equilibrium_shs(params) == pytest.approx(
                pi[chain.success_state], abs=1e-12)

    def test_dhs_golden_equilibrium(self):
        # all rounds at 1/2 with a certain swap: success weight 25/233
        chain = build_chain(TwoLinkParams((0.5, 0.5), (0.5, 0.5), 1.0))
        pi = markov.equilibrium(chain.matrix)
        assert pi[chain.success_state] == pytest.approx(25 / 233, abs=1e-14)

    def test_dhs_golden_equilibrium_half_swap(self):
        chain = build_chain(TwoLinkParams((0.5, 0.5), (0.5, 0.5), 0.5))
        pi = markov.equilibrium(chain.matrix)
        assert pi[chain.success_state] == pytest.approx(25 / 466, abs=1e-14)

    def test_dhs_all_ones(self):
        chain = build_chain(TwoLinkParams((1.0, 1.0), (1.0, 1.0), 1.0))
        pi = markov.equilibrium(chain.matrix)
        assert pi[chain.success_state] == pytest.approx(1 / 3, abs=1e-14)

    def test_shs_degenerate_rejected(self):
        with pytest.raises(protocols.DegenerateChainError):
            cf_equilibrium_shs(TwoLinkParams((0.0,), (0.0,), 1.0))

    @given(probs, probs, probs)
    @settings(max_examples=60, deadline=None)
    def test_shs_symmetric_under_link_exchange(self, pl, pr, ps):
        a = cf_equilibrium_shs(TwoLinkParams((pl,), (pr,), ps))
        b = cf_equilibrium_shs(TwoLinkParams((pr,), (pl,), ps))
        assert a == pytest.approx(b, abs=1e-15)

    def test_bkp_order_asymmetry(self):
        # placing the weaker round first always wins
        for p1, p2 in itertools.permutations(GRID, 2):
            eq = cf_equilibrium_multiheralded(MultiHeraldParams((p1, p2)))
            swapped = cf_equilibrium_multiheralded(MultiHeraldParams((p2, p1)))
            if p1 > p2:
                assert eq < swapped
            elif p1 < p2:
                assert eq > swapped


class TestClosedFormLatencyVariance:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_multiherald_vs_solver(self, n):
        # variances reach ~1e8 at small p, where only a relative bound is
        # meaningful in double precision
        for p in [0.15, 0.4, 0.85]:
            params = MultiHeraldParams((p,) * n)
            cf = cf_latency_variance_multiheralded(params)
            assert cf == pytest.approx(latency_var_by_solver(build_chain(params)),
                                       rel=1e-12, abs=1e-9)

    def test_multiherald_mixed_rounds_golden(self):
        params = MultiHeraldParams((0.3, 0.6, 0.9))
        cf = cf_latency_variance_multiheralded(params)
        assert cf == pytest.approx(45.93202255753696, abs=1e-11)
        assert cf == pytest.approx(latency_var_by_solver(build_chain(params)), abs=1e-9)

    def test_single_round_geometric(self):
        for p in [0.5, 0.25, 0.75, 0.125]:  # dyadic, both sides exact in binary
            assert cf_latency_variance_multiheralded(MultiHeraldParams((p,))) \
                == (1 - p) / p**2

    def test_all_ones_vanishes(self):
        for n in range(1, 5):
            assert cf_latency_variance_multiheralded(MultiHeraldParams((1.0,) * n)) == 0.0
        assert cf_latency_variance_shs(TwoLinkParams((1.0,), (1.0,), 1.0)) == 0.0

    def test_shs_golden_half(self):
        params = TwoLinkParams((0.5,), (0.5,), 1.0)
        assert cf_latency_variance_shs(params) == pytest.approx(8 / 3, abs=1e-13)
        chain = build_chain(params)
        hs = markov.hitting_stats(chain.matrix, chain.success_state)
        mean, var = hs.for_state(chain.start_state)
        assert mean == pytest.approx(11 / 3, abs=1e-13)
        assert var == pytest.approx(8 / 3, abs=1e-13)

    def test_shs_perfect_links_geometric_swap(self):
        for ps in [0.5, 0.25, 0.75]:
            got = cf_latency_variance_shs(TwoLinkParams((1.0,), (1.0,), ps))
            assert got == 4 * (1 - ps) / ps**2

    @given(probs, probs, probs)
    @settings(max_examples=40, deadline=None)
    def test_shs_vs_solver_random(self, pl, pr, ps):
        params = TwoLinkParams((pl,), (pr,), ps)
        cf = cf_latency_variance_shs(params)
        assert cf == pytest.approx(latency_var_by_solver(build_chain(params)),
                                   rel=1e-11, abs=1e-8)

    def test_zero_probability_rejected(self):
        with pytest.raises(protocols.ZeroProbabilityError):
            cf_latency_variance_multiheralded(MultiHeraldParams((0.0, 0.5)))
        with pytest.raises(protocols.ZeroProbabilityError):
            cf_latency_variance_shs(TwoLinkParams((0.5,), (0.5,), 0.0))


class TestBkpThroughputForms:
    def test_exact_mean_n1_is_zero(self):
        assert protocols.cf_bkp_exact_mean_throughput(0.5, 0.7, 1) == 0.0

    def test_visit_sum_identity(self):
        # direct cumulative visit probabilities vs the closed form
        for p1, p2 in [(0.5, 0.5), (0.2, 0.8), (0.9, 0.3)]:
            chain = build_chain(MultiHeraldParams((p1, p2)))
            P = np.asarray(chain.matrix.rows)
            v = np.zeros(3)
            v[0] = 1.0
            acc = 0.0
            for N in range(1, 201):
                v = v @ P
                acc += v[2]
                cf = protocols.cf_bkp_exact_mean_throughput(p1, p2, N)
                assert cf == pytest.approx(acc / N, abs=1e-12)

    def test_leading_variance_positive(self):
        for p1, p2 in itertools.product(GRID, repeat=2):
            assert protocols.cf_bkp_throughput_variance_leading(p1, p2) > 0.0

    def test_exact_mean_requires_positive_horizon(self):
        with pytest.raises(ValueError):
            protocols.cf_bkp_exact_mean_throughput(0.5, 0.5, 0)


class TestParamsJson:
    CASES = [
        MultiHeraldParams((0.5,)),
        MultiHeraldParams((0.2, 0.8, 0.5)),
        TwoLinkParams((0.6,), (0.4,), 0.9),
        TwoLinkParams((0.6, 0.2), (0.4, 0.7), 0.9),
    ]

    @pytest.mark.parametrize("params", CASES)
    def test_round_trip(self, params):
        for tau in (1.0, 0.5):
            text = protocols.params_to_json(params, tau)
            again, tau_again = protocols.params_from_json(text)
            assert again == params
            assert tau_again == tau

    def test_schema_keys(self):
        payload = json.loads(protocols.params_to_json(self.CASES[2]))
        assert set(payload) == {"protocol", "left_probs", "right_probs", "swap_prob", "tau"}
        payload = json.loads(protocols.params_to_json(self.CASES[0]))
        assert set(payload) == {"protocol", "round_probs", "tau"}

    def test_rejects_unknown_protocol(self):
        with pytest.raises(protocols.ProtocolError):
            protocols.params_from_json(json.dumps(
                {"protocol": "teleport", "round_probs": [0.5], "tau": 1.0}))

    def test_rejects_arity_mismatch(self):
        with pytest.raises(protocols.HeraldCountError):
            protocols.params_from_json(json.dumps({
                "protocol": "shs", "left_probs": [0.5, 0.5],
                "right_probs": [0.5, 0.5], "swap_prob": 1.0, "tau": 1.0}))

    def test_rejects_missing_and_unknown_keys(self):
        with pytest.raises(protocols.ProtocolError):
            protocols.params_from_json(json.dumps({"protocol": "multiherald", "tau": 1.0}))
        with pytest.raises(protocols.ProtocolError):
            protocols.params_from_json(json.dumps(
                {"protocol": "multiherald", "round_probs": [0.5], "tau": 1.0, "x": 1}))

    @given(st.lists(probs, min_size=1, max_size=6))
    def test_round_trip_random_multiherald(self, plist):
        params = MultiHeraldParams(tuple(plist))
        again, _ = protocols.params_from_json(protocols.params_to_json(params))
        assert again == params
