import dataclasses
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scengame.certificates import (
    BoxSampler,
    CertificateError,
    CertificateQuery,
    ScenarioSet,
    binomial_tail,
    certificate_report,
    delta_prop1,
    delta_prop2,
    empirical_objective,
    min_samples,
    sample_scenarios,
    write_certificate,
)


def exact_tail(S: int, eps: Fraction, k_max: int) -> Fraction:
    """Rational-arithmetic lower binomial tail, exact."""
    return sum(
        Fraction(math.comb(S, l)) * eps**l * (1 - eps) ** (S - l)
        for l in range(k_max + 1)
    )


RENDEZVOUS_QUERY = CertificateQuery(
    sample_size=1000,
    failure_prob=0.05,
    objective_tol=0.5,
    objective_bound=3.0,
    num_players=2,
    decision_dim=10,
)


class TestBoxSampler:
    def test_degenerate_range_gives_constant(self):
        sampler = BoxSampler((0.0, 0.0), (0.0, 0.0))
        scen = sample_scenarios(sampler, 3, seed=0)
        assert np.array_equal(scen.scenarios, np.zeros((3, 2)))

    def test_empty_range_rejected(self):
        with pytest.raises(CertificateError):
            BoxSampler((1.0,), (0.0,))

    def test_draws_stay_in_box(self):
        sampler = BoxSampler((-2.0, 5.0), (-1.0, 6.0))
        scen = sample_scenarios(sampler, 500, seed=7).scenarios
        assert np.all(scen[:, 0] >= -2.0) and np.all(scen[:, 0] <= -1.0)
        assert np.all(scen[:, 1] >= 5.0) and np.all(scen[:, 1] <= 6.0)

    def test_empirical_mean_near_center(self):
        # CLT: mean of 10^4 U[0,1] draws is within 4 sigma of 0.5.
        sampler = BoxSampler((0.0,), (1.0,))
        scen = sample_scenarios(sampler, 10_000, seed=11).scenarios
        sigma = 1.0 / math.sqrt(12 * 10_000)
        assert abs(scen.mean() - 0.5) < 4 * sigma

    def test_same_seed_bit_identical(self):
        sampler = BoxSampler((0.0, -1.0), (1.0, 1.0))
        a = sample_scenarios(sampler, 64, seed=5)
        b = sample_scenarios(sampler, 64, seed=5)
        assert a.scenarios.tobytes() == b.scenarios.tobytes()

    def test_scenario_set_immutable(self):
        scen = sample_scenarios(BoxSampler((0.0,), (1.0,)), 4, seed=0)
        with pytest.raises(ValueError):
            scen.scenarios[0, 0] = 9.0

    def test_nonfinite_rejected(self):
        with pytest.raises(CertificateError):
            ScenarioSet(np.array([[np.inf]]), seed=0, sampler_id="x")


class TestBinomialTail:
    def test_single_term_closed_form(self):
        assert abs(binomial_tail(10, 0.5, 0) - 1.0 / 1024.0) < 1e-16

    def test_full_support_is_one(self):
        assert binomial_tail(10, 0.5, 10) == 1.0
        assert binomial_tail(50, 0.05, 50) == 1.0

    def test_against_rational_oracle_spot(self):
        val = binomial_tail(20, 0.05, 3)
        exact = float(exact_tail(20, Fraction(1, 20), 3))
        assert abs(val - exact) <= 1e-12 * exact

    def test_bad_k_max_rejected(self):
        with pytest.raises(CertificateError):
            binomial_tail(10, 0.5, 11)
        with pytest.raises(CertificateError):
            binomial_tail(10, 0.5, -1)

    def test_bad_eps_rejected(self):
        with pytest.raises(CertificateError):
            binomial_tail(10, 0.0, 1)
        with pytest.raises(CertificateError):
            binomial_tail(10, 1.0, 1)

    def test_large_s_matches_rational_oracle(self):
        # naive binomials overflow float for these arguments
        val = binomial_tail(2000, 0.5, 940)
        exact = exact_tail(2000, Fraction(1, 2), 940)
        assert abs(Fraction(val) - exact) <= Fraction(1, 10**12) * exact

    @given(
        S=st.integers(1, 60),
        eps=st.sampled_from([0.05, 0.3, 0.5, 0.95]),
        data=st.data(),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_k_and_bounded(self, S, eps, data):
        k = data.draw(st.integers(0, S))
        lo = binomial_tail(S, eps, k)
        assert 0.0 <= lo <= 1.0
        if k < S:
            assert binomial_tail(S, eps, k + 1) >= lo


class TestDeltaFormulas:
    def test_prop1_matches_manual_sum(self):
        q = CertificateQuery(
            sample_size=30,
            failure_prob=0.1,
            objective_tol=0.4,
            objective_bound=2.0,
            num_players=2,
            decision_dim=3,
        )
        exp_term = 2 * 2 * math.exp(-30 * 0.4**2 / (4 * 2.0**2))
        tail = float(exact_tail(30, Fraction(1, 10), 2 * 3 - 1))
        assert abs(delta_prop1(q) - (exp_term + tail)) < 1e-12

    def test_prop2_requires_separable(self):
        with pytest.raises(CertificateError):
            delta_prop2(RENDEZVOUS_QUERY)

    def test_prop2_single_player_equals_prop1(self):
        q = CertificateQuery(
            sample_size=40,
            failure_prob=0.2,
            objective_tol=0.3,
            objective_bound=1.0,
            num_players=1,
            decision_dim=4,
            separable=True,
        )
        assert delta_prop2(q) == delta_prop1(q)

    def test_prop2_composition(self):
        q = CertificateQuery(
            sample_size=1000,
            failure_prob=0.05,
            objective_tol=0.5,
            objective_bound=3.0,
            num_players=2,
            decision_dim=10,
            separable=True,
        )
        expected = 4 * math.exp(-1000 * 0.25 / 36) + 2 * binomial_tail(1000, 0.05, 9)
        assert abs(delta_prop2(q) - expected) < 1e-15

    def test_exp_terms_shared(self):
        q1 = RENDEZVOUS_QUERY
        q2 = dataclasses.replace(q1, separable=True)
        r1 = certificate_report(q1)
        r2 = certificate_report(q2)
        assert r1["exp_term"] == r2["exp_term"]

    def test_reduces_to_binomial_when_exp_negligible(self):
        q = CertificateQuery(
            sample_size=10,
            failure_prob=0.5,
            objective_tol=1e6,
            objective_bound=1.0,
            num_players=1,
            decision_dim=1,
        )
        assert abs(delta_prop1(q) - 1.0 / 1024.0) < 1e-12

    def test_delta_decreases_in_s_past_mode(self):
        vals = [
            delta_prop1(dataclasses.replace(RENDEZVOUS_QUERY, sample_size=S))
            for S in (1000, 10_000, 100_000)
        ]
        assert vals[0] > vals[1] > vals[2]

    def test_prop2_tighter_on_rendezvous_parameters(self):
        q = dataclasses.replace(RENDEZVOUS_QUERY, separable=True)
        assert delta_prop2(q) <= delta_prop1(q)


class TestMinSamples:
    def test_target_one_returns_one(self):
        assert min_samples(0.999999, RENDEZVOUS_QUERY) >= 1

    def test_boundary_verified(self):
        target = delta_prop1(RENDEZVOUS_QUERY)
        S = min_samples(target, RENDEZVOUS_QUERY)
        assert S <= 1000
        assert delta_prop1(dataclasses.replace(RENDEZVOUS_QUERY, sample_size=S)) <= target
        if S > 1:
            assert (
                delta_prop1(dataclasses.replace(RENDEZVOUS_QUERY, sample_size=S - 1))
                > target
            )

    def test_impossible_target_errors(self):
        q = dataclasses.replace(RENDEZVOUS_QUERY, objective_bound=1e6)
        with pytest.raises(CertificateError):
            min_samples(1e-300, q)

    @given(target=st.floats(1e-6, 0.9))
    @settings(max_examples=20, deadline=None)
    def test_returned_size_always_meets_target(self, target):
        q = dataclasses.replace(RENDEZVOUS_QUERY, separable=True)
        S = min_samples(target, q)
        assert delta_prop2(dataclasses.replace(q, sample_size=S)) <= target


class TestEmpiricalObjective:
    def test_single_scenario_identity(self, quad_game):
        _, spec, sampler = quad_game
        scen = sample_scenarios(sampler, 1, seed=0)
        x = np.ones(spec.joint_dim)
        assert empirical_objective(spec, x, scen, 0) == spec.objective(
            x, scen.scenarios[0], 0
        )

    def test_matches_independent_mean(self, quad_game):
        _, spec, sampler = quad_game
        scen = sample_scenarios(sampler, 100, seed=9)
        x = np.full(spec.joint_dim, 0.25)
        manual = sum(spec.objective(x, t, 1) for t in scen.scenarios) / 100
        assert abs(empirical_objective(spec, x, scen, 1) - manual) < 1e-12


class TestReportSerialization:
    def test_json_fields(self, tmp_path):
        q = dataclasses.replace(RENDEZVOUS_QUERY, separable=True)
        path = tmp_path / "cert.json"
        write_certificate(q, path)
        loaded = json.loads(path.read_text())
        for key in ("S", "eps", "eps_tilde", "D", "N", "n", "exp_term", "tail_term",
                    "delta_prop1", "delta_prop2"):
            assert key in loaded
        assert loaded["S"] == 1000

    def test_prop2_absent_when_not_separable(self):
        assert "delta_prop2" not in certificate_report(RENDEZVOUS_QUERY)
