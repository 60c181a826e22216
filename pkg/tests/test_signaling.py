import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collapse_walk.errors import DomainError, ValidationError
from collapse_walk.signaling import (ProbabilityRule, born_uniqueness_scan, marginal_gap, outcome_weights,
                                     probe_gap, random_basis, random_state, rows_to_csv, rule_weights,
                                     sequential_joint, simultaneous_joint, singlet_witness)
from collapse_walk.state import EntangledState, product_state

RULES = ["born", "abs-amplitude", "equal-nonzero", "max-deterministic", "cosine-angle", "power-1", "power-3"]
S = 1 / math.sqrt(2)


def two_qubit(*amps):
    return EntangledState((2, 2), (("x", "y"), ("x", "y")), np.array(amps, dtype=complex))


class TestWeights:
    def test_born(self):
        np.testing.assert_allclose(outcome_weights(ProbabilityRule("born"), [S, S]), [0.5, 0.5])

    def test_abs_amplitude(self):
        np.testing.assert_allclose(outcome_weights(ProbabilityRule("abs-amplitude"), [0.6, 0.8]), [6 / 14, 8 / 14])

    def test_max_deterministic(self):
        np.testing.assert_array_equal(outcome_weights(ProbabilityRule("max-deterministic"), [0.6, 0.8]), [0, 1])

    def test_max_deterministic_tie_goes_to_lowest_index(self):
        w = rule_weights(ProbabilityRule("max-deterministic"), [S, -S])
        assert w.tie and w.values.tolist() == [1.0, 0.0]

    def test_equal_nonzero_ignores_zeros(self):
        np.testing.assert_allclose(outcome_weights(ProbabilityRule("equal-nonzero"), [0.6, 0, 0.8]), [0.5, 0, 0.5])

    def test_cosine_is_global_phase_invariant(self):
        rule = ProbabilityRule("cosine-angle")
        a = np.array([0.6, 0.8j])
        np.testing.assert_allclose(outcome_weights(rule, a), outcome_weights(rule, -1j * a))
        np.testing.assert_allclose(outcome_weights(rule, [-1.0, 0.0]), [1.0, 0.0])
        # the reference is the largest amplitude (weight 1); a quarter turn from it gets 1/2
        np.testing.assert_allclose(outcome_weights(rule, a), [1 / 3, 2 / 3])

    @pytest.mark.parametrize("rule", RULES)
    def test_zero_vector(self, rule):
        with pytest.raises(DomainError):
            outcome_weights(ProbabilityRule.parse(rule), [0.0, 0.0])

    def test_parse_and_validate(self):
        assert ProbabilityRule.parse("power-1.5") == ProbabilityRule("power", 1.5)
        assert ProbabilityRule("power", 2.0).name == "power-2"
        with pytest.raises(ValidationError):
            ProbabilityRule("gleason")
        with pytest.raises(ValidationError):
            ProbabilityRule("power")

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
                    min_size=2, max_size=6), st.sampled_from(RULES))
    def test_valid_distributions(self, amps, rule):
        a = np.asarray(amps)
        if np.abs(a).max() <= 1e-6:
            return
        w = outcome_weights(ProbabilityRule.parse(rule), a / np.linalg.norm(a))
        assert (w >= 0).all() and w.sum() == pytest.approx(1.0, abs=1e-12)


class TestJoints:
    def test_born_joint_independent_of_order(self):
        gen = np.random.default_rng(3)
        born = ProbabilityRule("born")
        for _ in range(100):
            s = random_state(gen)
            np.testing.assert_allclose(sequential_joint(born, s, 0), sequential_joint(born, s, 1), atol=1e-12)
            np.testing.assert_allclose(sequential_joint(born, s, 0), simultaneous_joint(born, s), atol=1e-12)

    def test_needs_two_wings(self):
        with pytest.raises(ValidationError):
            simultaneous_joint(ProbabilityRule("born"), EntangledState.qubit(S, S))


class TestGaps:
    def test_born_gap_vanishes_on_random_probes(self):
        gen = np.random.default_rng(11)
        born = ProbabilityRule("born")
        worst = max(probe_gap(born, random_state(gen), 1, random_basis(0, gen)) for _ in range(1000))
        assert worst <= 1e-12

    @pytest.mark.parametrize("rule", [r for r in RULES if r != "cosine-angle"])
    def test_product_states_never_signal(self, rule):
        gen = np.random.default_rng(5)
        for _ in range(20):
            a, b = gen.normal(size=2) + 1j * gen.normal(size=2), gen.normal(size=2) + 1j * gen.normal(size=2)
            s = product_state(a / np.linalg.norm(a), b / np.linalg.norm(b))
            assert probe_gap(ProbabilityRule.parse(rule), s, 1, random_basis(0, gen)) <= 1e-12

    def test_cosine_rule_does_not_factorize(self):
        # phase-dependent weights on a_i b_j are not products, so an unentangled state
        # with relative phases on both wings shows a gap; with real amplitudes it vanishes
        cos = ProbabilityRule("cosine-angle")
        _, probes = singlet_witness()
        real = product_state(np.array([0.6, 0.8]), np.array([S, S]))
        assert marginal_gap(cos, real, 1, probes).max_marginal_gap <= 1e-12
        phased = product_state(np.array([0.6, 0.8j]), np.array([0.6, 0.8j]))
        assert marginal_gap(cos, phased, 1, probes).max_marginal_gap == pytest.approx(1 / 12, abs=1e-12)

    def test_probe_must_act_on_distant_wing(self, singlet, probe_u):
        with pytest.raises(DomainError):
            probe_gap(ProbabilityRule("born"), singlet, 0, probe_u)

    def test_equal_nonzero_three_term_state_by_hand(self):
        # plain marginal (2/3, 1/3); a generic probe leaves four nonzero terms, giving (1/2, 1/2)
        state = two_qubit(0.6, 0.48, 0.64, 0.0)
        _, probes = singlet_witness()
        rep = marginal_gap(ProbabilityRule("equal-nonzero"), state, 1, probes)
        assert rep.gaps[0][0] == pytest.approx(1 / 12, abs=1e-15)
        assert rep.max_marginal_gap == pytest.approx(1 / 6, abs=1e-15)
        assert rep.witness == (0, 1)

    # regression constants from the exact evaluator
    @pytest.mark.parametrize("rule,gap", [
        ("born", 0.0), ("abs-amplitude", 0.0), ("equal-nonzero", 0.0), ("max-deterministic", 1.0),
        ("cosine-angle", 0.75), ("power-1", 0.0), ("power-3", 0.0)])
    def test_singlet_witness(self, rule, gap):
        state, probes = singlet_witness()
        rep = marginal_gap(ProbabilityRule.parse(rule), state, 1, probes)
        assert rep.max_marginal_gap == pytest.approx(gap, abs=1e-12)

    def test_singlet_witness_reports_ties(self):
        state, probes = singlet_witness()
        assert marginal_gap(ProbabilityRule("max-deterministic"), state, 1, probes).ties == 1

    @pytest.mark.parametrize("rule,gap", [
        ("abs-amplitude", 0.006051628005234511), ("power-3", 0.02422895096508343),
        ("cosine-angle", 0.5), ("equal-nonzero", 0.0), ("max-deterministic", 0.0)])
    def test_unequal_bell_state(self, rule, gap):
        state, probes = singlet_witness(0.6, -0.8)
        assert marginal_gap(ProbabilityRule.parse(rule), state, 1, probes).max_marginal_gap == pytest.approx(
            gap, abs=1e-14)

    def test_report_json(self, singlet, probe_u):
        rep = marginal_gap(ProbabilityRule("cosine-angle"), singlet, 1, [probe_u], ["singlet"])
        d = rep.to_json_dict()
        assert d["rule"] == "cosine-angle" and d["probe_states"] == ["singlet"] and d["witness"] == [0, 0]


class TestUniquenessScan:
    def test_zero_only_at_two(self):
        rep = born_uniqueness_scan([0.5, 1, 1.5, 2, 2.5, 3], 200, 7)
        assert rep.zeros == [2.0]
        assert rep.gap_by_k[2.0] <= 1e-12
        assert all(g > 1e-3 for k, g in rep.gap_by_k.items() if k != 2.0)

    def test_gap_is_continuous_near_two(self):
        rep = born_uniqueness_scan([1.9, 1.99, 1.999, 2.0], 50, 1)
        g = [rep.gap_by_k[k] for k in (1.9, 1.99, 1.999)]
        assert g[0] > g[1] > g[2] > rep.gap_by_k[2.0]

    def test_csv(self):
        rep = born_uniqueness_scan([1, 2], 3, 0)
        text = rows_to_csv(rep.rows)
        lines = text.split("\n")
        assert lines[0] == "rule,k,state_id,basis_id,gap"
        assert len(lines) == 1 + 6 + 1 and lines[-1] == "" and "\r" not in text
        assert lines[1].startswith("power-1,1.0,0,0,")
