import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collapse_walk import oracles
from collapse_walk.errors import ValidationError
from collapse_walk.scenarios import build_scenario
from collapse_walk.sequencer import (SpacetimeEvent, all_linear_extensions, classify_interval,
                                     count_linear_extensions, is_linear_extension, order_invariance_test,
                                     precedes, sequence_events, surfaces)
from collapse_walk.signaling import ProbabilityRule


def ev(id, t, x, system="S"):
    return SpacetimeEvent(id, t, x, id, system)


FIG = [ev("A", 0.0, 0.0), ev("B", 2.0, 0.0), ev("C", 1.0, 10.0)]


class TestIntervals:
    @pytest.mark.parametrize("dt,dx,kind", [(2, 1, "timelike"), (1, 1, "lightlike"), (0, 1, "spacelike"),
                                            (-2, 1, "timelike")])
    def test_classification(self, dt, dx, kind):
        assert classify_interval(ev("a", 0, 0), ev("b", dt, dx)) == kind

    def test_lightlike_pairs_are_ordered(self):
        assert precedes(ev("a", 0, 0), ev("b", 1, 1))
        assert not precedes(ev("b", 1, 1), ev("a", 0, 0))

    def test_non_finite_coordinates_rejected(self):
        with pytest.raises(ValidationError):
            SpacetimeEvent("a", math.inf, 0.0)


class TestSequencing:
    def test_timelike_chain_has_a_single_order(self):
        events = [ev("c", 3, 0), ev("a", 0, 0), ev("b", 1, 0.5)]
        assert sequence_events(events, 1) == ["a", "b", "c"]
        assert count_linear_extensions(events) == 1

    def test_three_event_configuration(self):
        assert count_linear_extensions(FIG) == 3
        assert sorted(map(tuple, all_linear_extensions(FIG))) == sorted(
            [("C", "A", "B"), ("A", "C", "B"), ("A", "B", "C")])

    def test_two_spacelike_events_are_balanced(self):
        events = [ev("A", 0, -1), ev("B", 0, 1)]
        n = 10_000
        first = sum(sequence_events(events, 5, trial=t)[0] == "A" for t in range(n))
        assert abs(first / n - 0.5) <= 4 * math.sqrt(0.25 / n)

    def test_uniform_over_extensions(self):
        n = 12_000
        counts = Counter(tuple(sequence_events(FIG, 3, trial=t)) for t in range(n))
        assert len(counts) == 3
        for c in counts.values():
            assert abs(c / n - 1 / 3) <= 4 * math.sqrt((1 / 3) * (2 / 3) / n)

    def test_random_topological_policy_is_not_uniform(self):
        # C is chosen first half the time, so CAB gets 1/2 rather than 1/3
        n = 8_000
        counts = Counter(tuple(sequence_events(FIG, 3, trial=t, policy="random-topological")) for t in range(n))
        assert abs(counts[("C", "A", "B")] / n - 0.5) <= 4 * math.sqrt(0.25 / n)

    def test_unknown_policy(self):
        with pytest.raises(ValidationError):
            sequence_events(FIG, 1, policy="frame-of-A")

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError):
            sequence_events([ev("A", 0, 0), ev("A", 1, 0)], 1)

    def test_surfaces_admit_one_event_per_step(self):
        surf = surfaces(["A", "C", "B"])
        assert [s.s for s in surf] == [0, 1, 2, 3]
        assert surf[-1].included == ("A", "C", "B")
        assert all(len(b.included) == len(a.included) + 1 for a, b in zip(surf, surf[1:]))

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(-6, 6)), min_size=1, max_size=7, unique=True),
           st.integers(0, 2**32))
    def test_orders_respect_the_light_cone(self, coords, seed):
        events = [ev(f"e{i}", float(t), float(x)) for i, (t, x) in enumerate(coords)]
        order = sequence_events(events, seed)
        assert is_linear_extension(events, order)
        table = {e.id: (e.t, e.x) for e in events}
        assert count_linear_extensions(events) == len(
            oracles.brute_force_extensions([e.id for e in events], oracles.light_cone_precedes(table)))

    def test_large_event_sets_use_the_chain_sampler(self):
        events = [ev(f"e{i}", 0.0, float(i)) for i in range(24)] + [ev("late", 100.0, 0.0)]
        order = sequence_events(events, 1)
        assert is_linear_extension(events, order) and order[-1] == "late"


class TestOrderInvariance:
    def bell(self, alpha=1 / math.sqrt(2), beta=-1 / math.sqrt(2)):
        return build_scenario({"kind": "bell-epr", "alpha": alpha, "beta": beta, "d": 0.05,
                               "wing_bases": {"B": {"gamma": math.sqrt(0.2), "delta": math.sqrt(0.8)}}})

    def test_single_order_is_trivially_homogeneous(self):
        rep = order_invariance_test(self.bell(), [["A", "B"]], 500, 1)
        assert rep.p_value == 1.0 and sum(rep.tables[0]) == 500

    def test_invalid_order_rejected(self):
        b = build_scenario({"kind": "bell-epr", "events": [
            {"id": "A", "t": 0, "x": 0, "detector": "A"}, {"id": "B", "t": 2, "x": 1, "detector": "B"}]})
        with pytest.raises(ValidationError):
            order_invariance_test(b, [["B", "A"]], 10, 1)

    def test_shift_dynamics_orders_agree(self):
        rep = order_invariance_test(self.bell(), [["A", "B"], ["B", "A"]], 20_000, 2)
        assert rep.p_value > 0.01

    def test_abs_rule_on_singlet_is_order_independent(self):
        rep = order_invariance_test(self.bell(), [["A", "B"], ["B", "A"]], 20_000, 3,
                                    rule=ProbabilityRule("abs-amplitude"))
        np.testing.assert_allclose(rep.exact[0], rep.exact[1], atol=1e-15)

    def test_abs_rule_on_unequal_state_is_detected(self):
        rep = order_invariance_test(self.bell(0.6, -0.8), [["A", "B"], ["B", "A"]], 100_000, 4,
                                    rule=ProbabilityRule("abs-amplitude"))
        assert rep.p_value < 1e-6 and not rep.homogeneous
