import cmath
import math

import numpy as np
import pytest
from scipy.stats import binom

from collapse_walk import oracles
from collapse_walk.errors import DomainError, InstanceTooLargeError
from collapse_walk.state import BasisRotation, rotate_subsystem, singlet_like

# exact per-term deviant mean for N = 50, d = 0.02, frozen from the lattice DP and
# confirmed by the reflection-principle formula below
ERASER_N50_D002 = 0.010812033666848242


class TestMarkov:
    @pytest.mark.parametrize("p0,d", [(0.3, 0.01), (0.1, 0.05), (0.5, 0.1), (0.75, 0.25)])
    def test_absorption_probability_equals_start(self, p0, d):
        assert oracles.markov_absorption(p0, d) == pytest.approx(p0, abs=1e-12)

    @pytest.mark.parametrize("p0,d", [(0.3, 0.01), (0.5, 0.01), (0.2, 0.1)])
    def test_expected_duration_is_gamblers_ruin(self, p0, d):
        k, m = round(p0 / d), round(1 / d)
        assert oracles.markov_expected_duration(p0, d) == pytest.approx(k * (m - k), rel=1e-10)

    def test_off_lattice_start_rejected(self):
        with pytest.raises(DomainError):
            oracles.markov_absorption(0.333, 0.01)

    def test_uneven_step_rejected(self):
        with pytest.raises(DomainError):
            oracles.markov_absorption(0.3, 0.03)

    def test_grid_size_limit(self):
        with pytest.raises(InstanceTooLargeError):
            oracles.markov_absorption(0.5, 1e-6)


class TestWalkDistribution:
    def test_no_steps_is_a_point_mass(self):
        dist = oracles.walk_distribution(0.3, 0.1, 0)
        assert dist[3] == 1.0 and dist.sum() == 1.0

    def test_mass_conserved_and_mean_is_martingale(self):
        dist = oracles.walk_distribution(0.3, 0.05, 200)
        grid = np.arange(dist.size) / (dist.size - 1)
        assert dist.sum() == pytest.approx(1.0, abs=1e-12)
        assert float(dist @ grid) == pytest.approx(0.3, abs=1e-12)

    def test_second_moment_recursion(self):
        assert oracles.second_moment(0.02, 50) == pytest.approx(50 * 0.02 ** 2, rel=1e-12)

    def test_eraser_expectation_by_reflection_principle(self):
        n, d = 50, 0.02
        s = np.arange(-n, n + 1, 2)

        def pmf(x):
            x = np.asarray(x)
            ok = (np.abs(x) <= n) & ((x + n) % 2 == 0)
            return np.where(ok, binom.pmf((x + n) // 2, n, 0.5), 0.0)

        inner = s[np.abs(s) < 25]
        survive = pmf(inner) - pmf(-50 - inner) - pmf(50 - inner)
        value = float(survive @ oracles.eraser_cross_term(0.5 + d * inner)) + (1 - survive.sum()) * 0.25
        got = oracles.eraser_deviant_expectation(n, d)
        assert got["mean"] == pytest.approx(value, abs=1e-14)
        assert got["mean"] == pytest.approx(ERASER_N50_D002, abs=1e-15)
        assert got["total_mean"] == pytest.approx(2 * ERASER_N50_D002, abs=1e-15)


class TestExtensions:
    def test_two_spacelike_events(self):
        prec = oracles.light_cone_precedes({"A": (0.0, 0.0), "B": (0.0, 1.0)})
        assert len(oracles.brute_force_extensions(["A", "B"], prec)) == 2

    def test_one_timelike_pair_and_a_free_event(self):
        events = {"A": (0.0, 0.0), "B": (2.0, 0.0), "C": (1.0, 10.0)}
        exts = oracles.brute_force_extensions(list(events), oracles.light_cone_precedes(events))
        assert sorted(exts) == sorted([("C", "A", "B"), ("A", "C", "B"), ("A", "B", "C")])

    def test_refuses_large_instances(self):
        with pytest.raises(InstanceTooLargeError):
            oracles.brute_force_extensions([str(i) for i in range(11)], lambda a, b: False)


class TestSingletExpansion:
    @pytest.mark.parametrize("gamma,delta", [
        (math.sqrt(0.2), math.sqrt(0.8)),
        (0.6, 0.8j),
        (cmath.exp(0.3j) * 0.28, cmath.exp(-1.1j) * math.sqrt(1 - 0.28 ** 2)),
    ])
    def test_matches_basis_rotation(self, gamma, delta):
        alpha, beta = 1 / math.sqrt(2), -1 / math.sqrt(2)
        sym = oracles.singlet_expansion(alpha, beta, gamma, delta)
        rot = rotate_subsystem(singlet_like(alpha, beta), BasisRotation.from_coefficients(1, gamma, delta))
        t = rot.tensor()
        for (p1, p2), c in sym.items():
            assert t["xy".index(p1), "uv".index(p2)] == pytest.approx(c, abs=1e-12)

    def test_expanded_form_coefficients(self):
        a, b, g, d = 0.6, 0.8, 0.6, 0.8j
        sym = oracles.singlet_expansion(a, b, g, d)
        assert sym[("x", "u")] == pytest.approx(a * np.conj(d))
        assert sym[("x", "v")] == pytest.approx(-a * g)
        assert sym[("y", "u")] == pytest.approx(b * np.conj(g))
        assert sym[("y", "v")] == pytest.approx(b * d)


class TestAmplified:
    def test_absorbed_case_equals_d(self):
        assert oracles.amplified_deviation(0.01, 0.0) == pytest.approx(0.01, rel=1e-12)

    def test_doubled_case_small_d_coefficient(self):
        d = 1e-6
        assert oracles.amplified_deviation(d, 2 * d) / d == pytest.approx(3 - 2 * math.sqrt(2), rel=1e-5)

    def test_born_marginals(self):
        s = 1 / math.sqrt(2)
        m1, m2 = oracles.born_marginals_two_qubit([0, s, -s, 0])
        np.testing.assert_allclose(m1, [0.5, 0.5])
        np.testing.assert_allclose(m2, [0.5, 0.5])
