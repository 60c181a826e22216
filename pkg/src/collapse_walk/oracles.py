"""Exact reference values used to check the simulator.

Nothing here calls the walk engine, the sequencer's sampler, or the state
algebra: each oracle rebuilds its answer from first principles (linear solves
on the step grid, brute-force enumeration, symbolic expansion, explicit inner
products) so that agreement with the Monte Carlo path means something.
"""

from __future__ import annotations

import math
from itertools import permutations
from typing import Callable, Sequence

import numpy as np
import sympy as sp
from scipy.linalg import solve_banded

from .errors import DomainError, InstanceTooLargeError

MAX_GRID = 100_000
MAX_ENUM_EVENTS = 10
_GRID_TOL = 1e-9


def grid_of(p0: float, d: float) -> tuple[int, int]:
    """(start index, number of intervals) of the walk lattice with spacing d."""
    if not (0.0 < d < 1.0):
        raise DomainError(f"d must lie in (0, 1), got {d}")
    m = round(1.0 / d)
    if abs(m * d - 1.0) > _GRID_TOL:
        raise DomainError(f"d = {d} does not divide [0, 1] evenly")
    k = round(p0 / d)
    if abs(k * d - p0) > _GRID_TOL or not 0 <= k <= m:
        raise DomainError(f"p0 = {p0} is not a point of the d = {d} lattice")
    if m + 1 > MAX_GRID:
        raise InstanceTooLargeError(f"lattice of {m + 1} states exceeds the limit of {MAX_GRID}")
    return k, m


def _solve_chain(m: int, rhs_interior: np.ndarray, right_boundary: float) -> np.ndarray:
    """Solve x_k - x_{k-1}/2 - x_{k+1}/2 = rhs_k on 1..m-1 with x_0 = 0, x_m = right_boundary."""
    n = m - 1
    if n <= 0:
        return np.array([0.0, right_boundary])[: m + 1]
    ab = np.zeros((3, n))
    ab[0, 1:] = -0.5
    ab[1, :] = 1.0
    ab[2, :-1] = -0.5
    b = rhs_interior.astype(float).copy()
    b[-1] += 0.5 * right_boundary
    x = solve_banded((1, 1), ab, b)
    return np.concatenate([[0.0], x, [right_boundary]])


def markov_absorption(p0: float, d: float) -> float:
    """Probability that the +-d walk from p0 is absorbed at 1 (boundaries Pr(0)=0, Pr(1)=1)."""
    k, m = grid_of(p0, d)
    x = _solve_chain(m, np.zeros(m - 1), 1.0)
    return float(x[k])


def markov_expected_duration(p0: float, d: float) -> float:
    """Expected number of steps before absorption for the +-d walk from p0."""
    k, m = grid_of(p0, d)
    x = _solve_chain(m, np.ones(m - 1), 0.0)
    return float(x[k])


def walk_distribution(p0: float, d: float, n_steps: int) -> np.ndarray:
    """Probability of each lattice point after ``n_steps`` steps, absorbing at both ends."""
    k, m = grid_of(p0, d)
    dist = np.zeros(m + 1)
    dist[k] = 1.0
    for _ in range(n_steps):
        new = np.zeros_like(dist)
        new[0] += dist[0]
        new[m] += dist[m]
        inner = dist[1:m]
        new[0:m - 1] += 0.5 * inner
        new[2:m + 1] += 0.5 * inner
        dist = new
    return dist


def walk_expectation(p0: float, d: float, n_steps: int, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """E[f(p_N)] for the lattice walk after ``n_steps`` steps."""
    _, m = grid_of(p0, d)
    dist = walk_distribution(p0, d, n_steps)
    grid = np.arange(m + 1) / m
    return float(np.dot(dist, f(grid)))


def second_moment(d: float, n_steps: int) -> float:
    """E[(p_N - p_0)^2] for the unabsorbed walk: each step adds d^2 independently."""
    m2 = 0.0
    for _ in range(n_steps):
        m2 = m2 + d * d
    return m2


def eraser_cross_term(p: np.ndarray | float) -> np.ndarray | float:
    """Probability of one deviant cross term when the subject branches hold densities p, 1 - p.

    With real positive branch amplitudes a' = sqrt(p), b' = sqrt(1 - p) each cross
    term carries amplitude (a' - b')/2.
    """
    a = np.sqrt(p)
    b = np.sqrt(1.0 - np.asarray(p))
    return (a - b) ** 2 / 4.0


def eraser_deviant_expectation(n_steps: int, d: float, p0: float = 0.5) -> dict:
    """Exact ensemble mean and variance of the per-term deviant probability after N steps."""
    mean = walk_expectation(p0, d, n_steps, eraser_cross_term)
    second = walk_expectation(p0, d, n_steps, lambda g: eraser_cross_term(g) ** 2)
    return {"mean": mean, "variance": second - mean * mean, "total_mean": 2.0 * mean}


# --------------------------------------------------------------------------- orders


def brute_force_extensions(ids: Sequence[str], precedes: Callable[[str, str], bool]) -> list[tuple[str, ...]]:
    """Every permutation of ``ids`` that respects ``precedes`` (a strict partial order)."""
    if len(ids) > MAX_ENUM_EVENTS:
        raise InstanceTooLargeError(f"enumeration limited to {MAX_ENUM_EVENTS} events, got {len(ids)}")
    out = []
    for perm in permutations(ids):
        pos = {e: i for i, e in enumerate(perm)}
        if all(pos[a] < pos[b] for a in ids for b in ids if a != b and precedes(a, b)):
            out.append(perm)
    return out


def light_cone_precedes(events: dict[str, tuple[float, float]]) -> Callable[[str, str], bool]:
    """a precedes b iff b lies in or on the future light cone of a (c = 1)."""

    def precedes(a: str, b: str) -> bool:
        ta, xa = events[a]
        tb, xb = events[b]
        dt, dx = tb - ta, xb - xa
        return dt > 0 and dt * dt >= dx * dx - 1e-12

    return precedes


# --------------------------------------------------------------------------- amplitudes


def singlet_expansion(alpha: complex, beta: complex, gamma: complex, delta: complex) -> dict[tuple[str, str], complex]:
    """Coefficients of ``alpha|x>|y> + beta|y>|x>`` with particle 2 in the u/v basis.

    Expands symbolically using ``|x> = gamma*|u> + delta|v>`` and
    ``|y> = delta*|u> - gamma|v>`` and reads off each product-basis coefficient.
    """
    a, b, g, dl = sp.symbols("alpha beta gamma delta")
    gc, dc = sp.conjugate(g), sp.conjugate(dl)
    x1, y1, u2, v2 = sp.symbols("x1 y1 u2 v2", commutative=True)
    x2 = gc * u2 + dl * v2
    y2 = dc * u2 - g * v2
    expr = sp.expand(a * x1 * y2 + b * y1 * x2)
    values = {a: alpha, b: beta, g: gamma, dl: delta}
    out = {}
    for p1, s1 in (("x", x1), ("y", y1)):
        for p2, s2 in (("u", u2), ("v", v2)):
            coeff = expr.coeff(s1).coeff(s2)
            out[(p1, p2)] = complex(sp.N(coeff.subs(values)))
    return out


def born_marginals_two_qubit(amps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Born marginals of both particles from four product-basis amplitudes."""
    w = np.abs(np.asarray(amps, dtype=complex).reshape(2, 2)) ** 2
    return w.sum(axis=1), w.sum(axis=0)


def amplified_deviation(alpha2: float, shifted_alpha2: float) -> float:
    """1 - |<u'_d|u_d>|^2 from the detector correlate states written out in the z basis.

    ``|u_d> = ((a+b)|z-up> + (a-b)|z-down>)/sqrt 2`` with real a, b; the primed
    state uses the shifted amplitudes.
    """
    a, b = math.sqrt(alpha2), math.sqrt(1.0 - alpha2)
    a2, b2 = math.sqrt(shifted_alpha2), math.sqrt(1.0 - shifted_alpha2)
    s = 1.0 / math.sqrt(2.0)
    u = np.array([(a + b) * s, (a - b) * s])
    u_shift = np.array([(a2 + b2) * s, (a2 - b2) * s])
    overlap = float(np.dot(u_shift, u))
    return 1.0 - overlap * overlap
