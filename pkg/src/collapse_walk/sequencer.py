"""Spacetime placement and sequencing of interaction events (1+1 dimensions, c = 1).

Timelike and lightlike pairs are ordered by time. Spacelike pairs have no
frame-independent order; the sequencer picks one by sampling a linear extension
of the light-cone partial order. The default policy samples extensions
uniformly; ``random-topological`` (uniform choice among currently available
events) is kept as an alternative policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import rng as _rng
from .engine import simulate_ensemble
from .errors import ValidationError
from .signaling import ProbabilityRule, sequential_joint
from .stats import chi_square_homogeneity

INTERVAL_TOL = 1e-12
POLICIES = ("uniform-extension", "random-topological")
# exact uniform sampling enumerates down-sets; beyond this many events fall back to MCMC
MAX_EXACT_EVENTS = 22


@dataclass(frozen=True)
class SpacetimeEvent:
    id: str
    t: float
    x: float
    detector: str = ""
    system: str = "S"
    steps: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.t) and math.isfinite(self.x)):
            raise ValidationError(f"event {self.id!r} has non-finite coordinates")
        if self.steps is not None and self.steps < 0:
            raise ValidationError(f"event {self.id!r}: steps must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "SpacetimeEvent":
        return cls(str(data["id"]), float(data["t"]), float(data["x"]),
                   str(data.get("detector", data["id"])), str(data.get("system", "S")),
                   data.get("steps"))


@dataclass(frozen=True)
class SequencingSurface:
    """One admission surface: label ``s`` and the events it has swept past, in order."""

    s: int
    included: tuple[str, ...]
    advancing: tuple[str, ...] = ()


def classify_interval(a: SpacetimeEvent, b: SpacetimeEvent) -> str:
    dt = b.t - a.t
    dx = b.x - a.x
    gap = dt * dt - dx * dx
    if abs(gap) <= INTERVAL_TOL:
        return "lightlike"
    return "timelike" if gap > 0 else "spacelike"


def precedes(a: SpacetimeEvent, b: SpacetimeEvent) -> bool:
    """True when ``a`` must be sequenced before ``b`` in every frame."""
    return b.t > a.t and classify_interval(a, b) != "spacelike"


def _predecessor_masks(events: Sequence[SpacetimeEvent]) -> list[int]:
    n = len(events)
    masks = [0] * n
    for i in range(n):
        for j in range(n):
            if i != j and precedes(events[j], events[i]):
                masks[i] |= 1 << j
    return masks


def _check_unique(events: Sequence[SpacetimeEvent]) -> None:
    ids = [e.id for e in events]
    if len(set(ids)) != len(ids):
        raise ValidationError("event ids must be unique")


def is_linear_extension(events: Sequence[SpacetimeEvent], order: Sequence[str]) -> bool:
    by_id = {e.id: e for e in events}
    if sorted(order) != sorted(by_id):
        return False
    pos = {e: i for i, e in enumerate(order)}
    return all(pos[a.id] < pos[b.id] for a in events for b in events if a is not b and precedes(a, b))


def count_linear_extensions(events: Sequence[SpacetimeEvent]) -> int:
    _check_unique(events)
    if len(events) > MAX_EXACT_EVENTS:
        raise ValidationError(f"exact counting is limited to {MAX_EXACT_EVENTS} events")
    counter = _extension_counter(tuple(_predecessor_masks(events)))
    return counter(0)


def _extension_counter(pred: tuple[int, ...]):
    n = len(pred)
    full = (1 << n) - 1

    @lru_cache(maxsize=None)
    def count(placed: int) -> int:
        if placed == full:
            return 1
        total = 0
        for i in range(n):
            if not placed >> i & 1 and pred[i] & placed == pred[i]:
                total += count(placed | 1 << i)
        return total

    return count


def sequence_events(events: Sequence[SpacetimeEvent], rng_seed: int, trial: int = 0,
                    policy: str = "uniform-extension") -> list[str]:
    """One total order of the events consistent with the light-cone partial order."""
    _check_unique(events)
    if policy not in POLICIES:
        raise ValidationError(f"unknown sequencing policy {policy!r}; choose from {POLICIES}")
    if not events:
        return []
    gen = _rng.trial_generator(rng_seed, trial, "sequencer")
    pred = _predecessor_masks(events)
    n = len(events)
    if policy == "random-topological":
        idx = _random_topological(pred, gen)
    elif n <= MAX_EXACT_EVENTS:
        idx = _uniform_exact(tuple(pred), gen)
    else:
        idx = _uniform_mcmc(pred, gen)
    return [events[i].id for i in idx]


def _available(pred: Sequence[int], placed: int) -> list[int]:
    return [i for i in range(len(pred)) if not placed >> i & 1 and pred[i] & placed == pred[i]]


def _random_topological(pred: Sequence[int], gen: np.random.Generator) -> list[int]:
    placed, out = 0, []
    for _ in range(len(pred)):
        avail = _available(pred, placed)
        i = avail[int(gen.integers(len(avail)))]
        out.append(i)
        placed |= 1 << i
    return out


def _uniform_exact(pred: tuple[int, ...], gen: np.random.Generator) -> list[int]:
    # choose each next event with probability proportional to the extensions it leaves
    count = _extension_counter(pred)
    placed, out = 0, []
    for _ in range(len(pred)):
        avail = _available(pred, placed)
        weights = np.array([count(placed | 1 << i) for i in avail], dtype=float)
        i = avail[int(gen.choice(len(avail), p=weights / weights.sum()))]
        out.append(i)
        placed |= 1 << i
    return out


def _uniform_mcmc(pred: Sequence[int], gen: np.random.Generator) -> list[int]:
    """Karzanov-Khachiyan chain: lazy random adjacent transpositions that keep the order valid."""
    n = len(pred)
    order = _random_topological(pred, gen)
    sweeps = int(4 * n ** 3 * max(1.0, math.log(n)))
    positions = gen.integers(0, n - 1, size=sweeps)
    coins = gen.random(sweeps)
    for k, c in zip(positions, coins):
        if c < 0.5:
            continue
        a, b = order[k], order[k + 1]
        if not pred[b] >> a & 1:
            order[k], order[k + 1] = b, a
    return order


def surfaces(order: Sequence[str]) -> list[SequencingSurface]:
    """Admission surfaces s = 0..n for a total order; each step advances past one event."""
    out = [SequencingSurface(0, ())]
    for s, event in enumerate(order, start=1):
        out.append(SequencingSurface(s, tuple(order[:s]), (event,)))
    return out


def all_linear_extensions(events: Sequence[SpacetimeEvent]) -> list[list[str]]:
    """Every admissible order (small event sets only)."""
    _check_unique(events)
    if len(events) > MAX_EXACT_EVENTS:
        raise ValidationError(f"enumeration is limited to {MAX_EXACT_EVENTS} events")
    pred = _predecessor_masks(events)
    n = len(events)
    out: list[list[str]] = []

    def rec(placed: int, prefix: list[int]):
        if len(prefix) == n:
            out.append([events[i].id for i in prefix])
            return
        for i in _available(pred, placed):
            prefix.append(i)
            rec(placed | 1 << i, prefix)
            prefix.pop()

    rec(0, [])
    return out


@dataclass
class InvarianceReport:
    orders: list[list[str]]
    cells: list[str]
    tables: list[list[int]]
    chi2: float
    dof: int
    p_value: float
    trials: int
    rule: str = "shift-dynamics"
    exact: list[list[float]] = field(default_factory=list)

    @property
    def homogeneous(self) -> bool:
        return self.p_value > 0.01

    def to_json_dict(self) -> dict:
        return {
            "rule": self.rule,
            "orders": self.orders,
            "cells": self.cells,
            "tables": self.tables,
            "chi2": self.chi2,
            "dof": self.dof,
            "p_value": self.p_value,
            "trials": self.trials,
            "homogeneous": self.homogeneous,
            "exact": self.exact,
        }


def order_invariance_test(built, orders: Sequence[Sequence[str]], trials: int, rng_seed: int,
                          rule: ProbabilityRule | None = None) -> InvarianceReport:
    """Joint outcome tables under each event order and a chi-square homogeneity test.

    ``built`` is a built scenario (state, interaction stream, events). Without a
    rule the shift dynamics run under each order, with the draws of every
    interaction keyed by (trial, event id) so all orders see the same random
    numbers. With a rule, outcomes are drawn from the exact sequential joint
    distribution the rule gives for the order, again with matched uniforms.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if not orders:
        raise ValidationError("at least one order is required")
    orders = [list(o) for o in orders]
    for o in orders:
        if not is_linear_extension(built.events, o):
            raise ValidationError(f"order {o} is not a linear extension of the scenario's events")
    if rule is None:
        stream = built.stream
        tables, cells = [], None
        for o in orders:
            idx = np.tile(np.array([stream.index_of(k) for k in o], dtype=np.int64), (trials, 1))
            counts = simulate_ensemble(built.state, stream, built.params, trials, rng_seed, orders=idx).joint_counts()
            if cells is None:
                cells = list(counts)  # empty columns, usually "incomplete", are dropped by the test
            tables.append([counts[c] for c in cells])
        table = np.asarray(tables)
        h = chi_square_homogeneity(table)
        return InvarianceReport(orders, cells, table.tolist(), h.chi2, h.dof, h.p_value, trials)
    if built.state.n_subsystems != 2 or len(built.events) != 2:
        raise ValidationError("rule mode needs a two-wing state with one event per wing")
    u = _rng.trial_generator(rng_seed, 0, "rule-order").random(trials)
    cells = list(built.cells)
    tables, exact = [], []
    for o in orders:
        joint = sequential_joint(rule, built.state, first=built.wing_of[o[0]]).reshape(-1)
        cdf = np.cumsum(joint)
        cdf[-1] = 1.0
        picks = np.searchsorted(cdf, u, side="right")
        tables.append(np.bincount(picks, minlength=len(cells)).tolist())
        exact.append(joint.tolist())
    table = np.asarray(tables)
    h = chi_square_homogeneity(table)
    return InvarianceReport(orders, cells, table.tolist(), h.chi2, h.dof, h.p_value, trials, rule.name, exact)
