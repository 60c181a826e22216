"""Alternative probability rules and their superluminal-signaling gaps.

A rule maps the amplitudes of an orthogonal decomposition to outcome weights.
For a two-wing state we compare the observed wing's outcome distribution when
the rule is applied to the whole state at once with the distribution obtained
when the distant wing is resolved first (in some probe basis) and the observed
wing is then resolved in its conditional state. Any difference would let the
distant experimenter's basis choice be read off locally.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .state import BasisRotation, EntangledState, rotate_subsystem

ZERO_TOL = 1e-12
RULE_KINDS = ("born", "abs-amplitude", "equal-nonzero", "max-deterministic", "cosine-angle", "power")


@dataclass(frozen=True)
class ProbabilityRule:
    """``kind`` plus the exponent ``k`` for the power-law family ``|a|^k``."""

    kind: str
    k: float | None = None

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValidationError(f"unknown rule {self.kind!r}; choose from {RULE_KINDS}")
        if self.kind == "power" and (self.k is None or self.k < 0):
            raise ValidationError("power rule needs an exponent k >= 0")

    @property
    def name(self) -> str:
        return f"power-{self.k:g}" if self.kind == "power" else self.kind

    @classmethod
    def parse(cls, text: str) -> "ProbabilityRule":
        if text.startswith("power-"):
            return cls("power", float(text[len("power-"):]))
        return cls(text)


@dataclass(frozen=True)
class Weights:
    values: np.ndarray
    tie: bool = False


def rule_weights(rule: ProbabilityRule, amplitudes: Sequence[complex]) -> Weights:
    a = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
    mag = np.abs(a)
    nonzero = mag > ZERO_TOL
    if not nonzero.any():
        raise DomainError("outcome weights of a zero vector are undefined")
    tie = False
    if rule.kind == "born":
        raw = mag ** 2
    elif rule.kind == "abs-amplitude":
        raw = mag
    elif rule.kind == "power":
        raw = np.where(nonzero, mag ** rule.k, 0.0)
    elif rule.kind == "equal-nonzero":
        raw = nonzero.astype(float)
    elif rule.kind == "max-deterministic":
        top = mag.max()
        winners = np.flatnonzero(mag >= top - ZERO_TOL)
        tie = len(winners) > 1
        raw = np.zeros_like(mag)
        raw[winners[0]] = 1.0
    else:  # cosine-angle, phases taken relative to the largest amplitude
        ref = a[int(np.argmax(mag))]
        theta = np.angle(a * np.conj(ref))
        raw = np.where(nonzero, (1.0 + np.cos(theta)) / 2.0, 0.0)
    return Weights(raw / raw.sum(), tie)


def outcome_weights(rule: ProbabilityRule, amplitudes: Sequence[complex]) -> np.ndarray:
    """Normalized outcome weights the rule assigns to the given amplitudes."""
    return rule_weights(rule, amplitudes).values


def _check_two_wing(state: EntangledState) -> None:
    if state.n_subsystems != 2:
        raise ValidationError("two-subsystem state required")


def simultaneous_joint(rule: ProbabilityRule, state: EntangledState) -> np.ndarray:
    """Rule applied to all product-basis amplitudes at once, shape (dim0, dim1)."""
    _check_two_wing(state)
    return outcome_weights(rule, state.amps).reshape(state.dims)


def sequential_joint(rule: ProbabilityRule, state: EntangledState, first: int) -> np.ndarray:
    """Joint distribution when wing ``first`` is resolved first, shape (dim0, dim1).

    The first wing's outcome i gets the rule's weight on the branch norms
    ``||psi_i||``; the other wing is then resolved in its conditional state
    ``psi_i / ||psi_i||``.
    """
    _check_two_wing(state)
    if first not in (0, 1):
        raise DomainError("first must be 0 or 1")
    t = state.tensor()
    if first == 1:
        t = t.T
    norms = np.sqrt(np.sum(np.abs(t) ** 2, axis=1))
    p_first = outcome_weights(rule, norms)
    joint = np.zeros(t.shape)
    for i, n in enumerate(norms):
        if n > ZERO_TOL and p_first[i] > 0:
            joint[i] = p_first[i] * outcome_weights(rule, t[i] / n)
    return joint if first == 0 else joint.T


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass
class SignalingReport:
    rule: str
    probe_states: list[str]
    max_marginal_gap: float
    witness: tuple[int, int]
    gaps: list[list[float]] = field(default_factory=list)
    ties: int = 0

    def to_json_dict(self) -> dict:
        return {
            "rule": self.rule,
            "probe_states": self.probe_states,
            "max_marginal_gap": self.max_marginal_gap,
            "witness": list(self.witness),
            "gaps": self.gaps,
            "ties": self.ties,
        }


def probe_gap(rule: ProbabilityRule, state: EntangledState, wing: int, probe: BasisRotation) -> float:
    """TV distance between the observed wing's marginal without and with a distant probe."""
    _check_two_wing(state)
    other = 1 - wing
    if probe.subsystem != other:
        raise DomainError("probe bases act on the distant wing")
    plain = simultaneous_joint(rule, state).sum(axis=other)
    probed = sequential_joint(rule, rotate_subsystem(state, probe), first=other).sum(axis=other)
    return total_variation(plain, probed)


def marginal_gap(rule: ProbabilityRule, states: EntangledState | Sequence[EntangledState], wing: int,
                 probe_bases: Sequence[BasisRotation], state_names: Sequence[str] | None = None) -> SignalingReport:
    """Largest probe-induced change of wing ``wing``'s marginal over states and probe bases."""
    if isinstance(states, EntangledState):
        states = [states]
    if not probe_bases:
        raise ValidationError("at least one probe basis is required")
    names = list(state_names) if state_names else [f"state-{i}" for i in range(len(states))]
    gaps = [[probe_gap(rule, s, wing, b) for b in probe_bases] for s in states]
    arr = np.asarray(gaps)
    i, j = np.unravel_index(int(np.argmax(arr)), arr.shape)
    ties = 0
    if rule.kind == "max-deterministic":
        for s in states:
            ties += int(rule_weights(rule, s.amps).tie)
    return SignalingReport(rule.name, names, float(arr[i, j]), (int(i), int(j)), gaps, ties)


# --------------------------------------------------------------------------- scans


def random_state(gen: np.random.Generator) -> EntangledState:
    v = gen.normal(size=4) + 1j * gen.normal(size=4)
    v /= np.linalg.norm(v)
    return EntangledState((2, 2), (("x", "y"), ("x", "y")), v)


def random_basis(subsystem: int, gen: np.random.Generator) -> BasisRotation:
    v = gen.normal(size=2) + 1j * gen.normal(size=2)
    v /= np.linalg.norm(v)
    return BasisRotation.from_coefficients(subsystem, v[0], v[1], ("u", "v"))


@dataclass
class ScanRow:
    rule: str
    k: float | None
    state_id: int
    basis_id: int
    gap: float


@dataclass
class UniquenessReport:
    ks: list[float]
    gap_by_k: dict[float, float]
    rows: list[ScanRow]
    samples: int
    seed: int

    @property
    def zeros(self) -> list[float]:
        return [k for k, g in self.gap_by_k.items() if g <= ZERO_TOL]

    def to_json_dict(self) -> dict:
        return {"ks": self.ks, "gap_by_k": {f"{k:g}": g for k, g in self.gap_by_k.items()},
                "zeros": self.zeros, "samples": self.samples, "seed": self.seed}


def born_uniqueness_scan(ks: Iterable[float], n_states: int, rng_seed: int,
                         wing: int = 1) -> UniquenessReport:
    """Max probe gap of each power rule ``|a|^k`` over random states and probe bases."""
    ks = [float(k) for k in ks]
    gen = np.random.default_rng(rng_seed)
    probes = [(random_state(gen), random_basis(1 - wing, gen)) for _ in range(n_states)]
    rows, gap_by_k = [], {}
    for k in ks:
        rule = ProbabilityRule("power", k)
        worst = 0.0
        for sid, (s, b) in enumerate(probes):
            g = probe_gap(rule, s, wing, b)
            rows.append(ScanRow(rule.name, k, sid, sid, g))
            worst = max(worst, g)
        gap_by_k[k] = worst
    return UniquenessReport(ks, gap_by_k, rows, n_states, rng_seed)


def scan_rules(rules: Sequence[ProbabilityRule], n_states: int, rng_seed: int, wing: int = 1) -> list[ScanRow]:
    """Probe gaps of each rule over the same random (state, basis) sample."""
    gen = np.random.default_rng(rng_seed)
    probes = [(random_state(gen), random_basis(1 - wing, gen)) for _ in range(n_states)]
    rows = []
    for rule in rules:
        for sid, (s, b) in enumerate(probes):
            rows.append(ScanRow(rule.name, rule.k, sid, sid, probe_gap(rule, s, wing, b)))
    return rows


def rows_to_csv(rows: Sequence[ScanRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rule", "k", "state_id", "basis_id", "gap"])
    for r in rows:
        w.writerow([r.rule, "" if r.k is None else repr(float(r.k)), r.state_id, r.basis_id, repr(float(r.gap))])
    return buf.getvalue()


def singlet_witness(alpha: float = 1 / math.sqrt(2), beta: float = -1 / math.sqrt(2),
                    gamma2: float = 0.2) -> tuple[EntangledState, list[BasisRotation]]:
    """``alpha|x>|y> + beta|y>|x>`` with wing-1 probes {x/y, u/v with |gamma|^2 = gamma2}."""
    state = EntangledState((2, 2), (("x", "y"), ("x", "y")), np.array([0.0, alpha, beta, 0.0]))
    probes = [BasisRotation.identity(0, ("x", "y")),
              BasisRotation.from_coefficients(0, math.sqrt(gamma2), math.sqrt(1 - gamma2), ("u", "v"))]
    return state, probes
