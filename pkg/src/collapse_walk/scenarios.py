"""Scenario builders and closed-form predictions.

Five scenario kinds are supported: a single binary measurement, a multi-outcome
measurement, a two-wing Bell-EPR pair, the eraser chain (a subject correlated
with N detectors, read out in a rotated basis) and the amplified scheme, in
which the subject's branch density equals the step size.
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import oracles
from .engine import InteractionBlock, InteractionStream, ShiftParams
from .errors import DomainError, InstanceTooLargeError, ValidationError
from .sequencer import SpacetimeEvent
from .state import (BasisRotation, EntangledState, X_LABELS, Z_LABELS, correlate, correlated_pair,
                    rotate_subsystem, singlet_like, tensor_extend)

KINDS = ("binary", "multi-outcome", "bell-epr", "eraser-chain", "amplified-alpha")
DENSE_ERASER_LIMIT = 12
SQRT_HALF = 1.0 / math.sqrt(2.0)


class RegimeWarning(UserWarning):
    """A prediction was requested outside the regime where its leading-order form holds."""


def _complex(v: Any) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValidationError(f"complex values are [re, im] pairs, got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


@dataclass(frozen=True)
class Scenario:
    kind: str
    amplitudes: tuple[complex, ...]
    d: float
    bases: dict[str, BasisRotation] = field(default_factory=dict)
    n: int = 0
    events: tuple[SpacetimeEvent, ...] = ()
    selection_weights: tuple[float, ...] = ()
    step_distribution: str = "fixed"
    spread: float = 0.5
    form: str = "singlet"
    representation: str = "register"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown scenario kind {self.kind!r}; choose from {KINDS}")
        norm = sum(abs(a) ** 2 for a in self.amplitudes)
        if abs(norm - 1.0) > 1e-12:
            raise ValidationError(f"scenario amplitudes are not normalized (sum |a|^2 = {norm!r})")
        if self.n < 0:
            raise ValidationError("N must be >= 0")
        if not 0.0 <= self.d < 1.0:
            raise ValidationError("d must lie in [0, 1)")

    @property
    def shift_params(self) -> ShiftParams:
        return ShiftParams(self.d, self.step_distribution, self.spread)


@dataclass
class BuiltScenario:
    """A scenario together with its initial state, interaction stream and event placements.

    ``wing_of`` maps block keys to the subsystem the block resolves; ``cells``
    name the joint outcomes and ``born`` gives their exact Born probabilities.
    """

    scenario: Scenario
    state: EntangledState
    stream: InteractionStream
    events: tuple[SpacetimeEvent, ...]
    wing_of: dict[str, int]
    cells: list[str]
    born: np.ndarray

    @property
    def params(self) -> ShiftParams:
        return self.scenario.shift_params


# --------------------------------------------------------------------------- parsing


def _basis(sub: int, entry: dict | None, labels: Sequence[str]) -> BasisRotation:
    if entry is None:
        return BasisRotation.identity(sub, tuple(labels))
    return BasisRotation.from_coefficients(sub, _complex(entry["gamma"]), _complex(entry["delta"]),
                                           tuple(entry.get("labels", ("u", "v"))),
                                           normalize=bool(entry.get("normalize", False)))


def _binary_amplitudes(cfg: dict) -> tuple[complex, complex]:
    if "amplitudes" in cfg:
        amps = [_complex(a) for a in cfg["amplitudes"]]
        if len(amps) != 2:
            raise ValidationError("binary scenario takes exactly two amplitudes")
        return amps[0], amps[1]
    if "p0" in cfg:
        p0 = float(cfg["p0"])
        if not 0.0 <= p0 <= 1.0:
            raise ValidationError("p0 must lie in [0, 1]")
        return complex(math.sqrt(p0)), complex(math.sqrt(1.0 - p0))
    a = _complex(cfg.get("alpha", SQRT_HALF))
    b = _complex(cfg["beta"]) if "beta" in cfg else complex(math.sqrt(max(0.0, 1.0 - abs(a) ** 2)))
    return a, b


def scenario_from_config(cfg: dict) -> Scenario:
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ValidationError(f"unknown scenario kind {kind!r}; choose from {KINDS}")
    d = float(cfg.get("d", 0.01))
    events = tuple(SpacetimeEvent.from_dict(e) for e in cfg.get("events", ()))
    common = dict(d=d, events=events, step_distribution=cfg.get("step_distribution", "fixed"),
                  spread=float(cfg.get("spread", 0.5)))
    if kind == "binary":
        return Scenario(kind, _binary_amplitudes(cfg), **common)
    if kind == "multi-outcome":
        if "amplitudes" in cfg:
            amps = tuple(_complex(a) for a in cfg["amplitudes"])
        elif "densities" in cfg:
            dens = [float(x) for x in cfg["densities"]]
            if any(x < 0 for x in dens):
                raise ValidationError("densities must be non-negative")
            amps = tuple(complex(math.sqrt(x)) for x in dens)
        else:
            raise ValidationError("multi-outcome scenario needs 'densities' or 'amplitudes'")
        if len(amps) < 2:
            raise ValidationError("multi-outcome scenario needs at least two outcomes")
        weights = tuple(float(w) for w in cfg.get("selection_weights", ()))
        if weights and len(weights) != len(amps):
            raise ValidationError("one selection weight per detector is required")
        return Scenario(kind, amps, selection_weights=weights, **common)
    if kind == "bell-epr":
        a = _complex(cfg.get("alpha", SQRT_HALF))
        b = _complex(cfg.get("beta", -SQRT_HALF))
        form = cfg.get("form", "singlet")
        if form not in ("singlet", "pair"):
            raise ValidationError("bell-epr form must be 'singlet' or 'pair'")
        bases_cfg = cfg.get("wing_bases", {})
        unknown = set(bases_cfg) - {"A", "B"}
        if unknown:
            raise ValidationError(f"unknown wings {sorted(unknown)}; use 'A' and 'B'")
        bases = {w: _basis(i, bases_cfg.get(w), ("x", "y")) for i, w in enumerate(("A", "B"))}
        if not events:
            events = (SpacetimeEvent("A", 0.0, -1.0, "A", "S"), SpacetimeEvent("B", 0.0, 1.0, "B", "S"))
        wings = {e.detector for e in events}
        if wings != {"A", "B"}:
            raise ValidationError(f"a Bell scenario needs events on both wings A and B, got {sorted(wings)}")
        common["events"] = events
        return Scenario(kind, (a, b), bases=bases, form=form, **common)
    if kind == "eraser-chain":
        a = _complex(cfg.get("alpha", SQRT_HALF))
        b = _complex(cfg["beta"]) if "beta" in cfg else complex(math.sqrt(max(0.0, 1.0 - abs(a) ** 2)))
        n = int(cfg.get("N", 0))
        rep = cfg.get("representation", "auto")
        if rep == "auto":
            rep = "dense" if n <= DENSE_ERASER_LIMIT and n >= 1 else "register"
        if rep not in ("dense", "register"):
            raise ValidationError("representation must be 'dense', 'register' or 'auto'")
        if rep == "dense" and not 1 <= n <= DENSE_ERASER_LIMIT:
            raise ValidationError(f"dense eraser representation supports 1..{DENSE_ERASER_LIMIT} detectors")
        return Scenario(kind, (a, b), n=n, representation=rep, **common)
    # amplified-alpha: the subject's x-up density equals the step size unless given
    alpha2 = float(cfg.get("alpha2", d))
    if not 0.0 <= alpha2 <= 1.0:
        raise ValidationError("alpha2 must lie in [0, 1]")
    return Scenario(kind, (complex(math.sqrt(alpha2)), complex(math.sqrt(1.0 - alpha2))), n=1, **common)


# --------------------------------------------------------------------------- builders


def _event_or_default(scn: Scenario, default_id: str) -> SpacetimeEvent:
    if scn.events:
        return scn.events[0]
    return SpacetimeEvent(default_id, 0.0, 0.0, default_id, "S")


def build_scenario(cfg: dict | Scenario) -> BuiltScenario:
    """Initial state, interaction stream and event placements for a scenario config."""
    scn = cfg if isinstance(cfg, Scenario) else scenario_from_config(cfg)
    builder = {
        "binary": _build_binary,
        "multi-outcome": _build_multi,
        "bell-epr": _build_bell,
        "eraser-chain": _build_eraser,
        "amplified-alpha": _build_amplified,
    }[scn.kind]
    return builder(scn)


def _build_binary(scn: Scenario) -> BuiltScenario:
    ev = _event_or_default(scn, "D")
    state = EntangledState.qubit(*scn.amplitudes)
    block = InteractionBlock.binary(ev.id, state.indices_where(s0="x-up"), 2, budget=ev.steps,
                                    names=X_LABELS)
    return BuiltScenario(scn, state, InteractionStream.single(block), (ev,), {ev.id: 0},
                         list(X_LABELS), state.densities())


def _build_multi(scn: Scenario) -> BuiltScenario:
    ev = _event_or_default(scn, "D")
    k = len(scn.amplitudes)
    labels = tuple(f"O{i + 1}" for i in range(k))
    state = EntangledState((k,), (labels,), np.asarray(scn.amplitudes))
    block = InteractionBlock(ev.id, tuple((i,) for i in range(k)), tuple((i,) for i in range(k)),
                             detector_names=labels, outcome_names=labels,
                             weights=scn.selection_weights, budget=ev.steps)
    return BuiltScenario(scn, state, InteractionStream.single(block), (ev,), {ev.id: 0},
                         list(labels), state.densities())


def bell_state(scn: Scenario) -> EntangledState:
    a, b = scn.amplitudes
    base = singlet_like(a, b) if scn.form == "singlet" else correlated_pair(a, b)
    for wing in ("A", "B"):
        rot = scn.bases.get(wing)
        if rot is not None:
            base = rotate_subsystem(base, rot)
    return base


def _build_bell(scn: Scenario) -> BuiltScenario:
    state = bell_state(scn)
    blocks, wing_of = [], {}
    for ev in scn.events:
        sub = 0 if ev.detector == "A" else 1
        labels = state.labels[sub]
        outs = tuple(state.indices_where(**{f"s{sub}": lab}) for lab in labels)
        blocks.append(InteractionBlock(ev.id, (outs[0],), outs, detector_names=(f"{ev.detector}:{labels[0]}",),
                                       outcome_names=labels, budget=ev.steps))
        wing_of[ev.id] = sub
    stream = InteractionStream(tuple(blocks))
    cells = [f"{l0}|{l1}" for l0 in state.labels[0] for l1 in state.labels[1]]
    return BuiltScenario(scn, state, stream, scn.events, wing_of, cells, state.densities())


def eraser_state(scn: Scenario) -> EntangledState:
    """Subject correlated with the detectors; dense keeps every detector, register only span{all-up, all-down}."""
    a, b = scn.amplitudes
    subject = EntangledState.qubit(a, b)
    if scn.representation == "register":
        vec = np.array([a, 0.0, 0.0, b], dtype=np.complex128)
        return EntangledState((2, 2), (X_LABELS, ("all-up", "all-down")), vec)
    state = subject
    for k in range(scn.n):
        state = tensor_extend(state, 2, ready_label="x-up", labels=X_LABELS)
        state = correlate(state, 0, k + 1)
    return state


def _build_eraser(scn: Scenario) -> BuiltScenario:
    ev = _event_or_default(scn, "E")
    state = eraser_state(scn)
    # shifts only rescale the two subject branches, so they commute with the copying
    # interactions and may all be applied after the register is built
    block = InteractionBlock.binary(ev.id, state.indices_where(s0="x-up"), state.size, budget=scn.n,
                                    names=X_LABELS)
    return BuiltScenario(scn, state, InteractionStream.single(block), (ev,), {ev.id: 0},
                         ["z-up|odd", "z-down|even"], eraser_cross_terms(state.amps[None, :], scn)[0])


def _build_amplified(scn: Scenario) -> BuiltScenario:
    ev = _event_or_default(scn, "D")
    a, b = scn.amplitudes
    state = EntangledState((2, 2), (X_LABELS, X_LABELS), np.array([a, 0.0, 0.0, b]))
    block = InteractionBlock.binary(ev.id, state.indices_where(s0="x-up"), 4, budget=1, names=X_LABELS)
    return BuiltScenario(scn, state, InteractionStream.single(block), (ev,), {ev.id: 0},
                         list(X_LABELS), np.array([abs(a) ** 2, abs(b) ** 2]))


# --------------------------------------------------------------------------- estimators


_H = np.array([[1.0, 1.0], [1.0, -1.0]]) * SQRT_HALF


def eraser_cross_terms(amps: np.ndarray, scn: Scenario, chunk: int = 256) -> np.ndarray:
    """Per-trial probabilities of the two deviant cells (z-up with odd, z-down with even).

    ``amps`` has shape (trials, size). Everything is read out in the z basis; the
    detector register's parity counts z-down results.
    """
    amps = np.atleast_2d(np.asarray(amps, dtype=np.complex128))
    if scn.representation == "register":
        # all-up/all-down -> even/odd is the same 2x2 map as x -> z
        z = amps.reshape(-1, 2, 2) @ _H.T
        z = np.einsum("ij,tjk->tik", _H, z)
        w = np.abs(z) ** 2
        return np.stack([w[:, 0, 1], w[:, 1, 0]], axis=1)
    n = scn.n
    counts = np.zeros([2] * n, dtype=np.int64)
    for k in range(n):
        shape = [1] * n
        shape[k] = 2
        counts = counts + np.arange(2).reshape(shape)
    odd = (counts % 2 == 1).reshape(-1)
    out = np.empty((amps.shape[0], 2))
    for s in range(0, amps.shape[0], chunk):
        t = amps[s:s + chunk].reshape((-1,) + (2,) * (n + 1))
        for axis in range(1, n + 2):
            t = np.moveaxis(np.tensordot(t, _H, axes=([axis], [1])), -1, axis)
        w = np.abs(t.reshape(t.shape[0], 2, -1)) ** 2
        out[s:s + chunk, 0] = w[:, 0, odd].sum(axis=1)
        out[s:s + chunk, 1] = w[:, 1, ~odd].sum(axis=1)
    return out


def amplified_deviation_from_densities(alpha2: float, shifted_alpha2: np.ndarray) -> np.ndarray:
    """1 - (a a' + b b')^2 per trial, with real amplitudes."""
    a, b = math.sqrt(alpha2), math.sqrt(1.0 - alpha2)
    s = np.clip(np.asarray(shifted_alpha2, dtype=float), 0.0, 1.0)
    return 1.0 - (a * np.sqrt(s) + b * np.sqrt(1.0 - s)) ** 2


# --------------------------------------------------------------------------- predictors


def predict_eraser_deviation(n: int, d: float, alpha: complex = SQRT_HALF) -> dict:
    """Leading-order cross-term amplitude and deviant probability after N interactions.

    The subject's amplitudes move to ``alpha + d sqrt(N)/(2 alpha)`` and
    ``beta - d sqrt(N)/(2 beta)``; each cross term carries half their difference.
    ``deviant_prob`` is per cross term; ``deviant_prob_total`` adds both terms.
    """
    if n < 0:
        raise DomainError("N must be >= 0")
    if not 0.0 <= d < 1.0:
        raise DomainError("d must lie in [0, 1)")
    a = abs(complex(alpha))
    if not 0.0 < a < 1.0:
        raise DomainError("|alpha| must lie strictly between 0 and 1")
    b = math.sqrt(1.0 - a * a)
    spread = d * math.sqrt(n)
    a_shift = a + spread / (2.0 * a)
    b_shift = b - spread / (2.0 * b)
    cross = abs(a_shift - b_shift) / 2.0
    baseline = abs(a - b) / 2.0
    regime_ok = spread < 0.5 * min(a * a, b * b) or spread == 0.0
    if not regime_ok:
        warnings.warn(f"sqrt(N) d = {spread:g} is not small against |alpha|^2; leading order is unreliable",
                      RegimeWarning, stacklevel=2)
    return {
        "N": n,
        "d": d,
        "alpha": a,
        "cross_amp": cross,
        "deviant_prob": cross * cross,
        "deviant_prob_total": 2.0 * cross * cross,
        "baseline_cross_amp": baseline,
        "deviation": cross * cross - baseline * baseline,
        "regime_ok": regime_ok,
    }


def predict_amplified_deviation(d: float) -> dict:
    """Correlation loss when the subject's x-up density equals the step size d.

    One shift either empties the x-up branch or doubles it. Exact values use
    ``1 - (a a' + b b')^2``; the leading-order values d, 0.2d, 0.6d are
    returned alongside, as is the exact small-d coefficient of the doubled case.
    """
    if not 0.0 <= d <= 0.5:
        raise DomainError("d must lie in [0, 0.5] so that the doubled density stays valid")
    regime_ok = d < 0.1
    if not regime_ok:
        warnings.warn(f"d = {d:g} is not small; higher-order terms matter", RegimeWarning, stacklevel=2)
    absorbed = float(amplified_deviation_from_densities(d, 0.0))
    doubled = float(amplified_deviation_from_densities(d, 2.0 * d))
    return {
        "d": d,
        "case_absorbed": absorbed,
        "case_doubled": doubled,
        "average": 0.5 * (absorbed + doubled),
        "leading_order": {"case_absorbed": d, "case_doubled": 0.2 * d, "average": 0.6 * d},
        "doubled_coefficient": 3.0 - 2.0 * math.sqrt(2.0),
        "regime_ok": regime_ok,
    }


@dataclass(frozen=True)
class ScaleEstimate:
    d_bar: float
    steps_to_collapse: int
    steps_range: tuple[float, float]
    nominal_steps: float
    organism_particles: tuple[float, float]
    grw_lambda: float
    grw_collapse_time: float
    grw_system_size: int

    def to_json_dict(self) -> dict:
        return {
            "d_bar": self.d_bar,
            "steps_to_collapse": self.steps_to_collapse,
            "steps_range": list(self.steps_range),
            "nominal_steps": self.nominal_steps,
            "organism_particles": list(self.organism_particles),
            "grw_lambda": self.grw_lambda,
            "grw_collapse_time": self.grw_collapse_time,
            "grw_system_size": self.grw_system_size,
        }


def estimate_scale(organism_particles_low: float = 1e10, organism_particles_high: float = 1e11,
                   safety_factor_low: float = 10.0, safety_factor_high: float = 100.0,
                   grw_lambda: float = 1e-16, grw_collapse_time: float = 0.01) -> ScaleEstimate:
    """Step-count and step-size scale from the size of the smallest conscious organisms.

    The step range divides the particle range by the safety factors (the small
    organism by the large factor), the nominal step count is the range's
    geometric mean and ``d_bar = 1/sqrt(nominal)``. The GRW comparison gives
    the particle count that collapses within ``grw_collapse_time`` seconds,
    evaluated on the decimal inputs so that round numbers stay round.
    """
    vals = (organism_particles_low, organism_particles_high, safety_factor_low, safety_factor_high,
            grw_lambda, grw_collapse_time)
    if any(not v > 0 for v in vals):
        raise DomainError("scale inputs must be positive")
    lo = organism_particles_low / safety_factor_high
    hi = organism_particles_high / safety_factor_low
    nominal = math.sqrt(lo * hi)
    d_bar = 1.0 / math.sqrt(nominal)
    return ScaleEstimate(d_bar, round(1.0 / d_bar ** 2), (lo, hi), nominal,
                         (organism_particles_low, organism_particles_high), grw_lambda, grw_collapse_time,
                         round(1 / (Fraction(repr(grw_lambda)) * Fraction(repr(grw_collapse_time)))))


def mean_steps_prediction(p0: float, d: float) -> float:
    """Expected walk length p0 (1 - p0) / d^2 for a fixed step on an exact lattice."""
    return p0 * (1.0 - p0) / (d * d)


def predict(cfg: dict, scale: dict | None = None) -> dict:
    """All closed-form numbers for a scenario config, plus the scale estimate."""
    scn = scenario_from_config(cfg)
    out: dict[str, Any] = {"kind": scn.kind, "d": scn.d}
    built = build_scenario(scn)
    out["born"] = {c: float(p) for c, p in zip(built.cells, built.born)}
    if scn.kind == "binary":
        p0 = float(built.born[0])
        out["absorption_probability"] = p0
        if scn.d > 0:
            out["mean_steps"] = mean_steps_prediction(p0, scn.d)
    elif scn.kind == "eraser-chain":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RegimeWarning)
            out["eraser"] = predict_eraser_deviation(scn.n, scn.d, scn.amplitudes[0])
        out["eraser"]["warnings"] = [str(w.message) for w in caught]
        a2 = abs(scn.amplitudes[0]) ** 2
        if 0 < scn.d and scn.n > 0 and _on_lattice(a2, scn.d):
            exact = oracles.eraser_deviant_expectation(scn.n, scn.d, a2)
            out["eraser"]["exact_mean"] = exact["mean"]
            out["eraser"]["exact_total_mean"] = exact["total_mean"]
    elif scn.kind == "amplified-alpha":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RegimeWarning)
            out["amplified"] = predict_amplified_deviation(scn.d)
        out["amplified"]["warnings"] = [str(w.message) for w in caught]
    out["scale"] = estimate_scale(**(scale or {})).to_json_dict()
    return out


def _on_lattice(p: float, d: float) -> bool:
    try:
        oracles.grid_of(p, d)
    except (DomainError, InstanceTooLargeError):
        return False
    return True
