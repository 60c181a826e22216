"""Density-shift dynamics: single shifts, induced steps, and walks to absorption.

A shift moves Born density ``d`` between the two sides of a bifurcation, up or
down with probability 1/2, by rescaling each side's amplitudes by a common
real factor. Phases and ratios inside each side are untouched.

Two execution paths share one definition of a trial:

* ``run_collapse`` / ``run_fixed_steps`` step an :class:`EntangledState` in
  Python and record a full :class:`WalkTrace`.
* ``simulate_ensemble`` runs many trials in a numba kernel on the density
  vector alone. Because shifts only rescale index sets, densities carry all the
  information; amplitudes are recovered afterwards by ``final_state``.

Both draw every random number from the keyed counter streams in :mod:`.rng`, so
trial ``i`` of the ensemble is the same walk as ``run_collapse(..., trial=i)``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

from . import rng as _rng
from .errors import DomainError, UnsupportedScenarioError, ValidationError
from .state import ATOL, BasisRotation, Bifurcation, EntangledState, born_density

ABSORB_TOL = 1e-9
# a step counts as clamped only if it lost more than rounding noise
CLAMP_EPS = 1e-12
DEFAULT_MAX_STEPS = 100_000_000


@dataclass(frozen=True)
class ShiftParams:
    """Step size and step-size policy of the density walk.

    ``d == 0`` switches the shifts off (pure linear evolution); it is allowed so
    that the no-collapse baselines can run through the same code.
    """

    d: float
    step_distribution: str = "fixed"
    spread: float = 0.5
    direction_prob: float = 0.5
    clamp_mode: str = "reduce-to-boundary"
    absorb_tol: float = ABSORB_TOL

    def __post_init__(self):
        if not (0.0 <= self.d < 1.0):
            raise ValidationError(f"step size d must lie in [0, 1), got {self.d}")
        if self.direction_prob != 0.5:
            raise ValidationError("shifts are unbiased: direction_prob is fixed at 1/2")
        if self.step_distribution not in ("fixed", "uniform"):
            raise ValidationError(f"unknown step distribution {self.step_distribution!r}")
        if not (0.0 <= self.spread < 1.0):
            raise ValidationError("spread must lie in [0, 1)")
        if self.clamp_mode != "reduce-to-boundary":
            raise ValidationError(f"unknown clamp mode {self.clamp_mode!r}")

    @property
    def step_bounds(self) -> tuple[float, float]:
        if self.step_distribution == "fixed":
            return self.d, self.d
        return self.d * (1.0 - self.spread), self.d * (1.0 + self.spread)

    def step_size(self, u: float) -> float:
        lo, hi = self.step_bounds
        return lo + (hi - lo) * u


@dataclass(frozen=True)
class InteractionBlock:
    """A run of entangling interactions from one set of detectors.

    ``detectors`` are the interacting index sets one detector each; at every step
    one is selected with probability proportional to ``weights``. ``outcomes``
    partition the product basis into the absorbing branches used to decide when
    the block has finished. ``budget=None`` means run until absorption.
    """

    key: str
    detectors: tuple[tuple[int, ...], ...]
    outcomes: tuple[tuple[int, ...], ...]
    detector_names: tuple[str, ...] = ()
    outcome_names: tuple[str, ...] = ()
    weights: tuple[float, ...] = ()
    budget: int | None = None

    def __post_init__(self):
        if not self.detectors:
            raise ValidationError(f"block {self.key!r} has no detectors")
        if not self.outcomes:
            raise ValidationError(f"block {self.key!r} has no outcome branches")
        dets = tuple(tuple(sorted(int(i) for i in d)) for d in self.detectors)
        outs = tuple(tuple(sorted(int(i) for i in o)) for o in self.outcomes)
        weights = tuple(float(w) for w in self.weights) or (1.0,) * len(dets)
        if len(weights) != len(dets) or any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValidationError(f"block {self.key!r}: one non-negative weight per detector required")
        total = sum(weights)
        weights = tuple(w / total for w in weights)
        det_names = tuple(self.detector_names) or tuple(f"D{k}" for k in range(len(dets)))
        out_names = tuple(self.outcome_names) or tuple(f"O{k}" for k in range(len(outs)))
        if len(det_names) != len(dets) or len(out_names) != len(outs):
            raise ValidationError(f"block {self.key!r}: names do not match detectors/outcomes")
        seen: set[int] = set()
        for o in outs:
            if seen & set(o):
                raise ValidationError(f"block {self.key!r}: outcome branches overlap")
            seen |= set(o)
        if self.budget is not None and self.budget < 0:
            raise ValidationError("budget must be >= 0")
        object.__setattr__(self, "detectors", dets)
        object.__setattr__(self, "outcomes", outs)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "detector_names", det_names)
        object.__setattr__(self, "outcome_names", out_names)

    @classmethod
    def binary(cls, key: str, interacting: Sequence[int], size: int, budget: int | None = None,
               names: tuple[str, str] = ("interacting", "complement")) -> "InteractionBlock":
        inter = tuple(sorted(int(i) for i in interacting))
        s = set(inter)
        comp = tuple(i for i in range(size) if i not in s)
        return cls(key, (inter,), (inter, comp), detector_names=(names[0],), outcome_names=names, budget=budget)

    def with_budget(self, budget: int | None) -> "InteractionBlock":
        return InteractionBlock(self.key, self.detectors, self.outcomes, self.detector_names,
                                self.outcome_names, self.weights, budget)

    def select(self, u: float) -> int:
        if len(self.detectors) == 1:
            return 0
        acc = 0.0
        for k, w in enumerate(self.weights):
            acc += w
            if u < acc:
                return k
        return len(self.detectors) - 1


@dataclass(frozen=True)
class InteractionStream:
    """Blocks of interactions, executed in ``order`` (block indices)."""

    blocks: tuple[InteractionBlock, ...]
    order: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.blocks:
            raise ValidationError("an interaction stream needs at least one block")
        keys = [b.key for b in self.blocks]
        if len(set(keys)) != len(keys):
            raise ValidationError("block keys must be unique")
        order = tuple(self.order) or tuple(range(len(self.blocks)))
        if sorted(order) != list(range(len(self.blocks))):
            raise ValidationError(f"order {order} is not a permutation of the blocks")
        object.__setattr__(self, "order", order)

    @classmethod
    def single(cls, block: InteractionBlock) -> "InteractionStream":
        return cls((block,))

    def index_of(self, key: str) -> int:
        for k, b in enumerate(self.blocks):
            if b.key == key:
                return k
        raise DomainError(f"no block with key {key!r}")

    def reordered(self, keys: Sequence[str]) -> "InteractionStream":
        return InteractionStream(self.blocks, tuple(self.index_of(k) for k in keys))


@dataclass(frozen=True)
class WalkStep:
    interaction: str
    detector: str
    p_before: float
    direction: int
    effective_d: float
    clamped: bool


@dataclass
class WalkTrace:
    """Record of one trial. ``status`` is ``"absorbed"`` or ``"incomplete"``."""

    steps: list[WalkStep] = field(default_factory=list)
    block_outcomes: dict[str, str | None] = field(default_factory=dict)
    final_densities: dict[str, float] = field(default_factory=dict)
    step_count: int = 0
    clamp_count: int = 0
    trial: int = 0

    @property
    def status(self) -> str:
        return "incomplete" if any(o is None for o in self.block_outcomes.values()) else "absorbed"

    @property
    def is_incomplete(self) -> bool:
        return self.status == "incomplete"

    @property
    def outcome(self) -> str | None:
        if self.is_incomplete:
            return None
        return "|".join(self.block_outcomes.values())

    def to_json_dict(self) -> dict:
        return {
            "trial": self.trial,
            "status": self.status,
            "outcome": self.outcome,
            "block_outcomes": self.block_outcomes,
            "step_count": self.step_count,
            "clamp_count": self.clamp_count,
            "final_densities": self.final_densities,
            "steps": [[s.interaction, s.detector, s.p_before, s.direction, s.effective_d] for s in self.steps],
        }


def apply_shift(state: EntangledState, bif: Bifurcation, direction: int, params: ShiftParams,
                step_size: float | None = None) -> tuple[EntangledState, float]:
    """Shift density ``direction * d`` onto the interacting side of ``bif``.

    Returns the new state and the effective step. An effective step of 0.0 means
    the bifurcation was already absorbed (or shifts are off) and nothing changed.
    """
    if direction not in (1, -1):
        raise DomainError(f"direction must be +1 or -1, got {direction}")
    d = params.d if step_size is None else float(step_size)
    mask = bif.mask(state.size)
    dens = state.densities()
    p_raw = float(dens[mask].sum())
    q_raw = float(dens[~mask].sum())
    total = p_raw + q_raw
    p, q = p_raw / total, q_raw / total
    tol = params.absorb_tol
    if p <= tol or q <= tol or d == 0.0:
        return state, 0.0
    d_eff = min(d, p, q)
    p_new = p + direction * d_eff
    q_new = 1.0 - p_new
    amps = state.amps.copy()
    if p_new <= tol:
        amps[mask] = 0.0
    elif q_new <= tol:
        amps[~mask] = 0.0
    else:
        amps[mask] *= math.sqrt(p_new / p_raw)
        amps[~mask] *= math.sqrt(q_new / q_raw)
    amps /= math.sqrt(float(np.vdot(amps, amps).real))
    return state.with_amps(amps), d_eff


def _aligned_subsystem(state: EntangledState, bif: Bifurcation) -> tuple[int, int]:
    """(subsystem, basis index) whose slice is exactly the interacting set."""
    inter = set(bif.interacting)
    for sub in range(state.n_subsystems):
        for k in range(state.dims[sub]):
            if set(state.indices_where(**{f"s{sub}": k})) == inter:
                return sub, k
    raise UnsupportedScenarioError("bifurcation is not a basis slice of a single subsystem")


def induced_step(state: EntangledState, bif: Bifurcation, rot: BasisRotation, d: float) -> float:
    """Change in the first rotated-basis density of the other particle from a +d step on ``bif``.

    For a two-qubit state the shift moves weight ``d`` between the two branches of
    the measured particle; the other particle's ``|u>`` density changes by ``d``
    times the difference of its conditional ``|u>`` weights in those branches. For
    ``alpha|x>|y> + beta|y>|x>`` this is ``d(|delta|^2 - |gamma|^2)``.
    """
    if state.n_subsystems != 2 or state.dims != (2, 2):
        raise UnsupportedScenarioError("induced steps are defined for two-qubit states")
    sub, k = _aligned_subsystem(state, bif)
    other = 1 - sub
    if rot.subsystem != other:
        raise UnsupportedScenarioError("the rotation must act on the particle not being shifted")
    t = state.tensor()
    branches = [np.take(t, i, axis=sub) for i in range(2)]
    u = rot.matrix[0]
    weights = []
    for br in branches:
        n = float(np.vdot(br, br).real)
        if n <= ATOL:
            return 0.0
        weights.append(abs(np.vdot(u, br)) ** 2 / n)
    return d * (weights[k] - weights[1 - k])


def _outcome_of(block: InteractionBlock, dens: np.ndarray, tol: float) -> int:
    for k, o in enumerate(block.outcomes):
        if o and float(dens[list(o)].sum()) >= 1.0 - tol:
            return k
    return -1


def run_collapse(state: EntangledState, interactions: InteractionStream, params: ShiftParams,
                 rng_seed: int, trial: int = 0, record_steps: bool = True,
                 max_steps: int = DEFAULT_MAX_STEPS) -> tuple[EntangledState, WalkTrace]:
    """Run every block of ``interactions`` on ``state`` and return the final state and trace.

    Blocks without a budget run until one of their outcome branches holds all the
    density; a block whose budget runs out first leaves its outcome as ``None`` and
    the trace reports ``status == "incomplete"``.
    """
    seed = _rng.as_seed(rng_seed)
    trace = WalkTrace(trial=trial)
    if params.d == 0.0:
        max_steps = 0
    lo, hi = params.step_bounds
    variable = params.step_distribution == "uniform"
    tol = params.absorb_tol
    for b_index in interactions.order:
        block = interactions.blocks[b_index]
        base = _rng.stream_base(seed, np.uint64(trial), np.uint64(_rng.key_id(block.key)))
        bifs = [Bifurcation.of(state, det) for det in block.detectors]
        step = 0
        outcome = -1
        while True:
            if block.budget is None:
                outcome = _outcome_of(block, state.densities(), tol)
                if outcome >= 0 or step >= max_steps:
                    break
            elif step >= block.budget:
                break
            det = 0
            if len(block.detectors) > 1:
                det = block.select(float(_rng.draw_uniform(base, np.uint64(step), np.uint64(_rng.LANE_SELECT))))
            d = params.d
            if variable:
                u = float(_rng.draw_uniform(base, np.uint64(step), np.uint64(_rng.LANE_STEP)))
                d = lo + (hi - lo) * u
            direction = int(_rng.draw_direction(base, np.uint64(step)))
            p_before = born_density(state, bifs[det].interacting)
            state, d_eff = apply_shift(state, bifs[det], direction, params, step_size=d)
            if d_eff > 0.0:
                trace.step_count += 1
                clamped = d_eff < d - CLAMP_EPS
                trace.clamp_count += int(clamped)
                if record_steps:
                    trace.steps.append(WalkStep(f"{block.key}#{step}", block.detector_names[det],
                                                p_before, direction, d_eff, clamped))
            step += 1
        if block.budget is not None:
            outcome = _outcome_of(block, state.densities(), tol)
        trace.block_outcomes[block.key] = block.outcome_names[outcome] if outcome >= 0 else None
        dens = state.densities()
        for name, o in zip(block.outcome_names, block.outcomes):
            trace.final_densities[f"{block.key}/{name}"] = float(dens[list(o)].sum())
    return state, trace


def run_fixed_steps(state: EntangledState, interactions: InteractionStream, params: ShiftParams,
                    n_steps: int, rng_seed: int, trial: int = 0,
                    record_steps: bool = True) -> tuple[EntangledState, WalkTrace]:
    """Apply exactly ``n_steps`` interactions of the first block (fewer shifts if it absorbs)."""
    if n_steps < 0:
        raise DomainError("n_steps must be >= 0")
    block = interactions.blocks[interactions.order[0]].with_budget(n_steps)
    return run_collapse(state, InteractionStream.single(block), params, rng_seed, trial, record_steps)


# --------------------------------------------------------------------------- ensemble kernel


@dataclass
class EnsembleResult:
    """Per-trial results of :func:`simulate_ensemble`.

    ``outcomes[i, b]`` indexes ``blocks[b].outcome_names`` (``-1`` = not absorbed),
    with ``b`` the block's position in the stream, not in the execution order.
    """

    blocks: tuple[InteractionBlock, ...]
    outcomes: np.ndarray
    steps: np.ndarray
    clamps: np.ndarray
    final_densities: np.ndarray
    initial: EntangledState
    trial_offset: int = 0

    @property
    def trials(self) -> int:
        return self.outcomes.shape[0]

    @property
    def incomplete(self) -> np.ndarray:
        return np.any(self.outcomes < 0, axis=1)

    def outcome_labels(self, trial: int) -> str | None:
        row = self.outcomes[trial]
        if np.any(row < 0):
            return None
        return "|".join(b.outcome_names[int(k)] for b, k in zip(self.blocks, row))

    def joint_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for names in _joint_names(self.blocks):
            counts[names] = 0
        counts["incomplete"] = 0
        if len(self.blocks) == 1:
            ks, cs = np.unique(self.outcomes[:, 0], return_counts=True)
            for k, c in zip(ks, cs):
                key = "incomplete" if k < 0 else self.blocks[0].outcome_names[int(k)]
                counts[key] += int(c)
            return counts
        for i in range(self.trials):
            label = self.outcome_labels(i)
            counts["incomplete" if label is None else label] += 1
        return counts

    def final_state(self, trial: int) -> EntangledState:
        return final_state(self.initial, self.final_densities[trial])


def _joint_names(blocks: Sequence[InteractionBlock]) -> list[str]:
    names = [""]
    for b in blocks:
        names = [f"{n}|{o}" if n else o for n in names for o in b.outcome_names]
    return names


def final_amplitudes(initial: EntangledState, densities: np.ndarray) -> np.ndarray:
    """Amplitudes after walks: each component rescaled to its final density, phase kept.

    ``densities`` may be one trial (size,) or many (trials, size).
    """
    w0 = initial.densities()
    dens = np.asarray(densities, dtype=np.float64)
    scale = np.sqrt(np.divide(dens, w0, out=np.zeros_like(dens), where=w0 > 0))
    amps = initial.amps * scale
    return amps / np.linalg.norm(amps, axis=-1, keepdims=True)


def final_state(initial: EntangledState, densities: np.ndarray) -> EntangledState:
    return initial.with_amps(final_amplitudes(initial, densities))


def set_threads(n: int | None = None) -> int:
    """Set numba's worker count; ``COLLAPSE_WALK_THREADS`` wins over ``n``."""
    env = os.environ.get("COLLAPSE_WALK_THREADS")
    if env:
        n = int(env)
    if n is None or n <= 0:
        n = nb.config.NUMBA_NUM_THREADS
    n = max(1, min(int(n), nb.config.NUMBA_NUM_THREADS))
    nb.set_num_threads(n)
    return n


def _pack(stream: InteractionStream, size: int):
    masks: list[np.ndarray] = []
    index: dict[tuple[int, ...], int] = {}

    def mask_id(ix: tuple[int, ...]) -> int:
        if ix not in index:
            m = np.zeros(size, dtype=np.int8)
            m[list(ix)] = 1
            index[ix] = len(masks)
            masks.append(m)
        return index[ix]

    nb_ = len(stream.blocks)
    cand_start = np.zeros(nb_, np.int64)
    cand_count = np.zeros(nb_, np.int64)
    out_start = np.zeros(nb_, np.int64)
    out_count = np.zeros(nb_, np.int64)
    budget = np.zeros(nb_, np.int64)
    keys = np.zeros(nb_, np.uint64)
    cand_mask, cand_cumw, out_mask = [], [], []
    for b, block in enumerate(stream.blocks):
        cand_start[b] = len(cand_mask)
        cand_count[b] = len(block.detectors)
        acc = 0.0
        for det, w in zip(block.detectors, block.weights):
            cand_mask.append(mask_id(det))
            acc += w
            cand_cumw.append(acc)
        cand_cumw[-1] = 1.0
        out_start[b] = len(out_mask)
        out_count[b] = len(block.outcomes)
        for o in block.outcomes:
            out_mask.append(mask_id(o))
        budget[b] = -1 if block.budget is None else block.budget
        keys[b] = np.uint64(_rng.key_id(block.key))
    return (np.stack(masks), cand_start, cand_count, np.asarray(cand_mask, np.int64),
            np.asarray(cand_cumw, np.float64), out_start, out_count, np.asarray(out_mask, np.int64),
            budget, keys)


def simulate_ensemble(state: EntangledState, interactions: InteractionStream, params: ShiftParams,
                      trials: int, rng_seed: int, orders: np.ndarray | None = None,
                      trial_offset: int = 0, max_steps: int = DEFAULT_MAX_STEPS,
                      threads: int | None = None) -> EnsembleResult:
    """Run ``trials`` independent walks; trial ``i`` uses RNG key ``trial_offset + i``.

    ``orders`` optionally gives a per-trial block execution order, shape
    ``(trials, n_blocks)``; by default every trial uses ``interactions.order``.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    if threads is not None or os.environ.get("COLLAPSE_WALK_THREADS"):
        set_threads(threads)
    packed = _pack(interactions, state.size)
    if orders is None:
        orders = np.asarray([interactions.order], dtype=np.int64)
    else:
        orders = np.ascontiguousarray(orders, dtype=np.int64)
        if orders.shape != (trials, len(interactions.blocks)):
            raise ValidationError(f"orders must have shape {(trials, len(interactions.blocks))}")
    lo, hi = params.step_bounds
    if params.d == 0.0:
        max_steps = 0
    w0 = state.densities().astype(np.float64)
    outcomes, steps, clamps, final = _ensemble_kernel(
        w0, *packed, orders, _rng.as_seed(rng_seed), np.int64(trial_offset), np.int64(trials),
        float(params.d), float(lo), float(hi), params.step_distribution == "uniform",
        float(params.absorb_tol), np.int64(max_steps))
    return EnsembleResult(interactions.blocks, outcomes, steps, clamps, final, state, trial_offset)


@nb.njit(cache=True)
def _density(w, mask):
    s = 0.0
    for i in range(w.shape[0]):
        if mask[i]:
            s += w[i]
    return s


@nb.njit(cache=True)
def _block_outcome(w, masks, out_mask, start, count, tol):
    for j in range(count):
        if _density(w, masks[out_mask[start + j]]) >= 1.0 - tol:
            return j
    return -1


@nb.njit(cache=True)
def _walk_single(w, mask, base, limit, d, lo, hi, variable, tol):
    """Walk one fixed bifurcation on the scalar p, then rescale both sides once."""
    k = w.shape[0]
    p_raw = 0.0
    q_raw = 0.0
    for x in range(k):
        if mask[x]:
            p_raw += w[x]
        else:
            q_raw += w[x]
    p = p_raw / (p_raw + q_raw)
    if p <= tol or 1.0 - p <= tol or (d == 0.0 and not variable):
        return 0, 0
    n_steps = 0
    n_clamps = 0
    word = np.uint64(0)
    step = 0
    while step < limit:
        if (step & 63) == 0:
            word = _rng.draw_u64(base, np.uint64(step >> 6), np.uint64(_rng.LANE_DIRECTION))
        direction = 1 if (word >> np.uint64(step & 63)) & np.uint64(1) else -1
        step_d = d
        if variable:
            step_d = lo + (hi - lo) * _rng.draw_uniform(base, np.uint64(step), np.uint64(_rng.LANE_STEP))
        step += 1
        q = 1.0 - p
        lim = p if p < q else q
        d_eff = step_d if step_d < lim else lim
        if d_eff < step_d - CLAMP_EPS:
            n_clamps += 1
        p = p + direction * d_eff
        n_steps += 1
        if p <= tol:
            p = 0.0
            break
        if p >= 1.0 - tol:
            p = 1.0
            break
    fp = p / p_raw
    fq = (1.0 - p) / q_raw
    for x in range(k):
        if mask[x]:
            w[x] *= fp
        else:
            w[x] *= fq
    return n_steps, n_clamps


@nb.njit(cache=True)
def _walk_multi(w, masks, fmasks, cand_mask, cand_cumw, c_start, c_count, base, limit, until_absorbed,
                out_mask, o_start, o_count, d, lo, hi, variable, tol):
    """Walk with a detector drawn per step; densities are rescaled every step."""
    k = w.shape[0]
    n_steps = 0
    n_clamps = 0
    word = np.uint64(0)
    for step in range(limit):
        if (step & 63) == 0:
            word = _rng.draw_u64(base, np.uint64(step >> 6), np.uint64(_rng.LANE_DIRECTION))
        direction = 1 if (word >> np.uint64(step & 63)) & np.uint64(1) else -1
        u = _rng.draw_uniform(base, np.uint64(step), np.uint64(_rng.LANE_SELECT))
        c = c_count - 1
        for m in range(c_count):
            if u < cand_cumw[c_start + m]:
                c = m
                break
        step_d = d
        if variable:
            step_d = lo + (hi - lo) * _rng.draw_uniform(base, np.uint64(step), np.uint64(_rng.LANE_STEP))
        mi = cand_mask[c_start + c]
        # 0/1 float masks keep the loops branch-free; products with exact 0 and 1 change nothing
        p_raw = 0.0
        q_raw = 0.0
        for x in range(k):
            m = fmasks[mi, x]
            p_raw += w[x] * m
            q_raw += w[x] * (1.0 - m)
        # w stays normalized, so p_raw and q_raw already are the branch densities
        if p_raw <= tol or q_raw <= tol or step_d == 0.0:
            continue
        lim = p_raw if p_raw < q_raw else q_raw
        d_eff = step_d if step_d < lim else lim
        if d_eff < step_d - CLAMP_EPS:
            n_clamps += 1
        p_new = p_raw + direction * d_eff
        q_new = 1.0 - p_new
        n_steps += 1
        if p_new <= tol or q_new <= tol:
            zero_inside = p_new <= tol
            keep = q_raw if zero_inside else p_raw
            for x in range(k):
                if (masks[mi, x] != 0) == zero_inside:
                    w[x] = 0.0
                else:
                    w[x] = w[x] / keep
            if until_absorbed and _block_outcome(w, masks, out_mask, o_start, o_count, tol) >= 0:
                break
        else:
            fp = p_new / p_raw
            fq = q_new / q_raw
            for x in range(k):
                m = fmasks[mi, x]
                w[x] *= fp * m + fq * (1.0 - m)
    return n_steps, n_clamps


@nb.njit(parallel=True, cache=True)
def _ensemble_kernel(w0, masks, cand_start, cand_count, cand_mask, cand_cumw, out_start, out_count,
                     out_mask, budget, keys, orders, seed, trial_offset, trials, d, lo, hi, variable,
                     tol, max_steps):
    n_blocks = cand_start.shape[0]
    k = w0.shape[0]
    outcomes = np.full((trials, n_blocks), -1, dtype=np.int64)
    steps_out = np.zeros(trials, dtype=np.int64)
    clamps_out = np.zeros(trials, dtype=np.int64)
    final = np.empty((trials, k), dtype=np.float64)
    n_orders = orders.shape[0]
    fmasks = masks.astype(np.float64)
    for i in nb.prange(trials):
        w = w0.copy()
        trial = np.uint64(trial_offset + i)
        row = orders[i % n_orders]
        n_steps = 0
        n_clamps = 0
        for j in range(n_blocks):
            b = row[j]
            base = _rng.stream_base(seed, trial, keys[b])
            limit = budget[b]
            until_absorbed = limit < 0
            if until_absorbed:
                limit = max_steps
                if _block_outcome(w, masks, out_mask, out_start[b], out_count[b], tol) >= 0:
                    limit = 0
            if cand_count[b] == 1:
                ns, nc = _walk_single(w, masks[cand_mask[cand_start[b]]], base, limit, d, lo, hi,
                                      variable, tol)
            else:
                ns, nc = _walk_multi(w, masks, fmasks, cand_mask, cand_cumw, cand_start[b], cand_count[b], base,
                                     limit, until_absorbed, out_mask, out_start[b], out_count[b],
                                     d, lo, hi, variable, tol)
            n_steps += ns
            n_clamps += nc
            outcomes[i, b] = _block_outcome(w, masks, out_mask, out_start[b], out_count[b], tol)
        steps_out[i] = n_steps
        clamps_out[i] = n_clamps
        final[i, :] = w
    return outcomes, steps_out, clamps_out, final
