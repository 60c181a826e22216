"""Entangled branch states over labeled product bases."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, PreconditionError, UnsupportedScenarioError, ValidationError

# algebraic identities (normalization, unitarity, p + q = 1)
ATOL = 1e-12
MAX_AMPLITUDES = 2**24

X_LABELS = ("x-up", "x-down")
Z_LABELS = ("z-up", "z-down")


def _as_complex_vector(values: Iterable) -> np.ndarray:
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ValidationError(f"complex amplitude must be [re, im], got {v!r}")
            out.append(complex(float(v[0]), float(v[1])))
        else:
            out.append(complex(v))
    return np.asarray(out, dtype=np.complex128)


@dataclass(frozen=True)
class EntangledState:
    """Dense amplitude vector over the product basis of ``len(dims)`` subsystems.

    Index order is row-major: the first subsystem is the most significant digit.
    Instances are immutable; every operation returns a new state.
    """

    dims: tuple[int, ...]
    labels: tuple[tuple[str, ...], ...]
    amps: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 2 for d in dims):
            raise ValidationError(f"subsystem dimensions must be >= 2, got {dims}")
        labels = tuple(tuple(str(s) for s in lab) for lab in self.labels)
        if len(labels) != len(dims) or any(len(lab) != d for lab, d in zip(labels, dims)):
            raise ValidationError("one label per basis vector of every subsystem is required")
        size = math.prod(dims)
        if size > MAX_AMPLITUDES:
            raise ValidationError(f"state of {size} amplitudes exceeds the cap of {MAX_AMPLITUDES}")
        amps = np.array(self.amps, dtype=np.complex128).reshape(-1)
        if amps.size != size:
            raise ValidationError(f"expected {size} amplitudes for dims {dims}, got {amps.size}")
        if not np.all(np.isfinite(amps)):
            raise ValidationError("amplitudes must be finite")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > ATOL:
            raise ValidationError(f"state is not normalized: sum |a|^2 = {norm!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def from_amplitudes(cls, amps, dims: Sequence[int] | None = None,
                        labels: Sequence[Sequence[str]] | None = None,
                        normalize: bool = False) -> "EntangledState":
        vec = _as_complex_vector(amps)
        if dims is None:
            dims = (vec.size,)
        if labels is None:
            labels = [_default_labels(d) for d in dims]
        if normalize:
            norm = math.sqrt(float(np.vdot(vec, vec).real))
            if norm == 0.0:
                raise DomainError("cannot normalize the zero vector")
            vec = vec / norm
        return cls(tuple(dims), tuple(tuple(lab) for lab in labels), vec)

    @classmethod
    def qubit(cls, alpha, beta, labels: Sequence[str] = X_LABELS) -> "EntangledState":
        return cls((2,), (tuple(labels),), np.array([alpha, beta], dtype=np.complex128))

    @property
    def n_subsystems(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return self.amps.size

    def tensor(self) -> np.ndarray:
        return self.amps.reshape(self.dims)

    def densities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def with_amps(self, amps: np.ndarray, labels=None) -> "EntangledState":
        return EntangledState(self.dims, self.labels if labels is None else labels, amps)

    def label_index(self, subsystem: int, label: str | int) -> int:
        if isinstance(label, (int, np.integer)):
            return int(label)
        try:
            return self.labels[subsystem].index(label)
        except ValueError:
            raise DomainError(
                f"subsystem {subsystem} has no basis label {label!r}; labels are {self.labels[subsystem]}"
            ) from None

    def indices_where(self, **conditions) -> tuple[int, ...]:
        """Product-basis indices matching per-subsystem labels, e.g. ``indices_where(s0="x-up")``.

        Keys are ``s<k>`` for subsystem k; values are a label, a basis index, or a
        collection of those.
        """
        mask = np.ones(self.dims, dtype=bool)
        for key, value in conditions.items():
            if not key.startswith("s") or not key[1:].isdigit():
                raise DomainError(f"condition keys look like 's0', 's1', ...; got {key!r}")
            sub = int(key[1:])
            if sub >= self.n_subsystems:
                raise DomainError(f"no subsystem {sub}")
            values = value if isinstance(value, (list, tuple, set, frozenset)) else [value]
            keep = np.zeros(self.dims[sub], dtype=bool)
            for v in values:
                keep[self.label_index(sub, v)] = True
            shape = [1] * self.n_subsystems
            shape[sub] = self.dims[sub]
            mask &= keep.reshape(shape)
        return tuple(int(i) for i in np.flatnonzero(mask.reshape(-1)))

    def component_labels(self, index: int) -> tuple[str, ...]:
        digits = np.unravel_index(index, self.dims)
        return tuple(self.labels[k][int(i)] for k, i in enumerate(digits))

    def to_json_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "labels": [list(lab) for lab in self.labels],
            "amps": [[float(a.real), float(a.imag)] for a in self.amps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, data: dict) -> "EntangledState":
        try:
            return cls.from_amplitudes(data["amps"], data["dims"], data["labels"])
        except KeyError as exc:
            raise ValidationError(f"state snapshot missing field {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "EntangledState":
        return cls.from_json_dict(json.loads(text))


def _default_labels(dim: int) -> tuple[str, ...]:
    if dim == 2:
        return X_LABELS
    return tuple(f"level-{k}" for k in range(dim))


def _check_indices(state: EntangledState, subset: Iterable[int]) -> np.ndarray:
    idx = np.fromiter((int(i) for i in subset), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= state.size):
        raise DomainError(f"index out of range for a state of {state.size} amplitudes")
    if np.unique(idx).size != idx.size:
        raise DomainError("index set contains duplicates")
    return idx


def born_density(state: EntangledState, subset: Iterable[int]) -> float:
    """Sum of squared amplitude moduli over ``subset``."""
    idx = _check_indices(state, subset)
    if idx.size == 0:
        return 0.0
    a = state.amps[idx]
    return float(np.sum(a.real * a.real + a.imag * a.imag))


@dataclass(frozen=True)
class Bifurcation:
    """Binary split of the product basis into interacting and non-interacting parts."""

    interacting: tuple[int, ...]
    complement: tuple[int, ...]
    p: float
    q: float

    def __post_init__(self):
        inter = set(self.interacting)
        comp = set(self.complement)
        if inter & comp:
            raise ValidationError("interacting and complement sets overlap")
        if abs(self.p + self.q - 1.0) > ATOL:
            raise ValidationError(f"p + q must be 1, got {self.p + self.q!r}")
        if not (-ATOL <= self.p <= 1.0 + ATOL):
            raise ValidationError(f"p out of [0, 1]: {self.p!r}")

    @classmethod
    def of(cls, state: EntangledState, interacting: Iterable[int]) -> "Bifurcation":
        inter = tuple(sorted(int(i) for i in interacting))
        idx = _check_indices(state, inter)
        keep = np.ones(state.size, dtype=bool)
        keep[idx] = False
        comp = tuple(int(i) for i in np.flatnonzero(keep))
        p = born_density(state, inter)
        q = born_density(state, comp)
        # absorb rounding so that p + q is exactly representable as 1
        total = p + q
        return cls(inter, comp, p / total, q / total)

    def mask(self, size: int) -> np.ndarray:
        m = np.zeros(size, dtype=bool)
        m[list(self.interacting)] = True
        return m

    def covers(self, size: int) -> bool:
        return len(self.interacting) + len(self.complement) == size

    def refresh(self, state: EntangledState) -> "Bifurcation":
        return Bifurcation.of(state, self.interacting)


@dataclass(frozen=True)
class BasisRotation:
    """Change of basis on one qubit subsystem.

    Rows of ``matrix`` are the new basis vectors written in the old basis, so the
    default form ``[[g, d], [d*, -g*]]`` means ``|u> = g|x> + d|y>`` and
    ``|v> = d*|x> - g*|y>``.
    """

    subsystem: int
    matrix: np.ndarray = field(repr=False)
    labels: tuple[str, ...] = ("u", "v")

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.shape != (2, 2):
            raise ValidationError(f"rotation matrix must be 2x2, got shape {m.shape}")
        if not np.allclose(m @ m.conj().T, np.eye(2), rtol=0.0, atol=ATOL):
            raise ValidationError("rotation matrix is not unitary")
        if len(self.labels) != 2:
            raise ValidationError("a qubit rotation needs two new basis labels")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_coefficients(cls, subsystem: int, gamma: complex, delta: complex,
                          labels: Sequence[str] = ("u", "v"), normalize: bool = False) -> "BasisRotation":
        gamma, delta = complex(gamma), complex(delta)
        if normalize:
            n = math.sqrt(abs(gamma) ** 2 + abs(delta) ** 2)
            gamma, delta = gamma / n, delta / n
        m = np.array([[gamma, delta], [delta.conjugate(), -gamma.conjugate()]])
        return cls(subsystem, m, tuple(labels))

    @classmethod
    def identity(cls, subsystem: int, labels: Sequence[str] = X_LABELS) -> "BasisRotation":
        return cls(subsystem, np.eye(2, dtype=np.complex128), tuple(labels))

    @classmethod
    def hadamard(cls, subsystem: int, labels: Sequence[str] = Z_LABELS) -> "BasisRotation":
        """x-basis to z-basis: ``|z-up> = (|x-up> + |x-down>)/sqrt 2``."""
        s = 1.0 / math.sqrt(2.0)
        return cls.from_coefficients(subsystem, s, s, labels)

    @property
    def gamma(self) -> complex:
        return complex(self.matrix[0, 0])

    @property
    def delta(self) -> complex:
        return complex(self.matrix[0, 1])

    def inverse(self, labels: Sequence[str]) -> "BasisRotation":
        """Rotation back to the basis whose labels were ``labels``."""
        return BasisRotation(self.subsystem, self.matrix.conj().T, tuple(labels))


def rotate_subsystem(state: EntangledState, rot: BasisRotation) -> EntangledState:
    """Re-express ``state`` with subsystem ``rot.subsystem`` in the rotated basis."""
    k = rot.subsystem
    if not 0 <= k < state.n_subsystems:
        raise DomainError(f"no subsystem {k}")
    if state.dims[k] != 2:
        raise UnsupportedScenarioError("basis rotations are supported on qubit subsystems only")
    # new amplitude i = <new_i|psi> = sum_j conj(M[i, j]) a_j
    t = np.tensordot(rot.matrix.conj(), state.tensor(), axes=([1], [k]))
    t = np.moveaxis(t, 0, k)
    labels = list(state.labels)
    labels[k] = rot.labels
    return EntangledState(state.dims, tuple(labels), t.reshape(-1))


def tensor_extend(state: EntangledState, new_subsystem_dim: int, ready_label: str = "ready",
                  labels: Sequence[str] | None = None) -> EntangledState:
    """Append a subsystem prepared in its first basis vector, labeled ``ready_label``."""
    if new_subsystem_dim < 2:
        raise ValidationError(f"subsystem dimension must be >= 2, got {new_subsystem_dim}")
    if labels is None:
        labels = (ready_label,) + tuple(f"{ready_label}-{k}" for k in range(1, new_subsystem_dim))
    elif labels[0] != ready_label or len(labels) != new_subsystem_dim:
        raise ValidationError("labels must start with the ready label and match the dimension")
    new = np.zeros((state.size, new_subsystem_dim), dtype=np.complex128)
    new[:, 0] = state.amps
    return EntangledState(state.dims + (new_subsystem_dim,), state.labels + (tuple(labels),), new.reshape(-1))


def correlate(state: EntangledState, source_subsystem: int, target_subsystem: int,
              basis: BasisRotation | None = None) -> EntangledState:
    """Copy the source's basis index into a target sitting in its ready vector.

    With ``basis`` given, the source is first re-expressed in that basis and the
    copy is made there; the returned state keeps the source in that basis. The
    target takes over the source's labels for the copied levels.
    """
    s, t = source_subsystem, target_subsystem
    n = state.n_subsystems
    if not (0 <= s < n and 0 <= t < n) or s == t:
        raise DomainError(f"invalid source/target pair ({s}, {t})")
    if basis is not None:
        if basis.subsystem != s:
            raise DomainError("basis rotation must act on the source subsystem")
        state = rotate_subsystem(state, basis)
    if state.dims[s] != 2:
        raise UnsupportedScenarioError("correlation source must be a qubit")
    if state.dims[t] < state.dims[s]:
        raise UnsupportedScenarioError("target has fewer levels than the source")
    tens = state.tensor()
    off_ready = np.take(tens, range(1, state.dims[t]), axis=t)
    if float(np.sum(np.abs(off_ready) ** 2)) > ATOL:
        raise PreconditionError(f"target subsystem {t} is not in its ready state")
    ready = np.take(tens, 0, axis=t)  # drops axis t
    out = np.zeros_like(tens)
    s_in_ready = s if s < t else s - 1
    for k in range(state.dims[s]):
        src_slice = np.take(ready, k, axis=s_in_ready)  # drops s as well
        index = [slice(None)] * n
        index[s] = k
        index[t] = k
        out[tuple(index)] = src_slice
    labels = list(state.labels)
    labels[t] = tuple(state.labels[s]) + tuple(state.labels[t][state.dims[s]:])
    return EntangledState(state.dims, tuple(labels), out.reshape(-1))


def product_state(*qubits: tuple[complex, complex], labels: Sequence[Sequence[str]] | None = None) -> EntangledState:
    vec = np.array([1.0 + 0j])
    for a, b in qubits:
        vec = np.kron(vec, np.array([a, b], dtype=np.complex128))
    dims = (2,) * len(qubits)
    if labels is None:
        labels = [X_LABELS] * len(qubits)
    return EntangledState(dims, tuple(tuple(lab) for lab in labels), vec)


def singlet_like(alpha: complex, beta: complex, labels: Sequence[str] = ("x", "y")) -> EntangledState:
    """``alpha|x>|y> + beta|y>|x>`` on two qubits."""
    vec = np.array([0.0, alpha, beta, 0.0], dtype=np.complex128)
    return EntangledState((2, 2), (tuple(labels), tuple(labels)), vec)


def correlated_pair(alpha: complex, beta: complex, labels: Sequence[str] = ("x", "y")) -> EntangledState:
    """``alpha|x>|x> + beta|y>|y>`` on two qubits."""
    vec = np.array([alpha, 0.0, 0.0, beta], dtype=np.complex128)
    return EntangledState((2, 2), (tuple(labels), tuple(labels)), vec)
