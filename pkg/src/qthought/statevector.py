"""Dense statevector engine.

Amplitude index convention: the first allocated qubit is the least-significant
bit of the basis-state index.  Internally the flat amplitude array is viewed as
an n-dimensional ``(2, 2, ..., 2)`` tensor, where qubit ``q`` lives on axis
``n - 1 - q``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CapacityError,
    GateError,
    InversionError,
    PreparationError,
    RegisterError,
    UnreachableOutcome,
)

AMPLITUDE_TOL = 1e-10
PROBABILITY_TOL = 1e-9
UNREACHABLE_THRESHOLD = 1e-12
DEFAULT_QUBIT_CAP = 24

QubitId = int

ROLES = ("system", "outcome", "inference", "prediction")

COMPUTATIONAL = "computational"
BELL = "bell"

# (bit of q1, bit of q2) after the CNOT(q1->q2), H(q1) basis change.
BELL_OUTCOMES = ("fail", "ok", "excess0", "excess1")

_SQRT1_2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class RegisterEntry:
    owner: str
    role: str
    label: str
    qubit: QubitId


class RegisterMap:
    """Ordered, label-addressable list of allocated qubits.

    Multi-qubit registers are stored as one entry per qubit (``U.0``, ``U.1``)
    plus a group name that resolves to the whole register.
    """

    def __init__(self) -> None:
        self.entries: list[RegisterEntry] = []
        self._by_label: dict[str, QubitId] = {}
        self._groups: dict[str, tuple[QubitId, ...]] = {}

    def add(self, owner: str, role: str, label: str) -> QubitId:
        if role not in ROLES:
            raise RegisterError(f"unknown register role {role!r}")
        if label in self._by_label or label in self._groups:
            raise RegisterError(f"duplicate label {label!r}")
        q = len(self.entries)
        self.entries.append(RegisterEntry(owner, role, label, q))
        self._by_label[label] = q
        return q

    def add_register(self, owner: str, role: str, name: str, width: int = 1) -> tuple[QubitId, ...]:
        if width == 1:
            qubits = (self.add(owner, role, name),)
        else:
            if name in self._by_label or name in self._groups:
                raise RegisterError(f"duplicate label {name!r}")
            qubits = tuple(self.add(owner, role, f"{name}.{j}") for j in range(width))
            self._groups[name] = qubits
        return qubits

    def qubit(self, label: str) -> QubitId:
        try:
            return self._by_label[label]
        except KeyError:
            raise RegisterError(f"unknown register {label!r}") from None

    def qubits(self, name: str) -> tuple[QubitId, ...]:
        if name in self._groups:
            return self._groups[name]
        return (self.qubit(name),)

    def __contains__(self, name: str) -> bool:
        return name in self._by_label or name in self._groups

    def label(self, q: QubitId) -> str:
        return self.entries[q].label

    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def copy(self) -> "RegisterMap":
        other = RegisterMap()
        other.entries = list(self.entries)
        other._by_label = dict(self._by_label)
        other._groups = dict(self._groups)
        return other


class GateKind(str, enum.Enum):
    X = "X"
    H = "H"
    CNOT = "CNOT"
    CH = "CH"
    MCX = "MCX"
    BELL = "BELL"          # CNOT(q1 -> q2) then H(q1)
    BELL_DAG = "BELL_DAG"  # H(q1) then CNOT(q1 -> q2)


_X_KINDS = (GateKind.X, GateKind.CNOT, GateKind.MCX)
_H_KINDS = (GateKind.H, GateKind.CH)


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    targets: tuple[QubitId, ...]
    controls: tuple[tuple[QubitId, int], ...] = ()

    def __post_init__(self) -> None:
        ctrl = [c for c, _ in self.controls]
        if len(set(ctrl)) != len(ctrl) or len(set(self.targets)) != len(self.targets):
            raise GateError("repeated qubit in gate")
        if set(ctrl) & set(self.targets):
            raise GateError("control and target qubits overlap")
        if any(p not in (0, 1) for _, p in self.controls):
            raise GateError("control polarity must be 0 or 1")
        expected = 2 if self.kind in (GateKind.BELL, GateKind.BELL_DAG) else 1
        if len(self.targets) != expected:
            raise GateError(f"{self.kind.value} takes {expected} target(s)")
        if self.kind in (GateKind.BELL, GateKind.BELL_DAG) and self.controls:
            raise GateError("Bell basis change cannot be controlled")

    @classmethod
    def x(cls, target: QubitId) -> "Gate":
        return cls(GateKind.X, (target,))

    @classmethod
    def h(cls, target: QubitId) -> "Gate":
        return cls(GateKind.H, (target,))

    @classmethod
    def cnot(cls, control: QubitId, target: QubitId) -> "Gate":
        return cls(GateKind.CNOT, (target,), ((control, 1),))

    @classmethod
    def ch(cls, control: QubitId, target: QubitId) -> "Gate":
        return cls(GateKind.CH, (target,), ((control, 1),))

    @classmethod
    def mcx(cls, controls: Iterable[tuple[QubitId, int]], target: QubitId) -> "Gate":
        return cls(GateKind.MCX, (target,), tuple(controls))

    @classmethod
    def bell(cls, q1: QubitId, q2: QubitId) -> "Gate":
        return cls(GateKind.BELL, (q1, q2))

    @property
    def qubits(self) -> tuple[QubitId, ...]:
        return tuple(self.targets) + tuple(c for c, _ in self.controls)

    def inverse(self) -> "Gate":
        if self.kind is GateKind.BELL:
            return Gate(GateKind.BELL_DAG, self.targets)
        if self.kind is GateKind.BELL_DAG:
            return Gate(GateKind.BELL, self.targets)
        return self


@dataclass(frozen=True)
class Projection:
    qubits: tuple[QubitId, ...]
    outcome: object
    basis: str


@dataclass(frozen=True)
class CircuitOp:
    gate: Gate | None = None
    step_tag: str | None = None
    projection: Projection | None = None

    @property
    def qubits(self) -> tuple[QubitId, ...]:
        if self.gate is not None:
            return self.gate.qubits
        assert self.projection is not None
        return self.projection.qubits

    @property
    def targets(self) -> tuple[QubitId, ...]:
        """Qubits on which the op is not diagonal in the computational basis."""
        if self.gate is not None:
            return self.gate.targets
        assert self.projection is not None
        return self.projection.qubits if self.projection.basis == BELL else ()


@dataclass
class StateVector:
    amplitudes: np.ndarray
    registers: RegisterMap
    log: tuple[CircuitOp, ...] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return len(self.registers)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.registers, self.log)

    def qubits(self, name: str) -> tuple[QubitId, ...]:
        return self.registers.qubits(name)

    def _check(self, qubits: Iterable[QubitId]) -> None:
        for q in qubits:
            if not 0 <= q < self.n:
                raise RegisterError(f"unknown qubit {q}")


def zero_state(registers: RegisterMap) -> StateVector:
    amps = np.zeros(2 ** len(registers), dtype=complex)
    amps[0] = 1.0
    return StateVector(amps, registers)


def allocate(spec: Sequence[tuple[str, str, str]], cap: int = DEFAULT_QUBIT_CAP) -> tuple[RegisterMap, StateVector]:
    """Allocate one qubit per ``(owner, role, label)`` entry, all in ``|0>``."""
    if len(spec) > cap:
        raise CapacityError(f"{len(spec)} qubits requested, cap is {cap}")
    registers = RegisterMap()
    for owner, role, label in spec:
        registers.add(owner, role, label)
    return registers, zero_state(registers)


# -- kernels -----------------------------------------------------------------


def _index(n: int, fixed: dict[QubitId, int]) -> tuple:
    idx: list = [slice(None)] * n
    for q, v in fixed.items():
        idx[n - 1 - q] = v
    return tuple(idx)


def _x_inplace(psi: np.ndarray, n: int, target: QubitId, controls: dict[QubitId, int]) -> None:
    i0 = _index(n, {**controls, target: 0})
    i1 = _index(n, {**controls, target: 1})
    tmp = psi[i0].copy()
    psi[i0] = psi[i1]
    psi[i1] = tmp


def _h_inplace(psi: np.ndarray, n: int, target: QubitId, controls: dict[QubitId, int]) -> None:
    i0 = _index(n, {**controls, target: 0})
    i1 = _index(n, {**controls, target: 1})
    a = psi[i0].copy()
    b = psi[i1]
    psi[i0] = (a + b) * _SQRT1_2
    psi[i1] = (a - b) * _SQRT1_2


def apply_gate_inplace(amplitudes: np.ndarray, n: int, gate: Gate) -> None:
    psi = amplitudes.reshape((2,) * n) if n else amplitudes
    controls = dict(gate.controls)
    if gate.kind in _X_KINDS:
        _x_inplace(psi, n, gate.targets[0], controls)
    elif gate.kind in _H_KINDS:
        _h_inplace(psi, n, gate.targets[0], controls)
    elif gate.kind is GateKind.BELL:
        q1, q2 = gate.targets
        _x_inplace(psi, n, q2, {q1: 1})
        _h_inplace(psi, n, q1, {})
    elif gate.kind is GateKind.BELL_DAG:
        q1, q2 = gate.targets
        _h_inplace(psi, n, q1, {})
        _x_inplace(psi, n, q2, {q1: 1})
    else:  # pragma: no cover
        raise GateError(f"unknown gate kind {gate.kind}")


def apply_gate(state: StateVector, gate: Gate, tag: str | None = None) -> StateVector:
    state._check(gate.qubits)
    amps = state.amplitudes.copy()
    apply_gate_inplace(amps, state.n, gate)
    return StateVector(amps, state.registers, state.log + (CircuitOp(gate, tag),))


def apply_gates(state: StateVector, gates: Iterable[Gate], tag: str | None = None) -> StateVector:
    """Apply a gate sequence with a single copy of the amplitude array."""
    gates = list(gates)
    for g in gates:
        state._check(g.qubits)
    amps = state.amplitudes.copy()
    for g in gates:
        apply_gate_inplace(amps, state.n, g)
    return StateVector(amps, state.registers, state.log + tuple(CircuitOp(g, tag) for g in gates))


def prepare_qubit(state: StateVector, q: QubitId, amplitudes: tuple[complex, complex],
                  tag: str | None = None) -> StateVector:
    """Put a fresh qubit (currently ``|0>``) into ``alpha|0> + beta|1>``."""
    state._check([q])
    alpha, beta = (complex(a) for a in amplitudes)
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1.0) > AMPLITUDE_TOL:
        raise PreparationError("preparation amplitudes are not normalized")
    n = state.n
    psi = state.amplitudes.reshape((2,) * n)
    if float(np.sum(np.abs(psi[_index(n, {q: 1})]) ** 2)) > UNREACHABLE_THRESHOLD:
        raise PreparationError(f"qubit {state.registers.label(q)!r} is not in |0>")
    out = np.zeros_like(state.amplitudes)
    o = out.reshape((2,) * n)
    rest = psi[_index(n, {q: 0})]
    o[_index(n, {q: 0})] = alpha * rest
    o[_index(n, {q: 1})] = beta * rest
    # Record as an equivalent unitary-free op: preparations are never inverted.
    return StateVector(out, state.registers, state.log + (CircuitOp(None, tag, Projection((q,), "prepare", "prepare")),))


# -- measurement -------------------------------------------------------------


def marginal(probs: np.ndarray, n: int, qubits: Sequence[QubitId]) -> np.ndarray:
    """Marginal distribution over ``qubits``; bit ``j`` of the index is ``qubits[j]``."""
    k = len(qubits)
    t = probs.reshape((2,) * n) if n else probs
    keep_axes = [n - 1 - q for q in qubits]
    drop = tuple(ax for ax in range(n) if ax not in keep_axes)
    reduced = t.sum(axis=drop) if drop else t
    # Remaining axes are in ascending axis order; reorder to qubits[k-1] ... qubits[0]
    remaining = sorted(keep_axes)
    order = [remaining.index(n - 1 - q) for q in reversed(qubits)]
    reduced = np.transpose(reduced, order) if k > 1 else reduced
    return np.asarray(reduced).reshape(2 ** k)


def _bell_rotated(state: StateVector, qubits: Sequence[QubitId]) -> np.ndarray:
    if len(qubits) != 2:
        raise GateError("bell basis requires exactly 2 qubits")
    amps = state.amplitudes.copy()
    apply_gate_inplace(amps, state.n, Gate.bell(*qubits))
    return amps


def measure_probabilities(state: StateVector, qubits: Sequence[QubitId],
                          basis: str = COMPUTATIONAL) -> dict:
    state._check(qubits)
    if basis == BELL:
        amps = _bell_rotated(state, qubits)
        dist = marginal(np.abs(amps) ** 2, state.n, qubits)
        return {name: float(dist[i]) for i, name in enumerate(BELL_OUTCOMES)}
    if basis != COMPUTATIONAL:
        raise GateError(f"unknown basis {basis!r}")
    dist = marginal(np.abs(state.amplitudes) ** 2, state.n, qubits)
    return {i: float(p) for i, p in enumerate(dist)}


def _outcome_index(outcome, basis: str, width: int) -> int:
    if basis == BELL:
        if outcome not in BELL_OUTCOMES:
            raise GateError(f"unknown bell outcome {outcome!r}")
        return BELL_OUTCOMES.index(outcome)
    idx = int(outcome)
    if not 0 <= idx < 2 ** width:
        raise GateError(f"outcome {outcome!r} out of range")
    return idx


def _mask_pattern(amps: np.ndarray, n: int, qubits: Sequence[QubitId], index: int) -> None:
    """Zero every amplitude whose bits on ``qubits`` differ from ``index``."""
    psi = amps.reshape((2,) * n)
    for j, q in enumerate(qubits):
        bit = (index >> j) & 1
        psi[_index(n, {q: 1 - bit})] = 0.0


def project_unnormalized(state: StateVector, qubits: Sequence[QubitId], outcome,
                         basis: str = COMPUTATIONAL) -> np.ndarray:
    state._check(qubits)
    index = _outcome_index(outcome, basis, len(qubits))
    if basis == BELL:
        amps = _bell_rotated(state, qubits)
        _mask_pattern(amps, state.n, qubits, index)
        apply_gate_inplace(amps, state.n, Gate(GateKind.BELL_DAG, tuple(qubits)))
    else:
        amps = state.amplitudes.copy()
        _mask_pattern(amps, state.n, qubits, index)
    return amps


def project(state: StateVector, qubits: Sequence[QubitId], outcome, basis: str = COMPUTATIONAL,
            threshold: float = UNREACHABLE_THRESHOLD, tag: str | None = None) -> tuple[StateVector, float]:
    """Project onto ``outcome`` and renormalize; returns the new state and its probability."""
    amps = project_unnormalized(state, qubits, outcome, basis)
    p = float(np.vdot(amps, amps).real)
    if p < threshold:
        raise UnreachableOutcome(f"outcome {outcome!r} has probability {p:.3g}", p)
    amps /= math.sqrt(p)
    op = CircuitOp(None, tag, Projection(tuple(qubits), outcome, basis))
    return StateVector(amps, state.registers, state.log + (op,)), p


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample(state: StateVector, qubits: Sequence[QubitId], basis: str = COMPUTATIONAL, rng_seed=None):
    dist = measure_probabilities(state, qubits, basis)
    keys = list(dist)
    p = np.array([dist[k] for k in keys])
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    return keys[int(_rng(rng_seed).choice(len(keys), p=p))]


# -- inversion ---------------------------------------------------------------


def invert_suffix(state: StateVector, from_tag: str) -> StateVector:
    """Undo every op recorded since the first op tagged ``from_tag``."""
    start = next((i for i, op in enumerate(state.log) if op.step_tag == from_tag), None)
    if start is None:
        raise InversionError(f"no recorded ops for tag {from_tag!r}")
    suffix = state.log[start:]
    if any(op.gate is None for op in suffix):
        raise InversionError("a projection lies inside the suffix to invert")
    amps = state.amplitudes.copy()
    for op in reversed(suffix):
        apply_gate_inplace(amps, state.n, op.gate.inverse())
    return StateVector(amps, state.registers, state.log[:start])


def invert_tagged(state: StateVector, tag: str, new_tag: str | None = None) -> StateVector:
    """Undo only the gates tagged ``tag``.

    Ops recorded afterwards must commute with them; this is checked
    structurally (disjoint targets, shared controls allowed).
    """
    positions = [i for i, op in enumerate(state.log) if op.step_tag == tag and op.gate is not None]
    if not positions:
        return state
    ops = [state.log[i] for i in positions]
    touched = set().union(*(op.qubits for op in ops))
    targeted = set().union(*(op.targets for op in ops))
    tagged = set(positions)
    for i in range(positions[0], len(state.log)):
        if i in tagged:
            continue
        other = state.log[i]
        if other.projection is not None and other.projection.basis == "prepare":
            conflict = bool(set(other.qubits) & touched)
        else:
            conflict = bool(set(other.targets) & touched) or bool(targeted & set(other.qubits))
        if conflict:
            raise InversionError(
                f"cannot reverse {tag!r}: a later op on "
                f"{[state.registers.label(q) for q in other.qubits]} does not commute with it"
            )
    inverse = [op.gate.inverse() for op in reversed(ops)]
    return apply_gates(state, inverse, new_tag)


# -- debug output ------------------------------------------------------------


def dump_state(state: StateVector, cutoff: float = 1e-12) -> str:
    """One line per nonzero amplitude: ``|bits> re imag`` (bits in allocation order)."""
    labels = state.registers.labels()
    lines = ["# " + " ".join(labels)]
    n = state.n
    for idx in np.flatnonzero(np.abs(state.amplitudes) > cutoff):
        bits = "".join(str((int(idx) >> q) & 1) for q in range(n))
        a = state.amplitudes[idx]
        lines.append(f"|{bits}⟩ {a.real:.12g} {a.imag:.12g}")
    return "\n".join(lines) + "\n"
