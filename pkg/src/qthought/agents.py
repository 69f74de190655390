"""Agents as quantum circuits: outcome, inference and prediction registers.

An agent's reasoning unitary is a fixed bank of multi-controlled X gates.  For
every (outcome ``b``, hypothesis ``a``) pair there is one gate flipping the
prediction qubit ``P^a``, controlled on the inference qubit ``I^{b,a}`` and on
the outcome register matching ``b`` bit by bit (0-polarity controls where the
bit is 0).  Which inferences hold is decided elsewhere and only enters through
the initial state of the inference qubits.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InferenceError, RegisterError
from .statevector import (
    BELL,
    BELL_OUTCOMES,
    COMPUTATIONAL,
    UNREACHABLE_THRESHOLD,
    Gate,
    QubitId,
    RegisterMap,
    StateVector,
    apply_gates,
    marginal,
    sample,
)


def split_claim(text: str) -> tuple[str, str]:
    """Split ``register=value`` on the last ``=`` that is outside braces."""
    depth = 0
    cut = -1
    for i, ch in enumerate(text):
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        elif ch == "=" and depth == 0:
            cut = i
    if cut <= 0 or cut == len(text) - 1 or depth != 0:
        raise ValueError(f"malformed claim {text!r}")
    return text[:cut].strip(), text[cut + 1:].strip()


@dataclass(frozen=True, order=True)
class Claim:
    """``register = value``; values are kept as strings (``"1"``, ``"fail"``)."""

    register: str
    value: str

    @classmethod
    def parse(cls, text: str) -> "Claim":
        reg, val = split_claim(text.strip())
        return cls(reg, val)

    @classmethod
    def of(cls, register: str, value) -> "Claim":
        return cls(register, str(value))

    @property
    def subject(self) -> str:
        return self.register

    def __str__(self) -> str:
        return f"{self.register}={self.value}"


Hypothesis = Claim

_PREDICTION_RE = re.compile(r"^P_([^{}]+)\{(.*)\}$")


def prediction_label(memory: str, claim: Claim) -> str:
    return f"P_{memory}{{{claim}}}"


def inference_label(memory: str, outcome: str, claim: Claim) -> str:
    return f"I_{memory}{{{outcome}->{claim}}}"


def parse_prediction_label(label: str) -> tuple[str, Claim] | None:
    """``P_A{W=fail}`` -> ``("A", W=fail)``; ``None`` for other labels."""
    m = _PREDICTION_RE.match(label)
    if not m:
        return None
    try:
        return m.group(1), Claim.parse(m.group(2))
    except ValueError:
        return None


def outcome_values(basis: str, count: int) -> tuple[str, ...]:
    if basis == BELL:
        if not 1 <= count <= 4:
            raise InferenceError("a bell measurement has at most 4 outcomes")
        return BELL_OUTCOMES[:count]
    return tuple(str(i) for i in range(count))


def outcome_width(basis: str, count: int) -> int:
    if basis == BELL:
        return 2
    return max(1, math.ceil(math.log2(count))) if count > 1 else 1


def encode_value(value: str, basis: str) -> int:
    if basis == BELL:
        return BELL_OUTCOMES.index(value)
    return int(value)


def decode_value(index: int, basis: str) -> str:
    if basis == BELL:
        return BELL_OUTCOMES[index]
    return str(index)


class Verdict(str, enum.Enum):
    CERTAIN = "certain"
    NOT_CERTAIN = "not-certain"
    UNREACHABLE = "unreachable"


@dataclass
class InferenceTable:
    """Classical map ``(own outcome, hypothesis) -> verdict`` for one agent.

    ``register`` is the label of the owner's outcome register, so every entry
    reads as the implication ``register=outcome => hypothesis``.
    """

    owner: str
    register: str
    entries: dict[tuple[str, Claim], Verdict] = field(default_factory=dict)
    source: str = ""

    def verdict(self, outcome, hypothesis: Claim) -> Verdict:
        return self.entries.get((str(outcome), hypothesis), Verdict.NOT_CERTAIN)

    def certain(self) -> list[tuple[str, Claim]]:
        return sorted(k for k, v in self.entries.items() if v is Verdict.CERTAIN)

    def certain_claims(self) -> set[tuple[Claim, Claim]]:
        return {(Claim(self.register, b), a) for b, a in self.certain()}

    def validate(self) -> None:
        seen: dict[tuple[str, str], Claim] = {}
        for b, a in self.certain():
            key = (b, a.register)
            if key in seen and seen[key] != a:
                raise InferenceError(
                    f"{self.owner}: outcome {b} makes both {seen[key]} and {a} certain"
                )
            seen[key] = a

    def to_dict(self) -> dict:
        return {
            "owner": self.owner,
            "register": self.register,
            "source": self.source,
            "entries": [
                {"outcome": b, "hypothesis": str(a), "verdict": v.value}
                for (b, a), v in sorted(self.entries.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "InferenceTable":
        entries = {
            (e["outcome"], Claim.parse(e["hypothesis"])): Verdict(e["verdict"])
            for e in data["entries"]
        }
        return cls(data["owner"], data["register"], entries, data.get("source", ""))


@dataclass(frozen=True)
class AgentBrain:
    name: str
    memory: str
    basis: str
    outcome_values: tuple[str, ...]
    outcome_reg: tuple[QubitId, ...]
    hypotheses: tuple[Claim, ...]
    inference_regs: Mapping[tuple[str, Claim], QubitId]
    prediction_regs: Mapping[Claim, QubitId]
    reasoning: tuple[Gate, ...]

    @property
    def qubits(self) -> tuple[QubitId, ...]:
        return (tuple(self.outcome_reg) + tuple(self.inference_regs.values())
                + tuple(self.prediction_regs.values()))

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    def outcome_pattern(self, value: str) -> int:
        return encode_value(value, self.basis)


def build_brain(name: str, outcome_values: Sequence, hypotheses: Sequence[Claim], *,
                registers: RegisterMap | None = None, memory: str | None = None,
                basis: str = COMPUTATIONAL, width: int | None = None) -> AgentBrain:
    """Allocate an agent's registers into ``registers`` and synthesize its reasoning.

    Allocation order is outcome qubits, inference qubits (hypothesis-major,
    outcome-minor, as in ``I^{0,a0}, I^{1,a0}, I^{0,a1}, ...``), then one
    prediction qubit per hypothesis.
    """
    if not outcome_values:
        raise InferenceError("an agent needs at least one outcome value")
    registers = registers if registers is not None else RegisterMap()
    memory = memory or name
    values = tuple(str(v) for v in outcome_values)
    hyps = tuple(hypotheses)
    if len(set(hyps)) != len(hyps):
        raise InferenceError(f"{name}: duplicate hypothesis")
    if width is None:
        width = outcome_width(basis, len(values))
    outcome_reg = registers.add_register(name, "outcome", memory, width)
    inference: dict[tuple[str, Claim], QubitId] = {}
    for a in hyps:
        for b in values:
            inference[(b, a)] = registers.add(name, "inference", inference_label(memory, b, a))
    prediction = {a: registers.add(name, "prediction", prediction_label(memory, a)) for a in hyps}
    gates = []
    for a in hyps:
        for b in values:
            pattern = encode_value(b, basis)
            controls = [(q, (pattern >> j) & 1) for j, q in enumerate(outcome_reg)]
            controls.append((inference[(b, a)], 1))
            gates.append(Gate.mcx(controls, prediction[a]))
    return AgentBrain(name, memory, basis, values, outcome_reg, hyps, inference, prediction, tuple(gates))


def _qubit_is_zero(state: StateVector, q: QubitId) -> bool:
    dist = marginal(np.abs(state.amplitudes) ** 2, state.n, [q])
    return dist[1] < UNREACHABLE_THRESHOLD


def init_inference_qubits(state: StateVector, brain: AgentBrain, table: InferenceTable,
                          tag: str | None = None) -> StateVector:
    """Flip ``I^{b,a}`` to ``|1>`` for every certain entry of ``table``."""
    if table.owner != brain.name:
        raise InferenceError(f"table belongs to {table.owner!r}, brain is {brain.name!r}")
    flips = []
    for b, a in table.certain():
        q = brain.inference_regs.get((b, a))
        if q is None:
            raise InferenceError(f"{brain.name} has no inference qubit for {b} => {a}")
        if not _qubit_is_zero(state, q):
            raise InferenceError(f"inference qubit {state.registers.label(q)!r} is not in |0>")
        flips.append(Gate.x(q))
    if not flips:
        return state
    return apply_gates(state, flips, tag)


def run_reasoning(state: StateVector, brain: AgentBrain, tag: str | None = None) -> StateVector:
    if not brain.reasoning:
        return state
    return apply_gates(state, brain.reasoning, tag)


def read_predictions(state: StateVector, brain: AgentBrain, basis_sample_seed=None) -> dict[Claim, str]:
    """Sample the prediction qubits: ``|1>`` is asserted, ``|0>`` silent."""
    claims = list(brain.prediction_regs)
    if not claims:
        return {}
    qubits = [brain.prediction_regs[a] for a in claims]
    bits = sample(state, qubits, COMPUTATIONAL, basis_sample_seed)
    return {a: ("asserted" if (bits >> j) & 1 else "silent") for j, a in enumerate(claims)}


def bank_bits(state: StateVector, qubits: Iterable[QubitId]) -> str:
    """Definite computational value of ``qubits`` as a bit string in the given order."""
    qubits = list(qubits)
    dist = marginal(np.abs(state.amplitudes) ** 2, state.n, qubits)
    idx = int(np.argmax(dist))
    if dist[idx] < 1 - 1e-9:
        raise RegisterError("register is not in a computational basis state")
    return "".join(str((idx >> j) & 1) for j in range(len(qubits)))
