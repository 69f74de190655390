"""Running a protocol end to end.

The pipeline is: (1) compute every agent's inference table, (2) allocate the
full register layout, (3) initialize inference qubits, (4) replay the steps,
(5) read the surviving classical records and check them for consistency.

Step (4) is done once per protocol.  Under neo-Copenhagen the replay is fully
coherent; under collapse it is a branch tree over every measurement.  Either
way the result is an exact distribution over the *observed* registers, and
shots are drawn from it with per-shot seeds ``SeedSequence([seed, i])``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .agents import Claim, InferenceTable, decode_value, parse_prediction_label
from .errors import QThoughtError
from .interpretations import (
    BranchNode,
    Layout,
    TableResolver,
    apply_step,
    build_layout,
    get_interpretation,
    grow_tree,
    initial_state,
)
from .logic import (
    Assertion,
    ContradictionReport,
    InferenceChain,
    assertion_chains,
    check_consistency,
)
from .protocol import Compare, HaltIf, InferAbout, Protocol, Step, step_registers
from .statevector import BELL, UNREACHABLE_THRESHOLD, StateVector, marginal

MAX_TRIALS = 1_000_000


def live_registers(protocol: Protocol) -> list[str]:
    """Memories and prediction registers that still hold their record at the end.

    A register is live once it has settled (its owner measured / reasoned)
    and no later step acts on it non-diagonally.
    """
    out = []
    for name, info in protocol.registers().items():
        if info.role == "system":
            continue
        settle = protocol.settle_step(name)
        if settle is None:
            continue
        later = [s for s in protocol.steps if s.time > settle.time]
        if any(name in step_registers(s, protocol) for s in later):
            continue
        out.append(name)
    return out


def halt_conditions(protocol: Protocol) -> tuple[Claim, ...]:
    for s in protocol.steps:
        if isinstance(s, HaltIf):
            return s.conditions
    return ()


def observed_registers(protocol: Protocol) -> list[str]:
    regs = live_registers(protocol)
    for c in halt_conditions(protocol):
        if c.register not in regs:
            regs.append(c.register)
    return regs


def _owners(protocol: Protocol) -> dict[str, str]:
    return {a.memory: a.name for a in protocol.agents}


def _memories(protocol: Protocol) -> list[str]:
    return [a.memory for a in protocol.agents]


def assertions_of(protocol: Protocol, outcomes: Mapping[str, str]) -> list[Assertion]:
    owners = _owners(protocol)
    out = []
    for reg, value in outcomes.items():
        parsed = parse_prediction_label(reg)
        if parsed is None or value != "1":
            continue
        memory, claim = parsed
        if memory in owners:
            out.append(Assertion(owners[memory], memory, claim))
    return out


def _runnable(protocol: Protocol) -> list[Step]:
    return [s for s in protocol.steps if not isinstance(s, (InferAbout, HaltIf, Compare))]


@dataclass
class MainRun:
    """The single full replay of a protocol, with everything derived from it."""

    protocol: Protocol
    interpretation: str
    tables: dict[str, InferenceTable]
    layout: Layout
    registers: list[str]
    distribution: dict[tuple[str, ...], float]
    phases: list[str]
    state: StateVector | None = None

    def outcome(self, key: tuple[str, ...]) -> dict[str, str]:
        return dict(zip(self.registers, key))

    def halted(self, outcomes: Mapping[str, str]) -> bool:
        return all(outcomes.get(c.register) == c.value for c in halt_conditions(self.protocol))


def _decode(layout: Layout, registers: Sequence[str], dist: np.ndarray) -> dict[tuple[str, ...], float]:
    widths = [len(layout.registers.qubits(r)) for r in registers]
    out: dict[tuple[str, ...], float] = {}
    for idx in np.flatnonzero(dist > UNREACHABLE_THRESHOLD):
        idx = int(idx)
        key = []
        shift = 0
        for reg, w in zip(registers, widths):
            v = (idx >> shift) & ((1 << w) - 1)
            shift += w
            basis = layout.bases.get(reg)
            key.append(decode_value(v, basis) if basis == BELL else str(v))
        out[tuple(key)] = out.get(tuple(key), 0.0) + float(dist[idx])
    return dict(sorted(out.items()))


def main_run(protocol: Protocol, interpretation: str | None = None, *,
             keep_state: bool = False) -> MainRun:
    """Tables, allocation, initialization, then one replay of every step."""
    phases = ["tables"]
    interp_name = interpretation or protocol.interpretation
    interp = get_interpretation(interp_name)
    resolver = TableResolver(protocol, interpretation)
    tables = {a.name: resolver.get(a.name)[0] for a in protocol.agents if a.hypotheses}
    phases.append("allocate")
    layout = build_layout(protocol, {a.name: a.hypotheses for a in protocol.agents})
    phases.append("init")
    state = initial_state(protocol, layout, tables)
    phases.append("run")
    regs = observed_registers(protocol)
    qubits = [q for r in regs for q in layout.registers.qubits(r)]
    n = layout.registers.__len__()
    steps = _runnable(protocol)
    final = None
    if interp.branches_main_run:
        acc = np.zeros(2 ** len(qubits))

        def on_leaf(node: BranchNode, st: StateVector) -> None:
            acc[:] += node.probability * marginal(np.abs(st.amplitudes) ** 2, n, qubits)

        grow_tree(protocol, layout, state, steps, interp.main_branch_points(protocol),
                  keep_states=False, on_leaf=on_leaf)
        dist = acc
    else:
        for s in steps:
            state = apply_step(protocol, layout, state, s)
        dist = marginal(np.abs(state.amplitudes) ** 2, n, qubits) if qubits else np.ones(1)
        final = state if keep_state else None
    del state
    return MainRun(protocol, interp.name, tables, layout, regs,
                   _decode(layout, regs, dist) if qubits else {(): 1.0}, phases, final)


def final_state(protocol: Protocol, interpretation: str | None = None) -> StateVector:
    """Coherent end-of-protocol state from the outermost perspective.

    Every step is applied unitarily whatever the interpretation; the
    interpretation only decides the inference tables loaded into the brains.
    """
    resolver = TableResolver(protocol, interpretation)
    tables = {a.name: resolver.get(a.name)[0] for a in protocol.agents if a.hypotheses}
    layout = build_layout(protocol, {a.name: a.hypotheses for a in protocol.agents})
    state = initial_state(protocol, layout, tables)
    for s in _runnable(protocol):
        state = apply_step(protocol, layout, state, s)
    return state


# -- records -------------------------------------------------------------------


@dataclass
class ShotRecord:
    index: int
    seed: list[int]
    outcomes: dict[str, str]
    halted: bool
    asserted: list[str] = field(default_factory=list)
    reports: list[ContradictionReport] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "seed": list(self.seed),
            "outcomes": dict(self.outcomes),
            "halted": self.halted,
            "asserted": list(self.asserted),
            "reports": [r.to_dict() for r in self.reports],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ShotRecord":
        return cls(d["index"], list(d["seed"]), dict(d["outcomes"]), d["halted"],
                   list(d["asserted"]), [ContradictionReport.from_dict(r) for r in d["reports"]])


@dataclass
class RunRecord:
    protocol: str
    interpretation: str
    seed: int
    tables: dict[str, InferenceTable] = field(default_factory=dict)
    registers: list[str] = field(default_factory=list)
    memories: list[str] = field(default_factory=list)
    halt: list[str] = field(default_factory=list)
    events: dict[str, float] = field(default_factory=dict)
    support: list[dict] = field(default_factory=list)
    shots: list[ShotRecord] = field(default_factory=list)
    trials: int = 0
    halts: int = 0
    chains: list[InferenceChain] = field(default_factory=list)
    reports: list[ContradictionReport] = field(default_factory=list)
    exact: bool = False

    @property
    def consistent(self) -> bool:
        return not self.reports

    def counts(self) -> dict[str, int]:
        """Frequencies of the observed records over halting shots."""
        out: dict[str, int] = {}
        for s in self.shots:
            if s.halted:
                key = ", ".join(f"{k}={v}" for k, v in s.outcomes.items())
                out[key] = out.get(key, 0) + 1
        return dict(sorted(out.items()))

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "interpretation": self.interpretation,
            "seed": self.seed,
            "exact": self.exact,
            "tables": {k: t.to_dict() for k, t in sorted(self.tables.items())},
            "registers": list(self.registers),
            "memories": list(self.memories),
            "halt": list(self.halt),
            "events": dict(self.events),
            "support": [dict(s) for s in self.support],
            "trials": self.trials,
            "halts": self.halts,
            "shots": [s.to_dict() for s in self.shots],
            "chains": [c.to_dict() for c in self.chains],
            "reports": [r.to_dict() for r in self.reports],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunRecord":
        return cls(
            d["protocol"], d["interpretation"], d["seed"],
            {k: InferenceTable.from_dict(t) for k, t in d["tables"].items()},
            list(d["registers"]), list(d["memories"]), list(d["halt"]), dict(d["events"]),
            [dict(s) for s in d["support"]], [ShotRecord.from_dict(s) for s in d["shots"]],
            d["trials"], d["halts"], [InferenceChain.from_dict(c) for c in d["chains"]],
            [ContradictionReport.from_dict(r) for r in d["reports"]], d["exact"])


# -- evaluation ----------------------------------------------------------------


class _Checker:
    """Memoized consistency check per distinct outcome."""

    def __init__(self, run: MainRun):
        self.run = run
        self.cache: dict[tuple[str, ...], tuple[list[Assertion], list[ContradictionReport]]] = {}
        self.chains: dict[str, InferenceChain] = {}
        proto = run.protocol
        self.owners = _owners(proto)
        self.memories = _memories(proto)

    def check(self, key: tuple[str, ...], run_id: int) -> tuple[list[Assertion], list[ContradictionReport]]:
        if key not in self.cache:
            proto = self.run.protocol
            outcomes = self.run.outcome(key)
            asserted = assertions_of(proto, outcomes)
            tables = list(self.run.tables.values())
            reports = check_consistency(outcomes, asserted, tables, proto.trust, self.owners, 0)
            for a in asserted:
                for c in assertion_chains(a, outcomes, tables, proto.trust, self.owners):
                    self.chains.setdefault(c.display(self.memories), c)
            self.cache[key] = (asserted, reports)
        asserted, reports = self.cache[key]
        return asserted, [replace(r, run_id=run_id) for r in reports]


def _event_name(conds: Sequence[Claim]) -> str:
    return " & ".join(str(c) for c in conds)


def _shot_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, i]))


def run_protocol(protocol: Protocol, interpretation: str | None = None, *, seed: int | None = None,
                 shots: int | None = None, exact: bool = False, until_halt: bool = False,
                 main: MainRun | None = None) -> RunRecord:
    """Build a :class:`RunRecord`.

    ``exact`` adds event probabilities and per-outcome reports over the
    post-selected support.  ``shots`` runs that many independent trials.
    ``until_halt`` runs trials until the halting condition is met once.
    """
    seed = protocol.seed if seed is None else seed
    run = main or main_run(protocol, interpretation)
    checker = _Checker(run)
    halt = halt_conditions(protocol)
    rec = RunRecord(protocol.name, run.interpretation, seed, dict(run.tables), list(run.registers),
                    _memories(protocol), [str(c) for c in halt], exact=exact)
    all_reports: dict[tuple, ContradictionReport] = {}

    if exact:
        if halt:
            for c in halt:
                rec.events[str(c)] = _prob(run, [c])
            rec.events[_event_name(halt)] = _prob(run, halt)
        for i, (key, p) in enumerate((k, p) for k, p in run.distribution.items()
                                     if run.halted(run.outcome(k))):
            asserted, reports = checker.check(key, i)
            rec.support.append({"outcomes": run.outcome(key), "probability": p,
                                "asserted": [_assert_str(a) for a in asserted]})
            for r in reports:
                all_reports.setdefault(("exact", i, r.predicted, r.observed), r)

    if shots or until_halt:
        keys = list(run.distribution)
        probs = np.array([run.distribution[k] for k in keys])
        probs = probs / probs.sum()
        p_halt = sum(p for k, p in run.distribution.items() if run.halted(run.outcome(k)))
        if until_halt and p_halt < UNREACHABLE_THRESHOLD:
            raise QThoughtError("halting condition can never be met")
        i = 0
        while True:
            if shots and i >= shots:
                break
            if until_halt and rec.halts >= 1:
                break
            if i >= MAX_TRIALS:
                raise QThoughtError(f"no halt after {MAX_TRIALS} trials")
            key = keys[int(_shot_rng(seed, i).choice(len(keys), p=probs))]
            outcomes = run.outcome(key)
            halted = run.halted(outcomes)
            shot = ShotRecord(i, [seed, i], outcomes, halted)
            if halted:
                rec.halts += 1
                asserted, reports = checker.check(key, i)
                shot.asserted = [_assert_str(a) for a in asserted]
                shot.reports = reports
                for r in reports:
                    all_reports.setdefault(("shot", i, r.predicted, r.observed), r)
            if shots or halted:
                rec.shots.append(shot)
            i += 1
        rec.trials = i

    rec.chains = [checker.chains[k] for k in sorted(checker.chains)]
    rec.reports = list(all_reports.values())
    return rec


def _assert_str(a: Assertion) -> str:
    return f"{a.owner}: {a.claim}"


def _prob(run: MainRun, conds: Sequence[Claim]) -> float:
    total = 0.0
    for key, p in run.distribution.items():
        out = run.outcome(key)
        if all(out.get(c.register) == c.value for c in conds):
            total += p
    return total


def execute(protocol: Protocol, interpretation: str | None = None, seed: int | None = None) -> RunRecord:
    """One run: restart with advancing shot seeds until the halting condition holds."""
    return run_protocol(protocol, interpretation, seed=seed, until_halt=True)


def repeat(protocol: Protocol, interpretation: str | None = None, shots: int | None = None,
           seed: int | None = None) -> RunRecord:
    """``shots`` independent trials; non-halting trials are recorded but not checked."""
    shots = protocol.shots if shots is None else shots
    if shots < 1:
        raise QThoughtError("shots must be at least 1")
    return run_protocol(protocol, interpretation, seed=seed, shots=shots)


def exact(protocol: Protocol, interpretation: str | None = None, seed: int | None = None) -> RunRecord:
    return run_protocol(protocol, interpretation, seed=seed, exact=True)
