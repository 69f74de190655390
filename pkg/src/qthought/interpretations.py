"""Interpretations of quantum theory as forward/backward inference procedures.

Every inference is decided by a restricted simulation: a slice of the
protocol replayed on a fresh statevector, with the reasoning agent modelled
by their outcome register only, and projections ("branch points") on chosen
registers.  The result is a :class:`BranchTree` whose leaves carry the
values recorded at each branch point.

* neo-Copenhagen branches only where the reasoner draws a Heisenberg cut:
  on their own memory right after they measure, and on the hypothesis
  register once it has settled.  Everything else stays coherent.
* collapse branches at every measurement, for all agents alike.

New interpretations subclass :class:`Interpretation` and call
:func:`register_interpretation`.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, ClassVar, Iterable, Mapping, Sequence


from .agents import (
    AgentBrain,
    Claim,
    InferenceTable,
    Verdict,
    build_brain,
    decode_value,
    init_inference_qubits,
    outcome_width,
    run_reasoning,
)
from .errors import CapacityError, GateError, InferenceError, QThoughtError, StepError
from .protocol import (
    Apply,
    CPrepare,
    HaltIf,
    InferAbout,
    Compare,
    Measure,
    Prepare,
    Protocol,
    Reason,
    ReverseReason,
    SliceSpec,
    Step,
    format_time,
    step_registers,
)
from .statevector import (
    BELL,
    COMPUTATIONAL,
    DEFAULT_QUBIT_CAP,
    UNREACHABLE_THRESHOLD,
    Gate,
    GateKind,
    RegisterMap,
    StateVector,
    apply_gates,
    invert_tagged,
    measure_probabilities,
    prepare_qubit,
    project,
    zero_state,
)

CERTAINTY_TOL = 1e-9


# -- layout and step execution -------------------------------------------------


@dataclass
class Layout:
    """Register allocation for one simulation: systems, then agents in order."""

    registers: RegisterMap
    brains: dict[str, AgentBrain]
    bases: dict[str, str]  # register name -> basis its values are named in

    def full(self, agent: str) -> bool:
        return bool(self.brains[agent].hypotheses)


def build_layout(protocol: Protocol, hypotheses: Mapping[str, Sequence[Claim]],
                 cap: int = DEFAULT_QUBIT_CAP) -> Layout:
    """Allocate systems and agents; ``hypotheses`` gives the agents with full brains."""

    registers = RegisterMap()
    bases: dict[str, str] = {}
    for s in protocol.systems:
        registers.add(s.name, "system", s.name)
        bases[s.name] = COMPUTATIONAL
    brains = {}
    for a in protocol.agents:
        basis = protocol.agent_basis(a.name)
        brains[a.name] = build_brain(
            a.name, protocol.agent_values(a), tuple(hypotheses.get(a.name, ())),
            registers=registers, memory=a.memory, basis=basis,
            width=outcome_width(basis, a.outcomes))
        bases[a.memory] = basis
        if len(registers) > cap:
            raise CapacityError(f"{len(registers)}+ qubits needed, cap is {cap}")
    for brain in brains.values():
        for label in (registers.label(q) for q in brain.prediction_regs.values()):
            bases[label] = COMPUTATIONAL
    return Layout(registers, brains, bases)


def initial_state(protocol: Protocol, layout: Layout,
                  tables: Mapping[str, InferenceTable] | None = None) -> StateVector:
    """Declared system amplitudes plus inference qubits set from ``tables``."""
    state = zero_state(layout.registers)
    for s in protocol.systems:
        if s.amplitudes is not None:
            state = prepare_qubit(state, layout.registers.qubit(s.name), s.amplitudes, "init")
    for name, brain in layout.brains.items():
        if brain.hypotheses and tables and name in tables:
            state = init_inference_qubits(state, brain, tables[name], "init")
    return state


def _bell_copy(q1: int, q2: int, out: Sequence[int]) -> list[Gate]:
    return [
        Gate.bell(q1, q2),
        Gate.cnot(q1, out[0]),
        Gate.cnot(q2, out[1]),
        Gate(GateKind.BELL_DAG, (q1, q2)),
    ]


def step_gates(protocol: Protocol, layout: Layout, step: Step) -> list[Gate] | None:
    """Unitary realization of ``step``; ``None`` for steps handled elsewhere."""
    regs = layout.registers
    if isinstance(step, CPrepare):
        c, t = regs.qubit(step.control), regs.qubit(step.system)
        return [Gate.ch(c, t) if step.gate == "H" else Gate.cnot(c, t)]
    if isinstance(step, Apply):
        t = regs.qubit(step.target)
        ctrls = [(regs.qubit(c), 1) for c in step.controls]
        if step.gate == "X":
            return [Gate.mcx(ctrls, t) if ctrls else Gate.x(t)]
        if len(ctrls) > 1:
            raise GateError("H with more than one control is not supported")
        return [Gate.ch(ctrls[0][0], t) if ctrls else Gate.h(t)]
    if isinstance(step, Measure):
        brain = layout.brains[step.agent]
        targets = [regs.qubit(r) for r in step.targets]
        if step.basis == BELL:
            return _bell_copy(targets[0], targets[1], brain.outcome_reg)
        return [Gate.cnot(targets[0], brain.outcome_reg[0])]
    if isinstance(step, Reason):
        brain = layout.brains[step.agent]
        return list(brain.reasoning)
    return None


def apply_step(protocol: Protocol, layout: Layout, state: StateVector, step: Step,
               skip: str | None = None) -> StateVector:
    """Advance ``state`` by one protocol step.

    ``skip`` names a reasoner whose own reasoning (and its reversal) is left
    out of the simulation.
    """
    try:
        if isinstance(step, (InferAbout, HaltIf, Compare)):
            return state
        if isinstance(step, Prepare):
            return prepare_qubit(state, layout.registers.qubit(step.system), step.amplitudes, step.tag)
        if isinstance(step, Reason) and (step.agent == skip or not layout.full(step.agent)):
            return state
        if isinstance(step, ReverseReason):
            if step.subject == skip or not layout.full(step.subject):
                return state
            reason = protocol.reason_step(step.subject)
            return invert_tagged(state, reason.tag, step.tag)
        if isinstance(step, Reason):
            return run_reasoning(state, layout.brains[step.agent], step.tag)
        return apply_gates(state, step_gates(protocol, layout, step) or [], step.tag)
    except StepError:
        raise
    except QThoughtError as e:
        raise StepError(step.tag, e) from e


# -- branch trees --------------------------------------------------------------


@dataclass
class BranchNode:
    probability: float
    label: str = "root"
    records: dict[str, str] = field(default_factory=dict)
    state: StateVector | None = None
    children: list["BranchNode"] = field(default_factory=list)
    time: Fraction | None = None

    def leaves(self) -> list["BranchNode"]:
        if not self.children:
            return [self]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out


@dataclass
class BranchTree:
    root: BranchNode

    def leaves(self) -> list[BranchNode]:
        return self.root.leaves()

    def check(self, tol: float = 1e-9) -> None:
        """Children of every node sum to the node's probability."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.children:
                total = sum(c.probability for c in node.children)
                if abs(total - node.probability) > tol:
                    raise InferenceError(f"branch probabilities at {node.label} sum to {total}")
                stack.extend(node.children)

    def joint(self, registers: Sequence[str]) -> dict[tuple[str, ...], float]:
        out: dict[tuple[str, ...], float] = {}
        for leaf in self.leaves():
            key = tuple(leaf.records[r] for r in registers)
            out[key] = out.get(key, 0.0) + leaf.probability
        return out


def grow_tree(protocol: Protocol, layout: Layout, state: StateVector, steps: Sequence[Step],
              branch_points: Iterable[tuple[Fraction, str]], *, skip: str | None = None,
              keep_states: bool = True,
              on_leaf: Callable[[BranchNode, StateVector], None] | None = None) -> BranchTree:
    """Replay ``steps``, splitting every branch at each ``(time, register)`` point.

    Branches below the unreachable threshold are pruned.  With
    ``keep_states=False`` only the current path's states are held in memory.
    """
    points: dict[Fraction, list[str]] = {}
    for t, reg in branch_points:
        points.setdefault(t, [])
        if reg not in points[t]:
            points[t].append(reg)
    events: list[tuple[str, object]] = []
    for s in steps:
        events.append(("step", s))
        for reg in points.get(s.time, []):
            events.append(("branch", (s.time, reg)))

    root = BranchNode(1.0)

    def run(i: int, st: StateVector, node: BranchNode) -> None:
        while i < len(events):
            kind, payload = events[i]
            if kind == "step":
                st = apply_step(protocol, layout, st, payload, skip)
                i += 1
                continue
            t, reg = payload
            qubits = layout.registers.qubits(reg)
            basis = layout.bases.get(reg, COMPUTATIONAL)
            probs = measure_probabilities(st, qubits)
            if keep_states:
                node.state = st
            for idx, p in probs.items():
                if p < UNREACHABLE_THRESHOLD:
                    continue
                child_state, p = project(st, qubits, idx, tag=f"t={format_time(t)}")
                value = decode_value(idx, basis) if basis == BELL else str(idx)
                child = BranchNode(node.probability * p, f"{reg}={value}",
                                   {**node.records, reg: value}, None, [], t)
                node.children.append(child)
                run(i + 1, child_state, child)
                del child_state
            return
        if keep_states:
            node.state = st
        if on_leaf is not None:
            on_leaf(node, st)

    run(0, state, root)
    return BranchTree(root)


# -- restricted simulations ----------------------------------------------------


@dataclass(frozen=True)
class RestrictedSimulation:
    """A slice of the protocol as seen by ``reasoner``."""

    reasoner: str
    steps: tuple[Step, ...]
    projection_points: tuple[tuple[Fraction, str], ...]
    excluded: tuple[str, ...]  # agents simulated by their outcome register only
    hypothesis_register: str

    def __post_init__(self) -> None:
        times = {s.time for s in self.steps}
        for t, _ in self.projection_points:
            if t not in times:
                raise InferenceError(f"projection point t={format_time(t)} outside the slice")


def settle_for(protocol: Protocol, agent: str, register: str) -> Step | None:
    """Settle step of ``register``; a system no step writes is read at ``agent``'s measurement."""
    settle = protocol.settle_step(register)
    info = protocol.registers().get(register)
    if settle is None and info is not None and info.role == "system":
        return protocol.measure_step(agent)
    return settle


def slice_steps(protocol: Protocol, agent: str, register: str, spec: SliceSpec) -> tuple[Step, ...]:
    own = protocol.measure_step(agent)
    settle = settle_for(protocol, agent, register)
    if own is None:
        raise InferenceError(f"{agent} never measures, so has nothing to reason from")
    if settle is None:
        raise InferenceError(f"hypothesis register {register!r} never settles")
    if spec.times is None:
        horizon = max(own.time, settle.time)
        steps = tuple(s for s in protocol.steps if s.time <= horizon
                      and not isinstance(s, (InferAbout, HaltIf, Compare)))
    else:
        wanted = set(spec.times)
        steps = tuple(s for s in protocol.steps if s.time in wanted
                      and not isinstance(s, (InferAbout, HaltIf, Compare)))
    times = {s.time for s in steps}
    if own.time not in times:
        raise InferenceError(f"{agent}'s own measurement is not in the simulated slice")
    if settle.time not in times:
        raise InferenceError(f"hypothesis register {register!r} never settles inside the simulated slice")
    return steps


# -- interpretations -----------------------------------------------------------


class TableSource:
    """Supplies (table, tainted) for agents simulated with full brains."""

    def get(self, agent: str) -> tuple[InferenceTable, bool]:  # pragma: no cover - interface
        raise NotImplementedError


class Interpretation(ABC):
    """Forward and backward inference, both answered from a restricted simulation."""

    name: ClassVar[str] = ""
    branches_main_run: ClassVar[bool] = False

    @abstractmethod
    def branch_points(self, protocol: Protocol, agent: str, steps: Sequence[Step],
                      register: str) -> list[tuple[Fraction, str]]:
        """Where the restricted simulation for ``agent`` splits into branches."""

    def forward_void(self, protocol: Protocol, agent: str, register: str) -> bool:
        """True if the interpretation refuses every forward inference of this kind."""
        return False

    def main_branch_points(self, protocol: Protocol) -> list[tuple[Fraction, str]]:
        return []

    # -- simulation --

    def restricted_simulation(self, protocol: Protocol, agent: str, register: str,
                              spec: SliceSpec = SliceSpec()) -> RestrictedSimulation:
        steps = slice_steps(protocol, agent, register, spec)
        reasoning = {s.agent for s in steps if isinstance(s, Reason)}
        excluded = tuple(a.name for a in protocol.agents
                         if a.name == agent or a.name not in reasoning or not a.hypotheses)
        points = tuple(self.branch_points(protocol, agent, steps, register))
        return RestrictedSimulation(agent, steps, points, excluded, register)

    def simulate(self, protocol: Protocol, sim: RestrictedSimulation,
                 tables: TableSource | None = None) -> tuple[BranchTree, bool]:
        """Run ``sim``; returns the tree and whether a placeholder table was used."""
        tainted = False
        hyps: dict[str, tuple[Claim, ...]] = {}
        used: dict[str, InferenceTable] = {}
        for a in protocol.agents:
            if a.name in sim.excluded:
                continue
            hyps[a.name] = a.hypotheses
            if tables is None:
                raise InferenceError(f"simulating {a.name}'s reasoning needs their inference table")
            used[a.name], t = tables.get(a.name)
            tainted |= t
        layout = build_layout(protocol, hyps)
        state = initial_state(protocol, layout, used)
        tree = grow_tree(protocol, layout, state, sim.steps, sim.projection_points, skip=sim.reasoner)
        return tree, tainted

    # -- inference procedures --

    def forward_inference(self, tree: BranchTree, memory: str, register: str,
                          outcome: str) -> tuple[float, dict[str, float]]:
        """P(own outcome) and the distribution of ``register`` given it."""
        joint = tree.joint([memory, register])
        p_b = sum(p for (b, _), p in joint.items() if b == outcome)
        if p_b < UNREACHABLE_THRESHOLD:
            return p_b, {}
        return p_b, {h: p / p_b for (b, h), p in sorted(joint.items()) if b == outcome}

    def backward_inference(self, tree: BranchTree, memory: str, register: str,
                           value: str) -> tuple[float, dict[str, float]]:
        """P(register = value) and the distribution of the reasoner's outcome given it."""
        joint = tree.joint([memory, register])
        p_a = sum(p for (_, h), p in joint.items() if h == value)
        if p_a < UNREACHABLE_THRESHOLD:
            return p_a, {}
        return p_a, {b: p / p_a for (b, h), p in sorted(joint.items()) if h == value}


class NeoCopenhagen(Interpretation):
    name = "neo-copenhagen"

    def branch_points(self, protocol, agent, steps, register):
        own = protocol.measure_step(agent)
        settle = settle_for(protocol, agent, register)
        memory = protocol.agent(agent).memory
        return sorted([(own.time, memory), (settle.time, register)])


class Collapse(Interpretation):
    name = "collapse"
    branches_main_run = True

    def branch_points(self, protocol, agent, steps, register):
        points = []
        for s in steps:
            if isinstance(s, Measure):
                points.append((s.time, protocol.agent(s.agent).memory))
        settle = settle_for(protocol, agent, register)
        points.append((settle.time, register))
        return sorted(set(points))

    def forward_void(self, protocol, agent, register):
        # A forward inference conditions on a record that must persist.  If
        # someone acts non-diagonally on the reasoner's memory before the
        # hypothesis settles, the record the reasoner saw no longer exists in
        # the collapsed world, so nothing follows from it with certainty.
        own = protocol.measure_step(agent)
        settle = settle_for(protocol, agent, register)
        memory = protocol.agent(agent).memory
        if own is None or settle is None or settle.time <= own.time:
            return False
        for s in protocol.steps:
            if own.time < s.time <= settle.time and memory in step_registers(s, protocol):
                return True
        return False

    def main_branch_points(self, protocol):
        return [(s.time, protocol.agent(s.agent).memory)
                for s in protocol.steps if isinstance(s, Measure)]


_REGISTRY: dict[str, type[Interpretation]] = {}


def register_interpretation(cls: type[Interpretation]) -> type[Interpretation]:
    """Extension point: make ``cls`` selectable by ``cls.name``."""
    if not cls.name:
        raise ValueError("interpretation needs a name")
    _REGISTRY[cls.name] = cls
    return cls


def get_interpretation(name: str | Interpretation) -> Interpretation:
    if isinstance(name, Interpretation):
        return name
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise QThoughtError(f"unknown interpretation {name!r} "
                            f"(available: {', '.join(sorted(_REGISTRY))})") from None


def available_interpretations() -> list[str]:
    return sorted(_REGISTRY)


register_interpretation(NeoCopenhagen)
register_interpretation(Collapse)


# -- inference tables ----------------------------------------------------------


def _verdicts(interp: Interpretation, tree: BranchTree, memory: str, register: str,
              outcomes: Sequence[str], hyps: Sequence[Claim], forward: bool,
              void: bool) -> dict[tuple[str, Claim], Verdict]:
    entries: dict[tuple[str, Claim], Verdict] = {}
    if forward:
        cond = {b: interp.forward_inference(tree, memory, register, b) for b in outcomes}
    else:
        values = sorted({h for (_, h) in tree.joint([memory, register])} | {h.value for h in hyps})
        joint: dict[tuple[str, str], float] = {}
        for a in values:
            p_a, dist = interp.backward_inference(tree, memory, register, a)
            for b, p in dist.items():
                joint[(b, a)] = p_a * p
        cond = {}
        for b in outcomes:
            p_b = sum(p for (bb, _), p in joint.items() if bb == b)
            cond[b] = (p_b, {a: p / p_b for (bb, a), p in joint.items() if bb == b}
                       if p_b >= UNREACHABLE_THRESHOLD else {})
    for b in outcomes:
        p_b, dist = cond[b]
        for h in hyps:
            if p_b < UNREACHABLE_THRESHOLD:
                entries[(b, h)] = Verdict.UNREACHABLE
            elif not void and dist.get(h.value, 0.0) >= 1 - CERTAINTY_TOL:
                entries[(b, h)] = Verdict.CERTAIN
            else:
                entries[(b, h)] = Verdict.NOT_CERTAIN
    return entries


class TableResolver(TableSource):
    """Computes and caches tables, breaking reasoning cycles with a placeholder.

    An agent already being computed further up the stack is simulated with
    all inference qubits at ``|0>``; any table that depended on such a
    placeholder is returned but not cached.
    """

    def __init__(self, protocol: Protocol,
                 interpretation: str | Interpretation | None = None) -> None:
        self.protocol = protocol
        self.override = None if interpretation is None else get_interpretation(interpretation)
        self.cache: dict[str, InferenceTable] = {}
        self.stack: list[str] = []
        self.simulations = 0

    def interpretation_for(self, agent: str) -> Interpretation:
        if self.override is not None:
            return self.override
        return get_interpretation(self.protocol.interpretation_for(agent))

    def get(self, agent: str) -> tuple[InferenceTable, bool]:
        if agent in self.cache:
            return self.cache[agent], False
        if agent in self.stack:
            decl = self.protocol.agent(agent)
            return InferenceTable(agent, decl.memory, {}, "placeholder"), True
        self.stack.append(agent)
        try:
            table, tainted = self._compute(agent)
        finally:
            self.stack.pop()
        if not tainted:
            self.cache[agent] = table
        return table, tainted

    def _compute(self, agent: str, queried=None) -> tuple[InferenceTable, bool]:
        protocol = self.protocol
        interp = self.interpretation_for(agent)
        decl = protocol.agent(agent)
        outcomes = protocol.agent_values(decl)
        queried = list(queried if queried is not None else protocol.queried(agent))
        groups: dict[tuple[str, SliceSpec], list[Claim]] = {}
        for h, spec in queried:
            if h not in decl.hypotheses:
                raise InferenceError(f"{agent} has no declared hypothesis {h}")
            groups.setdefault((h.register, spec), []).append(h)
        entries: dict[tuple[str, Claim], Verdict] = {}
        tainted = False
        sources = []
        for (register, spec), hyps in groups.items():
            sim = interp.restricted_simulation(protocol, agent, register, spec)
            tree, t = interp.simulate(protocol, sim, self)
            self.simulations += 1
            tainted |= t
            own = protocol.measure_step(agent)
            settle = settle_for(protocol, agent, register)
            forward = own.time < settle.time
            void = forward and interp.forward_void(protocol, agent, register)
            entries.update(_verdicts(interp, tree, decl.memory, register, outcomes, hyps, forward, void))
            sources.append(f"{register} via {spec}")
        table = InferenceTable(agent, decl.memory, entries,
                               f"{interp.name}: {agent} about " + "; ".join(sources))
        table.validate()
        return table, tainted


def compute_inference_table(protocol: Protocol, agent: str,
                            interpretation: str | Interpretation | None = None,
                            queried: Sequence[tuple[Claim, SliceSpec]] | None = None,
                            resolver: TableResolver | None = None) -> InferenceTable:
    """Inference table of ``agent``: certain iff P(hypothesis | own outcome) = 1."""
    resolver = resolver or TableResolver(protocol, interpretation)
    if queried is None:
        return resolver.get(agent)[0]
    resolver.stack.append(agent)
    try:
        return resolver._compute(agent, queried)[0]
    finally:
        resolver.stack.pop()


def compute_tables(protocol: Protocol, interpretation: str | Interpretation | None = None
                   ) -> dict[str, InferenceTable]:
    resolver = TableResolver(protocol, interpretation)
    return {a.name: resolver.get(a.name)[0] for a in protocol.agents if a.hypotheses}


def collapse_run(protocol: Protocol, tables: Mapping[str, InferenceTable] | None = None,
                 keep_states: bool = False) -> BranchTree:
    """Objective-collapse world model: every measurement splits every branch."""
    interp = Collapse()
    if tables is None:
        tables = compute_tables(protocol, interp)
    layout = build_layout(protocol, {a.name: a.hypotheses for a in protocol.agents})
    state = initial_state(protocol, layout, tables)
    steps = [s for s in protocol.steps if not isinstance(s, (InferAbout, HaltIf, Compare))]
    tree = grow_tree(protocol, layout, state, steps, interp.main_branch_points(protocol),
                     keep_states=keep_states)
    return tree


def collapse_inference(tree: BranchTree, protocol: Protocol, agent: str,
                       queried: Sequence[Claim] | None = None) -> InferenceTable:
    """Read a table straight off a collapse tree: certain iff every leaf agrees.

    The tree must record the hypothesis registers (memories are recorded at
    every measurement).
    """
    decl = protocol.agent(agent)
    hyps = list(queried if queried is not None else decl.hypotheses)
    entries = {}
    interp = Collapse()
    for reg in sorted({h.register for h in hyps}):
        group = [h for h in hyps if h.register == reg]
        own = protocol.measure_step(agent)
        settle = settle_for(protocol, agent, reg)
        forward = own.time < settle.time
        void = forward and interp.forward_void(protocol, agent, reg)
        entries.update(_verdicts(interp, tree, decl.memory, reg, protocol.agent_values(decl),
                                 group, True, void))
    return InferenceTable(agent, decl.memory, entries, f"collapse tree: {agent}")
