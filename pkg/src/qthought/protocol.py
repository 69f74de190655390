"""Protocol data model and the line-oriented protocol file format.

Grammar (one statement per line, ``#`` starts a comment)::

    name <identifier>
    system <name> [amp <re> <im> <re> <im>]
    agent <name> [memory <label>] outcomes <k> [hypotheses <claim>,<claim>,...]
    interpretation <name> [for <agent>]
    trust trivial | trust deny <truster>,<trusted>
    shots <n>
    seed <n>
    step <t> prepare <system> amp <re> <im> <re> <im>
    step <t> cprepare <system> control <reg> gate H|X
    step <t> apply <actor> gate X|H target <reg> [control <reg>,...]
    step <t> measure <agent> targets <reg>,... basis computational|bell
    step <t> reason <agent>
    step <t> reverse <actor> reason <agent>
    step <t> infer <agent> about <reg>,... via default | via steps <t>,<t>,...
    step <t> halt_if <reg>=<val> & <reg>=<val> ...
    step <t> compare

Numbers in amplitudes accept ``0.5``, ``1/3``, ``sqrt(1/3)`` and a leading
minus sign.  Time tags are exact decimals (``2.9``) or fractions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import ClassVar

from .agents import (
    Claim,
    outcome_values,
    outcome_width,
    parse_prediction_label,
    prediction_label,
)
from .errors import ProtocolError
from .logic import TrustStructure
from .statevector import BELL, COMPUTATIONAL

DEFAULT_INTERPRETATION = "neo-copenhagen"


def format_time(t: Fraction) -> str:
    """Render a time tag as a finite decimal when possible (``29/10`` -> ``2.9``)."""
    if t.denominator == 1:
        return str(t.numerator)
    den = t.denominator
    while den % 2 == 0:
        den //= 2
    while den % 5 == 0:
        den //= 5
    if den != 1:
        return f"{t.numerator}/{t.denominator}"
    digits = 0
    while (t * 10 ** digits).denominator != 1:
        digits += 1
    whole = t * 10 ** digits
    sign = "-" if whole < 0 else ""
    s = str(abs(whole.numerator)).rjust(digits + 1, "0")
    return f"{sign}{s[:-digits]}.{s[-digits:]}"


def parse_time(text: str) -> Fraction:
    try:
        t = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"bad time tag {text!r}") from None
    return t


_NUM_RE = re.compile(r"^(-)?(?:sqrt\((.+)\)|(.+))$")


def parse_number(text: str) -> float:
    m = _NUM_RE.match(text.strip())
    if not m:
        raise ValueError(f"bad number {text!r}")
    neg, inside, plain = m.groups()
    body = inside if inside is not None else plain
    try:
        value = float(Fraction(body))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"bad number {text!r}") from None
    if inside is not None:
        if value < 0:
            raise ValueError(f"sqrt of negative number in {text!r}")
        value = math.sqrt(value)
    return -value if neg else value


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_amps(amps: tuple[complex, complex]) -> str:
    return " ".join(f"{_fmt_float(a.real)} {_fmt_float(a.imag)}" for a in amps)


# -- declarations ------------------------------------------------------------


@dataclass(frozen=True)
class SystemDecl:
    name: str
    amplitudes: tuple[complex, complex] | None = None


@dataclass(frozen=True)
class AgentDecl:
    name: str
    memory: str
    outcomes: int
    hypotheses: tuple[Claim, ...] = ()


@dataclass(frozen=True)
class SliceSpec:
    """Which steps a restricted simulation replays; ``None`` means the default slice."""

    times: tuple[Fraction, ...] | None = None

    def __str__(self) -> str:
        if self.times is None:
            return "default"
        return "steps " + ",".join(format_time(t) for t in self.times)


# -- steps -------------------------------------------------------------------


@dataclass(frozen=True)
class Step:
    time: Fraction
    kind: ClassVar[str] = ""

    @property
    def tag(self) -> str:
        return f"t={format_time(self.time)}"

    def body(self) -> str:  # pragma: no cover - overridden
        raise NotImplementedError

    def render(self) -> str:
        return f"step {format_time(self.time)} {self.body()}"


@dataclass(frozen=True)
class Prepare(Step):
    system: str = ""
    amplitudes: tuple[complex, complex] = (1, 0)
    kind: ClassVar[str] = "prepare"

    def body(self) -> str:
        return f"prepare {self.system} amp {_fmt_amps(self.amplitudes)}"


@dataclass(frozen=True)
class CPrepare(Step):
    system: str = ""
    control: str = ""
    gate: str = "H"
    kind: ClassVar[str] = "cprepare"

    def body(self) -> str:
        return f"cprepare {self.system} control {self.control} gate {self.gate}"


@dataclass(frozen=True)
class Apply(Step):
    actor: str = ""
    gate: str = "X"
    target: str = ""
    controls: tuple[str, ...] = ()
    kind: ClassVar[str] = "apply"

    def body(self) -> str:
        s = f"apply {self.actor} gate {self.gate} target {self.target}"
        if self.controls:
            s += " control " + ",".join(self.controls)
        return s


@dataclass(frozen=True)
class Measure(Step):
    agent: str = ""
    targets: tuple[str, ...] = ()
    basis: str = COMPUTATIONAL
    kind: ClassVar[str] = "measure"

    def body(self) -> str:
        return f"measure {self.agent} targets {','.join(self.targets)} basis {self.basis}"


@dataclass(frozen=True)
class Reason(Step):
    agent: str = ""
    kind: ClassVar[str] = "reason"

    def body(self) -> str:
        return f"reason {self.agent}"


@dataclass(frozen=True)
class ReverseReason(Step):
    actor: str = ""
    subject: str = ""
    kind: ClassVar[str] = "reverse"

    def body(self) -> str:
        return f"reverse {self.actor} reason {self.subject}"


@dataclass(frozen=True)
class InferAbout(Step):
    agent: str = ""
    about: tuple[str, ...] = ()
    slice: SliceSpec = SliceSpec()
    kind: ClassVar[str] = "infer"

    def body(self) -> str:
        return f"infer {self.agent} about {','.join(self.about)} via {self.slice}"


@dataclass(frozen=True)
class HaltIf(Step):
    conditions: tuple[Claim, ...] = ()
    kind: ClassVar[str] = "halt_if"

    def body(self) -> str:
        return "halt_if " + " & ".join(str(c) for c in self.conditions)


@dataclass(frozen=True)
class Compare(Step):
    kind: ClassVar[str] = "compare"

    def body(self) -> str:
        return "compare"


# -- registers ---------------------------------------------------------------


@dataclass(frozen=True)
class RegisterInfo:
    name: str
    role: str          # system | outcome | prediction
    owner: str
    width: int
    values: tuple[str, ...]
    basis: str = COMPUTATIONAL


@dataclass
class Protocol:
    name: str = "protocol"
    systems: list[SystemDecl] = field(default_factory=list)
    agents: list[AgentDecl] = field(default_factory=list)
    steps: list[Step] = field(default_factory=list)
    interpretation: str = DEFAULT_INTERPRETATION
    agent_interpretations: dict[str, str] = field(default_factory=dict)
    trust: TrustStructure = field(default_factory=TrustStructure)
    shots: int = 1
    seed: int = 0

    # -- lookups --

    def agent(self, name: str) -> AgentDecl:
        for a in self.agents:
            if a.name == name:
                return a
        raise ProtocolError(f"undeclared agent {name!r}")

    def system(self, name: str) -> SystemDecl:
        for s in self.systems:
            if s.name == name:
                return s
        raise ProtocolError(f"undeclared system {name!r}")

    def interpretation_for(self, agent: str) -> str:
        return self.agent_interpretations.get(agent, self.interpretation)

    def measure_step(self, agent: str) -> Measure | None:
        for s in self.steps:
            if isinstance(s, Measure) and s.agent == agent:
                return s
        return None

    def reason_step(self, agent: str) -> Reason | None:
        for s in self.steps:
            if isinstance(s, Reason) and s.agent == agent:
                return s
        return None

    def agent_basis(self, agent: str) -> str:
        m = self.measure_step(agent)
        return m.basis if m is not None else COMPUTATIONAL

    def agent_by_memory(self, memory: str) -> AgentDecl | None:
        for a in self.agents:
            if a.memory == memory:
                return a
        return None

    def agent_values(self, agent: AgentDecl) -> tuple[str, ...]:
        return outcome_values(self.agent_basis(agent.name), agent.outcomes)

    def registers(self) -> dict[str, RegisterInfo]:
        """Every addressable register: systems, agent memories, prediction qubits."""
        regs: dict[str, RegisterInfo] = {}
        for s in self.systems:
            regs[s.name] = RegisterInfo(s.name, "system", "", 1, ("0", "1"))
        for a in self.agents:
            basis = self.agent_basis(a.name)
            width = outcome_width(basis, a.outcomes)
            values = outcome_values(basis, 4 if basis == BELL else 2 ** width)
            regs[a.memory] = RegisterInfo(a.memory, "outcome", a.name, width, values, basis)
            for h in a.hypotheses:
                label = prediction_label(a.memory, h)
                regs[label] = RegisterInfo(label, "prediction", a.name, 1, ("0", "1"))
        return regs

    def settle_step(self, register: str) -> Step | None:
        """The step after which ``register`` carries the value a hypothesis refers to."""
        info = self.registers().get(register)
        if info is None:
            return None
        if info.role == "outcome":
            return self.measure_step(info.owner)
        if info.role == "prediction":
            return self.reason_step(info.owner)
        last = None
        for s in self.steps:
            if register in step_registers(s, self):
                last = s
        return last

    def queried(self, agent: str) -> list[tuple[Claim, SliceSpec]]:
        """Each declared hypothesis paired with the slice its infer step selects."""
        decl = self.agent(agent)
        slices: dict[str, SliceSpec] = {}
        for s in self.steps:
            if isinstance(s, InferAbout) and s.agent == agent:
                for reg in s.about:
                    slices.setdefault(reg, s.slice)
        return [(h, slices.get(h.register, SliceSpec())) for h in decl.hypotheses]

    def step_at(self, t: Fraction) -> Step:
        for s in self.steps:
            if s.time == t:
                return s
        raise ProtocolError(f"no step at t={format_time(t)}")

    # -- serialization --

    def serialize(self) -> str:
        lines = [f"name {self.name}"]
        for s in self.systems:
            line = f"system {s.name}"
            if s.amplitudes is not None:
                line += f" amp {_fmt_amps(s.amplitudes)}"
            lines.append(line)
        for a in self.agents:
            line = f"agent {a.name} memory {a.memory} outcomes {a.outcomes}"
            if a.hypotheses:
                line += " hypotheses " + ",".join(str(h) for h in a.hypotheses)
            lines.append(line)
        lines.append(f"interpretation {self.interpretation}")
        for agent, interp in self.agent_interpretations.items():
            lines.append(f"interpretation {interp} for {agent}")
        if self.trust.denied:
            for a, b in sorted(self.trust.denied):
                lines.append(f"trust deny {a},{b}")
        else:
            lines.append("trust trivial")
        lines.append(f"shots {self.shots}")
        lines.append(f"seed {self.seed}")
        lines.extend(s.render() for s in self.steps)
        return "\n".join(lines) + "\n"


def step_registers(step: Step, protocol: Protocol) -> set[str]:
    """Register names a step writes to (its non-control operands)."""
    if isinstance(step, (Prepare, CPrepare)):
        return {step.system}
    if isinstance(step, Apply):
        return {step.target}
    if isinstance(step, Measure):
        regs = {protocol.agent(step.agent).memory}
        if step.basis == BELL:
            regs |= set(step.targets)
        return regs
    if isinstance(step, (Reason, ReverseReason)):
        name = step.agent if isinstance(step, Reason) else step.subject
        a = protocol.agent(name)
        return {prediction_label(a.memory, h) for h in a.hypotheses}
    return set()


# -- parser ------------------------------------------------------------------


class _Line:
    """Tokenizer over one source line that remembers token columns."""

    def __init__(self, text: str, lineno: int):
        self.lineno = lineno
        self.tokens: list[tuple[str, int]] = [
            (m.group(0), m.start() + 1) for m in re.finditer(r"\S+", text)
        ]
        self.pos = 0

    def error(self, message: str, at: int | None = None) -> ProtocolError:
        idx = self.pos if at is None else at
        col = self.tokens[idx][1] if idx < len(self.tokens) else (
            self.tokens[-1][1] + len(self.tokens[-1][0]) if self.tokens else 1)
        return ProtocolError(message, self.lineno, col)

    def next(self, what: str) -> str:
        if self.pos >= len(self.tokens):
            raise self.error(f"expected {what}")
        tok = self.tokens[self.pos][0]
        self.pos += 1
        return tok

    def expect(self, keyword: str) -> None:
        tok = self.next(f"'{keyword}'")
        if tok != keyword:
            self.pos -= 1
            raise self.error(f"expected '{keyword}', got {tok!r}")

    def peek(self) -> str | None:
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def rest(self) -> str:
        toks = [t for t, _ in self.tokens[self.pos:]]
        self.pos = len(self.tokens)
        return " ".join(toks)

    def done(self) -> None:
        if self.pos < len(self.tokens):
            raise self.error(f"unexpected token {self.tokens[self.pos][0]!r}")


def _parse_amps(line: _Line) -> tuple[complex, complex]:
    vals = []
    for _ in range(4):
        tok = line.next("amplitude component")
        try:
            vals.append(parse_number(tok))
        except ValueError as e:
            line.pos -= 1
            raise line.error(str(e)) from None
    return complex(vals[0], vals[1]), complex(vals[2], vals[3])


def _parse_list(tok: str) -> tuple[str, ...]:
    return tuple(x for x in tok.split(",") if x)


_STEP_KINDS = ("prepare", "cprepare", "apply", "measure", "reason", "reverse", "infer", "halt_if", "compare")


def _parse_step(line: _Line, t: Fraction) -> Step:
    kind_at = line.pos
    kind = line.next("step kind")
    if kind == "prepare":
        system = line.next("system name")
        line.expect("amp")
        return Prepare(t, system, _parse_amps(line))
    if kind == "cprepare":
        system = line.next("system name")
        line.expect("control")
        control = line.next("control register")
        line.expect("gate")
        gate = line.next("gate name")
        if gate not in ("H", "X"):
            line.pos -= 1
            raise line.error(f"unsupported gate {gate!r}")
        return CPrepare(t, system, control, gate)
    if kind == "apply":
        actor = line.next("actor")
        line.expect("gate")
        gate = line.next("gate name")
        if gate not in ("H", "X"):
            line.pos -= 1
            raise line.error(f"unsupported gate {gate!r}")
        line.expect("target")
        target = line.next("target register")
        controls: tuple[str, ...] = ()
        if line.peek() == "control":
            line.next("control")
            controls = _parse_list(line.next("control registers"))
        return Apply(t, actor, gate, target, controls)
    if kind == "measure":
        agent = line.next("agent name")
        line.expect("targets")
        targets = _parse_list(line.next("target registers"))
        basis = COMPUTATIONAL
        if line.peek() == "basis":
            line.next("basis")
            basis = line.next("basis name")
            if basis not in (COMPUTATIONAL, BELL):
                line.pos -= 1
                raise line.error(f"unknown basis {basis!r}")
        return Measure(t, agent, targets, basis)
    if kind == "reason":
        return Reason(t, line.next("agent name"))
    if kind == "reverse":
        actor = line.next("actor")
        line.expect("reason")
        return ReverseReason(t, actor, line.next("agent name"))
    if kind == "infer":
        agent = line.next("agent name")
        line.expect("about")
        about = _parse_list(line.next("registers"))
        spec = SliceSpec()
        if line.peek() == "via":
            line.next("via")
            mode = line.next("slice spec")
            if mode == "steps":
                tok_at = line.pos
                tok = line.next("step times")
                try:
                    spec = SliceSpec(tuple(parse_time(x) for x in _parse_list(tok)))
                except ValueError as e:
                    raise line.error(str(e), tok_at) from None
            elif mode != "default":
                line.pos -= 1
                raise line.error(f"unknown slice spec {mode!r}")
        return InferAbout(t, agent, about, spec)
    if kind == "halt_if":
        text = line.rest()
        try:
            conds = tuple(Claim.parse(c) for c in text.split("&") if c.strip())
        except ValueError as e:
            raise line.error(str(e), kind_at + 1) from None
        if not conds:
            raise line.error("halt_if needs at least one condition")
        return HaltIf(t, conds)
    if kind == "compare":
        return Compare(t)
    raise line.error(f"unknown step kind {kind!r}", kind_at)


def parse(text: str) -> Protocol:
    """Parse protocol source text into a validated :class:`Protocol`."""
    proto = Protocol()
    denied: set[tuple[str, str]] = set()
    where: dict[int, int] = {}  # index in proto.steps / decl -> line number
    agent_lines: dict[str, int] = {}
    last_time: Fraction | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        line = _Line(body, lineno)
        head = line.next("statement")
        if head == "name":
            proto.name = line.next("protocol name")
        elif head == "system":
            name = line.next("system name")
            amps = None
            if line.peek() == "amp":
                line.next("amp")
                amps = _parse_amps(line)
            proto.systems.append(SystemDecl(name, amps))
        elif head == "agent":
            name = line.next("agent name")
            memory = name
            if line.peek() == "memory":
                line.next("memory")
                memory = line.next("memory label")
            line.expect("outcomes")
            k_at = line.pos
            try:
                k = int(line.next("outcome count"))
            except ValueError:
                raise line.error("outcome count must be an integer", k_at) from None
            if k < 1:
                raise line.error("outcome count must be positive", k_at)
            hyps: tuple[Claim, ...] = ()
            if line.peek() == "hypotheses":
                line.next("hypotheses")
                h_at = line.pos
                try:
                    hyps = tuple(Claim.parse(h) for h in _parse_list(line.next("hypotheses")))
                except ValueError as e:
                    raise line.error(str(e), h_at) from None
            proto.agents.append(AgentDecl(name, memory, k, hyps))
            agent_lines[name] = lineno
        elif head == "interpretation":
            interp = line.next("interpretation name")
            if line.peek() == "for":
                line.next("for")
                proto.agent_interpretations[line.next("agent name")] = interp
            else:
                proto.interpretation = interp
        elif head == "trust":
            mode = line.next("trust mode")
            if mode == "deny":
                pair = _parse_list(line.next("truster,trusted"))
                if len(pair) != 2:
                    line.pos -= 1
                    raise line.error("trust deny takes exactly two agents")
                denied.add((pair[0], pair[1]))
            elif mode != "trivial":
                line.pos -= 1
                raise line.error(f"unknown trust mode {mode!r}")
        elif head in ("shots", "seed"):
            at = line.pos
            try:
                value = int(line.next(head))
            except ValueError:
                raise line.error(f"{head} must be an integer", at) from None
            setattr(proto, head, value)
        elif head == "step":
            t_at = line.pos
            try:
                t = parse_time(line.next("time tag"))
            except ValueError as e:
                raise line.error(str(e), t_at) from None
            if last_time is not None and t <= last_time:
                raise line.error(
                    f"non-monotone time tag {format_time(t)} after {format_time(last_time)}", t_at)
            last_time = t
            proto.steps.append(_parse_step(line, t))
            where[len(proto.steps) - 1] = lineno
        else:
            line.pos -= 1
            raise line.error(f"unknown statement {head!r}")
        line.done()
    proto.trust = TrustStructure(frozenset(denied))
    validate(proto, where, agent_lines)
    return proto


def validate(proto: Protocol, step_lines: dict[int, int] | None = None,
             agent_lines: dict[str, int] | None = None) -> None:
    step_lines = step_lines or {}
    agent_lines = agent_lines or {}
    if not proto.systems:
        raise ProtocolError("no systems declared")
    names = [s.name for s in proto.systems] + [a.name for a in proto.agents]
    labels = [s.name for s in proto.systems] + [a.memory for a in proto.agents]
    for group in (names, labels):
        dup = {x for x in group if group.count(x) > 1}
        if dup:
            raise ProtocolError(f"duplicate declaration {sorted(dup)[0]!r}")
    agent_names = {a.name for a in proto.agents}
    for interp_agent in proto.agent_interpretations:
        if interp_agent not in agent_names:
            raise ProtocolError(f"interpretation bound to undeclared agent {interp_agent!r}")
    for a, b in proto.trust.denied:
        for x in (a, b):
            if x not in agent_names:
                raise ProtocolError(f"trust refers to undeclared agent {x!r}")

    def fail(i: int, msg: str) -> ProtocolError:
        return ProtocolError(msg, step_lines.get(i))

    def need_agent(i: int, name: str) -> None:
        if name not in agent_names:
            raise fail(i, f"reference to undeclared agent {name!r}")

    measured: set[str] = set()
    reasoned: set[str] = set()
    for i, s in enumerate(proto.steps):
        for attr in ("agent", "actor", "subject"):
            if hasattr(s, attr):
                need_agent(i, getattr(s, attr))
        if isinstance(s, Measure):
            if s.agent in measured:
                raise fail(i, f"agent {s.agent!r} measures more than once")
            measured.add(s.agent)
            if s.basis == BELL and len(s.targets) != 2:
                raise fail(i, "a bell measurement needs exactly two target qubits")
            if s.basis == COMPUTATIONAL and len(s.targets) != 1:
                raise fail(i, "a computational measurement takes one target qubit")
        elif isinstance(s, Reason):
            if s.agent in reasoned:
                raise fail(i, f"agent {s.agent!r} reasons more than once")
            reasoned.add(s.agent)
        elif isinstance(s, ReverseReason):
            if s.subject not in reasoned:
                raise fail(i, f"reverse of {s.subject!r} without a prior reason step")

    regs = proto.registers()
    qubit_regs = {r for r, info in regs.items() if info.width == 1}

    def need_reg(i: int, name: str, single: bool = True) -> None:
        if name not in regs:
            raise fail(i, f"reference to undeclared register {name!r}")
        if single and name not in qubit_regs:
            raise fail(i, f"register {name!r} is not a single qubit")

    for i, s in enumerate(proto.steps):
        if isinstance(s, (Prepare, CPrepare)):
            if s.system not in {x.name for x in proto.systems}:
                raise fail(i, f"reference to undeclared system {s.system!r}")
            if isinstance(s, CPrepare):
                need_reg(i, s.control)
        elif isinstance(s, Apply):
            need_reg(i, s.target)
            for c in s.controls:
                need_reg(i, c)
        elif isinstance(s, Measure):
            for reg in s.targets:
                need_reg(i, reg)
            if proto.agent(s.agent).memory in s.targets:
                raise fail(i, f"agent {s.agent!r} cannot measure its own memory")
        elif isinstance(s, InferAbout):
            for reg in s.about:
                need_reg(i, reg, single=False)
            if s.slice.times is not None:
                times = {x.time for x in proto.steps}
                for t in s.slice.times:
                    if t not in times:
                        raise fail(i, f"slice refers to missing step t={format_time(t)}")
        elif isinstance(s, HaltIf):
            for c in s.conditions:
                need_reg(i, c.register, single=False)
                if c.value not in regs[c.register].values:
                    raise fail(i, f"value {c.value!r} not allowed for register {c.register!r}")

    for a in proto.agents:
        for h in a.hypotheses:
            if h.register not in regs:
                raise ProtocolError(f"hypothesis {h} of {a.name!r} refers to undeclared register "
                                    f"{h.register!r}", agent_lines.get(a.name))
            if h.value not in regs[h.register].values:
                raise ProtocolError(f"hypothesis {h}: value not allowed for {h.register!r}",
                                    agent_lines.get(a.name))
            if regs[h.register].owner == a.name:
                raise ProtocolError(f"{a.name!r} cannot hold a hypothesis about its own registers",
                                    agent_lines.get(a.name))
            nested = parse_prediction_label(h.register)
            if nested is not None and nested[1].register not in regs:
                raise ProtocolError(f"nested hypothesis {h} refers to an unknown register",
                                    agent_lines.get(a.name))
        values = proto.agent_values(a)
        if len(values) > 2 ** outcome_width(proto.agent_basis(a.name), a.outcomes):
            raise ProtocolError(f"agent {a.name!r}: too many outcomes", agent_lines.get(a.name))
