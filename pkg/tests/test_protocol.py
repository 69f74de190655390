from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qthought.agents import Claim
from qthought.errors import ProtocolError
from qthought.experiments import FIXTURES, fixture_text, load_fixture
from qthought.protocol import (
    CPrepare,
    HaltIf,
    InferAbout,
    Measure,
    ReverseReason,
    SliceSpec,
    format_time,
    parse,
    parse_number,
    parse_time,
    step_registers,
)

MINIMAL = """\
system R amp sqrt(1/2) 0 sqrt(1/2) 0
agent Alice memory A outcomes 2
step 1 measure Alice targets R basis computational
"""


@pytest.mark.parametrize("text, value", [
    ("sqrt(1/3)", 0.5773502691896257),
    ("-sqrt(2/3)", -0.816496580927726),
    ("0.5", 0.5),
    ("1/4", 0.25),
    ("0", 0.0),
])
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value, abs=1e-15)


@pytest.mark.parametrize("bad", ["sqrt(-1)", "abc", "1/0", ""])
def test_parse_number_rejects(bad):
    with pytest.raises(ValueError):
        parse_number(bad)


@pytest.mark.parametrize("text, rendered", [
    ("1", "1"), ("2.9", "2.9"), ("0.25", "0.25"), ("1/3", "1/3"), ("-1.5", "-1.5"), ("10", "10"),
])
def test_time_tags(text, rendered):
    t = parse_time(text)
    assert format_time(t) == rendered
    assert parse_time(format_time(t)) == t


@settings(max_examples=200, deadline=None)
@given(num=st.integers(-10 ** 6, 10 ** 6), exp2=st.integers(0, 6), exp5=st.integers(0, 6))
def test_time_tag_roundtrip(num, exp2, exp5):
    t = Fraction(num, 2 ** exp2 * 5 ** exp5)
    assert parse_time(format_time(t)) == t


# -- fixtures ------------------------------------------------------------------------


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_parses_and_roundtrips(name):
    proto = load_fixture(name)
    again = parse(proto.serialize())
    assert again == proto
    assert again.serialize() == proto.serialize()


def test_fr_fixture_contents():
    fr = load_fixture("fr")
    assert [a.name for a in fr.agents] == ["Alice", "Bob", "Ursula", "Wigner"]
    assert fr.agent("Ursula").hypotheses == (Claim("B", "1"),)
    assert fr.agent_basis("Wigner") == "bell"
    assert fr.agent_values(fr.agent("Ursula")) == ("fail", "ok")
    halts = [s for s in fr.steps if isinstance(s, HaltIf)]
    assert halts[0].conditions == (Claim("U", "ok"), Claim("W", "ok"))
    assert fr.shots == 12000 and fr.seed == 0
    assert fr.system("R").amplitudes[1] == pytest.approx(complex((2 / 3) ** 0.5))


def test_queried_slices():
    fr = load_fixture("fr")
    (claim, spec), = fr.queried("Ursula")
    assert claim == Claim("B", "1")
    assert spec.times == tuple(Fraction(x) for x in ("1", "2", "2.4", "3"))
    assert str(spec) == "steps 1,2,2.4,3"
    simple = load_fixture("simple")
    assert [s for _, s in simple.queried("Bob")] == [SliceSpec(), SliceSpec()]
    assert str(SliceSpec()) == "default"


def test_registers_and_settle_steps():
    fr = load_fixture("fr")
    regs = fr.registers()
    assert regs["U"].width == 2 and regs["U"].role == "outcome"
    assert regs["P_B{A=1}"].role == "prediction" and regs["P_B{A=1}"].owner == "Bob"
    assert regs["R"].role == "system"
    assert fr.settle_step("B").time == Fraction("2.4")
    assert fr.settle_step("P_B{A=1}").time == Fraction("2.5")
    assert fr.settle_step("S").time == Fraction(4)  # Wigner's Bell copy writes S last
    assert fr.settle_step("nope") is None


def test_step_registers():
    fr = load_fixture("fr")
    assert step_registers(fr.step_at(Fraction(2)), fr) == {"S"}
    assert step_registers(fr.step_at(Fraction(3)), fr) == {"U", "R", "A"}
    assert step_registers(fr.step_at(Fraction(1)), fr) == {"A"}
    rev = fr.step_at(Fraction("3.9"))
    assert isinstance(rev, ReverseReason)
    assert step_registers(rev, fr) == {"P_B{A=0}", "P_B{A=1}"}
    assert step_registers(fr.step_at(Fraction(5)), fr) == set()


def test_step_render_lines():
    fr = load_fixture("fr")
    assert fr.step_at(Fraction(3)).render() == "step 3 measure Ursula targets R,A basis bell"
    assert fr.step_at(Fraction(2)).render() == "step 2 cprepare S control A gate H"
    assert fr.step_at(Fraction("2.6")).render() == "step 2.6 infer Bob about A via steps 1,2,2.4"
    assert fr.step_at(Fraction("3.9")).render() == "step 3.9 reverse Wigner reason Bob"
    assert fr.step_at(Fraction(5)).render() == "step 5 halt_if U=ok & W=ok"


def test_fixture_text_is_packaged():
    assert fixture_text("fr").startswith("#")
    with pytest.raises(Exception):
        fixture_text("no-such-fixture")


# -- declarations order ---------------------------------------------------------------


def test_minimal_defaults():
    p = parse(MINIMAL)
    assert p.interpretation == "neo-copenhagen" and p.trust.denied == frozenset()
    assert p.shots == 1 and p.seed == 0 and p.name == "protocol"
    assert isinstance(p.steps[0], Measure)


def test_per_agent_interpretation_and_trust_deny():
    text = MINIMAL.replace(
        "step 1", "interpretation collapse for Alice\ntrust deny Alice,Alice\nstep 1")
    p = parse(text)
    assert p.interpretation_for("Alice") == "collapse"
    assert ("Alice", "Alice") in p.trust.denied
    assert parse(p.serialize()) == p


def test_infer_default_and_cprepare_x():
    text = MINIMAL + "step 2 cprepare R control A gate X\nstep 3 infer Alice about R via default\n"
    with pytest.raises(ProtocolError, match="own"):
        parse(text.replace("outcomes 2", "outcomes 2 hypotheses A=1"))
    p = parse(text)
    assert isinstance(p.steps[1], CPrepare) and p.steps[1].gate == "X"
    assert isinstance(p.steps[2], InferAbout) and p.steps[2].slice == SliceSpec()


# -- errors --------------------------------------------------------------------------


def _error(text: str) -> ProtocolError:
    with pytest.raises(ProtocolError) as e:
        parse(text)
    return e.value


def test_empty_file():
    assert "no systems" in str(_error(""))
    assert "no systems" in str(_error("# only a comment\n\n"))


def test_undeclared_agent_reports_line():
    err = _error(MINIMAL + "step 2 measure Eve targets R basis computational\n")
    assert "Eve" in str(err)
    assert err.line == 4


def test_undeclared_register_in_hypothesis():
    err = _error(MINIMAL.replace("outcomes 2", "outcomes 2 hypotheses Z=1"))
    assert "Z" in str(err) and err.line == 2


@pytest.mark.parametrize("tags", [("2", "1"), ("1", "1"), ("1.5", "1.25")])
def test_non_monotone_time_tags(tags):
    text = MINIMAL.replace("step 1", f"step {tags[0]}") + f"step {tags[1]} compare\n"
    err = _error(text)
    assert "non-monotone" in str(err)
    assert err.line == 4 and err.column == 6


@pytest.mark.parametrize("line, fragment, column", [
    ("step 2 teleport Alice", "unknown step kind", 8),
    ("frobnicate", "unknown statement", 1),
    ("step 2 measure Alice targets R basis hadamard", "unknown basis", 38),
    ("step 2 cprepare R control A gate Z", "unsupported gate", 34),
    ("step x compare", "bad time tag", 6),
    ("shots many", "integer", 7),
    ("trust maybe", "unknown trust mode", 7),
])
def test_syntax_errors_carry_columns(line, fragment, column):
    err = _error(MINIMAL + line + "\n")
    assert fragment in str(err)
    assert err.line == 4 and err.column == column
    assert "line 4" in str(err)


@pytest.mark.parametrize("extra, fragment", [
    ("step 2 measure Alice targets R basis computational", "more than once"),
    ("step 2 measure Alice targets R basis bell", "more than once"),
    ("step 2 reverse Alice reason Alice", "without a prior reason"),
    ("step 2 halt_if A=7", "not allowed"),
    ("step 2 infer Alice about R via steps 9", "missing step"),
    ("step 2 cprepare Q control A gate H", "undeclared system"),
])
def test_semantic_errors(extra, fragment):
    assert fragment in str(_error(MINIMAL + extra + "\n"))


def test_bell_arity():
    text = MINIMAL.replace("targets R basis computational", "targets R basis bell")
    assert "two target" in str(_error(text))


def test_duplicate_declarations():
    assert "duplicate" in str(_error(MINIMAL + "agent Alice memory Q outcomes 2\n"))
    assert "duplicate" in str(_error("system A\n" + MINIMAL))  # memory label clashes with a system


def test_measuring_own_memory_rejected():
    text = MINIMAL + "agent Bob memory B outcomes 2\nstep 2 measure Alice targets A\n"
    assert "more than once" in str(_error(text))
    text = MINIMAL.replace("targets R", "targets A")
    assert "own memory" in str(_error(text))
