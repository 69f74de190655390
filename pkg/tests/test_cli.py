import json
import subprocess
import sys
from pathlib import Path

import pytest

from qthought.cli import EXIT_CONTRADICTION, EXIT_ERROR, EXIT_OK, build_parser, run_cli
from qthought.experiments import fixture_text
from qthought.report import parse_structured, render_structured

GOLDEN = Path(__file__).parent / "golden"


def cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "qthought", *args], capture_output=True,
                          cwd=cwd, timeout=300)


def test_fr_exact_exits_2_and_reports_twelfth():
    r = cli("--fixture", "fr", "--exact")
    assert r.returncode == EXIT_CONTRADICTION
    out = r.stdout.decode()
    assert "P(U=ok & W=ok) = 0.0833333333333 (1/12)" in out
    assert "P(U=ok) = 0.166666666667 (1/6)" in out
    assert "u=ok ⇒ b=1 ⇒ a=1 ⇒ w=fail" in out
    assert "contradictions: 1" in out


def test_bell_shots_exit_0():
    r = cli("--fixture", "bell", "--shots", "1000", "--seed", "7")
    assert r.returncode == EXIT_OK
    assert "contradictions: none" in r.stdout.decode()


def test_fr_collapse_is_consistent(capsysbinary):
    code = run_cli(["--fixture", "fr", "--interpretation", "collapse", "--exact"])
    out = capsysbinary.readouterr().out.decode()
    assert code == EXIT_OK
    assert not any(line.rstrip().endswith("⇒ w=fail") for line in out.splitlines())
    assert "P(U=ok & W=ok) = 0.25 (1/4)" in out
    assert "contradictions: none" in out


@pytest.mark.parametrize("args, fragment", [
    (["--fixture", "bell", "--interpretation", "many-worlds"], "unknown interpretation"),
    (["--fixture", "bell", "--shots", "0"], "--shots"),
    (["--protocol", "/nonexistent/x.qt"], "cannot read protocol file"),
])
def test_error_exits(args, fragment, capsys):
    assert run_cli(args) == EXIT_ERROR
    assert fragment in capsys.readouterr().err


def test_usage_errors_exit_1(capsys):
    assert run_cli([]) == EXIT_ERROR
    assert run_cli(["--fixture", "nope"]) == EXIT_ERROR
    assert run_cli(["--fixture", "bell", "--protocol", "x"]) == EXIT_ERROR
    assert run_cli(["--help"]) == EXIT_OK


def test_parse_error_shows_location(tmp_path, capsys):
    bad = tmp_path / "bad.qt"
    bad.write_text(fixture_text("simple") + "step 9 measure Eve targets R\n")
    assert run_cli(["--protocol", str(bad)]) == EXIT_ERROR
    err = capsys.readouterr().err
    assert "line 17" in err and "Eve" in err


def test_protocol_file_and_output(tmp_path):
    src = tmp_path / "bell.qt"
    src.write_text(fixture_text("bell"))
    out = tmp_path / "report.json"
    code = run_cli(["--protocol", str(src), "--exact", "--format", "structured", "--output", str(out)])
    assert code == EXIT_OK
    data = json.loads(out.read_text())
    assert data["exact"] is True and data["reports"] == []
    assert parse_structured(out.read_text()).to_dict() == data


def test_dump_state_goes_to_stderr():
    r = cli("--fixture", "wigner-friend", "--exact", "--dump-state")
    assert r.returncode == EXIT_OK
    err = r.stderr.decode().splitlines()
    assert err[0] == "# R A"
    assert err[1:] == ["|00⟩ 0.707106781187 0", "|11⟩ 0.707106781187 0"]
    assert "|00⟩" not in r.stdout.decode()


def test_parser_defaults():
    args = build_parser().parse_args(["--fixture", "fr"])
    assert args.format == "text" and args.exact is False and args.shots is None


# -- golden files -------------------------------------------------------------------


@pytest.mark.parametrize("args, golden", [
    (["--fixture", "bell", "--shots", "1000", "--seed", "7"], "bell-shots1000-seed7.txt"),
    (["--fixture", "fr", "--exact"], "fr-exact.txt"),
    (["--fixture", "fr", "--exact", "--format", "structured"], "fr-exact.json"),
])
def test_golden_output_is_stable(args, golden, capsysbinary):
    run_cli(args)
    assert capsysbinary.readouterr().out == (GOLDEN / golden).read_bytes()


def test_structured_roundtrip_is_byte_identical():
    text = (GOLDEN / "fr-exact.json").read_text(encoding="utf-8")
    assert render_structured(parse_structured(text)) == text
