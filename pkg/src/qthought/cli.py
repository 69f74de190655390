"""Command-line front end.

Exit codes: 0 consistent, 2 contradictions found, 1 usage or input error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import QThoughtError
from .experiments import FIXTURES, load_fixture
from .interpretations import available_interpretations, get_interpretation
from .protocol import parse
from .report import FORMATS, render_report
from .runtime import final_state, run_protocol
from .statevector import dump_state

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONTRADICTION = 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qthought", description="Simulate multi-agent quantum thought experiments.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--protocol", type=Path, help="protocol file to run")
    src.add_argument("--fixture", choices=FIXTURES, help="bundled protocol to run")
    p.add_argument("--interpretation", help=f"one of: {', '.join(available_interpretations())}")
    p.add_argument("--shots", type=int, help="number of sampled trials")
    p.add_argument("--seed", type=int, help="base seed (default: from the protocol)")
    p.add_argument("--exact", action="store_true", help="exact probabilities, no sampling")
    p.add_argument("--output", type=Path, help="write the report here instead of stdout")
    p.add_argument("--format", choices=FORMATS, default="text")
    p.add_argument("--dump-state", action="store_true", help="print the final coherent state to stderr")
    return p


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    try:
        if args.protocol is not None:
            try:
                text = args.protocol.read_text(encoding="utf-8")
            except OSError as e:
                raise QThoughtError(f"cannot read protocol file: {e.strerror}: {args.protocol}") from None
            protocol = parse(text)
        else:
            protocol = load_fixture(args.fixture)
        if args.interpretation is not None:
            get_interpretation(args.interpretation)
        if args.shots is not None and args.shots < 1:
            raise QThoughtError("--shots must be at least 1")
        shots = args.shots
        if not args.exact and shots is None:
            shots = protocol.shots
        record = run_protocol(protocol, args.interpretation, seed=args.seed, shots=shots, exact=args.exact)
        if args.dump_state:
            sys.stderr.write(dump_state(final_state(protocol, args.interpretation)))
        data = render_report(record, args.format)
        if args.output is not None:
            args.output.write_bytes(data)
        else:
            sys.stdout.buffer.write(data)
            sys.stdout.flush()
    except QThoughtError as e:
        print(f"qthought: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_CONTRADICTION if record.reports else EXIT_OK


def main() -> None:
    sys.exit(run_cli())
