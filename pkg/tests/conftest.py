import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = range(1, 10)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
SUITE_LIMIT = 300.0  # seconds, the whole suite on a laptop
_session_start = [0.0]


def record_acceptance(n: int, ok: bool, detail: str) -> None:
    """Several tests may feed one criterion; it passes only if all of them do."""
    if n in ACCEPTANCE:
        prev_ok, prev_detail = ACCEPTANCE[n]
        ACCEPTANCE[n] = (prev_ok and ok, f"{prev_detail}; {detail}")
    else:
        ACCEPTANCE[n] = (ok, detail)


def pytest_sessionstart(session):
    _session_start[0] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    if 9 in ACCEPTANCE:
        elapsed = time.perf_counter() - _session_start[0]
        record_acceptance(9, elapsed < SUITE_LIMIT, f"suite {elapsed:.0f}s < {SUITE_LIMIT:.0f}s")
    terminalreporter.section("acceptance criteria")
    for n in CRITERIA:
        ok, detail = ACCEPTANCE.get(n, (False, "not run"))
        terminalreporter.write_line(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'}  {detail}")
