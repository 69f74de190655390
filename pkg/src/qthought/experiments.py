"""Bundled protocol fixtures."""

from __future__ import annotations

from importlib import resources

from .errors import QThoughtError
from .protocol import Protocol, parse

# The five reference settings plus the three routes through the FR argument.
FIXTURES = (
    "simple",
    "bell",
    "sequential",
    "bob-measures-alice",
    "wigner-friend",
    "fr",
    "fr-brain",
    "fr-nested",
)


def fixture_text(name: str) -> str:
    if name not in FIXTURES:
        raise QThoughtError(f"unknown fixture {name!r} (available: {', '.join(FIXTURES)})")
    return resources.files("qthought").joinpath("fixtures", f"{name}.qt").read_text(encoding="utf-8")


def load_fixture(name: str) -> Protocol:
    return parse(fixture_text(name))
