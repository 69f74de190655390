"""Combining certain inferences across agents, and contradiction detection.

Knowledge composes by the distribution rule: an agent that knows ``x => y``
and knows (or trusts someone who knows) ``y => z`` also knows ``x => z``.
A claim about another agent's prediction register, ``P_B{a=1}=1``, reads as
"B knows a=1" and unwraps to ``a=1`` when the current knower trusts B.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .agents import Claim, InferenceTable, Verdict, parse_prediction_label
from .errors import TrustDenied


@dataclass(frozen=True)
class TrustStructure:
    """Total trust minus an explicit denylist of ``(truster, trusted)`` pairs."""

    denied: frozenset[tuple[str, str]] = frozenset()

    def allows(self, truster: str, trusted: str) -> bool:
        if truster == trusted:
            return True
        return (truster, trusted) not in self.denied

    def deny(self, truster: str, trusted: str) -> "TrustStructure":
        return TrustStructure(self.denied | {(truster, trusted)})

    @classmethod
    def trivial(cls) -> "TrustStructure":
        return cls()


@dataclass(frozen=True)
class Link:
    """One step ``antecedent => consequent`` known by ``owner``.

    ``kind`` is ``inference`` for a certain table entry, ``trust`` for
    unwrapping a claim about someone's prediction register, and ``assertion``
    for a prediction read off a live register.  ``depth`` counts how many
    knowledge operators were stripped to reach this link.
    """

    owner: str
    antecedent: Claim | None
    consequent: Claim
    kind: str = "inference"
    source: str = ""
    depth: int = 0

    def to_dict(self) -> dict:
        return {
            "owner": self.owner,
            "antecedent": None if self.antecedent is None else str(self.antecedent),
            "consequent": str(self.consequent),
            "kind": self.kind,
            "source": self.source,
            "depth": self.depth,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Link":
        ante = d["antecedent"]
        return cls(d["owner"], None if ante is None else Claim.parse(ante),
                   Claim.parse(d["consequent"]), d["kind"], d.get("source", ""), d.get("depth", 0))


@dataclass(frozen=True)
class InferenceChain:
    links: tuple[Link, ...]

    @property
    def start(self) -> Claim:
        first = self.links[0]
        return first.antecedent if first.antecedent is not None else first.consequent

    @property
    def conclusion(self) -> Claim:
        return self.links[-1].consequent

    @property
    def owners(self) -> tuple[str, ...]:
        return tuple(link.owner for link in self.links)

    def claims(self) -> list[Claim]:
        out = [self.start]
        for link in self.links:
            if link.antecedent is not None:
                out.append(link.consequent)
        return out

    def display(self, memories: Iterable[str] = ()) -> str:
        """Render as ``u=ok ⇒ b=1 ⇒ ...``; agent memory registers are lowercased."""
        mem = set(memories)

        def fmt(c: Claim) -> str:
            reg = c.register.lower() if c.register in mem else c.register
            return f"{reg}={c.value}"

        return " ⇒ ".join(fmt(c) for c in self.claims())

    def to_dict(self) -> dict:
        return {"links": [link.to_dict() for link in self.links]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "InferenceChain":
        return cls(tuple(Link.from_dict(x) for x in d["links"]))


def unwrap(claim: Claim, owners: Mapping[str, str]) -> tuple[str, Claim] | None:
    """``P_B{a=1}=1`` -> ``(owner of B, a=1)``; ``None`` if not an asserted prediction."""
    parsed = parse_prediction_label(claim.register)
    if parsed is None or claim.value != "1":
        return None
    memory, inner = parsed
    owner = owners.get(memory)
    if owner is None:
        return None
    return owner, inner


def identity_table(register: str, values: Sequence[str], owner: str) -> InferenceTable:
    entries = {(str(v), Claim(register, str(v))): Verdict.CERTAIN for v in values}
    return InferenceTable(owner, register, entries, source="identity")


def combine(t1: InferenceTable, t2: InferenceTable, trust: TrustStructure,
            owners: Mapping[str, str] | None = None) -> InferenceTable:
    """Compose ``t1: x => y`` with ``t2: y => z`` into ``x => z`` owned by ``t1.owner``."""
    if not trust.allows(t1.owner, t2.owner):
        raise TrustDenied(t1.owner, t2.owner)
    owners = owners or {}
    out: dict[tuple[str, Claim], Verdict] = {}
    for x, y in t1.certain():
        mids = [y]
        inner = unwrap(y, owners)
        if inner is not None:
            mids.append(inner[1])
        for mid in mids:
            if mid.register != t2.register:
                continue
            for v, z in t2.certain():
                if v == mid.value:
                    out[(x, z)] = Verdict.CERTAIN
    source = f"{t1.source or t1.owner} ∘ {t2.source or t2.owner}"
    return InferenceTable(t1.owner, t1.register, out, source)


def _steps(claim: Claim, knower: str, depth: int, tables: Sequence[InferenceTable],
           trust: TrustStructure, owners: Mapping[str, str]):
    inner = unwrap(claim, owners)
    if inner is not None and trust.allows(knower, inner[0]):
        yield Link(inner[0], claim, inner[1], "trust", f"prediction register of {inner[0]}", depth + 1)
    for t in tables:
        if t.register != claim.register or not trust.allows(knower, t.owner):
            continue
        for v, z in t.certain():
            if v == claim.value:
                yield Link(t.owner, claim, z, "inference", t.source, depth)


def derive_conclusions(start: Claim, knower: str, tables: Sequence[InferenceTable],
                       trust: TrustStructure, owners: Mapping[str, str] | None = None,
                       prefix: Sequence[Link] = ()) -> list[InferenceChain]:
    """Every trust-respecting chain from ``start``, shortest first.

    ``knower`` is the agent holding ``start``.  Chains never revisit a claim.
    """
    owners = owners or {}
    found: list[InferenceChain] = []
    frontier: list[tuple[tuple[Link, ...], Claim, str, int]] = [(tuple(prefix), start, knower, 0)]
    while frontier:
        nxt = []
        for links, claim, who, depth in frontier:
            seen = {start} | {link.consequent for link in links}
            for link in _steps(claim, who, depth, tables, trust, owners):
                if link.consequent in seen:
                    continue
                chain = links + (link,)
                found.append(InferenceChain(chain))
                nxt.append((chain, link.consequent, link.owner, link.depth))
        frontier = nxt
    return found


def derive_chain(tables: Sequence[InferenceTable], trust: TrustStructure, start: Claim,
                 goal: str, owners: Mapping[str, str] | None = None,
                 knower: str | None = None) -> InferenceChain | None:
    """Shortest chain from ``start`` to a certain claim about register ``goal``.

    ``knower`` defaults to the owner of the table whose register is ``start``.
    """
    if knower is None:
        knower = next((t.owner for t in tables if t.register == start.register), None)
        if knower is None:
            return None
    for chain in derive_conclusions(start, knower, tables, trust, owners):
        if chain.conclusion.register == goal:
            return chain
    return None


@dataclass(frozen=True)
class ContradictionReport:
    run_id: int
    predicted: Claim
    chain: InferenceChain
    observed: Claim
    evidence: str
    severity: str  # prediction-vs-outcome | prediction-vs-prediction
    other_chain: InferenceChain | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "predicted": str(self.predicted),
            "chain": self.chain.to_dict(),
            "observed": str(self.observed),
            "evidence": self.evidence,
            "severity": self.severity,
            "other_chain": None if self.other_chain is None else self.other_chain.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ContradictionReport":
        other = d.get("other_chain")
        return cls(d["run_id"], Claim.parse(d["predicted"]), InferenceChain.from_dict(d["chain"]),
                   Claim.parse(d["observed"]), d["evidence"], d["severity"],
                   None if other is None else InferenceChain.from_dict(other))


@dataclass(frozen=True)
class Assertion:
    """A live prediction register reading 1: ``owner`` asserts ``claim``."""

    owner: str
    memory: str
    claim: Claim


def assertion_chains(assertion: Assertion, recorded: Mapping[str, str],
                     tables: Sequence[InferenceTable], trust: TrustStructure,
                     owners: Mapping[str, str]) -> list[InferenceChain]:
    """Chains supporting an asserted prediction and everything it entails.

    When the owner's memory is still on record the chain starts from it
    (``u=ok => b=1 ...``); otherwise from the assertion itself.
    """
    if assertion.memory in recorded:
        start = Claim(assertion.memory, recorded[assertion.memory])
        head = Link(assertion.owner, start, assertion.claim, "assertion",
                    f"prediction register of {assertion.owner}")
    else:
        start = assertion.claim
        head = Link(assertion.owner, None, assertion.claim, "assertion",
                    f"prediction register of {assertion.owner}")
    chains = [InferenceChain((head,))]
    chains += derive_conclusions(assertion.claim, assertion.owner, tables, trust, owners, (head,))
    return chains


def check_consistency(recorded: Mapping[str, str], assertions: Sequence[Assertion],
                      tables: Sequence[InferenceTable], trust: TrustStructure,
                      owners: Mapping[str, str], run_id: int = 0) -> list[ContradictionReport]:
    """Compare everything the asserted predictions entail against the records.

    ``recorded`` maps live register names to their measured values.  One
    report per distinct conflicting (conclusion, observation) pair.
    """
    reports: dict[tuple, ContradictionReport] = {}
    conclusions: dict[Claim, InferenceChain] = {}
    for a in assertions:
        for chain in assertion_chains(a, recorded, tables, trust, owners):
            conclusions.setdefault(chain.conclusion, chain)
    for claim in sorted(conclusions):
        chain = conclusions[claim]
        seen = recorded.get(claim.register)
        if seen is not None and seen != claim.value:
            key = ("outcome", claim, seen)
            reports.setdefault(key, ContradictionReport(
                run_id, claim, chain, Claim(claim.register, seen),
                f"recorded value of {claim.register}", "prediction-vs-outcome"))
    by_register: dict[str, list[Claim]] = {}
    for claim in sorted(conclusions):
        by_register.setdefault(claim.register, []).append(claim)
    for reg, claims in sorted(by_register.items()):
        if reg in recorded:
            continue  # already judged against the record itself
        for i, c1 in enumerate(claims):
            for c2 in claims[i + 1:]:
                if c1.value != c2.value:
                    reports.setdefault(("prediction", c1, c2), ContradictionReport(
                        run_id, c1, conclusions[c1], c2, "conflicting derived prediction",
                        "prediction-vs-prediction", conclusions[c2]))
    return list(reports.values())
