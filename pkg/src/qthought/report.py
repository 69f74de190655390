"""Text and structured (JSON) rendering of run records."""

from __future__ import annotations

import json
from fractions import Fraction

from .agents import Verdict
from .runtime import RunRecord

FORMATS = ("text", "structured")


def render_structured(record: RunRecord) -> str:
    return json.dumps(record.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def parse_structured(text: str) -> RunRecord:
    return RunRecord.from_dict(json.loads(text))


def _fmt_p(p: float) -> str:
    return f"{p:.12g}"


def _fraction(p: float) -> str:
    """`` (1/12)`` when ``p`` is a small-denominator fraction to within 1e-9."""
    f = Fraction(p).limit_denominator(1000)
    if abs(float(f) - p) < 1e-9 and f.denominator > 1:
        return f" ({f})"
    return ""


def _claim(c, memories) -> str:
    reg = c.register.lower() if c.register in memories else c.register
    return f"{reg}={c.value}"


def render_text(record: RunRecord) -> str:
    mem = record.memories
    out = [
        f"protocol: {record.protocol}",
        f"interpretation: {record.interpretation}",
        f"seed: {record.seed}",
    ]
    if record.tables:
        out.append("")
        out.append("inference tables:")
        for owner, table in sorted(record.tables.items()):
            out.append(f"  {owner} ({table.source})")
            for (b, h), v in sorted(table.entries.items()):
                mark = "certain" if v is Verdict.CERTAIN else v.value
                out.append(f"    {table.register.lower()}={b} ⇒ {_claim(h, mem)}: {mark}")
    if record.events:
        out.append("")
        out.append("exact probabilities:")
        for name, p in record.events.items():
            out.append(f"  P({name}) = {_fmt_p(p)}{_fraction(p)}")
    if record.support:
        out.append("")
        label = "post-selected outcomes:" if record.halt else "outcomes:"
        out.append(label)
        for s in record.support:
            rec = ", ".join(f"{k}={v}" for k, v in s["outcomes"].items())
            out.append(f"  {_fmt_p(s['probability'])}  {rec}")
    if record.trials:
        out.append("")
        if record.halt:
            out.append(f"shots: {record.trials} trials, {record.halts} halted")
        else:
            out.append(f"shots: {record.trials} trials")
        for key, n in record.counts().items():
            out.append(f"  {n:>7}  {key}")
    if record.chains:
        out.append("")
        out.append("derivation chains:")
        for c in record.chains:
            out.append(f"  {' → '.join(c.owners)}: {c.display(mem)}")
    if record.trials or record.support:
        out.append("")
        if record.reports:
            distinct = {}
            for r in record.reports:
                distinct.setdefault((r.severity, r.predicted, r.observed, r.chain.display(mem)), 0)
                distinct[(r.severity, r.predicted, r.observed, r.chain.display(mem))] += 1
            out.append(f"contradictions: {len(record.reports)}")
            for (sev, pred, obs, chain), n in sorted(distinct.items(), key=lambda kv: str(kv[0])):
                out.append(f"  [{sev}] x{n} predicted {_claim(pred, mem)} via {chain}; observed {_claim(obs, mem)}")
        else:
            out.append("contradictions: none")
    return "\n".join(out) + "\n"


def render_report(record: RunRecord, fmt: str = "text") -> bytes:
    if fmt == "text":
        return render_text(record).encode("utf-8")
    if fmt == "structured":
        return render_structured(record).encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}")
