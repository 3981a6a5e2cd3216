"""Line-oriented trace records with a digest over the normalized stream.

A trace is the full account of one sale run: the normalized scenario it
was produced from, every transaction with its outcome, every iteration
of the automatic-withdrawal loop, an end-of-block snapshot per stage,
and the final allocations.  One record per line, tab-separated fields,
first field the record tag; integers are minimal units, rationals are
rendered ``num/den``.  Two runs of the same scenario produce byte-equal
bodies, and the digest line pins the body for replay verification.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ParseError

FORMAT_TAG = "ico-trace"
FORMAT_VERSION = "1"


def fmt(value) -> str:
    """Render one field value: int, Fraction, list of names, None or str."""
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    if isinstance(value, (list, tuple)):
        return "+".join(str(v) for v in value) if value else "-"
    return str(value)


def parse_amount(text: str, line: int, column: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"expected an integer amount, got {text!r}", line, column) from None


def parse_fraction(text: str, line: int, column: int) -> Fraction:
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return Fraction(int(num), int(den))
        return Fraction(int(text))
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"expected an integer or num/den rational, got {text!r}",
                         line, column) from None


def split_kv(fields: list[str], line_no: int, first_column: int = 1) -> dict[str, str]:
    """Parse trailing ``key=value`` fields, rejecting malformed ones."""
    out: dict[str, str] = {}
    column = first_column
    for raw in fields:
        if "=" not in raw:
            raise ParseError(f"expected key=value, got {raw!r}", line_no, column)
        key, value = raw.split("=", 1)
        if not key or key in out:
            raise ParseError(f"bad or duplicate key in {raw!r}", line_no, column)
        out[key] = value
        column += len(raw) + 1
    return out


class TraceBuilder:
    """Accumulates body lines during a run."""

    def __init__(self, scenario_lines: list[str]) -> None:
        self.lines: list[str] = [f"{FORMAT_TAG}\t{FORMAT_VERSION}"]
        for line in scenario_lines:
            self.lines.append(f"scn\t{line}")
        self._seq = 0

    def _emit(self, *fields) -> None:
        self.lines.append("\t".join(fmt(f) for f in fields))

    def event(self, stage: int, actor: str, action: str, outcome: str,
              details: dict) -> None:
        self._seq += 1
        kv = [f"{k}={fmt(v)}" for k, v in details.items()]
        self._emit("ev", stage, self._seq, actor, action, outcome, *kv)

    def step3(self, index: int, batch) -> None:
        self._emit(
            "s3", batch.stage, index, batch.kind,
            f"cap={fmt(batch.cap)}", f"n={fmt(batch.size)}",
            f"live={fmt(batch.live_capital)}", f"q={fmt(batch.q)}",
            f"out={fmt(batch.removed)}", f"credited={fmt(batch.credited)}",
            f"addrs={fmt([a for a, _ in batch.refunds])}",
        )

    def block(self, summary) -> None:
        for i, batch in enumerate(summary.batches, start=1):
            self.step3(i, batch)
        self._emit(
            "blk", summary.stage,
            f"V={fmt(summary.V)}", f"gas={fmt(summary.gas_spent)}",
            f"boundary={fmt(summary.boundary)}", f"carry={fmt(summary.carryover)}",
            f"dormant={fmt(summary.dormant)}", f"permanent={fmt(summary.permanent)}",
            f"pending={fmt(summary.pending_refunds)}",
            f"escrow={fmt(summary.fees_escrowed)}",
            f"fees_paid={fmt(summary.fees_paid)}", f"refunds={fmt(summary.refunds)}",
            f"proceeds={fmt(summary.proceeds)}", f"dust={fmt(summary.dust)}",
            f"deposits={fmt(summary.deposits)}",
        )

    def allocation(self, address: str, tokens: int, retained: int,
                   refund_final: int, status: str) -> None:
        self._emit("alloc", address, f"tokens={fmt(tokens)}",
                   f"retained={fmt(retained)}", f"refund_final={fmt(refund_final)}",
                   f"status={status}")

    def final(self, v: int, stage: int, proceeds: int, dust: int) -> None:
        self._emit("fin", f"V={fmt(v)}", f"stage={fmt(stage)}",
                   f"proceeds={fmt(proceeds)}", f"dust={fmt(dust)}")

    def build(self) -> "Trace":
        return Trace(body=list(self.lines))


def body_digest(body: list[str]) -> str:
    h = hashlib.sha256()
    for line in body:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class Trace:
    """A completed run: body records plus optional audit/digest footer."""

    body: list[str]
    audit_lines: list[str] = field(default_factory=list)

    @property
    def digest(self) -> str:
        return body_digest(self.body)

    @property
    def scenario_lines(self) -> list[str]:
        return [line[4:] for line in self.body if line.startswith("scn\t")]

    def records(self, tag: str) -> list[list[str]]:
        prefix = tag + "\t"
        return [line.split("\t") for line in self.body if line.startswith(prefix)]

    def render(self) -> str:
        footer = self.audit_lines + [f"digest\t{self.digest}"]
        return "\n".join(self.body + footer) + "\n"


def parse_trace(text: str) -> Trace:
    """Split a stored trace into body and footer, verifying the envelope.

    The stored digest must match the stored body; a mismatch means the
    file was edited after the run.
    """
    lines = text.splitlines()
    if not lines or lines[0] != f"{FORMAT_TAG}\t{FORMAT_VERSION}":
        raise ParseError(f"not a {FORMAT_TAG} v{FORMAT_VERSION} file", 1)
    body: list[str] = []
    audit_lines: list[str] = []
    stored_digest: str | None = None
    for i, line in enumerate(lines, start=1):
        tag = line.split("\t", 1)[0]
        if tag == "digest":
            stored_digest = line.split("\t", 1)[1]
        elif tag in ("audit", "violation"):
            audit_lines.append(line)
        elif tag in (FORMAT_TAG, "scn", "ev", "s3", "blk", "alloc", "fin"):
            if stored_digest is not None or audit_lines:
                raise ParseError("body record after the audit/digest footer", i)
            body.append(line)
        else:
            raise ParseError(f"unknown record tag {tag!r}", i)
    trace = Trace(body=body, audit_lines=audit_lines)
    if stored_digest is None:
        raise ParseError("missing digest record", len(lines))
    if stored_digest != trace.digest:
        from .errors import DigestMismatch
        raise DigestMismatch(
            f"stored digest {stored_digest[:12]}.. does not match body "
            f"{trace.digest[:12]}..")
    return trace
