"""Closed-form signaling algebra, outcome checks and the trace auditor.

Everything here works on exact rationals or on parsed trace records; no
module in this file touches the live engine, so the auditor is usable as
an independent referee for any stored run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .gas import GasSchedule
from .trace import Trace, parse_amount, parse_fraction, split_kv

# --- blind-withdrawal (signaling) algebra -----------------------------------


@dataclass(frozen=True)
class SignalParams:
    """Bonus rates and honest stakes for the two-bidder signaling game.

    ``a`` is the early-entry bonus rate, ``b`` the bonus rate still on
    offer after the blind capital is pulled, ``x`` the manipulator's real
    stake and ``y`` the reactive bidder's stake.
    """

    a: Fraction
    b: Fraction
    x: Fraction
    y: Fraction

    def __post_init__(self) -> None:
        if not (0 <= self.b < self.a):
            raise ValueError(f"need 0 <= b < a, got a={self.a} b={self.b}")
        if self.x < 0 or self.y < 0 or self.x + self.y == 0:
            raise ValueError("stakes must be nonnegative and not both zero")

    @property
    def A(self) -> Fraction:
        return 1 + Fraction(self.a)

    @property
    def B(self) -> Fraction:
        return 1 + Fraction(self.b)


def truthful_fraction(params: SignalParams) -> Fraction:
    """Manipulator's token share when both stakes enter at the early rate."""
    A, x, y = params.A, Fraction(params.x), Fraction(params.y)
    return (A * x) / (A * x + A * y)


def manipulated_fraction(params: SignalParams) -> Fraction:
    """Share when the rival was scared into entering at the late rate."""
    A, B, x, y = params.A, params.B, Fraction(params.x), Fraction(params.y)
    return (A * x) / (A * x + B * y)


def signaling_advantage(params: SignalParams) -> Fraction:
    """Token-share gain from the scare, as a single reduced rational."""
    A, B, x, y = params.A, params.B, Fraction(params.x), Fraction(params.y)
    num = A * x * y * (A - B)
    den = A * A * x * x + A * A * x * y + A * B * x * y + A * B * y * y
    return num / den


def advantage_bound(a: Fraction, b: Fraction) -> Fraction:
    """Global cap on the share gain over all stake splits: (a - b) / 3."""
    return (Fraction(a) - Fraction(b)) / 3


def directional_bound(params: SignalParams) -> Fraction:
    """Tightest applicable cap given which stake is larger."""
    A, B = params.A, params.B
    bounds = []
    if params.x <= params.y:
        bounds.append((A - B) / (A + 2 * B))
    if params.x >= params.y:
        bounds.append((A - B) / (2 * A + B))
    return min(bounds)


def breakeven_threshold(a: Fraction, b: Fraction, n: int = 1) -> Fraction:
    """Elapsed-time fraction past which n rounds of blind withdrawal lose
    money: ((a - b) / a) ** n."""
    if n < 1:
        raise ValueError("need n >= 1")
    a, b = Fraction(a), Fraction(b)
    if not (0 <= b < a):
        raise ValueError(f"need 0 <= b < a, got a={a} b={b}")
    return ((a - b) / a) ** n


def breakeven_schedule(a: Fraction, b: Fraction, n: int) -> list[Fraction]:
    """Same thresholds by the step recursion instead of the closed form.

    Each round the best remaining gain is (a - b_k) / 3 against a forfeit
    of a * p / 3, so round k+1 breaks even at p = (a - b_k) / a, where
    b_k = a - p_k * (a - b) is the rate left after round k.
    """
    a, b = Fraction(a), Fraction(b)
    if not (0 <= b < a):
        raise ValueError(f"need 0 <= b < a, got a={a} b={b}")
    out: list[Fraction] = []
    p = (a - b) / a
    for _ in range(n):
        out.append(p)
        b_left = a - p * (a - b)
        p = (a - b_left) / a
    return out


# --- cap-rule satisfaction ---------------------------------------------------


@dataclass(frozen=True)
class SatisfactionFailure:
    address: str
    cap: int
    retained: int
    expected: str


@dataclass(frozen=True)
class SatisfactionReport:
    final_v: int
    checked: int
    failures: tuple[SatisfactionFailure, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def satisfaction_check(final_v: int, outcomes) -> SatisfactionReport:
    """Check every funded position against its personal cap.

    ``outcomes`` yields (address, v, cap, retained) rows.  A cap above the
    final valuation must keep the full stake, a cap below it none of it,
    and exactly at the valuation anything in [0, v] is acceptable.
    """
    failures = []
    checked = 0
    for address, v, cap, retained in outcomes:
        checked += 1
        if cap > final_v:
            if retained != v:
                failures.append(SatisfactionFailure(address, cap, retained, f"== {v}"))
        elif cap < final_v:
            if retained != 0:
                failures.append(SatisfactionFailure(address, cap, retained, "== 0"))
        elif not (0 <= retained <= v):
            failures.append(SatisfactionFailure(address, cap, retained, f"in [0, {v}]"))
    return SatisfactionReport(final_v, checked, tuple(failures))


# --- trace auditor -----------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    stage: int | None
    check: str
    detail: str


@dataclass
class AuditReport:
    violations: list[Violation] = field(default_factory=list)
    lag_stages: list[int] = field(default_factory=list)
    blocks: int = 0
    final_v: int | None = None

    @property
    def clean(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        out = [f"audit\t{'clean' if self.clean else 'violation'}"
               f"\tblocks={self.blocks}\tcount={len(self.violations)}"]
        for v in self.violations:
            out.append(f"violation\tstage={'-' if v.stage is None else v.stage}"
                       f"\tcheck={v.check}\tdetail={v.detail}")
        return out


@dataclass
class _Position:
    v: int
    cap: int
    fee: int
    minimum: int | None
    status: str  # dormant | active | permanent | used
    perm_b: int = 0
    allocated: bool = False


class _Auditor:
    """Replays a record stream with independent bookkeeping.

    The auditor never trusts a reported aggregate it can derive itself:
    it rebuilds the valuation, the dormant/permanent/pending/escrow pots
    and the refund totals from the transaction records alone, and flags
    every block whose snapshot disagrees.
    """

    def __init__(self, trace: Trace) -> None:
        self.trace = trace
        self.report = AuditReport()
        self.pos: dict[str, _Position] = {}
        self.retained_final: dict[str, int] = {}
        self.exit_reason: dict[str, str] = {}
        self.V = 0
        self.dormant = 0
        self.permanent = 0
        self.pending = 0
        self.escrow = 0
        self.fees_paid = 0
        self.refunds = 0
        self.deposits = 0
        self.proceeds = 0
        self.stage = 0
        self.prev_boundary = 0
        self.last_settled_v: int | None = None
        self.final_v: int | None = None
        self.t = 0
        self.u = 0
        self.granularity = 1
        self.block_limit = GasSchedule().block_limit
        self._read_config()

    def flag(self, stage: int | None, check: str, detail: str) -> None:
        self.report.violations.append(Violation(stage, check, detail))

    def _read_config(self) -> None:
        for line in self.trace.scenario_lines:
            fields = line.split("\t")
            kv = {f.split("=", 1)[0]: f.split("=", 1)[1]
                  for f in fields[1:] if "=" in f}
            if fields[0] == "sale":
                self.t = int(kv["t"])
                self.u = int(kv["u"])
                self.granularity = int(kv.get("granularity", "1"))
            elif fields[0] == "gas":
                self.block_limit = int(kv.get("block_limit", self.block_limit))

    # -- record handlers --

    def on_event(self, stage: int, actor: str, action: str, outcome: str,
                 kv: dict[str, str]) -> None:
        if stage != self.stage:
            self.flag(stage, "stage-order",
                      f"event at stage {stage} inside block {self.stage}")
        if outcome != "ok":
            return
        if action == "bid":
            v = int(kv["v"])
            cap = int(kv["cap"])
            fee = int(kv.get("fee", "0") or 0)
            m = None if kv.get("m", "-") == "-" else int(kv["m"])
            if actor in self.pos:
                self.flag(stage, "address-reuse", actor)
            if cap <= 0 or cap % self.granularity:
                self.flag(stage, "misaligned-cap", f"{actor} cap={cap}")
            if m is not None and (m <= 0 or m % self.granularity or m >= cap):
                self.flag(stage, "bad-minimum", f"{actor} m={m} cap={cap}")
            if m is None and stage >= self.t and cap <= self.V:
                self.flag(stage, "accepted-low-cap",
                          f"{actor} cap={cap} valuation={self.V}")
            self.pos[actor] = _Position(v, cap, fee, m,
                                        "dormant" if m is not None else "active")
            self.deposits += v + fee
            self.escrow += fee
            if m is None:
                self.V += v
            else:
                self.dormant += v
        elif action == "withdraw":
            pos = self.pos.get(actor)
            if pos is None:
                self.flag(stage, "unknown-actor", actor)
                return
            refund = int(kv["refund"])
            fee_back = int(kv.get("fee_back", "0") or 0)
            perm_v = int(kv.get("perm_v", "0") or 0)
            perm_b = int(kv.get("perm_b", "0") or 0)
            if stage >= self.t:
                self.flag(stage, "late-withdrawal", actor)
            if pos.status == "dormant":
                if refund != pos.v + pos.fee or fee_back != pos.fee:
                    self.flag(stage, "refund-mismatch",
                              f"{actor} refund={refund} expected {pos.v + pos.fee}")
                self.dormant -= pos.v
                self.escrow -= fee_back
                pos.status = "used"
            elif pos.status == "active":
                if refund + perm_v != pos.v:
                    self.flag(stage, "refund-mismatch",
                              f"{actor} refund+perm={refund + perm_v} face={pos.v}")
                self.V -= pos.v
                self.permanent += perm_v
                pos.status = "permanent" if perm_v else "used"
                pos.perm_b = perm_b
            else:
                self.flag(stage, "withdraw-status", f"{actor} is {pos.status}")
            self.refunds += refund
        elif action == "poke":
            x = int(kv["x"])
            target = [] if kv.get("target", "-") == "-" else kv["target"].split("+")
            activated = ([] if kv.get("activated", "-") == "-"
                         else kv["activated"].split("+"))
            known = [a for a in target if a in self.pos]
            if len(known) != len(target):
                self.flag(stage, "poke-verify", "unknown target address")
            elif (not target
                  or sum(self.pos[a].v for a in target) < x
                  or any((self.pos[a].minimum or 0) > x for a in target)):
                self.flag(stage, "poke-verify",
                          f"target set does not certify x={x}")
            fee_sum = 0
            for a in activated:
                pos = self.pos.get(a)
                if pos is None or pos.status != "dormant":
                    self.flag(stage, "poke-not-dormant", a)
                    continue
                if pos.minimum is not None and pos.minimum > x:
                    self.flag(stage, "poke-verify", f"{a} minimum above x={x}")
                pos.status = "active"
                self.dormant -= pos.v
                self.V += pos.v
                self.escrow -= pos.fee
                fee_sum += pos.fee
            self.fees_paid += fee_sum
            if fee_sum != int(kv.get("fee", "0") or 0):
                self.flag(stage, "poke-fee", f"reported {kv.get('fee')} != {fee_sum}")

    def on_step3(self, fields: list[str], line_no: int) -> None:
        stage = parse_amount(fields[1], line_no, 2)
        kind = fields[3]
        kv = split_kv(fields[4:], line_no)
        cap = parse_amount(kv["cap"], line_no, 1)
        live = parse_amount(kv["live"], line_no, 1)
        out = parse_amount(kv["out"], line_no, 1)
        if stage != self.stage:
            self.flag(stage, "stage-order", f"sweep at stage {stage} in block {self.stage}")
        if stage < self.t:
            self.flag(stage, "early-sweep", "automatic withdrawal before the lock")
        members = [a for a, p in self.pos.items()
                   if p.status == "active" and p.cap == cap]
        if kind == "kick":
            credited = parse_amount(kv["credited"], line_no, 1)
            addrs = [] if kv.get("addrs", "-") == "-" else kv["addrs"].split("+")
            if self.V - live < cap:
                self.flag(stage, "kick-condition",
                          f"V={self.V} live={live} cap={cap}")
            if out != live:
                self.flag(stage, "kick-out", f"out={out} live={live}")
            if sorted(addrs) != sorted(members):
                self.flag(stage, "kick-members",
                          f"cap={cap} listed {sorted(addrs)} tracked {sorted(members)}")
            face = sum(self.pos[a].v for a in addrs if a in self.pos)
            if face != credited:
                self.flag(stage, "kick-credit", f"credited={credited} face={face}")
            for a in addrs:
                if a in self.pos:
                    self.pos[a].status = "used"
            self.V -= out
            self.pending -= credited - out
            self.refunds += credited
        elif kind == "scale":
            q = parse_fraction(kv["q"], line_no, 1)
            if not (0 < q < 1):
                self.flag(stage, "scale-fraction", f"q={q}")
            if out != self.V - cap:
                self.flag(stage, "scale-exactness",
                          f"out={out} but V-cap={self.V - cap}")
            if not members:
                self.flag(stage, "scale-members", f"no active bids at cap={cap}")
            self.V -= out
            self.pending += out
        else:
            self.flag(stage, "sweep-kind", kind)

    def on_block(self, fields: list[str], line_no: int) -> None:
        stage = parse_amount(fields[1], line_no, 2)
        kv = split_kv(fields[2:], line_no)
        if stage != self.stage:
            self.flag(stage, "stage-order",
                      f"block {stage} closed where {self.stage} was expected")
        rep = {k: parse_amount(kv[k], line_no, 1) for k in
               ("V", "gas", "boundary", "dormant", "permanent", "pending",
                "escrow", "fees_paid", "refunds", "proceeds", "dust", "deposits")}
        carry = kv.get("carry", "0") == "1"

        for name, mine in (("V", self.V), ("dormant", self.dormant),
                           ("permanent", self.permanent), ("pending", self.pending),
                           ("escrow", self.escrow), ("fees_paid", self.fees_paid),
                           ("refunds", self.refunds), ("deposits", self.deposits),
                           ("proceeds", self.proceeds), ("dust", 0)):
            if rep[name] != mine:
                self.flag(stage, f"ledger-mismatch:{name}",
                          f"reported {rep[name]}, derived {mine}")
        held = (rep["V"] + rep["dormant"] + rep["permanent"] + rep["pending"]
                + rep["escrow"] + rep["fees_paid"] + rep["refunds"]
                + rep["proceeds"] + rep["dust"])
        if held != rep["deposits"]:
            self.flag(stage, "conservation",
                      f"holdings {held} != deposits {rep['deposits']}")
        if rep["gas"] > self.block_limit:
            self.flag(stage, "gas-over-limit",
                      f"{rep['gas']} > {self.block_limit}")
        if rep["boundary"] < self.prev_boundary:
            self.flag(stage, "boundary-decrease",
                      f"{rep['boundary']} < {self.prev_boundary}")
        self.prev_boundary = rep["boundary"]

        if carry:
            self.report.lag_stages.append(stage)
            self.flag(stage, "pointer-lag",
                      "block closed with the sweep unfinished")
        if stage >= self.t:
            active_caps = [p.cap for p in self.pos.values() if p.status == "active"]
            if not carry and active_caps and min(active_caps) < self.V:
                self.flag(stage, "stale-pointer",
                          f"active cap {min(active_caps)} below valuation {self.V}")
            if not carry:
                if self.last_settled_v is not None and rep["V"] < self.last_settled_v:
                    self.flag(stage, "valuation-decrease",
                              f"{rep['V']} < {self.last_settled_v}")
                self.last_settled_v = rep["V"]
        self.report.blocks += 1
        self.stage += 1

    def on_alloc(self, fields: list[str], line_no: int) -> None:
        actor = fields[1]
        kv = split_kv(fields[2:], line_no)
        tokens = parse_amount(kv["tokens"], line_no, 1)
        retained = parse_amount(kv["retained"], line_no, 1)
        refund = parse_amount(kv["refund_final"], line_no, 1)
        status = kv["status"]
        pos = self.pos.get(actor)
        if pos is None:
            self.flag(None, "unknown-alloc", actor)
            return
        if pos.allocated:
            self.flag(None, "duplicate-alloc", actor)
        pos.allocated = True
        if status.startswith("active"):
            if retained + refund != pos.v or not 0 <= retained <= pos.v:
                self.flag(None, "alloc-split",
                          f"{actor} retained={retained} refund={refund} face={pos.v}")
            self.proceeds += retained
            self.refunds += refund
            self.retained_final[actor] = retained
        elif status.startswith("dormant"):
            if refund != pos.v + pos.fee or tokens or retained:
                self.flag(None, "alloc-split", f"{actor} dormant refund={refund}")
            self.dormant -= pos.v
            self.escrow -= pos.fee
            self.refunds += refund
        elif status.startswith("permanent"):
            if tokens != pos.perm_b or refund:
                self.flag(None, "alloc-permanent",
                          f"{actor} tokens={tokens} recorded {pos.perm_b}")
        elif status.startswith("used"):
            if tokens or retained or refund:
                self.flag(None, "alloc-used", f"{actor} settled twice")
        else:
            self.flag(None, "alloc-status", f"{actor} status={status}")

    def on_final(self, fields: list[str], line_no: int) -> None:
        kv = split_kv(fields[1:], line_no)
        self.final_v = parse_amount(kv["V"], line_no, 1)
        self.report.final_v = self.final_v
        stage = parse_amount(kv["stage"], line_no, 1)
        proceeds = parse_amount(kv["proceeds"], line_no, 1)
        if stage != self.u or self.stage != self.u + 1:
            self.flag(stage, "final-stage",
                      f"settled at stage {stage}, expected {self.u}")
        if self.last_settled_v is not None and self.final_v != self.last_settled_v:
            self.flag(stage, "final-mismatch",
                      f"final V {self.final_v} != last block {self.last_settled_v}")
        if proceeds != self.proceeds:
            self.flag(stage, "ledger-mismatch:proceeds",
                      f"reported {proceeds}, derived {self.proceeds}")

    def finish(self) -> AuditReport:
        if self.final_v is None:
            self.flag(None, "truncated", "no final settlement record")
            return self.report
        if self.stage != self.u + 1 or self.report.blocks != self.u + 1:
            self.flag(None, "truncated",
                      f"{self.report.blocks} blocks for stages 0..{self.u}")
        missing = [a for a, p in self.pos.items() if not p.allocated]
        if missing:
            self.flag(None, "missing-alloc", "+".join(sorted(missing)))
        if self.dormant or self.escrow:
            self.flag(None, "undrained-pot",
                      f"dormant={self.dormant} escrow={self.escrow} after payout")
        settled = self.refunds + self.fees_paid + self.proceeds + self.permanent
        if settled != self.deposits:
            self.flag(None, "final-conservation",
                      f"settled {settled} != deposits {self.deposits}")
        rows = []
        for a, p in self.pos.items():
            if p.status == "active" and p.allocated:
                rows.append((a, p.v, p.cap, self.retained_final.get(a, 0)))
            elif p.status == "used" and self.exit_reason.get(a) == "kicked":
                rows.append((a, p.v, p.cap, 0))
        sat = satisfaction_check(self.final_v, rows)
        for f in sat.failures:
            self.flag(None, "satisfaction",
                      f"{f.address} cap={f.cap} retained={f.retained} "
                      f"expected {f.expected}")
        return self.report

    def run(self) -> AuditReport:
        for line_no, line in enumerate(self.trace.body, start=1):
            fields = line.split("\t")
            tag = fields[0]
            if tag == "ev":
                stage = parse_amount(fields[1], line_no, 2)
                kv = split_kv(fields[6:], line_no)
                self.on_event(stage, fields[3], fields[4], fields[5], kv)
            elif tag == "s3":
                self.on_step3(fields, line_no)
            elif tag == "blk":
                self.on_block(fields, line_no)
            elif tag == "alloc":
                kv = split_kv(fields[2:], line_no)
                status = kv.get("status", "")
                if ":" in status:
                    self.exit_reason[fields[1]] = status.split(":", 1)[1]
                self.on_alloc(fields, line_no)
            elif tag == "fin":
                self.on_final(fields, line_no)
        return self.finish()


def audit_trace(trace: Trace) -> AuditReport:
    """Referee a stored run without consulting the engine."""
    return _Auditor(trace).run()
