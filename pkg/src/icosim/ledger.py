"""Money, stages, bid records and the conservation audit.

All money is held in integer minimal units (by convention 10**18 units
per whole token).  Fractional formulas are evaluated exactly with
rationals and floored to integers only where units actually move, so
bookkeeping identities hold to the unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .errors import ConservationViolation, NegativeAmount, StageOutOfRange

# Minimal units per whole token under the default deployment convention.
UNIT = 10 ** 18

Amount = int


def require_amount(value: int, what: str = "amount", allow_zero: bool = True) -> int:
    """Validate an integer amount; negative money is always a bug."""
    if not isinstance(value, int) or isinstance(value, bool):
        raise NegativeAmount(f"{what} must be an integer amount, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise NegativeAmount(f"{what} must be {'>= 0' if allow_zero else '> 0'}, got {value}")
    return value


@dataclass(frozen=True)
class Stage:
    """A block height together with the sale's two fixed thresholds.

    ``t`` is the lock stage (voluntary withdrawals stop, automatic ones
    start) and ``u`` the final stage.  0 <= index <= u and 0 <= t < u.
    """

    index: int
    t: int
    u: int

    def __post_init__(self) -> None:
        if not (0 <= self.t < self.u):
            raise StageOutOfRange(f"need 0 <= t < u, got t={self.t} u={self.u}")
        if not (0 <= self.index <= self.u):
            raise StageOutOfRange(f"stage {self.index} outside [0, {self.u}]")

    @property
    def locked(self) -> bool:
        return self.index >= self.t

    @property
    def final(self) -> bool:
        return self.index == self.u

    def next(self) -> "Stage":
        return Stage(self.index + 1, self.t, self.u)


class BidStatus(str, Enum):
    DORMANT = "dormant"
    ACTIVE = "active"
    PERMANENT = "permanent"
    USED = "used"


# Legal status transitions.  "Inactive" is the absence of a Bid record.
# dormant bids exit either by poke (-> active) or by cancelling before the
# lock / being refunded at the end (-> used).
_TRANSITIONS = {
    (BidStatus.DORMANT, BidStatus.ACTIVE),
    (BidStatus.DORMANT, BidStatus.USED),
    (BidStatus.ACTIVE, BidStatus.PERMANENT),
    (BidStatus.ACTIVE, BidStatus.USED),
}


@dataclass
class Bid:
    """One address's bid.  An address bids at most once, ever.

    ``v`` and ``b`` are the capital and token balance recorded at entry;
    partial automatic withdrawals scale them lazily through the bucket
    scale, with ``entry_scale`` snapshotting the bucket scale at joining
    so late joiners are not charged for earlier scalings.  ``b`` can
    floor to zero only for dust-sized ``v`` far below realistic units.
    """

    address: str
    v: Amount
    b: Amount
    cap: Amount
    entry_stage: int
    status: BidStatus
    minimum: Amount | None = None
    poke_fee: Amount = 0
    entry_scale: Fraction = Fraction(1)
    exit_reason: str | None = None  # voluntary | kicked | cancelled_dormant

    def __post_init__(self) -> None:
        require_amount(self.v, "bid capital", allow_zero=False)
        require_amount(self.cap, "personal cap", allow_zero=False)
        require_amount(self.b, "token balance")
        if self.minimum is not None:
            require_amount(self.minimum, "personal minimum", allow_zero=False)
        require_amount(self.poke_fee, "poke fee")

    def set_status(self, new: BidStatus, reason: str | None = None) -> None:
        if (self.status, new) not in _TRANSITIONS:
            raise NegativeAmount(  # pragma: no cover - programming error guard
                f"illegal status transition {self.status.value} -> {new.value}")
        self.status = new
        if reason is not None:
            self.exit_reason = reason


@dataclass
class RefundLedger:
    """Cumulative native-token refunds per address, plus poke fees paid out.

    Entries only grow; a refund is recorded at the moment units become
    claimable by the address, never reversed.
    """

    entries: dict[str, Amount] = field(default_factory=dict)
    fees_paid: Amount = 0
    fee_earnings: dict[str, Amount] = field(default_factory=dict)

    def credit(self, address: str, amount: Amount) -> None:
        require_amount(amount, "refund credit")
        if amount:
            self.entries[address] = self.entries.get(address, 0) + amount

    def pay_fee(self, poker: str, amount: Amount) -> None:
        require_amount(amount, "poke fee payout")
        self.fees_paid += amount
        if amount:
            self.fee_earnings[poker] = self.fee_earnings.get(poker, 0) + amount

    def total(self) -> Amount:
        return sum(self.entries.values())


@dataclass(frozen=True)
class ConservationReport:
    """Where every deposited unit currently sits.

    The headline identity: deposits = active + permanent + refunds + fees
    (escrowed or paid), with the remaining fields carrying capital that
    is merely in transit (dormant, accrued-but-unmaterialized refunds,
    post-sale proceeds) and any rounding dust retained by the contract.
    """

    deposits: Amount
    active_v: Amount
    dormant_v: Amount
    permanent_v: Amount
    pending_refunds: Amount
    refunds: Amount
    fees_escrowed: Amount
    fees_paid: Amount
    proceeds: Amount
    dust: Amount

    @property
    def held(self) -> Amount:
        return (self.active_v + self.dormant_v + self.permanent_v
                + self.pending_refunds + self.fees_escrowed + self.proceeds + self.dust)

    @property
    def delta(self) -> Amount:
        return self.deposits - (self.held + self.refunds + self.fees_paid)


def conservation_audit(state) -> ConservationReport:
    """Check the sale-wide conservation identity on a live engine state.

    Raises ConservationViolation if a single unit is unaccounted for,
    otherwise returns the component breakdown.
    """
    report = ConservationReport(
        deposits=state.deposits_total,
        active_v=state.V,
        dormant_v=state.dormant_total,
        permanent_v=state.permanent_total,
        pending_refunds=state.pending_refunds,
        refunds=state.ledger.total(),
        fees_escrowed=state.fees_escrowed,
        fees_paid=state.ledger.fees_paid,
        proceeds=state.proceeds,
        dust=state.dust,
    )
    if report.delta != 0:
        raise ConservationViolation(report.delta, report)
    return report
