from __future__ import annotations

import random
from fractions import Fraction

import pytest

from icosim.errors import InvalidCurve, StageOutOfRange, WithdrawalLocked
from icosim.pricing import (
    PriceCurve, committed_balance, purchase_power, voluntary_refund,
)


class TestCurveShape:
    def setup_method(self):
        self.curve = PriceCurve(Fraction(6, 5), Fraction(11, 10), 1, t=100, u=200)

    def test_endpoints(self):
        assert purchase_power(self.curve, 0) == Fraction(6, 5)
        assert purchase_power(self.curve, 100) == Fraction(11, 10)
        assert purchase_power(self.curve, 200) == 1

    def test_linear_interiors(self):
        # midpoint of each leg sits exactly halfway between its endpoints
        assert purchase_power(self.curve, 50) == Fraction(23, 20)
        assert purchase_power(self.curve, 150) == Fraction(21, 20)

    def test_monotone_nonincreasing_everywhere(self):
        values = [purchase_power(self.curve, s) for s in range(201)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_out_of_range(self):
        with pytest.raises(StageOutOfRange):
            purchase_power(self.curve, 201)
        with pytest.raises(StageOutOfRange):
            purchase_power(self.curve, -1)


def test_degenerate_lock_at_zero():
    # with t=0 the whole sale runs on the second leg, pt at the open
    curve = PriceCurve(Fraction(3, 2), Fraction(3, 2), 1, t=0, u=10)
    assert purchase_power(curve, 0) == Fraction(3, 2)
    assert purchase_power(curve, 5) == Fraction(5, 4)
    assert purchase_power(curve, 10) == 1


def test_below_par_tail_is_legal():
    curve = PriceCurve(Fraction(6, 5), Fraction(11, 10), Fraction(9, 10), t=5, u=10)
    assert purchase_power(curve, 10) == Fraction(9, 10)


@pytest.mark.parametrize("p0,pt,pu,t,u", [
    (1, Fraction(11, 10), 1, 5, 10),      # rises across the first leg
    (Fraction(11, 10), 1, Fraction(11, 10), 5, 10),  # rises across the second
    (0, 0, 0, 5, 10),                      # power must stay positive
    (Fraction(6, 5), Fraction(11, 10), 1, 10, 10),
    (Fraction(6, 5), Fraction(6, 5), 1, 10, 5),
    (Fraction(6, 5), Fraction(11, 10), 1, -1, 5),
])
def test_invalid_curves_rejected(p0, pt, pu, t, u):
    with pytest.raises(InvalidCurve):
        PriceCurve(p0, pt, pu, t=t, u=u)


class TestVoluntaryRefund:
    def test_linear_decay(self):
        assert voluntary_refund(100, 0, 4) == 100
        assert voluntary_refund(100, 1, 4) == 75
        assert voluntary_refund(100, 3, 4) == 25

    def test_floor_division(self):
        assert voluntary_refund(7, 1, 3) == 4   # floor(14/3)
        assert voluntary_refund(1, 1, 2) == 0

    def test_locked_after_threshold(self):
        with pytest.raises(WithdrawalLocked):
            voluntary_refund(100, 4, 4)
        with pytest.raises(WithdrawalLocked):
            voluntary_refund(100, 0, 0)


class TestCommittedBalance:
    def setup_method(self):
        self.curve = PriceCurve(Fraction(6, 5), Fraction(11, 10), 1, t=4, u=8)

    def test_worked_example(self):
        # v=100 cancelled at s=2, entered at 0 with power 6/5: half the
        # capital stays, minus a third of its bonus, floor(50 * 17/15)
        assert committed_balance(100, 2, 0, self.curve) == 56

    def test_zero_when_nothing_vested(self):
        assert committed_balance(100, 0, 0, self.curve) == 0

    def test_locked_at_threshold(self):
        with pytest.raises(WithdrawalLocked):
            committed_balance(100, 4, 0, self.curve)

    def test_entry_after_cancel_refused(self):
        with pytest.raises(StageOutOfRange):
            committed_balance(100, 1, 2, self.curve)

    def test_late_entry_uses_entry_power(self):
        # entering at s=2 (power 23/20) and cancelling at s=3
        expected = int(Fraction(100 * 3, 4) * (Fraction(23, 20) - Fraction(3, 20) / 3))
        assert committed_balance(100, 3, 2, self.curve) == expected == 82

    def test_refund_and_commitment_bracket_face_value(self):
        rng = random.Random(77)
        for _ in range(500):
            t = rng.randint(1, 40)
            u = t + rng.randint(1, 20)
            s = rng.randint(0, t - 1)
            v = rng.randint(1, 10**6)
            pa = 1 + Fraction(rng.randint(0, 50), 100)
            curve = PriceCurve(pa, pa, 1, t=t, u=u)
            refund = voluntary_refund(v, s, t)
            kept = committed_balance(v, s, 0, curve)
            # never pays out more token value than the original bonus bid
            assert refund + kept <= v * pa
            # the kept balance covers at least the vested principal at par
            assert kept >= (v * s) // t
