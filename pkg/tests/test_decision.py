import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from returnguard import decision
from returnguard.decision import ActionPolicy, Segment


def test_charge_starts_strictly_above_the_threshold():
    assert decision.delivery_charge(0.77) == 0
    assert decision.decide(0.77, []).cart_action.kind != "DeliveryCharge"
    assert decision.delivery_charge(0.78) > 0


def test_charge_endpoints_and_midpoint():
    assert decision.delivery_charge(1.0) == 149
    assert decision.delivery_charge(0.885) == 75
    assert decision.decide(1.0, []).delivery_charge == 149


def test_segments():
    p = ActionPolicy()
    assert decision.segment(0.0) is Segment.LOW
    assert decision.segment(1.0) is Segment.HIGH
    assert decision.segment(p.low_max) is Segment.LOW
    assert decision.segment(p.med_max) is Segment.MEDIUM
    assert decision.segment(0.5) is Segment.MEDIUM
    for bad in (-0.01, 1.01, float("nan")):
        with pytest.raises(ValueError):
            decision.segment(bad)


def test_charge_is_monotone_and_within_range():
    charges = [decision.decide(p, []).delivery_charge for p in np.linspace(0, 1, 100)]
    assert charges == sorted(charges)
    assert all(0 <= c <= 149 for c in charges)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 50), st.integers(0, 300))
@settings(max_examples=200, deadline=None)
def test_charge_properties_hold_for_any_policy(p, q, lo, span):
    policy = ActionPolicy(delivery_charge_threshold=0.6, min_charge=lo, max_charge=lo + span)
    a, b = sorted((p, q))
    ca, cb = decision.delivery_charge(a, policy), decision.delivery_charge(b, policy)
    assert ca <= cb
    for p_, c in ((a, ca), (b, cb)):
        if p_ > 0.6:
            assert lo <= c <= lo + span
        else:
            assert c == 0


def test_try_and_buy_for_high_carts_below_the_charge():
    d = decision.decide(0.75, [])
    assert d.segment is Segment.HIGH and d.cart_action.kind == "TryAndBuyOffer"
    assert decision.decide(0.75, [], ActionPolicy(try_and_buy_enabled=False)).cart_action.kind == "None"
    assert decision.decide(0.9, []).cart_action.kind == "DeliveryCharge"
    assert decision.decide(0.5, []).cart_action.kind == "None"


def test_item_coupons_follow_item_probabilities():
    d = decision.decide(0.2, [0.71, 0.7, None, 0.1])
    assert [a.kind for a in d.item_actions] == ["NonReturnableCoupon", "None", "None", "None"]
    assert d.item_actions[0].amount == ActionPolicy().coupon_value
    with pytest.raises(ValueError):
        decision.decide(0.2, [1.5])


def test_actions_shrink_as_thresholds_rise():
    rng = np.random.default_rng(0)
    carts = [(float(rng.random()), rng.random(3).tolist()) for _ in range(300)]

    def acted(policy):
        out = set()
        for k, (p, items) in enumerate(carts):
            d = decision.decide(p, items, policy)
            if d.cart_action.kind == "DeliveryCharge" or any(a.kind != "None" for a in d.item_actions):
                out.add(k)
        return out

    prev = None
    for t in np.linspace(0.5, 0.95, 10):
        cur = acted(ActionPolicy(delivery_charge_threshold=t, nonreturnable_item_threshold=t,
                                 try_and_buy_enabled=False))
        if prev is not None:
            assert cur <= prev
        prev = cur


def test_optional_actions_are_off_by_default():
    d = decision.decide(0.95, [0.95])
    assert d.extra_actions == () and d.item_actions[0].kind == "NonReturnableCoupon"
    on = ActionPolicy(restrict_payment_enabled=True, out_of_stock_enabled=True)
    d = decision.decide(0.95, [0.95, 0.8], on)
    assert [a.kind for a in d.extra_actions] == ["RestrictPaymentOptions"]
    assert [a.kind for a in d.item_actions] == ["ShowOutOfStock", "NonReturnableCoupon"]


def test_policy_validation_and_json(tmp_path):
    with pytest.raises(ValueError):
        ActionPolicy(low_max=0.7, med_max=0.4)
    with pytest.raises(ValueError):
        ActionPolicy(min_charge=10, max_charge=5)
    with pytest.raises(ValueError):
        ActionPolicy.from_json({"low_max": 0.3, "surprise": 1})
    p = ActionPolicy(coupon_value=50)
    p.save(tmp_path / "p.json")
    assert ActionPolicy.load(tmp_path / "p.json") == p


def test_decision_json_shape():
    d = decision.decide(0.885, [0.9, None])
    assert d.to_json() == {"segment": "High", "cart_action": {"kind": "DeliveryCharge", "amount": 75},
                           "item_actions": [{"kind": "NonReturnableCoupon", "amount": 100},
                                            {"kind": "None"}],
                           "extra_actions": []}
