import dataclasses

import pytest

from returnguard import datagen
from returnguard.domain import EventKind, validate_dataset

from helpers import SMALL_GEN, cart


def test_same_seed_gives_byte_identical_files(tmp_path):
    cfg = datagen.GenConfig(seed=11, n_users=120, n_products=150, n_carts=600)
    a = datagen.write_dataset(datagen.generate(cfg), tmp_path / "a")
    b = datagen.write_dataset(datagen.generate(cfg), tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_different_seeds_differ():
    base = dict(n_users=120, n_products=150, n_carts=600)
    a = datagen.generate(datagen.GenConfig(seed=1, **base))
    b = datagen.generate(datagen.GenConfig(seed=2, **base))
    assert a.carts != b.carts


def test_generated_data_passes_validation(small_dataset):
    ds = small_dataset
    report = validate_dataset(ds.events, ds.catalog, ds.carts)
    assert report.violations == []
    assert report.counts["carts"] == SMALL_GEN["n_carts"]


def test_all_return_mechanisms_off_gives_no_returns():
    cfg = datagen.GenConfig(seed=5, n_users=100, n_products=120, n_carts=500, base_return_prob=0.0,
                            size_mismatch_return_prob=0.0, similar_item_boost=0.0)
    ds = datagen.generate(cfg)
    assert not any(e.kind is EventKind.RETURN for e in ds.events)
    assert not any(c.returned for c in ds.carts)


def test_raising_size_mismatch_probability_never_lowers_return_rate():
    rates = []
    for p in (0.2, 0.5, 0.9):
        cfg = datagen.GenConfig(seed=9, size_mismatch_return_prob=p, **SMALL_GEN)
        carts = datagen.generate(cfg).carts
        rates.append(sum(c.returned for c in carts) / len(carts))
    assert rates == sorted(rates)


def test_every_returned_item_has_a_return_event(small_dataset):
    ds = small_dataset
    returns = {(e.user_id, e.product_id) for e in ds.events if e.kind is EventKind.RETURN}
    for c in ds.carts:
        for pid, r in zip(c.product_ids, c.per_item_returned):
            if r:
                assert (c.user_id, pid) in returns


def test_ground_truth_report_matches_hand_count():
    carts = [cart("a", "u", ["p1"], labels=[True]), cart("b", "u", ["p1"], labels=[False]),
             cart("c", "u", ["p1", "p2"], labels=[False, True]),
             cart("d", "u", ["p1", "p2", "p3"], labels=[False, False, False])]
    truth = datagen.GroundTruth(0, {"p1": 0, "p2": 0, "p3": 1}, {}, {
        "a": [datagen.ItemTruth(True, False, False, "size_fit")],
        "b": [datagen.ItemTruth(False, False, False, None)],
        "c": [datagen.ItemTruth(False, True, False, None),
              datagen.ItemTruth(False, True, False, "similar")],
        "d": [datagen.ItemTruth(False, False, False, None)] * 3,
    })
    r = datagen.ground_truth_report(carts, truth)
    assert r.by_cart_size == {1: (2, 1), 2: (1, 1), 3: (1, 0)}
    assert r.rate_single == 0.5
    assert r.n_returned_items == 2 and r.size_fit_share == 0.5
    assert r.similar_cart_share == 0.5  # cart c holds two archetype-0 items


def test_ground_truth_report_rejects_unlabelled_carts():
    with pytest.raises(ValueError):
        datagen.ground_truth_report([cart("a", "u", ["p1"])])


def test_config_validation():
    with pytest.raises(ValueError):
        datagen.GenConfig(base_return_prob=1.5)
    with pytest.raises(ValueError):
        datagen.GenConfig(cart_size_curve=(1.0, 0.5))
    with pytest.raises(ValueError):
        datagen.GenConfig(cart_size_probs=(0.5, 0.4))


def test_config_json_round_trip():
    cfg = datagen.GenConfig(seed=3, n_carts=10)
    import json
    assert datagen.GenConfig.from_dict(json.loads(datagen.config_to_json(cfg))) == cfg
    assert dataclasses.asdict(cfg)["seed"] == 3
