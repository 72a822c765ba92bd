import random
import threading

import pytest

from adaptive_maps import CtrieMap, FrozenError, Hamt, PureMap
from adaptive_maps.cell import LOST, SUCCEEDED
from adaptive_maps.hamt import EMPTY


def test_get_insert_delete():
    m = PureMap()
    assert m.get(1) is None
    m.insert(1, "one")
    assert m.get(1) == "one"
    m.delete(1)
    assert m.get(1) is None


def test_freeze_blocks_writes_not_reads():
    m = PureMap()
    m.insert(1, 1)
    m.freeze()
    m.freeze()
    with pytest.raises(FrozenError):
        m.insert(2, 2)
    with pytest.raises(FrozenError):
        m.delete(1)
    assert m.get(1) == 1


def test_snapshot_is_stable():
    m = PureMap()
    assert len(m.snapshot()) == 0
    m.insert(1, 1)
    snap = m.snapshot()
    m.insert(2, 2)
    m.delete(1)
    assert dict(snap.items()) == {1: 1}


def test_snapshot_matches_sequential_replay():
    rng = random.Random(1)
    m = PureMap()
    ref = {}
    for i in range(2000):
        k = rng.randrange(100)
        if rng.random() < 0.7:
            m.insert(k, i)
            ref[k] = i
        else:
            m.delete(k)
            ref.pop(k, None)
    m.freeze()
    assert dict(m.snapshot().items()) == ref
    assert len(m.snapshot()) == len(ref)


def test_disjoint_concurrent_inserts():
    m = PureMap()

    def work(t):
        for i in range(1000):
            m.insert(t * 10_000 + i, i)

    ts = [threading.Thread(target=work, args=(t,)) for t in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert len(m) == 4000


def test_lost_never_exceeds_succeeded():
    m = PureMap()
    tally = {"lost": 0, "ok": 0}
    lock = threading.Lock()

    def observer(status):
        with lock:
            tally["lost" if status is LOST else "ok"] += 1

    def work(t):
        rng = random.Random(t)
        for _ in range(2000):
            m.insert(rng.randrange(50), t, observer)

    import sys
    prev = sys.getswitchinterval()
    sys.setswitchinterval(1e-6)
    try:
        ts = [threading.Thread(target=work, args=(t,)) for t in range(4)]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
    finally:
        sys.setswitchinterval(prev)
    assert tally["lost"] <= tally["ok"]


def test_insert_racing_freeze_is_all_or_nothing():
    for trial in range(200):
        m = PureMap(Hamt.from_items([(0, 0)]))
        result = {}

        def writer():
            try:
                m.insert(1, "v")
                result["ok"] = True
            except FrozenError:
                result["ok"] = False

        t = threading.Thread(target=writer)
        t.start()
        m.freeze()
        t.join()
        snap = m.snapshot()
        if result["ok"]:
            assert snap.get(1) == "v"
        else:
            assert 1 not in snap
        assert snap.get(0) == 0


def test_convert_into_ctrie():
    m = PureMap()
    m.freeze()
    target = CtrieMap()
    m.convert_into(target)
    target.freeze()
    assert list(target.iter_frozen()) == []

    rng = random.Random(9)
    data = {rng.getrandbits(40): i for i in range(1000)}
    m = PureMap(Hamt.from_items(data.items()))
    m.freeze()
    target = CtrieMap()
    m.convert_into(target)
    m.convert_into(target)
    assert all(target.get(k) == v for k, v in data.items())
    target.freeze()
    assert dict(target.iter_frozen()) == data


def test_convert_with_concurrent_helpers():
    data = {k: k * 2 for k in range(500)}
    m = PureMap(Hamt.from_items(data.items()))
    m.freeze()
    target = CtrieMap()
    ts = [threading.Thread(target=m.convert_into, args=(target,)) for _ in range(6)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    target.freeze()
    assert dict(target.iter_frozen()) == data


def test_observer_reports_outcomes():
    seen = []
    m = PureMap(observer=seen.append)
    m.insert(1, 1)
    assert seen == [SUCCEEDED]


def test_publish_is_one_shot():
    m = PureMap()
    assert m.publish(Hamt.from_items([(1, 1)]))
    assert not m.publish(Hamt.from_items([(2, 2)]))
    assert dict(m.items()) == {1: 1}
    fresh = PureMap()
    fresh.insert(5, 5)
    assert not fresh.publish(EMPTY)
