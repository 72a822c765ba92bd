import random

from hypothesis import given, settings, strategies as st

from adaptive_maps.hamt import EMPTY, MASK64, Collision, Hamt, check_hamt, mix64

keys = st.integers(min_value=0, max_value=2**64 - 1)
small_keys = st.integers(min_value=0, max_value=40)
maps = st.dictionaries(small_keys | keys, st.integers())


def test_empty_get():
    assert EMPTY.get(42) is None
    assert len(EMPTY) == 0
    assert list(EMPTY.items()) == []


def test_last_write_wins():
    h = EMPTY.insert(3, "a").insert(3, "b")
    assert h.get(3) == "b"
    assert len(h) == 1


def test_mix64_is_fixed_and_spreads():
    # Pinned values guard against accidental changes to the mixer.
    assert mix64(0) == 0xE220A8397B1DCDAF
    assert mix64(1) == 0x910A2DEC89025CC1
    assert len({mix64(i) >> 58 for i in range(2000)}) == 64


def test_random_ops_against_dict():
    rng = random.Random(11)
    h = EMPTY
    ref = {}
    for step in range(10_000):
        k = rng.randrange(300)
        if rng.random() < 0.6:
            h = h.insert(k, step)
            ref[k] = step
        else:
            h = h.delete(k)
            ref.pop(k, None)
        assert h.get(k) == ref.get(k)
        assert len(h) == len(ref)
        if step % 500 == 0:
            check_hamt(h)
            assert sorted(h.items()) == sorted(ref.items())
    check_hamt(h)
    assert sorted(h.items()) == sorted(ref.items())


def test_delete_absent_returns_same_map():
    h = Hamt.from_items([(1, 1), (2, 2)])
    assert h.delete(99) is h


def test_iteration_order_is_deterministic():
    items = [(k, k) for k in random.Random(3).sample(range(10**6), 500)]
    a = Hamt.from_items(items)
    b = Hamt.from_items(reversed(items))
    assert list(a.items()) == list(b.items())


def test_full_hash_collisions_use_buckets():
    # k and k + 2**64 hash identically.
    base = [5, 5 + 2**64, 5 + 2**65]
    h = EMPTY
    for i, k in enumerate(base):
        h = h.insert(k, i)
    check_hamt(h)
    assert [h.get(k) for k in base] == [0, 1, 2]
    node = h._root
    depth = 0
    while not isinstance(node, Collision):
        node = node.slots[0]
        depth += 1
    assert depth == 11
    h2 = h.delete(base[1])
    check_hamt(h2)
    assert h2.get(base[1]) is None and h2.get(base[2]) == 2
    h3 = h2.delete(base[0])
    check_hamt(h3)
    assert dict(h3.items()) == {base[2]: 2}
    # Contracted all the way back to a root leaf.
    assert len(h3._root.slots) == 1


def test_canonical_shape_after_deletes():
    rng = random.Random(5)
    ks = rng.sample(range(2**40), 300)
    full = Hamt.from_items((k, 1) for k in ks)
    kept = ks[:50]
    shrunk = full
    for k in ks[50:]:
        shrunk = shrunk.delete(k)
    fresh = Hamt.from_items((k, 1) for k in kept)
    check_hamt(shrunk)
    assert _shape(shrunk._root) == _shape(fresh._root)


def _shape(node):
    if hasattr(node, "bitmap"):
        return (node.bitmap, tuple(_shape(c) for c in node.slots))
    if hasattr(node, "leaves"):
        return ("c", tuple(sorted(l.key for l in node.leaves)))
    return node.key


def test_union_examples():
    a = Hamt.from_items([(1, "a1")])
    b = Hamt.from_items([(1, "b1"), (2, "b2")])
    assert dict(a.union(b).items()) == {1: "a1", 2: "b2"}
    assert a.union(EMPTY) is a
    assert EMPTY.union(a) is a


@given(maps)
def test_persistence(d):
    h = Hamt.from_items(d.items())
    before = sorted(h.items())
    h.insert(12345, "x").delete(next(iter(d), 0)).union(Hamt.from_items([(7, 7)]))
    assert sorted(h.items()) == before


@given(maps, maps)
def test_union_left_bias_matches_per_key_merge(da, db):
    a, b = Hamt.from_items(da.items()), Hamt.from_items(db.items())
    u = a.union(b)
    check_hamt(u)
    expected = dict(db)
    expected.update(da)
    assert dict(u.items()) == expected
    assert len(u) == len(expected)


@given(maps)
def test_union_idempotent(d):
    h = Hamt.from_items(d.items())
    u = h.union(h)
    assert u == h and len(u) == len(h)
    copy = Hamt.from_items(d.items())
    assert h.union(copy) == h


@settings(max_examples=50)
@given(maps, maps, maps)
def test_union_associative(da, db, dc):
    a, b, c = (Hamt.from_items(d.items()) for d in (da, db, dc))
    assert a.union(b).union(c) == a.union(b.union(c))


@given(st.lists(st.tuples(st.booleans(), small_keys | keys), max_size=60))
def test_invariants_hold_after_any_sequence(script):
    h = EMPTY
    ref = {}
    for ins, k in script:
        if ins:
            h = h.insert(k, k & MASK64)
            ref[k] = k & MASK64
        else:
            h = h.delete(k)
            ref.pop(k, None)
    check_hamt(h)
    assert dict(h.items()) == ref
