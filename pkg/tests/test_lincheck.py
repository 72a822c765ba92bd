import random

import pytest

from adaptive_maps import CtrieMap, PureMap, adaptive_map
from adaptive_maps.lincheck import (
    INVOKE,
    RETURN,
    BudgetExceeded,
    Event,
    History,
    Operation,
    PauseTrial,
    Recorder,
    SnapshotTrial,
    brute_force_linearizable,
    check_linearizable,
    fine_switching,
    pause_point_progress,
    random_programs,
    run_threads,
    snapshot_validity,
)


def op(thread, o, invoke, ret, result=None):
    return Operation(thread, o, invoke, ret, result)


def test_sequential_history_is_linearizable():
    ops = [
        op(0, ("insert", 1, "a"), 1, 2),
        op(0, ("get", 1), 3, 4, "a"),
    ]
    v = check_linearizable(ops)
    assert v.ok and [o.op[0] for o in v.witness] == ["insert", "get"]


def test_get_of_value_never_written_is_rejected():
    ops = [
        op(0, ("insert", 1, "a"), 1, 2),
        op(1, ("get", 1), 3, 4, "b"),
    ]
    v = check_linearizable(ops)
    assert not v.ok and v.detail
    assert not brute_force_linearizable(ops)


def test_overlapping_insert_and_get_both_orders_allowed():
    for seen in ("a", None):
        ops = [
            op(0, ("insert", 1, "a"), 1, 4),
            op(1, ("get", 1), 2, 3, seen),
        ]
        assert check_linearizable(ops).ok


def test_real_time_order_is_enforced():
    ops = [
        op(0, ("insert", 1, "a"), 1, 2),
        op(1, ("get", 1), 3, 4, None),
    ]
    assert not check_linearizable(ops).ok


def test_stale_read_after_delete_rejected():
    ops = [
        op(0, ("insert", 1, "a"), 1, 2),
        op(0, ("delete", 1), 3, 4),
        op(1, ("get", 1), 5, 6, "a"),
    ]
    assert not check_linearizable(ops).ok


def test_pending_op_may_take_effect():
    ops = [
        op(0, ("insert", 1, "a"), 1, None),
        op(1, ("get", 1), 2, 3, "a"),
    ]
    assert check_linearizable(ops).ok
    ops2 = [
        op(0, ("insert", 1, "a"), 1, None),
        op(1, ("get", 1), 2, 3, None),
    ]
    assert check_linearizable(ops2).ok


def test_budget_exceeded():
    ops = [op(0, ("get", 0), 2 * i + 1, 2 * i + 2) for i in range(15)]
    with pytest.raises(BudgetExceeded):
        check_linearizable(ops)
    assert check_linearizable(ops, budget=20).ok


def _random_history(rng, n_ops, threads, key_range):
    """Random interval history; results are sometimes deliberately wrong."""
    ops = []
    clock = 1
    free_at = [0] * threads
    vals = iter(range(1, 1000))
    for _ in range(n_ops):
        t = rng.randrange(threads)
        start = max(clock, free_at[t]) + rng.randrange(3)
        end = start + 1 + rng.randrange(6)
        free_at[t] = end + 1
        clock = start + 1
        k = rng.randrange(key_range)
        r = rng.random()
        if r < 0.4:
            res = rng.choice([None] + list(range(1, n_ops + 1)))
            ops.append(op(t, ("get", k), start, end, res))
        elif r < 0.8:
            ops.append(op(t, ("insert", k, next(vals)), start, end))
        else:
            ops.append(op(t, ("delete", k), start, end))
    # Make stamps unique as a real recorder would.
    stamps = sorted({s for o in ops for s in (o.invoke, o.ret)})
    idx = {s: i + 1 for i, s in enumerate(stamps)}
    return [Operation(o.thread, o.op, idx[o.invoke], idx[o.ret], o.result) for o in ops]


def test_checker_agrees_with_brute_force():
    rng = random.Random(0)
    yes = no = 0
    for _ in range(1000):
        ops = _random_history(rng, rng.randint(1, 7), 3, 3)
        fast = check_linearizable(ops).ok
        assert fast == brute_force_linearizable(ops), ops
        yes += fast
        no += not fast
    assert yes > 100 and no > 100


def test_witness_replays_results():
    rng = random.Random(5)
    from adaptive_maps.lincheck import MapSpec
    for _ in range(200):
        ops = _random_history(rng, 6, 3, 2)
        v = check_linearizable(ops)
        if not v.ok:
            continue
        state = MapSpec.initial
        for o in v.witness:
            state, res = MapSpec.apply(state, o.op)
            assert res == o.result


def test_dumps_loads_round_trip():
    rng = random.Random(2)
    rec = run_threads(PureMap(), random_programs(rng, 3, 12, 4))
    h = rec.history()
    text = h.dumps(seed=77)
    assert text.startswith("# seed 77\n")
    h2 = History.loads(text)
    assert h2.events == h.events
    assert h2.dumps(77) == text


def test_recorder_wellformed():
    rng = random.Random(9)
    programs = random_programs(rng, 4, 12, 4)
    with fine_switching():
        h = run_threads(CtrieMap(), programs).history()
    assert len(h) == 24
    h.validate()
    stamps = [e.stamp for e in h]
    assert len(set(stamps)) == 24
    assert sum(e.kind == INVOKE for e in h) == sum(e.kind == RETURN for e in h) == 12


def test_validate_rejects_bad_histories():
    bad = History([Event(1, 0, INVOKE, ("get", 1)), Event(2, 0, INVOKE, ("get", 2))])
    with pytest.raises(ValueError):
        bad.validate()
    orphan = History([Event(1, 0, RETURN, ("get", 1), None)])
    with pytest.raises(ValueError):
        orphan.validate()


def test_recording_does_not_change_results():
    rng = random.Random(4)
    prog = random_programs(rng, 1, 200, 10)[0]
    plain = PureMap()
    from adaptive_maps.lincheck import perform
    direct = [perform(plain, o) for o in prog]
    rec = Recorder()
    recorded_map = PureMap()
    via = [rec.record(0, recorded_map, o) for o in prog]
    assert direct == via
    assert dict(plain.items()) == dict(recorded_map.items())


def test_random_programs_shape():
    rng = random.Random(1)
    progs = random_programs(rng, 3, 12, 4, transition_at=2)
    assert sum(map(len, progs)) == 13
    assert progs[0][2] == ("transition",)
    values = [o[2] for p in progs for o in p if o[0] == "insert"]
    assert len(values) == len(set(values))


@pytest.mark.parametrize("seed", range(100))
def test_adaptive_with_transition_linearizable(seed):
    rng = random.Random(seed)
    programs = random_programs(rng, 3, 11, 4, transition_at=rng.randrange(4))
    with fine_switching(1e-6):
        h = run_threads(adaptive_map(), programs).history()
    assert check_linearizable(h).ok, h.dumps(seed)


@pytest.mark.parametrize("seed", range(5))
def test_snapshot_validity_small(seed):
    v = snapshot_validity(SnapshotTrial(seed, mutators=4, ops_per_thread=60, prefill=16))
    assert v.ok, v.detail


def test_snapshot_validity_permuted_freeze():
    for seed in range(5):
        v = snapshot_validity(SnapshotTrial(seed, mutators=4, ops_per_thread=60,
                                            permuted_freeze=True))
        assert v.ok, v.detail


@pytest.mark.parametrize("seed", range(5))
def test_pause_point_progress_small(seed):
    v = pause_point_progress(PauseTrial(seed, prefill=200))
    assert v.ok, v.detail


def test_real_time_orders_enumeration():
    from adaptive_maps.lincheck import _real_time_orders
    overlapping = [op(t, ("get", 0), 1 + t, 10 + t) for t in range(3)]
    assert len(list(_real_time_orders(overlapping))) == 6
    chain = [op(0, ("get", 0), 1, 2), op(1, ("get", 0), 3, 4), op(2, ("get", 0), 5, 6)]
    assert [[o.thread for o in order] for order in _real_time_orders(chain)] == [[0, 1, 2]]
