"""History recording and linearizability checking for concurrent maps.

Operations are plain tuples: ``("get", k)``, ``("insert", k, v)``,
``("delete", k)`` and ``("transition",)``. A :class:`Recorder` wraps calls
with invoke/return events stamped from one process-wide counter, so stamps
are unique and consistent with real time.

:func:`check_linearizable` is a Wing-Gong style depth-first search over
real-time-consistent orders with memoization on (linearized set, state).
"""

from __future__ import annotations

import contextlib
import itertools
import json
import random
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Sequence

from .cell import FrozenError

__all__ = [
    "BudgetExceeded",
    "Event",
    "History",
    "MapSpec",
    "Operation",
    "PauseTrial",
    "ReadReport",
    "ReadTrial",
    "Recorder",
    "SnapshotTrial",
    "Verdict",
    "brute_force_linearizable",
    "check_linearizable",
    "pause_point_progress",
    "perform",
    "read_availability",
    "snapshot_validity",
]

INVOKE = "invoke"
RETURN = "return"
FROZEN_RESULT = "<frozen>"


class BudgetExceeded(Exception):
    pass


@dataclass(frozen=True)
class Event:
    stamp: int
    thread: int
    kind: str
    op: tuple
    result: Any = None


@dataclass(frozen=True)
class Operation:
    thread: int
    op: tuple
    invoke: int
    ret: int | None
    result: Any = None

    @property
    def pending(self) -> bool:
        return self.ret is None


@dataclass
class Verdict:
    ok: bool
    witness: list = field(default_factory=list)
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def perform(target: Any, op: tuple) -> Any:
    name = op[0]
    if name == "get":
        return target.get(op[1])
    if name == "insert":
        return target.insert(op[1], op[2])
    if name == "delete":
        return target.delete(op[1])
    if name == "transition":
        return target.transition()
    raise ValueError(f"unknown operation {op!r}")


class MapSpec:
    """Sequential map semantics; transition leaves contents unchanged.

    States are frozensets of (key, value) pairs so they can be memoized.
    """

    initial: frozenset = frozenset()

    @staticmethod
    def apply(state: frozenset, op: tuple) -> tuple[frozenset, Any]:
        name = op[0]
        if name == "get":
            for k, v in state:
                if k == op[1]:
                    return state, v
            return state, None
        if name == "insert":
            kept = frozenset(p for p in state if p[0] != op[1])
            return kept | {(op[1], op[2])}, None
        if name == "delete":
            return frozenset(p for p in state if p[0] != op[1]), None
        if name == "transition":
            return state, None
        raise ValueError(f"unknown operation {op!r}")


class History:
    def __init__(self, events: Iterable[Event] = ()) -> None:
        self.events: list[Event] = sorted(events, key=lambda e: (e.stamp, e.thread))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def validate(self) -> None:
        """Raise ValueError unless every thread alternates invoke/return."""
        open_op: dict[int, Event] = {}
        last: dict[int, int] = {}
        for e in self.events:
            if e.thread in last and e.stamp <= last[e.thread]:
                raise ValueError(f"stamps not increasing on thread {e.thread}")
            last[e.thread] = e.stamp
            if e.kind == INVOKE:
                if e.thread in open_op:
                    raise ValueError(f"thread {e.thread} invoked twice")
                open_op[e.thread] = e
            elif e.kind == RETURN:
                inv = open_op.pop(e.thread, None)
                if inv is None or inv.op != e.op:
                    raise ValueError(f"unmatched return {e}")
            else:
                raise ValueError(f"bad event kind {e.kind!r}")

    def operations(self) -> list[Operation]:
        out: list[Operation] = []
        open_op: dict[int, Event] = {}
        for e in self.events:
            if e.kind == INVOKE:
                open_op[e.thread] = e
            else:
                inv = open_op.pop(e.thread)
                out.append(Operation(e.thread, e.op, inv.stamp, e.stamp, e.result))
        for inv in open_op.values():
            out.append(Operation(inv.thread, inv.op, inv.stamp, None))
        out.sort(key=lambda o: o.invoke)
        return out

    def dumps(self, seed: int | None = None) -> str:
        lines = [f"# seed {seed}"] if seed is not None else []
        for e in self.events:
            args = json.dumps(list(e.op[1:]), separators=(",", ":"))
            result = json.dumps(e.result) if e.kind == RETURN else "-"
            lines.append(f"{e.stamp} {e.thread} {e.kind} {e.op[0]} {args} {result}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "History":
        events = []
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            stamp, thread, kind, name, args, result = line.split(" ", 5)
            op = (name, *json.loads(args))
            res = None if result == "-" else json.loads(result)
            events.append(Event(int(stamp), int(thread), kind, op, res))
        return cls(events)


class Recorder:
    """Collects events into per-thread logs; merging happens afterwards."""

    def __init__(self) -> None:
        self._clock = itertools.count(1)
        self._logs: list[list[Event]] = []
        self._local = threading.local()
        self._lock = threading.Lock()

    def _log(self) -> list[Event]:
        log = getattr(self._local, "log", None)
        if log is None:
            log = self._local.log = []
            with self._lock:
                self._logs.append(log)
        return log

    def record(self, thread: int, target: Any, op: tuple) -> Any:
        log = self._log()
        clock = self._clock
        log.append(Event(next(clock), thread, INVOKE, op))
        try:
            result = perform(target, op)
        except FrozenError:
            result = FROZEN_RESULT
        log.append(Event(next(clock), thread, RETURN, op, result))
        return result

    def history(self) -> History:
        with self._lock:
            return History(itertools.chain.from_iterable(self._logs))


def _ops_of(h: History | Sequence[Operation]) -> list[Operation]:
    return h.operations() if isinstance(h, History) else list(h)


def check_linearizable(h: History | Sequence[Operation], spec=MapSpec, budget: int = 14) -> Verdict:
    """Search for a real-time-consistent order that reproduces every result.

    Completed operations must all appear; pending ones may be placed anywhere
    after their invocation or left out.
    """
    ops = _ops_of(h)
    n = len(ops)
    completed = 0
    for i, o in enumerate(ops):
        if not o.pending:
            completed |= 1 << i
    if completed.bit_count() > budget:
        raise BudgetExceeded(f"{completed.bit_count()} completed ops > budget {budget}")
    preds = [0] * n
    for i, oi in enumerate(ops):
        for j, oj in enumerate(ops):
            if oj.ret is not None and oj.ret < oi.invoke:
                preds[i] |= 1 << j

    seen: set = set()
    path: list[int] = []
    best: list[int] = []

    def search(state, done: int) -> bool:
        nonlocal best
        if done & completed == completed:
            return True
        if len(path) > len(best):
            best = list(path)
        for i in range(n):
            bit = 1 << i
            if done & bit or preds[i] & ~done:
                continue
            o = ops[i]
            new_state, result = spec.apply(state, o.op)
            if not o.pending and result != o.result:
                continue
            key = (done | bit, new_state)
            if key in seen:
                continue
            seen.add(key)
            path.append(i)
            if search(new_state, done | bit):
                return True
            path.pop()
        return False

    if search(spec.initial, 0):
        return Verdict(True, [ops[i] for i in path])
    return Verdict(False, [ops[i] for i in best], "no linearization reproduces the results")


def brute_force_linearizable(h: History | Sequence[Operation], spec=MapSpec) -> bool:
    """Enumerate every subset of pending ops and every real-time-consistent order.

    Independent of :func:`check_linearizable`: no memoization and no pruning
    on results; each complete order is replayed from the initial state.
    """
    ops = _ops_of(h)
    done = [o for o in ops if not o.pending]
    pending = [o for o in ops if o.pending]
    for r in range(len(pending) + 1):
        for extra in itertools.combinations(pending, r):
            for order in _real_time_orders(done + list(extra)):
                state = spec.initial
                for o in order:
                    state, result = spec.apply(state, o.op)
                    if not o.pending and result != o.result:
                        break
                else:
                    return True
    return False


def _real_time_orders(chosen: list[Operation]) -> Iterator[list[Operation]]:
    """Permutations of ``chosen`` where no op precedes one that returned before it began."""
    left = list(chosen)
    order: list[Operation] = []

    def rec() -> Iterator[list[Operation]]:
        if not left:
            yield list(order)
            return
        for i, o in enumerate(left):
            if any(p.ret is not None and p.ret < o.invoke for p in left if p is not o):
                continue
            left.pop(i)
            order.append(o)
            yield from rec()
            order.pop()
            left.insert(i, o)

    yield from rec()


# -- concurrent trial drivers ------------------------------------------------


@contextlib.contextmanager
def fine_switching(interval: float = 1e-5) -> Iterator[None]:
    """Shrink the interpreter's thread switch interval to force interleaving."""
    prev = sys.getswitchinterval()
    sys.setswitchinterval(interval)
    try:
        yield
    finally:
        sys.setswitchinterval(prev)


def run_threads(target: Any, programs: Sequence[Sequence[tuple]],
                recorder: Recorder | None = None) -> Recorder:
    """Run one op list per thread against ``target``, all starting together."""
    recorder = recorder or Recorder()
    barrier = threading.Barrier(len(programs))
    errors: list[BaseException] = []

    def worker(tid: int, program: Sequence[tuple]) -> None:
        try:
            barrier.wait()
            for op in program:
                recorder.record(tid, target, op)
        except BaseException as e:  # surfaced to the caller below
            errors.append(e)

    threads = [threading.Thread(target=worker, args=(i, p)) for i, p in enumerate(programs)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return recorder


def random_programs(rng: random.Random, threads: int, total_ops: int, key_range: int,
                    transition_at: int | None = None) -> list[list[tuple]]:
    """Split ``total_ops`` random map ops across threads.

    Insert values are unique per history so a get result names its writer.
    ``transition_at`` places a transition as that thread's op in thread 0.
    """
    programs: list[list[tuple]] = [[] for _ in range(threads)]
    for i in range(total_ops):
        k = rng.randrange(key_range)
        r = rng.random()
        if r < 0.4:
            op: tuple = ("get", k)
        elif r < 0.8:
            op = ("insert", k, i + 1)
        else:
            op = ("delete", k)
        programs[i % threads].append(op)
    if transition_at is not None:
        prog = programs[0]
        prog.insert(min(transition_at, len(prog)), ("transition",))
    return programs


# -- snapshot validity -------------------------------------------------------


@dataclass
class SnapshotTrial:
    seed: int
    mutators: int = 8
    ops_per_thread: int = 200
    key_range: int = 64
    prefill: int = 32
    permuted_freeze: bool = False


def _final_value_candidates(ops: Sequence[Operation], key: int) -> set:
    mine = [o for o in ops if o.op[0] in ("insert", "delete") and o.op[1] == key]
    if not mine:
        return {None}
    last_invoke = max(o.invoke for o in mine)
    out = set()
    for o in mine:
        if o.ret is None or o.ret > last_invoke:
            out.add(o.op[2] if o.op[0] == "insert" else None)
    return out


def snapshot_validity(cfg: SnapshotTrial) -> Verdict:
    """Mutate an adaptive map from many threads while it transitions.

    Passes iff the resulting PureMap is well formed and its contents equal
    the sequential replay of some linearization of the recorded operations.
    With only inserts and deletes recorded, that holds exactly when each
    key's final value comes from an operation no other operation on that
    key started after.
    """
    from .ctrie import CtrieMap, check_ctrie
    from .hamt import check_hamt
    from .hybrid import B, HybridMap, _ctrie_to_pure, _skip_freeze
    from .puremap import PureMap
    from .verification import freeze_permuted

    rng = random.Random(cfg.seed)
    if cfg.permuted_freeze:
        frng = random.Random(rng.getrandbits(32))
        flock = threading.Lock()

        def freeze(a: CtrieMap) -> None:
            with flock:
                r = random.Random(frng.getrandbits(32))
            freeze_permuted(a, r)

        m = HybridMap(CtrieMap(), PureMap, freeze, _ctrie_to_pure)
    else:
        m = HybridMap(CtrieMap(), PureMap, _skip_freeze, _ctrie_to_pure)

    recorder = Recorder()
    vals = itertools.count(1)
    for _ in range(cfg.prefill):
        recorder.record(-1, m, ("insert", rng.randrange(cfg.key_range), next(vals)))

    programs = []
    for _ in range(cfg.mutators):
        prog = []
        for _ in range(cfg.ops_per_thread):
            k = rng.randrange(cfg.key_range)
            if rng.random() < 0.6:
                prog.append(("insert", k, next(vals)))
            else:
                prog.append(("delete", k))
        programs.append(prog)
    # The transitioning thread starts after a random share of the work.
    trigger = rng.randrange(cfg.mutators * cfg.ops_per_thread)
    progress = itertools.count()
    progress_seen = [0]
    errors: list[BaseException] = []
    barrier = threading.Barrier(cfg.mutators + 1)

    def mutator(tid: int, prog: list[tuple]) -> None:
        try:
            barrier.wait()
            for op in prog:
                recorder.record(tid, m, op)
                progress_seen[0] = next(progress)
        except BaseException as e:
            errors.append(e)

    def transitioner() -> None:
        try:
            barrier.wait()
            while progress_seen[0] < trigger:
                time.sleep(0)
            recorder.record(cfg.mutators, m, ("transition",))
        except BaseException as e:
            errors.append(e)

    with fine_switching():
        threads = [threading.Thread(target=mutator, args=(i, p)) for i, p in enumerate(programs)]
        threads.append(threading.Thread(target=transitioner))
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        return Verdict(False, [], f"seed {cfg.seed}: worker raised {errors[0]!r}")

    st = m.state()
    if st.phase is not B:
        return Verdict(False, [], f"seed {cfg.seed}: root ended in {st.phase}")
    final = st.b.snapshot()
    try:
        check_hamt(final)
        check_ctrie(m.source)
        if not all(c.frozen for c in m.source.cells()):
            raise AssertionError("active cell left in the frozen source")
    except AssertionError as e:
        return Verdict(False, [], f"seed {cfg.seed}: malformed structure: {e}")

    history = recorder.history()
    history.validate()
    ops = history.operations()
    if any(o.result == FROZEN_RESULT for o in ops):
        return Verdict(False, [], f"seed {cfg.seed}: a frozen error leaked to a caller")
    keys = {o.op[1] for o in ops if len(o.op) > 1} | set(final)
    for k in keys:
        cands = _final_value_candidates(ops, k)
        got = final.get(k)
        if got not in cands:
            return Verdict(False, [o for o in ops if len(o.op) > 1 and o.op[1] == k],
                           f"seed {cfg.seed}: key {k} ended as {got!r}, allowed {cands!r}")
    return Verdict(True)


# -- pause-point progress ----------------------------------------------------


@dataclass
class PauseTrial:
    seed: int
    prefill: int = 400
    helpers: int = 3
    c: int = 8


def pause_point_progress(cfg: PauseTrial) -> Verdict:
    """Park every thread but one mid-transition; the last must finish alone.

    Thread 0 starts the transition and is parked at a random cell operation
    inside it. Helper threads then issue inserts and are parked at random
    points, typically while helping. Finally a fresh thread inserts one key
    with everyone else parked; it must drive the map to state B and finish
    within ``c`` cell operations per reachable cell.
    """
    from .hybrid import B, adaptive_map
    from .verification import PauseController, StepCounter, cell_hook

    rng = random.Random(cfg.seed)
    keys = [rng.getrandbits(32) for _ in range(cfg.prefill)]

    def build():
        m = adaptive_map()
        for i, k in enumerate(keys):
            m.insert(k, i)
        return m

    probe = build()
    counter = StepCounter()
    with cell_hook(counter):
        probe.transition()
    transition_steps = counter.steps

    m = build()
    ctl = PauseController()
    expected = {k: i for i, k in enumerate(keys)}
    helper_keys = [[(1 << 40) + t * 1000 + j for j in range(20)] for t in range(cfg.helpers)]
    for t, ks in enumerate(helper_keys):
        for k in ks:
            expected[k] = -t - 1
    errors: list[BaseException] = []

    def initiator() -> None:
        try:
            ctl.register(rng_init)
            m.transition()
        except BaseException as e:
            errors.append(e)

    def helper(t: int, pause_at: int) -> None:
        try:
            ctl.register(pause_at)
            for k in helper_keys[t]:
                m.insert(k, -t - 1)
        except BaseException as e:
            errors.append(e)

    # Steps 1-2 are the root read and the A -> AB CAS; park after them.
    rng_init = rng.randint(3, transition_steps)
    # Most helpers stop early so the live thread is usually left real work.
    helper_pauses = [rng.randint(1, transition_steps if rng.random() < 0.25 else max(1, transition_steps // 8))
                     for _ in range(cfg.helpers)]

    with cell_hook(ctl):
        threads = [threading.Thread(target=initiator)]
        threads[0].start()
        _await_parked_or_done(ctl, threads[0])
        for t in range(cfg.helpers):
            th = threading.Thread(target=helper, args=(t, helper_pauses[t]))
            threads.append(th)
            th.start()
            _await_parked_or_done(ctl, th)

        live_key = (1 << 41) + cfg.seed
        result: dict[str, Any] = {}

        def live() -> None:
            ctl.live_thread = threading.get_ident()
            try:
                m.insert(live_key, "live")
                result["phase"] = m.phase
                result["value"] = m.get(live_key)
            except BaseException as e:
                errors.append(e)

        lt = threading.Thread(target=live)
        lt.start()
        lt.join(timeout=60)
        stuck = lt.is_alive()
        ctl.release()
        for th in threads:
            th.join(timeout=60)
        lt.join(timeout=60)

    if errors:
        return Verdict(False, [], f"seed {cfg.seed}: {errors[0]!r}")
    if stuck:
        return Verdict(False, [], f"seed {cfg.seed}: live thread did not finish")
    if any(th.is_alive() for th in threads):
        return Verdict(False, [], f"seed {cfg.seed}: a released thread never finished")
    reachable = len(m.source.cells()) + 3
    budget = cfg.c * reachable
    if result.get("phase") is not B or result.get("value") != "live":
        return Verdict(False, [], f"seed {cfg.seed}: live op saw {result!r}")
    if ctl.live_steps > budget:
        return Verdict(False, [], f"seed {cfg.seed}: {ctl.live_steps} steps > budget {budget}")
    expected[live_key] = "live"
    final = dict(m.state().b.items())
    if final != expected:
        return Verdict(False, [], f"seed {cfg.seed}: final contents differ from expected")
    return Verdict(True, [], f"steps {ctl.live_steps} / budget {budget}")


def _await_parked_or_done(ctl: Any, th: threading.Thread, timeout: float = 30.0) -> None:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if not th.is_alive():
            return
        ev = ctl._parked.get(th.ident)
        if ev is not None and ev.is_set():
            return
        time.sleep(0.0005)
    raise RuntimeError("thread neither parked nor finished")


# -- read availability -------------------------------------------------------


@dataclass
class ReadTrial:
    seed: int
    writers: int = 8
    readers: int = 2
    prefill: int = 2000


@dataclass
class ReadReport:
    gets: int
    failures: int
    retries: int
    detail: str = ""


def read_availability(cfg: ReadTrial) -> ReadReport:
    """Count gets that overlap one transition under concurrent write load.

    Prefilled keys are never written again, so every get must return its
    prefill value. A reader that performs any cell operation other than a
    read (a CAS, freeze attempt or done mark) counts as a retry, and any
    exception or wrong value as a failure.
    """
    from .hybrid import adaptive_map
    from .verification import cell_hook

    rng = random.Random(cfg.seed)
    m = adaptive_map()
    keys = [rng.getrandbits(32) for _ in range(cfg.prefill)]
    for k in keys:
        m.insert(k, k ^ 0x5555)
    in_window = threading.Event()
    stop = threading.Event()
    readers: set[int] = set()
    retries = [0]
    failures: list[str] = []
    counts = [0] * cfg.readers

    def hook(event: str, c: Any) -> None:
        if event != "read" and threading.get_ident() in readers:
            retries[0] += 1

    def reader(i: int) -> None:
        readers.add(threading.get_ident())
        r = random.Random(cfg.seed * 1000 + i)
        n = 0
        while not stop.is_set():
            k = keys[r.randrange(len(keys))]
            counted = in_window.is_set()
            try:
                got = m.get(k)
            except BaseException as e:
                failures.append(repr(e))
                continue
            if got != k ^ 0x5555:
                failures.append(f"key {k} read {got!r}")
            if counted:
                n += 1
        counts[i] = n

    def writer(i: int) -> None:
        r = random.Random(cfg.seed * 1000 + 100 + i)
        base = (1 << 40) * (i + 1)
        while not stop.is_set():
            k = base + r.randrange(512)
            if r.random() < 0.7:
                m.insert(k, i)
            else:
                m.delete(k)

    with cell_hook(hook), fine_switching():
        threads = [threading.Thread(target=reader, args=(i,)) for i in range(cfg.readers)]
        threads += [threading.Thread(target=writer, args=(i,)) for i in range(cfg.writers)]
        for t in threads:
            t.start()
        time.sleep(0.002)
        in_window.set()
        m.transition()
        in_window.clear()
        stop.set()
        for t in threads:
            t.join()
    return ReadReport(sum(counts), len(failures), retries[0], "; ".join(failures[:3]))
