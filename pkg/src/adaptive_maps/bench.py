"""Workload benchmarks for the map implementations, with CSV output.

Workloads:

heatup
    every thread issues a get/insert/delete mix for a fixed wall time.
hotcold
    inserts (hot phase), an explicit transition, then gets (cold phase),
    timed end to end.
phases_separate
    the hot and cold phases timed separately, with the adaptive map switched
    between them.
convert_scaling
    freeze+convert of a prebuilt Ctrie with 1..N cooperating threads, against
    a sequential preorder pass.

Run ``python -m adaptive_maps.bench --help`` for the command line.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import gc
import logging
import os
import random
import statistics
import sys
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Sequence

from .cell import FreezableCell
from .ctrie import CtrieMap, check_ctrie
from .hamt import EMPTY, MASK64, Branch, Hamt
from .hybrid import B, HybridMap, WarmupMap, adaptive_map
from .puremap import PureMap

log = logging.getLogger(__name__)

WORKLOADS = ("heatup", "hotcold", "phases_separate", "convert_scaling")
IMPLS = ("pure", "ctrie", "adaptive", "warmup", "mvar-lock-baseline")
CSV_HEADER = [
    "workload",
    "impl",
    "threads",
    "ops",
    "duration_ms",
    "throughput_ops_per_ms",
    "transition_latency_us",
    "run",
    "seed",
]


class ConfigError(ValueError):
    pass


class LockedMap:
    """A Hamt behind one mutex: the coarse-grained baseline."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._map = EMPTY

    def get(self, key: int, default: Any = None) -> Any:
        with self._lock:
            return self._map.get(key, default)

    def insert(self, key: int, value: Any) -> None:
        with self._lock:
            self._map = self._map.insert(key, value)

    def delete(self, key: int) -> None:
        with self._lock:
            self._map = self._map.delete(key)

    def items(self):
        with self._lock:
            return list(self._map.items())


MAKERS: dict[str, Callable[[], Any]] = {
    "pure": PureMap,
    "ctrie": CtrieMap,
    "adaptive": adaptive_map,
    "warmup": WarmupMap,
    "mvar-lock-baseline": LockedMap,
}


@dataclass
class WorkloadConfig:
    workload: str = "heatup"
    impl: str = "pure"
    threads: int = 1
    duration_ms: float = 500.0
    hot_ops: int = 10_000
    cold_ops: int | None = None
    mix: tuple[int, int, int] = (50, 25, 25)
    ratio: tuple[int, int] = (1, 200)
    key_range: int = 1 << 32
    seed: int = 0
    runs: int = 25
    warmup_runs: int = 2
    elements: int = 1_000_000
    value_bytes: int = 0
    verify: bool = False

    def validate(self) -> None:
        if self.workload not in WORKLOADS:
            raise ConfigError(f"unknown workload {self.workload!r}")
        if self.workload != "convert_scaling" and self.impl not in IMPLS:
            raise ConfigError(f"unknown impl {self.impl!r}")
        if len(self.mix) != 3 or sum(self.mix) != 100 or min(self.mix) < 0:
            raise ConfigError(f"mix must be three non-negative percentages summing to 100, got {self.mix}")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if self.warmup_runs < 0:
            raise ConfigError("warmup runs cannot be negative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.duration_ms <= 0:
            raise ConfigError("duration must be positive")
        if self.key_range < 1:
            raise ConfigError("key range must be positive")
        if self.hot_ops < 0 or (self.cold_ops is not None and self.cold_ops < 0):
            raise ConfigError("operation counts cannot be negative")
        if self.value_bytes < 0:
            raise ConfigError("value size cannot be negative")
        if self.ratio[0] <= 0 or self.ratio[1] < 0:
            raise ConfigError(f"bad hot:cold ratio {self.ratio}")

    @property
    def cold_count(self) -> int:
        if self.cold_ops is not None:
            return self.cold_ops
        return self.hot_ops * self.ratio[1] // self.ratio[0]


@dataclass
class BenchRecord:
    workload: str
    impl: str
    threads: int
    ops: int
    duration_ms: float
    throughput_ops_per_ms: float
    transition_latency_us: float
    run: int
    seed: int
    extra: dict = field(default_factory=dict, compare=False)

    def row(self) -> list:
        return [getattr(self, name) for name in CSV_HEADER]


# -- workload generation ------------------------------------------------------


def thread_rng(seed: int, tid: int, stream: str = "") -> random.Random:
    """Independent deterministic stream for one (seed, thread) pair."""
    return random.Random(f"{seed}:{tid}:{stream}")


GET, INSERT, DELETE = 0, 1, 2


def mixed_ops(seed: int, tid: int, n: int, mix: Sequence[int], key_range: int) -> list[tuple[int, int]]:
    """The first ``n`` (kind, key) pairs of a thread's op stream."""
    rng = thread_rng(seed, tid, "mix")
    get_cut = mix[0]
    ins_cut = mix[0] + mix[1]
    out = []
    for _ in range(n):
        r = rng.randrange(100)
        kind = GET if r < get_cut else INSERT if r < ins_cut else DELETE
        out.append((kind, rng.randrange(key_range)))
    return out


def split_evenly(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (i < extra) for i in range(parts)]


def hot_keys(seed: int, tid: int, n: int, key_range: int) -> list[int]:
    rng = thread_rng(seed, tid, "hot")
    # Keys are uniform over [0, key_range], both ends included.
    return [rng.randrange(key_range + 1) for _ in range(n)]


def cold_keys(seed: int, tid: int, n: int, pool: Sequence[int]) -> list[int]:
    rng = thread_rng(seed, tid, "cold")
    if not pool:
        return [0] * n
    return [pool[rng.randrange(len(pool))] for _ in range(n)]


def value_maker(size: int) -> Callable[[int], Any]:
    """Value stored under a key: the key itself, or a ``size``-byte blob."""
    if size == 0:
        return lambda k: k
    return lambda k: (k & MASK64).to_bytes(8, "little").ljust(size, b"\x5a")[:size]


# -- helpers ------------------------------------------------------------------


@contextlib.contextmanager
def quiet_gc():
    """Collect first, then keep the cycle collector out of the timed region.

    Same convention as ``timeit``. Reference counting still frees memory;
    without this, collections over the large prebuilt tries dominate the
    timings and land on whichever run happens to trigger them.
    """
    was_enabled = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


def _run_threads(bodies: Sequence[Callable[[], None]],
                 on_start: Callable[[], None] | None = None) -> float:
    """Start all bodies together; return elapsed wall seconds."""
    barrier = threading.Barrier(len(bodies) + 1)
    errors: list[BaseException] = []

    def wrap(body: Callable[[], None]) -> None:
        try:
            barrier.wait()
            body()
        except BaseException as e:
            errors.append(e)

    threads = [threading.Thread(target=wrap, args=(b,)) for b in bodies]
    with quiet_gc():
        for t in threads:
            t.start()
        barrier.wait()
        t0 = time.perf_counter()
        if on_start is not None:
            on_start()
        for t in threads:
            t.join()
        elapsed = time.perf_counter() - t0
    if errors:
        raise errors[0]
    return elapsed


def contents(m: Any) -> dict:
    """Final contents of any benchmarked map (may freeze a Ctrie)."""
    if isinstance(m, HybridMap):
        st = m.state()
        m = st.b if st.phase is B else st.a
    if isinstance(m, CtrieMap):
        m.freeze()
        return dict(m.iter_frozen())
    return dict(m.items())


# -- workloads ----------------------------------------------------------------


def heatup_once(cfg: WorkloadConfig, run: int) -> BenchRecord:
    m = MAKERS[cfg.impl]()
    stop = threading.Event()
    counts = [0] * cfg.threads
    streams = [mixed_ops(cfg.seed + run, t, 4096, cfg.mix, cfg.key_range) for t in range(cfg.threads)]

    def body(tid: int) -> Callable[[], None]:
        ops = streams[tid]

        def go() -> None:
            get, insert, delete = m.get, m.insert, m.delete
            value = value_maker(cfg.value_bytes)
            n = 0
            is_set = stop.is_set
            while not is_set():
                for kind, key in ops[(n & 4095):(n & 4095) + 64]:
                    if kind == GET:
                        get(key)
                    elif kind == INSERT:
                        insert(key, value(key))
                    else:
                        delete(key)
                n += 64
            counts[tid] = n

        return go

    timer = threading.Timer(cfg.duration_ms / 1000.0, stop.set)
    elapsed = _run_threads([body(t) for t in range(cfg.threads)], on_start=timer.start)
    timer.cancel()
    total = sum(counts)
    extra = {}
    if isinstance(m, HybridMap):
        extra["final_phase"] = m.phase
    if cfg.verify:
        got = contents(m)
        value = value_maker(cfg.value_bytes)
        bad = [k for k, v in got.items() if v != value(k) or not 0 <= k < cfg.key_range]
        if bad:
            raise AssertionError(f"heatup verify: {len(bad)} unexplained entries")
        if len(got) > min(cfg.key_range, total):
            raise AssertionError("heatup verify: more entries than possible")
    return BenchRecord("heatup", cfg.impl, cfg.threads, total, elapsed * 1e3,
                       total / (elapsed * 1e3), 0.0, run, cfg.seed, extra)


def _hot_phase(m: Any, keys: Sequence[Sequence[int]], value_bytes: int = 0) -> float:
    value = value_maker(value_bytes)

    def body(ks: Sequence[int]) -> Callable[[], None]:
        def go() -> None:
            insert = m.insert
            for k in ks:
                insert(k, value(k))
        return go

    return _run_threads([body(ks) for ks in keys])


def _cold_phase(m: Any, keys: Sequence[Sequence[int]]) -> float:
    def body(ks: Sequence[int]) -> Callable[[], None]:
        def go() -> None:
            get = m.get
            for k in ks:
                get(k)
        return go

    return _run_threads([body(ks) for ks in keys])


def _phase_keys(cfg: WorkloadConfig, run: int):
    seed = cfg.seed + run
    hot = [hot_keys(seed, t, n, cfg.key_range) for t, n in enumerate(split_evenly(cfg.hot_ops, cfg.threads))]
    pool = sorted({k for ks in hot for k in ks})
    cold = [cold_keys(seed, t, n, pool) for t, n in enumerate(split_evenly(cfg.cold_count, cfg.threads))]
    return hot, cold, pool


def _verify_hot(m: Any, pool: Sequence[int], value_bytes: int = 0) -> None:
    got = contents(m)
    value = value_maker(value_bytes)
    if set(got) != set(pool) or any(got[k] != value(k) for k in pool):
        raise AssertionError("hotcold verify: contents differ from inserted keys")


def hotcold_once(cfg: WorkloadConfig, run: int, keys=None) -> BenchRecord:
    hot, cold, pool = keys or _phase_keys(cfg, run)
    m = MAKERS[cfg.impl]()
    t_hot = _hot_phase(m, hot, cfg.value_bytes)
    with quiet_gc():
        t0 = time.perf_counter()
        if isinstance(m, HybridMap):
            m.transition()
        t_tr = time.perf_counter() - t0
    t_cold = _cold_phase(m, cold)
    if cfg.verify:
        _verify_hot(m, pool, cfg.value_bytes)
    total = cfg.hot_ops + cfg.cold_count
    ms = (t_hot + t_tr + t_cold) * 1e3
    return BenchRecord("hotcold", cfg.impl, cfg.threads, total, ms, total / ms,
                       t_tr * 1e6, run, cfg.seed,
                       {"hot_ms": t_hot * 1e3, "cold_ms": t_cold * 1e3})


def phases_separate_once(cfg: WorkloadConfig, run: int) -> list[BenchRecord]:
    hot, cold, pool = _phase_keys(cfg, run)
    m = MAKERS[cfg.impl]()
    t_hot = _hot_phase(m, hot, cfg.value_bytes)
    with quiet_gc():
        t0 = time.perf_counter()
        if isinstance(m, HybridMap):
            m.transition()
        t_tr = time.perf_counter() - t0
    t_cold = _cold_phase(m, cold)
    if cfg.verify:
        _verify_hot(m, pool, cfg.value_bytes)
    out = []
    for phase, n, t in (("hot", cfg.hot_ops, t_hot), ("cold", cfg.cold_count, t_cold)):
        ms = t * 1e3
        out.append(BenchRecord(f"phases_separate/{phase}", cfg.impl, cfg.threads, n, ms,
                               n / ms if ms else 0.0, t_tr * 1e6, run, cfg.seed))
    return out


def build_ctrie(n: int, seed: int) -> CtrieMap:
    rng = thread_rng(seed, 0, "build")
    t = CtrieMap()
    for _ in range(n):
        k = rng.getrandbits(63)
        t.insert(k, k)
    return t


def clone_ctrie(t: CtrieMap) -> CtrieMap:
    """Fresh, unfrozen copy of a quiescent trie. Leaves are shared."""
    out = CtrieMap()

    def copy(node: Branch) -> Branch:
        slots = tuple(FreezableCell(copy(c.get())) if type(c) is FreezableCell else c
                      for c in node.slots)
        return Branch(node.bitmap, slots)

    out.root.write(copy(t.root.get()))
    return out


def convert_once(trie: CtrieMap, threads: int, sequential: bool = False) -> tuple[float, Hamt]:
    """Time freeze+convert of ``trie`` into a fresh accumulator."""
    acc = FreezableCell(EMPTY)
    if sequential:
        with quiet_gc():
            t0 = time.perf_counter()
            trie.freeze_convert_sequential(acc)
            elapsed = time.perf_counter() - t0
        return elapsed, acc.get()
    bodies = [lambda s=s: trie.freeze_convert(acc, seed=s) for s in range(threads)]
    elapsed = _run_threads(bodies)
    return elapsed, acc.get()


def convert_scaling(cfg: WorkloadConfig, thread_counts: Sequence[int] = (1, 2, 4, 8)) -> list[BenchRecord]:
    base = build_ctrie(cfg.elements, cfg.seed)
    size = check_ctrie(base)
    records = []
    for run in range(cfg.runs):
        variants = [("sequential", 1)] + [("randomized", t) for t in thread_counts]
        for impl, t in variants:
            trie = clone_ctrie(base)
            secs, result = convert_once(trie, t, sequential=(impl == "sequential"))
            if cfg.verify and len(result) != size:
                raise AssertionError("convert verify: accumulator size mismatch")
            ms = secs * 1e3
            records.append(BenchRecord("convert_scaling", impl, t, len(result), ms,
                                       len(result) / ms, secs * 1e6, run, cfg.seed))
    return records


def run_heatup(cfg: WorkloadConfig) -> list[BenchRecord]:
    cfg.validate()
    for w in range(cfg.warmup_runs):
        heatup_once(cfg, -1 - w)
    return [heatup_once(cfg, r) for r in range(cfg.runs)]


def run_hotcold(cfg: WorkloadConfig) -> list[BenchRecord]:
    cfg.validate()
    for w in range(cfg.warmup_runs):
        hotcold_once(cfg, -1 - w)
    return [hotcold_once(cfg, r) for r in range(cfg.runs)]


def run_phases_separate(cfg: WorkloadConfig) -> list[BenchRecord]:
    cfg.validate()
    for w in range(cfg.warmup_runs):
        phases_separate_once(cfg, -1 - w)
    out: list[BenchRecord] = []
    for r in range(cfg.runs):
        out.extend(phases_separate_once(cfg, r))
    return out


def run_convert_scaling(cfg: WorkloadConfig, thread_counts: Sequence[int] = (1, 2, 4, 8)) -> list[BenchRecord]:
    cfg.validate()
    return convert_scaling(cfg, thread_counts)


RUNNERS = {
    "heatup": run_heatup,
    "hotcold": run_hotcold,
    "phases_separate": run_phases_separate,
}


def median(records: Iterable[BenchRecord], attr: str) -> float:
    return statistics.median(getattr(r, attr) for r in records)


def emit_csv(records: Iterable[BenchRecord], path: str) -> None:
    rows = sorted(records, key=lambda r: (r.workload, r.impl, r.threads, r.run))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.row())


# -- command line --------------------------------------------------------------


def _parse_mix(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("mix needs three comma-separated percentages")
    try:
        return tuple(int(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad mix {text!r}") from None


def _parse_ratio(text: str) -> tuple[int, int]:
    try:
        hot, cold = text.split(":")
        return int(hot), int(cold)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratio {text!r}, expected H:C") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description=__doc__.split("\n\n")[0])
    p.add_argument("--workload", choices=WORKLOADS, default="heatup")
    p.add_argument("--impl", default="pure",
                   help="comma-separated subset of: " + ", ".join(IMPLS))
    p.add_argument("--threads", type=_int_list, default=[1],
                   help="thread count, or a comma-separated list")
    p.add_argument("--duration-ms", type=float, default=500.0)
    p.add_argument("--hot-ops", type=int, default=10_000)
    p.add_argument("--cold-ops", type=int, default=None)
    p.add_argument("--mix", type=_parse_mix, default=(50, 25, 25), help="get,insert,delete percentages")
    p.add_argument("--ratio", type=_parse_ratio, default=(1, 200), help="hot:cold ratio")
    p.add_argument("--key-range", type=int, default=1 << 32)
    p.add_argument("--elements", type=int, default=1_000_000, help="trie size for convert_scaling")
    p.add_argument("--value-bytes", type=int, default=0,
                   help="store N-byte blobs instead of integer values (0 = integers)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=25)
    p.add_argument("--warmup-runs", type=int, default=2)
    p.add_argument("--csv", default=None, help="write records here (default: stdout)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    verify = os.environ.get("BENCH_VERIFY") == "1"
    impls = args.impl.split(",")
    base = WorkloadConfig(
        workload=args.workload, impl=impls[0], threads=args.threads[0],
        duration_ms=args.duration_ms, hot_ops=args.hot_ops, cold_ops=args.cold_ops,
        mix=args.mix, ratio=args.ratio, key_range=args.key_range, seed=args.seed,
        runs=args.runs, warmup_runs=args.warmup_runs, elements=args.elements, value_bytes=args.value_bytes,
        verify=verify,
    )
    records: list[BenchRecord] = []
    try:
        if args.workload == "convert_scaling":
            records = run_convert_scaling(base, args.threads)
        else:
            for impl in impls:
                for t in args.threads:
                    cfg = replace(base, impl=impl, threads=t)
                    cfg.validate()
                    got = RUNNERS[args.workload](cfg)
                    log.info("%s %s threads=%d median %.1f ms, %.1f ops/ms", args.workload, impl, t,
                             median(got, "duration_ms"), median(got, "throughput_ops_per_ms"))
                    records.extend(got)
    except ConfigError as e:
        print(f"bench: config error: {e}", file=sys.stderr)
        return 2
    if args.csv:
        emit_csv(records, args.csv)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(CSV_HEADER)
        for r in sorted(records, key=lambda r: (r.workload, r.impl, r.threads, r.run)):
            w.writerow(r.row())
    return 0


if __name__ == "__main__":
    sys.exit(main())
