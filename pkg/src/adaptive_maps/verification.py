"""Test-only instrumentation: cell-operation hooks and arbitrary-order freezing.

Nothing here is needed for normal use. Installing a hook makes every
primitive cell operation (read, cas, freeze attempt, done mark) call it first,
which lets tests count steps, inject yields, or park a thread at a chosen
point.
"""

from __future__ import annotations

import contextlib
import random
import threading
from typing import Callable, Iterator

from . import cell as _cell
from .cell import FreezableCell, FrozenError
from .ctrie import CtrieMap

__all__ = [
    "cell_hook",
    "freeze_permuted",
    "StepCounter",
    "PauseController",
    "random_yields",
    "ForcedLosses",
]


@contextlib.contextmanager
def cell_hook(hook: Callable[[str, FreezableCell], None]) -> Iterator[None]:
    prev = _cell._hook
    _cell._hook = hook
    try:
        yield
    finally:
        _cell._hook = prev


def freeze_permuted(trie: CtrieMap, rng: random.Random) -> None:
    """Freeze reachable cells in a random order, then finish top-down.

    The first pass may miss cells attached after collection; the top-down
    pass afterwards guarantees every reachable cell ends frozen.
    """
    cells = trie.cells()
    rng.shuffle(cells)
    for c in cells:
        c.freeze()
    trie.freeze()


class StepCounter:
    """Counts hooked cell operations per thread."""

    def __init__(self) -> None:
        self._local = threading.local()

    def __call__(self, event: str, c: FreezableCell) -> None:
        self._local.n = getattr(self._local, "n", 0) + 1

    @property
    def steps(self) -> int:
        return getattr(self._local, "n", 0)

    def reset(self) -> None:
        self._local.n = 0


def random_yields(seed: int, probability: float = 0.3) -> Callable[[str, FreezableCell], None]:
    """A hook that releases the GIL at random cell operations."""
    import time

    rng = random.Random(seed)
    lock = threading.Lock()

    def hook(event: str, c: FreezableCell) -> None:
        with lock:
            r = rng.random()
        if r < probability:
            time.sleep(0)

    return hook


class PauseController:
    """Parks registered threads at a chosen cell-operation count.

    A registered thread is suspended just before its ``pause_at``-th hooked
    operation and stays there until :meth:`release`. Unregistered threads
    are only counted. A thread counted as live gets its steps tallied in
    ``live_steps``.
    """

    def __init__(self) -> None:
        self._targets: dict[int, int] = {}
        self._counts: dict[int, int] = {}
        self._parked: dict[int, threading.Event] = {}
        self._release = threading.Event()
        self._lock = threading.Lock()
        self.live_thread: int | None = None
        self.live_steps = 0

    def register(self, pause_at: int) -> None:
        tid = threading.get_ident()
        with self._lock:
            self._targets[tid] = pause_at
            self._counts[tid] = 0
            self._parked[tid] = threading.Event()

    def parked_event(self, tid: int) -> threading.Event:
        return self._parked[tid]

    def __call__(self, event: str, c: FreezableCell) -> None:
        tid = threading.get_ident()
        if tid == self.live_thread:
            self.live_steps += 1
            return
        target = self._targets.get(tid)
        if target is None:
            return
        n = self._counts[tid] + 1
        self._counts[tid] = n
        if n == target:
            self._parked[tid].set()
            self._release.wait()

    def release(self) -> None:
        self._release.set()


def _same(v):
    return v


class ForcedLosses:
    """Makes one thread lose ``n`` consecutive CASes on ``cell``.

    The first thread to reach its ``at``-th CAS on the cell is chosen; just
    before each of its next ``n`` CAS attempts the hook rewrites the cell
    with its current value, so contents never change but the attempt fails.
    """

    def __init__(self, cell: FreezableCell, at: int = 1, n: int = 2) -> None:
        self.cell = cell
        self.at = at
        self.left = n
        self.victim: int | None = None
        self._seen: dict[int, int] = {}
        self._lock = threading.Lock()
        self._busy = threading.local()

    def __call__(self, event: str, c: FreezableCell) -> None:
        if event != "cas" or c is not self.cell or getattr(self._busy, "on", False):
            return
        tid = threading.get_ident()
        with self._lock:
            if self.victim is None:
                self._seen[tid] = self._seen.get(tid, 0) + 1
                if self._seen[tid] >= self.at:
                    self.victim = tid
            if tid != self.victim or self.left == 0:
                return
            self.left -= 1
        self._busy.on = True
        try:
            c.atomic_modify(_same)
        except FrozenError:
            pass
        finally:
            self._busy.on = False
