"""Hybrid maps that switch representation at runtime.

The root cell holds one of three states: ``A(a)``, ``AB(a, b)`` while a
transition is in flight, and ``B(b)`` afterwards. Reads go to whichever
structure is live and never wait. Writes that hit a frozen cell in ``a`` (or
find the root in ``AB``) help finish the transition and then retry on ``b``.

Two instantiations ship here: :func:`adaptive_map` (Ctrie to PureMap, manual
transition) and :class:`WarmupMap` (PureMap to Ctrie, triggered by CAS
contention).
"""

from __future__ import annotations

import threading
import time
from typing import Any, Callable, Generic, NamedTuple, TypeVar

from .cell import LOST, SUCCEEDED, CasStatus, FreezableCell, FrozenError
from .ctrie import CtrieMap
from .puremap import PureMap

__all__ = [
    "A",
    "AB",
    "B",
    "ContentionPolicy",
    "HybridMap",
    "HybridState",
    "WarmupMap",
    "adaptive_map",
]


SA = TypeVar("SA")
SB = TypeVar("SB")

A = "A"
AB = "AB"
B = "B"


class HybridState(NamedTuple):
    phase: str
    a: Any
    b: Any


class HybridMap(Generic[SA, SB]):
    """Generic A/B hybrid.

    ``a`` is the starting structure. ``new_b`` creates an empty target,
    ``freeze(a)`` freezes every cell of ``a`` and ``convert(a, b)`` copies a
    frozen ``a`` into ``b``; both must tolerate many concurrent callers.
    """

    def __init__(
        self,
        a: SA,
        new_b: Callable[[], SB],
        freeze: Callable[[SA], None],
        convert: Callable[[SA, SB], None],
    ) -> None:
        self.root = FreezableCell(HybridState(A, a, None))
        self.source = a
        self.new_b = new_b
        self.freeze = freeze
        self.convert = convert

    @property
    def phase(self) -> str:
        return self.root.get().phase

    def state(self) -> HybridState:
        return self.root.get()

    def get(self, key: int, default: Any = None) -> Any:
        st = self.root.get()
        if st.phase is B:
            self._settle(st.b)
            return st.b.get(key, default)
        return st.a.get(key, default)

    def _settle(self, b: SB) -> None:
        # B is terminal, so later reads can go straight to b.
        self.get = b.get

    def _run(self, op: Callable[[Any], Any]) -> Any:
        while True:
            st = self.root.get()
            if st.phase is A:
                try:
                    return op(st.a)
                except FrozenError:
                    self.transition()
            elif st.phase is AB:
                self.transition()
            else:
                return op(st.b)

    def _run_blocking(self, op: Callable[[Any], Any]) -> Any:
        while True:
            st = self.root.get()
            if st.phase is A:
                try:
                    return op(st.a)
                except FrozenError:
                    time.sleep(0)
            elif st.phase is AB:
                time.sleep(0)
            else:
                return op(st.b)

    def insert(self, key: int, value: Any) -> None:
        self._run(lambda m: m.insert(key, value))

    def delete(self, key: int) -> None:
        self._run(lambda m: m.delete(key))

    def insert_blocking(self, key: int, value: Any) -> None:
        self._run_blocking(lambda m: m.insert(key, value))

    def delete_blocking(self, key: int) -> None:
        self._run_blocking(lambda m: m.delete(key))

    def transition(self) -> None:
        """Lock-free transition: on return the root is in state B."""
        root = self.root
        while True:
            tok = root.ticket()
            st = tok.value
            if st.phase is A:
                b = self.new_b()
                won, tok2 = root.cas(tok, HybridState(AB, st.a, b))
                if won is not SUCCEEDED:
                    continue
                self._finish(st.a, b, tok2)
                return
            if st.phase is AB:
                self._finish(st.a, st.b, tok)
                return
            return

    def _finish(self, a: SA, b: SB, tok) -> None:
        self.freeze(a)
        self.convert(a, b)
        # Failure means another helper already installed B(b).
        self.root.cas(tok, HybridState(B, None, b))
        self._settle(b)

    def transition_blocking(self) -> None:
        """Only the thread that wins A -> AB does the work; others return."""
        root = self.root
        tok = root.ticket()
        st = tok.value
        if st.phase is not A:
            return
        b = self.new_b()
        status, tok = root.cas(tok, HybridState(AB, st.a, b))
        if status is not SUCCEEDED:
            return
        self.freeze(st.a)
        self.convert(st.a, b)
        while True:
            status, tok = root.cas(tok, HybridState(B, None, b))
            if status is SUCCEEDED:
                self._settle(b)
                return


def adaptive_map(fused: bool = True) -> HybridMap[CtrieMap, PureMap]:
    """Ctrie that cools down into a PureMap when ``transition`` is called.

    With ``fused`` the freeze happens inside the cooperative freeze+convert
    pass; otherwise a full top-down freeze runs first.
    """
    return HybridMap(
        CtrieMap(),
        PureMap,
        _skip_freeze if fused else CtrieMap.freeze,
        _ctrie_to_pure,
    )


def _skip_freeze(a: CtrieMap) -> None:
    pass


_seed_lock = threading.Lock()
_seed_counter = 0


def _helper_seed() -> int:
    global _seed_counter
    with _seed_lock:
        _seed_counter += 1
        return (threading.get_ident() * 0x9E3779B1 + _seed_counter) & 0xFFFFFFFF


def _ctrie_to_pure(a: CtrieMap, b: PureMap) -> None:
    a.convert_into(b, seed=_helper_seed())


class ContentionPolicy:
    """Per-thread count of consecutive lost CASes."""

    def __init__(self, threshold: int = 2) -> None:
        self.threshold = threshold
        self._local = threading.local()

    @property
    def count(self) -> int:
        return getattr(self._local, "lost", 0)

    def observe(self, status: CasStatus) -> bool:
        """Record one CAS outcome; True when the threshold is reached."""
        if status is LOST:
            lost = getattr(self._local, "lost", 0) + 1
            if lost >= self.threshold:
                self._local.lost = 0
                return True
            self._local.lost = lost
        else:
            self._local.lost = 0
        return False


class WarmupMap(HybridMap[PureMap, CtrieMap]):
    """PureMap that heats up into a Ctrie once a thread sees contention."""

    def __init__(self, threshold: int = 2) -> None:
        super().__init__(PureMap(), CtrieMap, PureMap.freeze, PureMap.convert_into)
        self.policy = ContentionPolicy(threshold)
        self.transitions_started = 0

    def _observe(self, status: CasStatus) -> None:
        if self.policy.observe(status):
            self.transitions_started += 1
            self.transition()

    def insert(self, key: int, value: Any) -> None:
        self._run(lambda m: m.insert(key, value, self._observe) if type(m) is PureMap
                  else m.insert(key, value))

    def delete(self, key: int) -> None:
        self._run(lambda m: m.delete(key, self._observe) if type(m) is PureMap
                  else m.delete(key))
