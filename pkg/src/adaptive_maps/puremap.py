"""A persistent map in a single freezable cell, updated by speculative CAS."""

from __future__ import annotations

from typing import TYPE_CHECKING, Any, Callable, Iterator

from .cell import LOST, SUCCEEDED, CasStatus, FreezableCell, FrozenError
from .hamt import EMPTY, Hamt

if TYPE_CHECKING:
    from .ctrie import CtrieMap

__all__ = ["PureMap"]

CasObserver = Callable[[CasStatus], None]


class PureMap:
    """One :class:`FreezableCell` holding an immutable :class:`Hamt`.

    Writers read the current map, build a new one and CAS it in, retrying on
    interference. Snapshots are a single read.

    When a PureMap is the target of a transition, converting threads union
    their results into ``accumulator``; the first thread to see the source
    fully processed seals the accumulator (freezes it) and publishes its
    final value into the live cell exactly once.
    """

    __slots__ = ("_cell", "_pristine", "accumulator", "observer")

    def __init__(self, contents: Hamt = EMPTY, observer: CasObserver | None = None) -> None:
        self._cell = FreezableCell(contents)
        self._pristine = self._cell.ticket()
        self.accumulator = FreezableCell(EMPTY)
        self.observer = observer

    @property
    def cell(self) -> FreezableCell:
        return self._cell

    def __repr__(self) -> str:
        return f"<PureMap size={len(self._cell._box.value)} frozen={self._cell.frozen}>"

    # -- reads -------------------------------------------------------------

    def get(self, key: int, default: Any = None) -> Any:
        return self._cell.get().get(key, default)

    def snapshot(self) -> Hamt:
        return self._cell.get()

    def __len__(self) -> int:
        return len(self._cell.get())

    def items(self) -> Iterator[tuple[int, Any]]:
        return self._cell.get().items()

    # -- writes ------------------------------------------------------------

    def _update(self, fn: Callable[[Hamt], Hamt], observer: CasObserver | None) -> None:
        cell = self._cell
        observer = observer or self.observer
        tok = cell.ticket()
        while True:
            if tok.frozen:
                raise FrozenError(tok.value)
            new = fn(tok.value)
            if new is tok.value:
                # Nothing to change; the read above is the linearization point.
                return
            status, tok = cell.cas(tok, new)
            if observer is not None:
                observer(status)
            if status is SUCCEEDED:
                return
            if status is not LOST:
                raise FrozenError(tok.value)

    def insert(self, key: int, value: Any, observer: CasObserver | None = None) -> None:
        self._update(lambda h: h.insert(key, value), observer)

    def delete(self, key: int, observer: CasObserver | None = None) -> None:
        self._update(lambda h: h.delete(key), observer)

    # -- freezing and conversion ------------------------------------------

    def freeze(self) -> None:
        self._cell.freeze()

    def convert_into(self, target: "CtrieMap") -> None:
        """Copy the frozen contents into a freshly created ``target``.

        Safe to call from several helpers at once: each builds a private trie
        and tries to install it at the target's untouched root, so exactly one
        install happens and later callers change nothing.
        """
        tok = self._cell.ticket()
        assert tok.frozen, "convert_into needs a frozen PureMap"
        target.install_from(tok.value)

    def publish(self, contents: Hamt) -> bool:
        """Install ``contents`` if the live cell was never written. One-shot."""
        return self._cell.cas(self._pristine, contents).ok
