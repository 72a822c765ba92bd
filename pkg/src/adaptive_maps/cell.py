"""Freezable atomic reference cells.

A :class:`FreezableCell` holds one immutable :class:`VersionToken` box at a
time. Every successful write installs a fresh box, so a token read earlier can
be compared by identity to decide whether the cell changed in between. The
frozen and done flags live in the same box as the payload, which means phase
and value always change together in a single pointer swap.

CPython has no user-level compare-and-swap, so the swap itself is guarded by a
per-cell lock that is held only for the compare and the store. No user code
ever runs while that lock is held.
"""

from __future__ import annotations

import enum
import threading
from typing import Any, Callable, NamedTuple

__all__ = [
    "CasOutcome",
    "CasStatus",
    "FreezableCell",
    "FrozenError",
    "LOST",
    "SUCCEEDED",
    "FROZEN",
    "VersionToken",
]

# Verification hook: called as hook(event, cell) before every primitive cell
# operation. Installed only through adaptive_maps.verification.
_hook: Callable[[str, "FreezableCell"], None] | None = None


class FrozenError(Exception):
    """A write reached a frozen cell. ``value`` is the frozen payload."""

    def __init__(self, value: Any = None) -> None:
        super().__init__("write to frozen cell")
        self.value = value


class VersionToken:
    """One observation of a cell.

    Tokens compare by identity: two tokens are equal iff they observed the
    same installed box, whatever the payloads look like.
    """

    __slots__ = ("value", "frozen", "done")

    def __init__(self, value: Any, frozen: bool = False, done: bool = False) -> None:
        self.value = value
        self.frozen = frozen
        self.done = done

    def peek(self) -> Any:
        return self.value

    def __repr__(self) -> str:
        phase = "Frozen" if self.frozen else "Active"
        if self.done:
            phase += "+done"
        return f"<VersionToken {phase} {self.value!r} at 0x{id(self):x}>"


class CasStatus(enum.Enum):
    SUCCEEDED = "succeeded"
    LOST = "lost"
    FROZEN = "frozen"


SUCCEEDED = CasStatus.SUCCEEDED
LOST = CasStatus.LOST
FROZEN = CasStatus.FROZEN


class CasOutcome(NamedTuple):
    status: CasStatus
    token: VersionToken

    @property
    def ok(self) -> bool:
        return self.status is SUCCEEDED


class FreezableCell:
    """An atomically updatable reference that can be frozen once, forever."""

    __slots__ = ("_box", "_lock", "__weakref__")

    def __init__(self, value: Any = None) -> None:
        self._box = VersionToken(value)
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"<FreezableCell {self._box!r}>"

    # -- reads -------------------------------------------------------------

    def ticket(self) -> VersionToken:
        """Current token. The payload is ``ticket().value``."""
        if _hook is not None:
            _hook("read", self)
        return self._box

    def read(self) -> tuple[VersionToken, Any]:
        if _hook is not None:
            _hook("read", self)
        box = self._box
        return box, box.value

    def get(self) -> Any:
        if _hook is not None:
            _hook("read", self)
        return self._box.value

    @property
    def frozen(self) -> bool:
        return self._box.frozen

    def is_done(self) -> bool:
        if _hook is not None:
            _hook("read", self)
        return self._box.done

    # -- writes ------------------------------------------------------------

    def cas(self, old: VersionToken, new: Any) -> CasOutcome:
        if _hook is not None:
            _hook("cas", self)
        with self._lock:
            cur = self._box
            if cur.frozen:
                return CasOutcome(FROZEN, cur)
            if cur is not old:
                return CasOutcome(LOST, cur)
            box = self._box = VersionToken(new)
        return CasOutcome(SUCCEEDED, box)

    def atomic_modify(self, fn: Callable[[Any], Any]) -> Any:
        """Apply ``fn`` to the payload atomically and return the new payload.

        ``fn`` may run more than once under contention. Raises
        :class:`FrozenError` if the cell is (or becomes) frozen.
        """
        tok = self.ticket()
        while True:
            if tok.frozen:
                raise FrozenError(tok.value)
            new = fn(tok.value)
            status, tok = self.cas(tok, new)
            if status is SUCCEEDED:
                return new

    def write(self, value: Any) -> None:
        tok = self.ticket()
        while True:
            if tok.frozen:
                raise FrozenError(tok.value)
            status, tok = self.cas(tok, value)
            if status is SUCCEEDED:
                return

    # -- freezing ----------------------------------------------------------

    def try_freeze(self, old: VersionToken) -> tuple[bool, VersionToken]:
        """One freeze attempt; True iff the cell is frozen on return."""
        if old.frozen:
            return True, old
        if _hook is not None:
            _hook("freeze", self)
        with self._lock:
            cur = self._box
            if cur.frozen:
                return True, cur
            if cur is not old:
                return False, cur
            box = self._box = VersionToken(cur.value, True)
        return True, box

    def freeze(self) -> None:
        # Each failed round means some writer's CAS succeeded in between.
        tok = self.ticket()
        while True:
            ok, tok = self.try_freeze(tok)
            if ok:
                return

    def mark_done(self) -> None:
        """Set the done bit. The cell must already be frozen."""
        if _hook is not None:
            _hook("done", self)
        with self._lock:
            cur = self._box
            assert cur.frozen, "mark_done on a cell that is not frozen"
            if cur.frozen and not cur.done:
                self._box = VersionToken(cur.value, True, True)
