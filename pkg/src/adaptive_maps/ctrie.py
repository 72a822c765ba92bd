"""Lock-free concurrent hash trie built on freezable cells.

Every mutable location in the trie is a :class:`FreezableCell` (an
"indirection") holding an immutable :class:`~adaptive_maps.hamt.Branch`.
Branch slots hold leaves, collision buckets, or further indirections. Each
update copies one branch and commits it with a single CAS on the owning
indirection; that CAS is the linearization point. A lost CAS restarts from
the root, a frozen one raises :class:`FrozenError`.

Deletes never contract the trie, so a branch may become empty.
"""

from __future__ import annotations

import random
from typing import TYPE_CHECKING, Any, Iterator

from .cell import FROZEN, SUCCEEDED, FreezableCell, FrozenError
from .hamt import (
    EMPTY_BRANCH,
    MAX_SHIFT,
    Branch,
    Collision,
    Hamt,
    Leaf,
    mix64,
)

if TYPE_CHECKING:
    from .puremap import PureMap

__all__ = ["CtrieMap", "check_ctrie"]

Indirection = FreezableCell


def _split(a: Leaf, b: Leaf, shift: int):
    """Fresh subtree at ``shift`` holding two leaves with distinct keys."""
    if shift > MAX_SHIFT:
        return Collision(a.hash, (a, b))
    ca = (a.hash >> shift) & 63
    cb = (b.hash >> shift) & 63
    if ca == cb:
        return Indirection(Branch(1 << ca, (_split(a, b, shift + 6),)))
    pair = (a, b) if ca < cb else (b, a)
    return Indirection(Branch((1 << ca) | (1 << cb), pair))


class CtrieMap:
    """Concurrent map from integer keys to values."""

    __slots__ = ("root", "_pristine")

    def __init__(self) -> None:
        self.root = Indirection(EMPTY_BRANCH)
        self._pristine = self.root.ticket()

    def __repr__(self) -> str:
        return f"<CtrieMap root={self.root!r}>"

    def get(self, key: int, default: Any = None) -> Any:
        h = mix64(key)
        cell = self.root
        shift = 0
        while True:
            node = cell.get()
            bit = 1 << ((h >> shift) & 63)
            bitmap = node.bitmap
            if not bitmap & bit:
                return default
            child = node.slots[(bitmap & (bit - 1)).bit_count()]
            t = type(child)
            if t is Indirection:
                cell = child
                shift += 6
            elif t is Leaf:
                return child.value if child.key == key else default
            else:
                for leaf in child.leaves:
                    if leaf.key == key:
                        return leaf.value
                return default

    def insert(self, key: int, value: Any) -> None:
        leaf = Leaf(mix64(key), key, value)
        h = leaf.hash
        while True:
            cell = self.root
            shift = 0
            while True:
                tok = cell.ticket()
                node = tok.value
                bit = 1 << ((h >> shift) & 63)
                bitmap = node.bitmap
                slots = node.slots
                idx = (bitmap & (bit - 1)).bit_count()
                if not bitmap & bit:
                    new = Branch(bitmap | bit, slots[:idx] + (leaf,) + slots[idx:])
                    break
                child = slots[idx]
                t = type(child)
                if t is Indirection:
                    cell = child
                    shift += 6
                    continue
                if t is Leaf:
                    new_child = leaf if child.key == key else _split(child, leaf, shift + 6)
                else:
                    leaves = tuple(x for x in child.leaves if x.key != key) + (leaf,)
                    new_child = Collision(child.hash, leaves)
                new = Branch(bitmap, slots[:idx] + (new_child,) + slots[idx + 1:])
                break
            status, cur = cell.cas(tok, new)
            if status is SUCCEEDED:
                return
            if status is FROZEN:
                raise FrozenError(cur.value)

    def delete(self, key: int) -> None:
        h = mix64(key)
        while True:
            cell = self.root
            shift = 0
            while True:
                tok = cell.ticket()
                node = tok.value
                bit = 1 << ((h >> shift) & 63)
                bitmap = node.bitmap
                if not bitmap & bit:
                    return
                slots = node.slots
                idx = (bitmap & (bit - 1)).bit_count()
                child = slots[idx]
                t = type(child)
                if t is Indirection:
                    cell = child
                    shift += 6
                    continue
                if t is Leaf:
                    if child.key != key:
                        return
                    new = Branch(bitmap ^ bit, slots[:idx] + slots[idx + 1:])
                    break
                rest = tuple(x for x in child.leaves if x.key != key)
                if len(rest) == len(child.leaves):
                    return
                new_child = rest[0] if len(rest) == 1 else Collision(child.hash, rest)
                new = Branch(bitmap, slots[:idx] + (new_child,) + slots[idx + 1:])
                break
            status, cur = cell.cas(tok, new)
            if status is SUCCEEDED:
                return
            if status is FROZEN:
                raise FrozenError(cur.value)

    # -- whole-structure operations ----------------------------------------

    def freeze(self) -> None:
        """Freeze every reachable indirection, each one before reading it."""
        stack = [self.root]
        while stack:
            cell = stack.pop()
            cell.freeze()
            for child in cell.get().slots:
                if type(child) is Indirection:
                    stack.append(child)

    def cells(self) -> list[FreezableCell]:
        """All currently reachable indirections, root first. Reads only."""
        out = []
        stack = [self.root]
        while stack:
            cell = stack.pop()
            out.append(cell)
            for child in cell.get().slots:
                if type(child) is Indirection:
                    stack.append(child)
        return out

    def iter_frozen(self) -> Iterator[tuple[int, Any]]:
        """Preorder (key, value) stream of a fully frozen trie."""
        stack = [self.root]
        while stack:
            cell = stack.pop()
            tok = cell.ticket()
            if not tok.frozen:
                raise ValueError("iter_frozen reached an active cell")
            for child in reversed(tok.value.slots):
                t = type(child)
                if t is Indirection:
                    stack.append(child)
                elif t is Leaf:
                    yield child.key, child.value
                else:
                    for leaf in child.leaves:
                        yield leaf.key, leaf.value

    def freeze_convert(self, acc: FreezableCell, seed: int | None = None) -> None:
        """Freeze the trie and union its contents into ``acc``.

        Reentrant: concurrent callers with different seeds start on different
        top-level subtrees and skip subtrees already marked done. Below the
        first level each subtree is walked sequentially into a private map.
        """
        root = self.root
        if root.is_done():
            return
        rng = random.Random(seed)
        root.freeze()
        top = root.get()
        slots = top.slots
        root_bitmap = top.bitmap
        order = list(range(len(slots)))
        rng.shuffle(order)
        loose_bits = 0
        loose = []
        for i in order:
            child = slots[i]
            if type(child) is Indirection:
                if child.is_done():
                    continue
                node, n = _to_node(child)
                if n:
                    private = Hamt(Branch(_slot_bit(root_bitmap, i), (node,)), n)
                    acc.atomic_modify(lambda h: h.union(private))
                child.mark_done()
            else:
                loose_bits |= _slot_bit(root_bitmap, i)
                loose.append((i, child))
        if loose:
            loose.sort(key=lambda p: p[0])
            nodes = tuple(c for _, c in loose)
            batch = Hamt(Branch(loose_bits, nodes), sum(_size(c) for c in nodes))
            acc.atomic_modify(lambda h: h.union(batch))
        root.mark_done()

    def freeze_convert_sequential(self, acc: FreezableCell) -> None:
        """Single preorder pass over the whole trie, no helpers."""
        node, n = _to_node(self.root, is_root=True)
        private = Hamt(node, n)
        acc.atomic_modify(lambda h: h.union(private))
        self.root.mark_done()

    def convert_into(self, target: "PureMap", seed: int | None = None) -> None:
        """Freeze and copy into a fresh ``target``; safe for many helpers."""
        acc = target.accumulator
        try:
            self.freeze_convert(acc, seed)
        except FrozenError:
            # Another helper already sealed a complete accumulator.
            pass
        acc.freeze()
        target.publish(acc.get())

    def install_from(self, contents: Hamt) -> bool:
        """Load ``contents`` into this trie if it was never written.

        Builds a private trie and installs its root branch with one CAS
        against the creation-time token, so at most one caller succeeds.
        """
        if self.root.ticket() is not self._pristine:
            return False
        private = CtrieMap()
        for k, v in contents.items():
            private.insert(k, v)
        return self.root.cas(self._pristine, private.root.get()).ok


def _slot_bit(bitmap: int, index: int) -> int:
    """The bitmap bit owning slot ``index``."""
    for _ in range(index):
        bitmap &= bitmap - 1
    return bitmap & -bitmap


def _size(node) -> int:
    t = type(node)
    if t is Leaf:
        return 1
    if t is Collision:
        return len(node.leaves)
    return sum(_size(c) for c in node.slots)


def _to_node(cell: FreezableCell, is_root: bool = False):
    """Freeze a subtree in preorder and copy it as a canonical Hamt node.

    Leaves and collision buckets are shared. Returns (node, leaf count);
    the node is None for an empty non-root subtree. Emptied branches are
    dropped and single-leaf branches contracted, which is the shape
    deletes would have produced in a Hamt.
    """
    cell.freeze()
    branch = cell.get()
    rest = branch.bitmap
    bitmap = 0
    out = []
    count = 0
    for child in branch.slots:
        bit = rest & -rest
        rest ^= bit
        t = type(child)
        if t is Indirection:
            child, n = _to_node(child)
            if child is None:
                continue
        elif t is Leaf:
            n = 1
        else:
            n = len(child.leaves)
        bitmap |= bit
        out.append(child)
        count += n
    if not is_root:
        if not out:
            return None, 0
        if len(out) == 1 and type(out[0]) is Leaf:
            return out[0], 1
    return Branch(bitmap, tuple(out)), count


def check_ctrie(t: CtrieMap) -> int:
    """Assert structural well-formedness; return the number of leaves."""
    return _check(t.root.get(), 0, 0)


def _check(node: Branch, shift: int, prefix: int) -> int:
    assert type(node) is Branch, f"indirection holds {node!r}"
    assert shift <= MAX_SHIFT, "branch below the last level"
    assert node.bitmap.bit_count() == len(node.slots), "bitmap/slot mismatch"
    total = 0
    rest = node.bitmap
    mask = (1 << (shift + 6)) - 1
    for child in node.slots:
        bit = rest & -rest
        rest ^= bit
        path = prefix | ((bit.bit_length() - 1) << shift)
        t = type(child)
        if t is Indirection:
            total += _check(child.get(), shift + 6, path)
        elif t is Leaf:
            assert child.hash == mix64(child.key), f"stale hash on {child!r}"
            assert child.hash & mask == path, f"{child!r} off its hash path"
            total += 1
        else:
            assert t is Collision, f"unexpected slot {child!r}"
            assert shift + 6 > MAX_SHIFT, "collision bucket above the last level"
            assert len(child.leaves) >= 2, "collision bucket with fewer than 2 leaves"
            keys = [x.key for x in child.leaves]
            assert len(set(keys)) == len(keys), "duplicate key in collision bucket"
            for leaf in child.leaves:
                assert leaf.hash == child.hash == mix64(leaf.key)
            total += len(child.leaves)
    return total
